#pragma once

#include <algorithm>
#include <deque>
#include <memory>
#include <vector>

#include "bugprobe/nets.hpp"
#include "bugprobe/nn/optim.hpp"
#include "bugprobe/parallel.hpp"
#include "bugprobe/rng.hpp"
#include "bugprobe/traj.hpp"

namespace bugprobe {

// Linear anneal from 1 to 0.01 over 250k environment steps.
struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.01;
    long long horizon = 250000;

    double at(long long env_steps) const {
        if (env_steps >= horizon) return end;
        return start + (end - start) * static_cast<double>(env_steps) / static_cast<double>(horizon);
    }
};

// Greedy with probability 1-eps; argmax ties break to the lowest index.
template <typename S>
inline int act_epsilon_greedy(const nn::Vec<S>& q, double epsilon, Rng& rng) {
    if (epsilon < 0.0 || epsilon > 1.0) throw ConfigError("epsilon must be in [0, 1]");
    if (epsilon > 0.0 && rng.uniform() < epsilon)
        return static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(q.rows())));
    int best = 0;
    for (int a = 1; a < q.rows(); ++a)
        if (q(a) > q(best)) best = a;
    return best;
}

// Ring buffer of whole episodes, stored with their exploration rewards frozen
// at insertion time.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity_episodes = 10000, std::size_t min_episodes = 500)
        : capacity_(capacity_episodes), min_episodes_(min_episodes) {}

    void insert(Trajectory traj) {
        if (!traj.consistent() || traj.exp_rewards.size() != traj.actions.size())
            throw UsageError("replay insert: trajectory lacks rewards or is inconsistent");
        if (episodes_.size() == capacity_) episodes_.pop_front();
        episodes_.push_back(std::move(traj));
    }

    bool ready() const { return episodes_.size() >= min_episodes_; }
    std::size_t size() const { return episodes_.size(); }
    std::size_t min_episodes() const { return min_episodes_; }
    const Trajectory& episode(std::size_t i) const { return episodes_[i]; }

    // Uniform with replacement.
    std::vector<const Trajectory*> sample(std::size_t batch, Rng& rng) const {
        if (!ready())
            throw UsageError("replay sample: buffer holds " + std::to_string(episodes_.size()) +
                             " episodes, needs " + std::to_string(min_episodes_));
        std::vector<const Trajectory*> out(batch);
        for (auto& slot : out) slot = &episodes_[rng.uniform_index(episodes_.size())];
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t min_episodes_;
    std::deque<Trajectory> episodes_;
};

struct DqnHyperparams {
    double gamma = 0.99;
    double lr = 1e-4;
    double grad_clip = 10.0;
    int batch_size = 32;
    int target_sync_every = 5000;  // updates
    int update_every = 4;          // environment steps
};

// Recurrent dueling double Q-learner: online and target parameter sets plus
// the update rule. Rollout action selection goes through QNetSession.
template <typename S>
class DqnLearner {
public:
    DqnLearner(const QNetConfig& cfg, std::uint64_t seed, DqnHyperparams hp = {})
        : cfg_(cfg), hp_(hp), online_(make_qnet_params<S>(cfg, seed)), target_(online_) {}

    const QNetConfig& config() const { return cfg_; }
    const DqnHyperparams& hyperparams() const { return hp_; }
    nn::ParameterSet<S>& online() { return online_; }
    const nn::ParameterSet<S>& online() const { return online_; }
    const nn::ParameterSet<S>& target() const { return target_; }
    long long update_count() const { return update_count_; }

    void sync_target() { target_.values = online_.values; }

    // One double-DQN update over a batch of complete trajectories. Gradients
    // are computed per trajectory (data-parallel) and reduced in index order,
    // so the result is independent of the execution policy.
    double update(const std::vector<const Trajectory*>& batch, const ExecPolicy& exec) {
        const std::size_t n = batch.size();
        std::vector<nn::Gradients<S>> grads(n);
        std::vector<double> sse(n, 0.0);
        std::vector<long long> steps(n, 0);

        parallel_for(exec, n, [&](std::size_t i) {
            const Trajectory& traj = *batch[i];
            const int T = traj.steps();
            steps[i] = T;

            nn::Graph<S> online_pass;
            auto q_node = qnet_graph_pass(online_pass, cfg_, online_, traj);
            const auto& q_online = online_pass.value(q_node);

            nn::Graph<S> target_pass;  // values only, never differentiated
            const auto& q_target =
                target_pass.value(qnet_graph_pass(target_pass, cfg_, target_, traj));

            std::vector<typename nn::Graph<S>::TdEntry> entries;
            entries.reserve(static_cast<std::size_t>(T));
            for (int t = 0; t < T; ++t) {
                S target = static_cast<S>(traj.exp_rewards[static_cast<std::size_t>(t)]);
                if (t + 1 < T) {
                    // double DQN: online argmax chooses, target net evaluates
                    int best = 0;
                    for (int a = 1; a < cfg_.emb.num_actions; ++a)
                        if (q_online(a, t + 1) > q_online(best, t + 1)) best = a;
                    target += static_cast<S>(hp_.gamma) * q_target(best, t + 1);
                }
                entries.push_back({t, traj.actions[static_cast<std::size_t>(t)], target});
            }
            auto loss = online_pass.td_sse(q_node, std::move(entries));
            sse[i] = static_cast<double>(online_pass.scalar(loss));
            grads[i] = online_.zero_gradients();
            online_pass.backward(loss, S(1), grads[i]);
        });

        long long total_steps = 0;
        for (long long t : steps) total_steps += t;
        if (total_steps == 0) throw UsageError("dqn update: batch holds no transitions");

        nn::Gradients<S> total = std::move(grads[0]);
        for (std::size_t i = 1; i < n; ++i) total.accumulate(grads[i]);
        total.scale(static_cast<S>(1.0 / static_cast<double>(total_steps)));

        double loss = 0.0;
        for (double v : sse) loss += v;
        loss /= static_cast<double>(total_steps);
        if (!std::isfinite(loss))
            throw NumericError("dqn update produced a non-finite loss (" + std::to_string(loss) + ")");

        nn::clip_grad_norm(total, hp_.grad_clip);
        nn::AdamConfig adam;
        adam.lr = hp_.lr;
        nn::adam_step(online_, total, adam);

        update_count_ += 1;
        if (update_count_ % hp_.target_sync_every == 0) sync_target();
        return loss;
    }

private:
    QNetConfig cfg_;
    DqnHyperparams hp_;
    nn::ParameterSet<S> online_;
    nn::ParameterSet<S> target_;
    long long update_count_ = 0;
};

}  // namespace bugprobe
