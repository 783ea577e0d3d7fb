#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bugprobe/classifier.hpp"
#include "bugprobe/meta.hpp"
#include "bugprobe/policy.hpp"

namespace bugprobe {

enum class TrainMode { Factorized, Unfactorized, DirectMax };

inline const char* train_mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::Factorized: return "factorized";
        case TrainMode::Unfactorized: return "unfactorized";
        case TrainMode::DirectMax: return "direct-max";
    }
    return "?";
}

inline TrainMode train_mode_from_name(const std::string& s) {
    if (s == "factorized") return TrainMode::Factorized;
    if (s == "unfactorized") return TrainMode::Unfactorized;
    if (s == "direct-max") return TrainMode::DirectMax;
    throw ConfigError("unknown training mode: " + s);
}

struct TrainConfig {
    TrainMode mode = TrainMode::Factorized;
    std::string env = "bounce";  // bounce | breakout
    Rubric rubric = rubric_bounce8();
    long long total_steps = 5'000'000;  // env steps per policy loop
    std::uint64_t seed = 0;
    std::string precision = "f32";  // f32 | f64
    DqnHyperparams dqn;
    double classifier_lr = 1e-4;
    EpsilonSchedule eps;
    std::size_t replay_capacity = 10000;
    long long eval_every = 10000;
    int eval_size = 100;
    bool recompute_rewards_on_sample = false;  // ablation; default keeps frozen rewards
    std::string out_dir;

    nlohmann::json to_json() const {
        return {{"mode", train_mode_name(mode)},
                {"env", env},
                {"rubric", rubric.name},
                {"total_steps", total_steps},
                {"seed", seed},
                {"precision", precision},
                {"gamma", dqn.gamma},
                {"lr", dqn.lr},
                {"classifier_lr", classifier_lr},
                {"grad_clip", dqn.grad_clip},
                {"batch_size", dqn.batch_size},
                {"replay_min_episodes", 500},
                {"replay_capacity", replay_capacity},
                {"target_sync_every", dqn.target_sync_every},
                {"update_every", dqn.update_every},
                {"epsilon", {{"start", eps.start}, {"end", eps.end}, {"horizon", eps.horizon}}},
                {"eval_every", eval_every},
                {"eval_size", eval_size},
                {"recompute_rewards_on_sample", recompute_rewards_on_sample}};
    }
};

// r_t = log g(y_k | tau_{:t+1}) - log g(y_k | tau_{:t}); one streaming pass.
template <typename S>
inline std::vector<double> compute_exploration_rewards(const FeedbackClassifier<S>& classifier,
                                                       const Trajectory& traj, int label_bit) {
    const auto prefixes = classifier.classify_prefixes(traj);
    std::vector<double> logp(prefixes.size());
    for (std::size_t t = 0; t < prefixes.size(); ++t)
        logp[t] = std::log(prefixes[t][static_cast<std::size_t>(label_bit)]);
    std::vector<double> rewards(static_cast<std::size_t>(traj.steps()));
    for (std::size_t t = 0; t < rewards.size(); ++t) rewards[t] = logp[t + 1] - logp[t];
    return rewards;
}

// Terminal reward of the direct-max ablation: the fraction of label bits the
// classifiers currently get right on this trajectory; argmax ties predict 0.
template <typename S>
inline double compute_direct_max_reward(const std::vector<FeedbackClassifier<S>>& classifiers,
                                        const Trajectory& traj, const std::vector<int>& label) {
    if (classifiers.size() != label.size())
        throw ConfigError("direct-max: classifier count does not match label width");
    int correct = 0;
    for (std::size_t k = 0; k < classifiers.size(); ++k) {
        const auto p = classifiers[k].classify_full(traj);
        const int pred = p[1] > p[0] ? 1 : 0;
        if (pred == label[k]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(classifiers.size());
}

// Uniform driver over the two simulators.
class AnyEnv {
public:
    struct Out {
        Eigen::VectorXd observation;
        double reward;
        bool done;
    };

    Eigen::VectorXd reset(const LabeledProgram& p, std::uint64_t seed) {
        breakout_mode_ = p.is_breakout();
        if (breakout_mode_) return breakout_.reset(p.breakout(), seed);
        return bounce_.reset(p.bounce(), seed);
    }

    Out step(Action a) {
        if (breakout_mode_) {
            auto r = breakout_.step(a);
            return {std::move(r.observation), r.reward, r.done};
        }
        auto r = bounce_.step(a);
        return {std::move(r.observation), r.reward, r.done};
    }

    bool done() const { return breakout_mode_ ? breakout_.done() : bounce_.done(); }

private:
    BounceEnv bounce_;
    BreakoutEnv breakout_;
    bool breakout_mode_ = false;
};

inline int observation_dim(const std::string& env) {
    if (env == "bounce") return kBounceObsDim;
    if (env == "breakout") return kBreakoutObsDim;
    throw ConfigError("unknown env: " + env);
}

// Rolls the policy out on one program. eps_fn() is consulted once per step.
template <typename S, typename EpsFn>
inline Trajectory rollout_policy(const QNetConfig& cfg, const nn::ParameterSet<S>& params,
                                 const LabeledProgram& program, std::uint64_t env_seed,
                                 EpsFn&& eps_fn, Rng& act_rng) {
    Trajectory traj;
    AnyEnv env;
    auto obs = env.reset(program, env_seed);
    traj.observations.push_back(obs);
    QNetSession<S> session(cfg, params);
    auto q = session.start(obs);
    while (!env.done()) {
        const int a = act_epsilon_greedy<S>(q, eps_fn(), act_rng);
        auto out = env.step(static_cast<Action>(a));
        traj.actions.push_back(a);
        traj.env_rewards.push_back(out.reward);
        traj.observations.push_back(out.observation);
        if (!out.done) q = session.step(a, out.reward, traj.observations.back());
    }
    return traj;
}

struct CurveRow {
    long long step = 0;
    int dim = 0;
    double accuracy = 0;
    double mean_exp_reward = 0;
    double epsilon = 0;
    double dqn_loss = 0;
    double classifier_loss = 0;
};

namespace detail {

inline std::string format_curve_row(const CurveRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%lld,%d,%.10g,%.10g,%.10g,%.10g,%.10g",
                  static_cast<long long>(r.step), r.dim, r.accuracy, r.mean_exp_reward, r.epsilon,
                  r.dqn_loss, r.classifier_loss);
    return buf;
}

}  // namespace detail

// One training loop: a single exploration policy plus the classifiers that
// feed it rewards. Factorized mode runs K of these, one per rubric dimension
// (dims = {k}); the joint modes run one loop with dims = {0..K-1}.
template <typename S>
class TrainLoop {
public:
    TrainLoop(const TrainConfig& cfg, const MetaEnv& meta, std::vector<int> dims, int loop_id)
        : cfg_(cfg), meta_(&meta), dims_(std::move(dims)), loop_id_(loop_id),
          qcfg_(make_qnet_config(cfg)),
          learner_(qcfg_, derive_seed(cfg.seed, "policy", static_cast<std::uint64_t>(loop_id)),
                   cfg.dqn),
          buffer_(cfg.replay_capacity, 500),
          rng_(derive_seed(cfg.seed, "loop", static_cast<std::uint64_t>(loop_id))) {
        ClassifierConfig ccfg;
        ccfg.emb.obs_dim = observation_dim(cfg.env);
        classifiers_.reserve(dims_.size());
        for (int k : dims_)
            classifiers_.emplace_back(ccfg,
                                      derive_seed(cfg.seed, "classifier", static_cast<std::uint64_t>(k)),
                                      cfg.classifier_lr, cfg.dqn.grad_clip);
    }

    static QNetConfig make_qnet_config(const TrainConfig& cfg) {
        QNetConfig qcfg;
        qcfg.emb.obs_dim = observation_dim(cfg.env);
        return qcfg;
    }

    // Algorithm-1 episode: sample a program, roll out, reward, store, update.
    void run_episode(const ExecPolicy& exec) {
        MetaEpisode episode = meta_->sample(Split::Train, rng_);
        const auto& label = episode.label();
        const std::uint64_t env_seed = rng_.next_u64();

        // the schedule anneals per environment step, including mid-episode
        long long step_now = env_steps_;
        Trajectory traj = rollout_policy(
            qcfg_, learner_.online(), episode.program(), env_seed,
            [this, &step_now] { return cfg_.eps.at(step_now++); }, rng_);
        env_steps_ += traj.steps();

        traj.label_bits = label;
        traj.exp_rewards = episode_rewards(traj, label);
        double episode_reward = 0;
        for (double r : traj.exp_rewards) episode_reward += r;
        reward_since_eval_ += episode_reward;
        episodes_since_eval_ += 1;

        buffer_.insert(traj);
        if (buffer_.ready()) {
            pending_update_steps_ += traj.steps();
            while (pending_update_steps_ >= cfg_.dqn.update_every) {
                auto batch = buffer_.sample(static_cast<std::size_t>(cfg_.dqn.batch_size), rng_);
                double loss;
                if (cfg_.recompute_rewards_on_sample) {
                    std::vector<Trajectory> patched(batch.size());
                    std::vector<const Trajectory*> view(batch.size());
                    for (std::size_t i = 0; i < batch.size(); ++i) {
                        patched[i] = *batch[i];
                        patched[i].exp_rewards = episode_rewards(patched[i], patched[i].label_bits);
                        view[i] = &patched[i];
                    }
                    loss = learner_.update(view, exec);
                } else {
                    loss = learner_.update(batch, exec);
                }
                dqn_loss_since_eval_ += loss;
                dqn_updates_since_eval_ += 1;
                pending_update_steps_ -= cfg_.dqn.update_every;
            }
        }

        for (std::size_t i = 0; i < dims_.size(); ++i) {
            classifier_loss_since_eval_ +=
                classifiers_[i].update(traj, label[static_cast<std::size_t>(dims_[i])]);
            classifier_updates_since_eval_ += 1;
        }
        episodes_ += 1;
    }

    // Periodic held-out evaluation at eps = 0; one row per owned dimension.
    void maybe_eval(std::vector<CurveRow>& rows) {
        if (env_steps_ < next_eval_at_) return;
        next_eval_at_ += cfg_.eval_every;
        while (next_eval_at_ <= env_steps_) next_eval_at_ += cfg_.eval_every;
        const auto& test = meta_->split(Split::Test);
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg_.eval_size),
                                                    test.size());
        std::vector<long long> correct(dims_.size(), 0);
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t i = 0; i < dims_.size(); ++i) {
                const std::uint64_t seed = derive_seed(
                    cfg_.seed, "train-eval",
                    hash_combine(hash_combine(static_cast<std::uint64_t>(eval_index_), p),
                                 static_cast<std::uint64_t>(dims_[i])));
                Rng eval_rng(seed);
                Trajectory traj = rollout_policy(qcfg_, learner_.online(), test[p], seed,
                                                 [] { return 0.0; }, eval_rng);
                const auto prob = classifiers_[i].classify_full(traj);
                const int pred = prob[1] > prob[0] ? 1 : 0;
                if (pred == test[p].label[static_cast<std::size_t>(dims_[i])]) ++correct[i];
            }
        }
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            CurveRow row;
            row.step = env_steps_;
            row.dim = dims_[i];
            row.accuracy = n ? static_cast<double>(correct[i]) / static_cast<double>(n) : 0.0;
            row.mean_exp_reward =
                episodes_since_eval_ ? reward_since_eval_ / episodes_since_eval_ : 0.0;
            row.epsilon = cfg_.eps.at(env_steps_);
            row.dqn_loss = dqn_updates_since_eval_ ? dqn_loss_since_eval_ / dqn_updates_since_eval_
                                                   : 0.0;
            row.classifier_loss = classifier_updates_since_eval_
                                      ? classifier_loss_since_eval_ / classifier_updates_since_eval_
                                      : 0.0;
            rows.push_back(row);
        }
        reward_since_eval_ = 0;
        episodes_since_eval_ = 0;
        dqn_loss_since_eval_ = 0;
        dqn_updates_since_eval_ = 0;
        classifier_loss_since_eval_ = 0;
        classifier_updates_since_eval_ = 0;
        eval_index_ += 1;
    }

    bool finished() const { return env_steps_ >= cfg_.total_steps; }
    long long env_steps() const { return env_steps_; }
    long long episodes() const { return episodes_; }
    long long dqn_updates() const { return learner_.update_count(); }
    const DqnLearner<S>& learner() const { return learner_; }
    DqnLearner<S>& learner() { return learner_; }
    const std::vector<FeedbackClassifier<S>>& classifiers() const { return classifiers_; }
    std::vector<FeedbackClassifier<S>>& classifiers() { return classifiers_; }
    const std::vector<int>& dims() const { return dims_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    const QNetConfig& qnet_config() const { return qcfg_; }

private:
    std::vector<double> episode_rewards(const Trajectory& traj, const std::vector<int>& label) {
        switch (cfg_.mode) {
            case TrainMode::Factorized:
                return compute_exploration_rewards(classifiers_[0], traj,
                                                   label[static_cast<std::size_t>(dims_[0])]);
            case TrainMode::Unfactorized: {
                // joint log-likelihood under independent heads: sum over dims
                std::vector<double> total(static_cast<std::size_t>(traj.steps()), 0.0);
                for (std::size_t i = 0; i < dims_.size(); ++i) {
                    auto rk = compute_exploration_rewards(
                        classifiers_[i], traj, label[static_cast<std::size_t>(dims_[i])]);
                    for (std::size_t t = 0; t < total.size(); ++t) total[t] += rk[t];
                }
                return total;
            }
            case TrainMode::DirectMax: {
                std::vector<double> r(static_cast<std::size_t>(traj.steps()), 0.0);
                if (!r.empty()) r.back() = compute_direct_max_reward(classifiers_, traj, label);
                return r;
            }
        }
        throw ConfigError("unreachable train mode");
    }

    TrainConfig cfg_;
    const MetaEnv* meta_;
    std::vector<int> dims_;
    int loop_id_;
    QNetConfig qcfg_;
    DqnLearner<S> learner_;
    std::vector<FeedbackClassifier<S>> classifiers_;
    ReplayBuffer buffer_;
    Rng rng_;
    long long env_steps_ = 0;
    long long episodes_ = 0;
    long long pending_update_steps_ = 0;
    long long next_eval_at_ = 0;
    long long eval_index_ = 0;
    double reward_since_eval_ = 0;
    long long episodes_since_eval_ = 0;
    double dqn_loss_since_eval_ = 0;
    long long dqn_updates_since_eval_ = 0;
    double classifier_loss_since_eval_ = 0;
    long long classifier_updates_since_eval_ = 0;
};

struct TrainResult {
    std::string out_dir;
    std::vector<std::string> policy_files;
    std::vector<std::string> classifier_files;
    long long total_episodes = 0;
};

// Full training run: constructs the loops for the configured mode, runs them
// (factorized loops are independent and execute in parallel), writes curve
// CSVs, checkpoints, and the manifest.
template <typename S>
inline TrainResult train(const TrainConfig& cfg, const MetaEnv& meta, const ExecPolicy& exec) {
    namespace fs = std::filesystem;
    if (cfg.out_dir.empty()) throw ConfigError("train: out_dir is required");
    if (meta.split(Split::Train).empty()) throw ConfigError("train: empty training split");
    const int K = cfg.rubric.size();
    for (const auto& p : meta.split(Split::Train))
        if (static_cast<int>(p.label.size()) != K)
            throw ConfigError("train: corpus label width does not match rubric " + cfg.rubric.name);

    fs::create_directories(cfg.out_dir);
    fs::create_directories(cfg.out_dir + "/checkpoints");
    {
        std::ofstream cfg_out(cfg.out_dir + "/config.json");
        cfg_out << cfg.to_json().dump(2) << "\n";
    }

    std::vector<std::unique_ptr<TrainLoop<S>>> loops;
    if (cfg.mode == TrainMode::Factorized) {
        for (int k = 0; k < K; ++k)
            loops.push_back(std::make_unique<TrainLoop<S>>(cfg, meta, std::vector<int>{k}, k));
    } else {
        std::vector<int> dims(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k) dims[static_cast<std::size_t>(k)] = k;
        loops.push_back(std::make_unique<TrainLoop<S>>(cfg, meta, dims, 0));
    }

    std::vector<std::vector<CurveRow>> rows(loops.size());
    parallel_for(exec, loops.size(), [&](std::size_t i) {
        auto& loop = *loops[i];
        while (!loop.finished()) {
            loop.run_episode(exec);
            loop.maybe_eval(rows[i]);
        }
    });

    // per-loop curve files plus a merged long-format file sorted by (step, dim)
    std::vector<CurveRow> merged;
    for (std::size_t i = 0; i < loops.size(); ++i) {
        std::ofstream out(cfg.out_dir + "/curves_loop" + std::to_string(i) + ".csv");
        out << "step,dim,accuracy,mean_exp_reward,epsilon,dqn_loss,classifier_loss\n";
        for (const auto& r : rows[i]) out << detail::format_curve_row(r) << "\n";
        merged.insert(merged.end(), rows[i].begin(), rows[i].end());
    }
    std::stable_sort(merged.begin(), merged.end(), [](const CurveRow& a, const CurveRow& b) {
        return a.step != b.step ? a.step < b.step : a.dim < b.dim;
    });
    {
        std::ofstream out(cfg.out_dir + "/curves.csv");
        out << "step,dim,accuracy,mean_exp_reward,epsilon,dqn_loss,classifier_loss\n";
        for (const auto& r : merged) out << detail::format_curve_row(r) << "\n";
    }

    TrainResult result;
    result.out_dir = cfg.out_dir;
    nlohmann::json manifest;
    manifest["mode"] = train_mode_name(cfg.mode);
    manifest["env"] = cfg.env;
    manifest["rubric"] = cfg.rubric.name;
    manifest["precision"] = cfg.precision;
    manifest["seed"] = cfg.seed;
    manifest["k"] = K;
    manifest["obs_dim"] = observation_dim(cfg.env);
    manifest["config"] = cfg.to_json();
    nlohmann::json policy_files = nlohmann::json::array();
    nlohmann::json classifier_files = nlohmann::json::array();

    for (std::size_t i = 0; i < loops.size(); ++i) {
        auto& loop = *loops[i];
        result.total_episodes += loop.episodes();
        nlohmann::json net_meta = {{"seed", cfg.seed},
                                   {"env", cfg.env},
                                   {"rubric", cfg.rubric.name},
                                   {"net", loop.qnet_config().to_json()}};
        const std::string qfile = "checkpoints/qnet_loop" + std::to_string(i) + ".bpc";
        nn::save_checkpoint(cfg.out_dir + "/" + qfile, loop.learner().online(), net_meta);
        policy_files.push_back(qfile);
        result.policy_files.push_back(qfile);
        for (std::size_t c = 0; c < loop.classifiers().size(); ++c) {
            const int dim = loop.dims()[c];
            nlohmann::json cls_meta = {{"seed", cfg.seed},
                                       {"env", cfg.env},
                                       {"rubric", cfg.rubric.name},
                                       {"dim", dim},
                                       {"net", loop.classifiers()[c].config().to_json()}};
            const std::string cfile = "checkpoints/classifier_dim" + std::to_string(dim) + ".bpc";
            nn::save_checkpoint(cfg.out_dir + "/" + cfile, loop.classifiers()[c].params(), cls_meta);
            classifier_files.push_back(cfile);
            result.classifier_files.push_back(cfile);
        }
    }
    manifest["policies"] = policy_files;
    manifest["classifiers"] = classifier_files;
    {
        std::ofstream out(cfg.out_dir + "/manifest.json");
        out << manifest.dump(2) << "\n";
    }
    return result;
}

}  // namespace bugprobe
