#pragma once

#include <array>
#include <vector>

#include "bugprobe/nets.hpp"
#include "bugprobe/nn/optim.hpp"

namespace bugprobe {

// Per-rubric-dimension recurrent binary classifier g(y_k | tau). One network
// per dimension; no parameter sharing.
template <typename S>
class FeedbackClassifier {
public:
    FeedbackClassifier(const ClassifierConfig& cfg, std::uint64_t seed, double lr = 1e-4,
                       double grad_clip = 10.0)
        : cfg_(cfg), lr_(lr), grad_clip_(grad_clip),
          params_(make_classifier_params<S>(cfg, seed)) {}

    // Adopts previously trained parameters (checkpoint restore).
    FeedbackClassifier(const ClassifierConfig& cfg, nn::ParameterSet<S> params, double lr = 1e-4,
                       double grad_clip = 10.0)
        : cfg_(cfg), lr_(lr), grad_clip_(grad_clip), params_(std::move(params)) {}

    const ClassifierConfig& config() const { return cfg_; }
    nn::ParameterSet<S>& params() { return params_; }
    const nn::ParameterSet<S>& params() const { return params_; }

    // Prefix-wise distributions g(y_k | tau_{:t}) for t = 0..T in one
    // streaming pass; index 0 conditions on s_0 alone (the start tuple).
    std::vector<std::array<double, 2>> classify_prefixes(const Trajectory& traj) const {
        if (traj.observations.empty()) throw InputError("classify_prefixes: trajectory lacks s_0");
        if (!traj.consistent()) throw InputError("classify_prefixes: inconsistent trajectory");
        std::vector<std::array<double, 2>> out;
        out.reserve(traj.observations.size());
        ClassifierSession<S> session(cfg_, params_);
        auto p0 = session.start(traj.observations[0]);
        out.push_back({static_cast<double>(p0(0)), static_cast<double>(p0(1))});
        for (int t = 0; t < traj.steps(); ++t) {
            auto pt = session.step(traj.actions[static_cast<std::size_t>(t)],
                                   traj.env_rewards[static_cast<std::size_t>(t)],
                                   traj.observations[static_cast<std::size_t>(t) + 1]);
            out.push_back({static_cast<double>(pt(0)), static_cast<double>(pt(1))});
        }
        return out;
    }

    std::array<double, 2> classify_full(const Trajectory& traj) const {
        return classify_prefixes(traj).back();
    }

    // Cross-entropy on the full-trajectory prefix only; one Adam step with
    // gradient clipping. Returns the loss.
    double update(const Trajectory& traj, int label_bit) {
        if (label_bit != 0 && label_bit != 1) throw InputError("label bit must be 0 or 1");
        nn::Graph<S> g;
        auto logits = classifier_graph_pass(g, cfg_, params_, traj);
        auto loss = g.softmax_ce(g.col(logits, traj.steps()), label_bit);
        const double value = static_cast<double>(g.scalar(loss));
        if (!std::isfinite(value))
            throw NumericError("classifier update produced a non-finite loss");
        auto grads = params_.zero_gradients();
        g.backward(loss, S(1), grads);
        nn::clip_grad_norm(grads, grad_clip_);
        nn::AdamConfig adam;
        adam.lr = lr_;
        nn::adam_step(params_, grads, adam);
        return value;
    }

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    ClassifierConfig cfg_;
    double lr_;
    double grad_clip_;
    nn::ParameterSet<S> params_;
};

}  // namespace bugprobe
