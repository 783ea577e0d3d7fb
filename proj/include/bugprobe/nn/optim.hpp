#pragma once

#include <cmath>

#include "bugprobe/nn/params.hpp"

namespace bugprobe::nn {

// If the global L2 norm exceeds max_norm, scale all gradients down to it.
template <typename S>
inline void clip_grad_norm(Gradients<S>& grads, double max_norm) {
    if (max_norm <= 0) throw ConfigError("clip_grad_norm: max_norm must be positive");
    const double norm = grads.global_norm();
    if (norm > max_norm) grads.scale(static_cast<S>(max_norm / norm));
}

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction; increments the step counter.
template <typename S>
inline void adam_step(ParameterSet<S>& params, const Gradients<S>& grads, const AdamConfig& cfg) {
    params.adam_step_count += 1;
    const double t = static_cast<double>(params.adam_step_count);
    const S b1 = static_cast<S>(cfg.beta1);
    const S b2 = static_cast<S>(cfg.beta2);
    const S corr1 = static_cast<S>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
    const S corr2 = static_cast<S>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
    const S lr = static_cast<S>(cfg.lr);
    const S eps = static_cast<S>(cfg.eps);
    for (auto& [name, p] : params.values) {
        const auto& g = grads.at(name).m;
        auto& m = params.adam_m.at(name).m;
        auto& v = params.adam_v.at(name).m;
        m = b1 * m + (S(1) - b1) * g;
        v = (b2 * v).eval();
        v.array() += (S(1) - b2) * g.array().square();
        p.m.array() -= lr * (m.array() * corr1) / ((v.array() * corr2).sqrt() + eps);
    }
}

template <typename S>
inline void adam_step(ParameterSet<S>& params, const Gradients<S>& grads, double lr) {
    AdamConfig cfg;
    cfg.lr = lr;
    adam_step(params, grads, cfg);
}

}  // namespace bugprobe::nn
