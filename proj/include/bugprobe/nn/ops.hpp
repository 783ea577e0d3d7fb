#pragma once

#include <cmath>
#include <sstream>
#include <utility>

#include "bugprobe/errors.hpp"
#include "bugprobe/nn/tensor.hpp"

namespace bugprobe::nn {

// y = W x + b
template <typename S>
inline Vec<S> linear_forward(const Tensor<S>& w, const Tensor<S>& b, const Vec<S>& x) {
    if (w.m.cols() != x.rows())
        throw ConfigError("linear_forward: weight expects input of length " +
                          std::to_string(w.m.cols()) + ", got " + std::to_string(x.rows()));
    if (b.m.rows() != w.m.rows())
        throw ConfigError("linear_forward: bias length " + std::to_string(b.m.rows()) +
                          " does not match output dim " + std::to_string(w.m.rows()));
    return w.m * x + b.m.col(0);
}

// Returns row `index` of the table.
template <typename S>
inline Vec<S> embed_lookup(const Tensor<S>& table, long long index) {
    if (index < 0 || index >= table.m.rows())
        throw InputError("embed_lookup: index " + std::to_string(index) + " out of range [0, " +
                         std::to_string(table.m.rows()) + ")");
    return table.m.row(index).transpose();
}

template <typename S>
struct LstmState {
    Vec<S> hidden;
    Vec<S> cell;

    static LstmState zeros(Eigen::Index dim) {
        LstmState s;
        s.hidden = Vec<S>::Zero(dim);
        s.cell = Vec<S>::Zero(dim);
        return s;
    }
};

template <typename S>
inline S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

// One LSTM cell step. Weight layout: w [4H x in], u [4H x H], b [4H], gate
// rows ordered (input, forget, candidate, output). Overwrites `state` and
// returns the new hidden vector. `gates_out`, when non-null, receives the
// post-activation gate values [i; f; g; o] needed for backprop.
template <typename S>
inline Vec<S> lstm_step(const Tensor<S>& w, const Tensor<S>& u, const Tensor<S>& b,
                        const Vec<S>& x, LstmState<S>& state, Vec<S>* gates_out = nullptr) {
    const Eigen::Index hidden = state.hidden.rows();
    if (w.m.cols() != x.rows())
        throw ConfigError("lstm_step: input length " + std::to_string(x.rows()) +
                          " does not match configured input dim " + std::to_string(w.m.cols()));
    if (w.m.rows() != 4 * hidden || u.m.rows() != 4 * hidden || u.m.cols() != hidden)
        throw ConfigError("lstm_step: weight shapes inconsistent with state dim " +
                          std::to_string(hidden));
    if (!state.hidden.allFinite() || !state.cell.allFinite()) {
        std::ostringstream os;
        os << "lstm_step: non-finite recurrent state (|h|max=" << state.hidden.cwiseAbs().maxCoeff()
           << ", |c|max=" << state.cell.cwiseAbs().maxCoeff() << ")";
        throw NumericError(os.str());
    }

    Vec<S> z = w.m * x + u.m * state.hidden + b.m.col(0);
    Vec<S> gates(4 * hidden);
    for (Eigen::Index j = 0; j < hidden; ++j) {
        const S i = sigmoid(z(j));
        const S f = sigmoid(z(hidden + j));
        const S g = std::tanh(z(2 * hidden + j));
        const S o = sigmoid(z(3 * hidden + j));
        const S c = f * state.cell(j) + i * g;
        state.cell(j) = c;
        state.hidden(j) = o * std::tanh(c);
        gates(j) = i;
        gates(hidden + j) = f;
        gates(2 * hidden + j) = g;
        gates(3 * hidden + j) = o;
    }
    if (gates_out) *gates_out = std::move(gates);
    return state.hidden;
}

// Numerically stable softmax + cross-entropy. Returns (loss, probs).
template <typename S>
inline std::pair<S, Vec<S>> softmax_cross_entropy(const Vec<S>& logits, Eigen::Index target) {
    if (target < 0 || target >= logits.rows())
        throw InputError("softmax_cross_entropy: target " + std::to_string(target) +
                         " out of range for " + std::to_string(logits.rows()) + " logits");
    const S maxv = logits.maxCoeff();
    Vec<S> shifted = logits.array() - maxv;
    Vec<S> probs = shifted.array().exp();
    const S denom = probs.sum();
    probs /= denom;
    const S loss = std::log(denom) - shifted(target);
    return {loss, std::move(probs)};
}

template <typename S>
inline Vec<S> softmax(const Vec<S>& logits) {
    Vec<S> shifted = logits.array() - logits.maxCoeff();
    Vec<S> probs = shifted.array().exp();
    probs /= probs.sum();
    return probs;
}

}  // namespace bugprobe::nn
