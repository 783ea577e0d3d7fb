#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "bugprobe/nn/graph.hpp"
#include "bugprobe/nn/ops.hpp"
#include "bugprobe/nn/params.hpp"
#include "bugprobe/rng.hpp"
#include "bugprobe/traj.hpp"

namespace bugprobe {

// Shared transition-tuple embedder dimensions. Each (s, a, r, s') tuple is
// embedded component-wise: the observation MLP (128 -> 64 with ReLU, shared
// between s and s'), a 16-dim action embedding with one extra row for the
// start token's null action, and a 32-dim linear reward embedding.
struct EmbedderDims {
    int obs_dim = 0;
    int num_actions = 3;
    int state_h = 128;
    int state_out = 64;
    int act_dim = 16;
    int reward_dim = 32;

    int concat_dim() const { return 2 * state_out + act_dim + reward_dim; }
    int null_action() const { return num_actions; }
};

struct QNetConfig {
    EmbedderDims emb;
    int tuple_out = 64;
    int lstm_dim = 64;
    double forget_bias = 1.0;

    nlohmann::json to_json() const {
        return {{"obs_dim", emb.obs_dim},      {"num_actions", emb.num_actions},
                {"state_h", emb.state_h},      {"state_out", emb.state_out},
                {"act_dim", emb.act_dim},      {"reward_dim", emb.reward_dim},
                {"tuple_out", tuple_out},      {"lstm_dim", lstm_dim},
                {"forget_bias", forget_bias}};
    }
};

struct ClassifierConfig {
    EmbedderDims emb;
    int tuple_h = 128;
    int tuple_out = 64;
    int lstm_dim = 128;
    int head_h = 128;
    double forget_bias = 1.0;

    nlohmann::json to_json() const {
        return {{"obs_dim", emb.obs_dim},      {"num_actions", emb.num_actions},
                {"state_h", emb.state_h},      {"state_out", emb.state_out},
                {"act_dim", emb.act_dim},      {"reward_dim", emb.reward_dim},
                {"tuple_h", tuple_h},          {"tuple_out", tuple_out},
                {"lstm_dim", lstm_dim},        {"head_h", head_h},
                {"forget_bias", forget_bias}};
    }
};

namespace detail {

template <typename S>
inline void add_linear(nn::ParameterSet<S>& p, const std::string& prefix, int out, int in, Rng& rng) {
    auto& w = p.add(prefix + ".w", nn::Tensor<S>::matrix(out, in));
    nn::init_uniform_fan_in(w, rng);
    p.add(prefix + ".b", nn::Tensor<S>::vector(out));
}

template <typename S>
inline void add_lstm(nn::ParameterSet<S>& p, const std::string& prefix, int in, int hidden,
                     double forget_bias, Rng& rng) {
    auto& w = p.add(prefix + ".w", nn::Tensor<S>::matrix(4 * hidden, in));
    nn::init_uniform_fan_in(w, rng);
    auto& u = p.add(prefix + ".u", nn::Tensor<S>::matrix(4 * hidden, hidden));
    nn::init_uniform_fan_in(u, rng);
    auto& b = p.add(prefix + ".b", nn::Tensor<S>::vector(4 * hidden));
    for (int j = 0; j < hidden; ++j) b.m(hidden + j, 0) = static_cast<S>(forget_bias);
}

template <typename S>
inline void add_embedder(nn::ParameterSet<S>& p, const EmbedderDims& d, Rng& rng) {
    add_linear(p, "se1", d.state_h, d.obs_dim, rng);
    add_linear(p, "se2", d.state_out, d.state_h, rng);
    auto& table = p.add("ae.table", nn::Tensor<S>::matrix(d.num_actions + 1, d.act_dim));
    nn::init_embedding(table, rng);
    add_linear(p, "re", d.reward_dim, 1, rng);
}

}  // namespace detail

template <typename S>
inline nn::ParameterSet<S> make_qnet_params(const QNetConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    nn::ParameterSet<S> p;
    detail::add_embedder(p, cfg.emb, rng);
    detail::add_linear(p, "tup", cfg.tuple_out, cfg.emb.concat_dim(), rng);
    detail::add_lstm(p, "lstm", cfg.tuple_out, cfg.lstm_dim, cfg.forget_bias, rng);
    detail::add_linear(p, "val", 1, cfg.lstm_dim, rng);
    detail::add_linear(p, "adv", cfg.emb.num_actions, cfg.lstm_dim, rng);
    return p;
}

template <typename S>
inline nn::ParameterSet<S> make_classifier_params(const ClassifierConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    nn::ParameterSet<S> p;
    detail::add_embedder(p, cfg.emb, rng);
    detail::add_linear(p, "tup1", cfg.tuple_h, cfg.emb.concat_dim(), rng);
    detail::add_linear(p, "tup2", cfg.tuple_out, cfg.tuple_h, rng);
    detail::add_lstm(p, "lstm", cfg.tuple_out, cfg.lstm_dim, cfg.forget_bias, rng);
    detail::add_linear(p, "h1", cfg.head_h, cfg.lstm_dim, rng);
    detail::add_linear(p, "h2", cfg.head_h, cfg.head_h, rng);
    detail::add_linear(p, "h3", 2, cfg.head_h, rng);
    return p;
}

// ---- streaming (no-grad) evaluation -----------------------------------------
//
// Rollouts and prefix classification consume tuples one at a time. The
// observation embedding of s_{t+1} is cached and reused as the s_t embedding
// of the next tuple, mirroring the training-graph sharing.

template <typename S>
class EmbedStream {
public:
    EmbedStream(const EmbedderDims& d, const nn::ParameterSet<S>& p) : dims_(d), params_(&p) {}

    nn::Vec<S> embed_obs(const Eigen::VectorXd& obs) const {
        if (obs.rows() != dims_.obs_dim)
            throw ConfigError("observation width " + std::to_string(obs.rows()) +
                              " does not match configured obs_dim " + std::to_string(dims_.obs_dim));
        nn::Vec<S> x = obs.cast<S>();
        nn::Vec<S> h = (params_->at("se1.w").m * x + params_->at("se1.b").m.col(0)).cwiseMax(S(0));
        return params_->at("se2.w").m * h + params_->at("se2.b").m.col(0);
    }

    // Tuple embedding given the precomputed endpoint embeddings.
    nn::Vec<S> concat(const nn::Vec<S>& s_emb, int action, double reward,
                      const nn::Vec<S>& s_next_emb) const {
        const auto& table = params_->at("ae.table");
        nn::Vec<S> a_emb = nn::embed_lookup(table, action);
        nn::Vec<S> r_in(1);
        r_in(0) = static_cast<S>(reward);
        nn::Vec<S> r_emb = params_->at("re.w").m * r_in + params_->at("re.b").m.col(0);
        nn::Vec<S> out(2 * s_emb.rows() + a_emb.rows() + r_emb.rows());
        out << s_emb, a_emb, r_emb, s_next_emb;
        return out;
    }

private:
    EmbedderDims dims_;
    const nn::ParameterSet<S>* params_;
};

template <typename S>
class QNetSession {
public:
    QNetSession(const QNetConfig& cfg, const nn::ParameterSet<S>& p)
        : cfg_(cfg), params_(&p), embed_(cfg.emb, p), state_(nn::LstmState<S>::zeros(cfg.lstm_dim)) {}

    // Feed the start tuple (s_0, null action, reward 0, s_0); returns Q(tau_{:0}, .).
    nn::Vec<S> start(const Eigen::VectorXd& s0) {
        state_ = nn::LstmState<S>::zeros(cfg_.lstm_dim);
        prev_emb_ = embed_.embed_obs(s0);
        return feed_tuple(embed_.concat(prev_emb_, cfg_.emb.null_action(), 0.0, prev_emb_));
    }

    // Feed transition (s_t, a_t, r_t, s_{t+1}); returns Q(tau_{:t+1}, .).
    nn::Vec<S> step(int action, double reward, const Eigen::VectorXd& s_next) {
        nn::Vec<S> next_emb = embed_.embed_obs(s_next);
        nn::Vec<S> q = feed_tuple(embed_.concat(prev_emb_, action, reward, next_emb));
        prev_emb_ = std::move(next_emb);
        return q;
    }

private:
    nn::Vec<S> feed_tuple(const nn::Vec<S>& tup) {
        nn::Vec<S> x = params_->at("tup.w").m * tup + params_->at("tup.b").m.col(0);
        nn::Vec<S> h = nn::lstm_step(params_->at("lstm.w"), params_->at("lstm.u"),
                                     params_->at("lstm.b"), x, state_);
        const S v = (params_->at("val.w").m * h + params_->at("val.b").m.col(0))(0);
        nn::Vec<S> a = params_->at("adv.w").m * h + params_->at("adv.b").m.col(0);
        const S mean_a = a.mean();
        nn::Vec<S> q = a.array() - mean_a + v;
        nn::check_finite<S>(q, "q-values");
        return q;
    }

    QNetConfig cfg_;
    const nn::ParameterSet<S>* params_;
    EmbedStream<S> embed_;
    nn::LstmState<S> state_;
    nn::Vec<S> prev_emb_;
};

template <typename S>
class ClassifierSession {
public:
    ClassifierSession(const ClassifierConfig& cfg, const nn::ParameterSet<S>& p)
        : cfg_(cfg), params_(&p), embed_(cfg.emb, p), state_(nn::LstmState<S>::zeros(cfg.lstm_dim)) {}

    // Returns g(y_k | s_0): the distribution after the start tuple.
    nn::Vec<S> start(const Eigen::VectorXd& s0) {
        state_ = nn::LstmState<S>::zeros(cfg_.lstm_dim);
        prev_emb_ = embed_.embed_obs(s0);
        return feed_tuple(embed_.concat(prev_emb_, cfg_.emb.null_action(), 0.0, prev_emb_));
    }

    nn::Vec<S> step(int action, double reward, const Eigen::VectorXd& s_next) {
        nn::Vec<S> next_emb = embed_.embed_obs(s_next);
        nn::Vec<S> probs = feed_tuple(embed_.concat(prev_emb_, action, reward, next_emb));
        prev_emb_ = std::move(next_emb);
        return probs;
    }

private:
    nn::Vec<S> feed_tuple(const nn::Vec<S>& tup) {
        nn::Vec<S> t1 =
            (params_->at("tup1.w").m * tup + params_->at("tup1.b").m.col(0)).cwiseMax(S(0));
        nn::Vec<S> x = params_->at("tup2.w").m * t1 + params_->at("tup2.b").m.col(0);
        nn::Vec<S> h = nn::lstm_step(params_->at("lstm.w"), params_->at("lstm.u"),
                                     params_->at("lstm.b"), x, state_);
        nn::Vec<S> a = (params_->at("h1.w").m * h + params_->at("h1.b").m.col(0)).cwiseMax(S(0));
        nn::Vec<S> b = (params_->at("h2.w").m * a + params_->at("h2.b").m.col(0)).cwiseMax(S(0));
        nn::Vec<S> logits = params_->at("h3.w").m * b + params_->at("h3.b").m.col(0);
        nn::Vec<S> probs = nn::softmax(logits);
        nn::check_finite<S>(probs, "classifier distribution");
        return probs;
    }

    ClassifierConfig cfg_;
    const nn::ParameterSet<S>* params_;
    EmbedStream<S> embed_;
    nn::LstmState<S> state_;
    nn::Vec<S> prev_emb_;
};

// ---- training-graph passes ---------------------------------------------------

namespace detail {

// Builds the tuple-sequence input nodes shared by both networks: the
// embedded tuple matrix [concat_dim x (T+1)], where column 0 is the start
// tuple (s_0, null action, 0, s_0) and column j >= 1 is transition j-1.
template <typename S>
inline typename nn::Graph<S>::NodeRef
tuple_sequence(nn::Graph<S>& g, const EmbedderDims& dims, const nn::ParameterSet<S>& params,
               const Trajectory& traj) {
    const int T = traj.steps();
    nn::Mat<S> obs(dims.obs_dim, T + 1);
    for (int t = 0; t <= T; ++t) obs.col(t) = traj.observations[static_cast<std::size_t>(t)].cast<S>();
    nn::Mat<S> rewards(1, T + 1);
    rewards(0, 0) = S(0);
    std::vector<int> action_ids(static_cast<std::size_t>(T) + 1);
    action_ids[0] = dims.null_action();
    std::vector<int> first(static_cast<std::size_t>(T) + 1), second(static_cast<std::size_t>(T) + 1);
    first[0] = 0;
    second[0] = 0;
    for (int t = 0; t < T; ++t) {
        rewards(0, t + 1) = static_cast<S>(traj.env_rewards[static_cast<std::size_t>(t)]);
        action_ids[static_cast<std::size_t>(t) + 1] = traj.actions[static_cast<std::size_t>(t)];
        first[static_cast<std::size_t>(t) + 1] = t;
        second[static_cast<std::size_t>(t) + 1] = t + 1;
    }

    auto obs_node = g.input(std::move(obs));
    auto s_h = g.relu(g.linear(g.param(params, "se1.w"), obs_node, g.param(params, "se1.b")));
    auto s_emb = g.linear(g.param(params, "se2.w"), s_h, g.param(params, "se2.b"));
    auto a_emb = g.embed_cols(g.param(params, "ae.table"), std::move(action_ids));
    auto r_emb = g.linear(g.param(params, "re.w"), g.input(std::move(rewards)), g.param(params, "re.b"));
    return g.tuple_concat(s_emb, a_emb, r_emb, std::move(first), std::move(second));
}

}  // namespace detail

// Q values for every prefix: node of shape [|A| x (T+1)], column t = Q(tau_{:t}, .).
template <typename S>
inline typename nn::Graph<S>::NodeRef
qnet_graph_pass(nn::Graph<S>& g, const QNetConfig& cfg, const nn::ParameterSet<S>& params,
                const Trajectory& traj) {
    auto tup = detail::tuple_sequence(g, cfg.emb, params, traj);
    auto x = g.linear(g.param(params, "tup.w"), tup, g.param(params, "tup.b"));
    auto h = g.lstm_seq(g.param(params, "lstm.w"), g.param(params, "lstm.u"),
                        g.param(params, "lstm.b"), x);
    auto v = g.linear(g.param(params, "val.w"), h, g.param(params, "val.b"));
    auto a = g.linear(g.param(params, "adv.w"), h, g.param(params, "adv.b"));
    return g.dueling(v, a);
}

// Classifier logits for every prefix: node of shape [2 x (T+1)].
template <typename S>
inline typename nn::Graph<S>::NodeRef
classifier_graph_pass(nn::Graph<S>& g, const ClassifierConfig& cfg,
                      const nn::ParameterSet<S>& params, const Trajectory& traj) {
    auto tup = detail::tuple_sequence(g, cfg.emb, params, traj);
    auto t1 = g.relu(g.linear(g.param(params, "tup1.w"), tup, g.param(params, "tup1.b")));
    auto x = g.linear(g.param(params, "tup2.w"), t1, g.param(params, "tup2.b"));
    auto h = g.lstm_seq(g.param(params, "lstm.w"), g.param(params, "lstm.u"),
                        g.param(params, "lstm.b"), x);
    auto a = g.relu(g.linear(g.param(params, "h1.w"), h, g.param(params, "h1.b")));
    auto b = g.relu(g.linear(g.param(params, "h2.w"), a, g.param(params, "h2.b")));
    return g.linear(g.param(params, "h3.w"), b, g.param(params, "h3.b"));
}

}  // namespace bugprobe
