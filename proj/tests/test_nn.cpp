#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "bugprobe/nets.hpp"
#include "bugprobe/nn/graph.hpp"
#include "bugprobe/nn/ops.hpp"
#include "bugprobe/nn/optim.hpp"
#include "bugprobe/rng.hpp"

using namespace bugprobe;
using nn::Tensor;
using Graph = nn::Graph<double>;

namespace {

// Relative error with an absolute floor: central differences at h=1e-5 carry
// ~1e-11 of rounding noise, so coordinates whose true gradient is below 1e-5
// are held to a 1e-9 absolute tolerance instead of a meaningless ratio.
double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-5});
    return std::abs(a - b) / denom;
}

// Compare analytic gradients of `build` (a graph-building function returning
// the scalar loss node) against central finite differences on every
// parameter coordinate.
void fd_check(nn::ParameterSet<double>& params,
              const std::function<Graph::NodeRef(Graph&, const nn::ParameterSet<double>&)>& build,
              double h = 1e-5, double rel_tol = 1e-4) {
    nn::Gradients<double> grads = params.zero_gradients();
    {
        Graph g;
        auto loss = build(g, params);
        g.backward(loss, 1.0, grads);
    }
    for (auto& [name, tensor] : params.values) {
        for (Eigen::Index i = 0; i < tensor.size(); ++i) {
            double* p = tensor.m.data() + i;
            const double saved = *p;
            *p = saved + h;
            double up;
            {
                Graph g;
                up = g.scalar(build(g, params));
            }
            *p = saved - h;
            double down;
            {
                Graph g;
                down = g.scalar(build(g, params));
            }
            *p = saved;
            const double fd = (up - down) / (2 * h);
            const double an = grads.at(name).m.data()[i];
            INFO("param ", name, " coord ", i, " fd=", fd, " analytic=", an);
            CHECK(rel_err(fd, an) < rel_tol);
        }
    }
}

Trajectory random_trajectory(int obs_dim, int steps, int num_actions, Rng& rng) {
    Trajectory traj;
    for (int t = 0; t <= steps; ++t) {
        Eigen::VectorXd o(obs_dim);
        for (int i = 0; i < obs_dim; ++i) o(i) = rng.uniform(-1.0, 1.0);
        traj.observations.push_back(o);
    }
    for (int t = 0; t < steps; ++t) {
        traj.actions.push_back(static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_actions))));
        traj.env_rewards.push_back(rng.uniform(-1.0, 1.0));
    }
    return traj;
}

}  // namespace

TEST_CASE("linear_forward matches hand arithmetic") {
    auto w = Tensor<double>::matrix(2, 2);
    w.m << 1, 2, 0, 1;
    auto b = Tensor<double>::from_vector({1, 1});
    nn::Vec<double> x(2);
    x << 1, 1;
    auto y = nn::linear_forward(w, b, x);
    CHECK(y(0) == doctest::Approx(4.0));
    CHECK(y(1) == doctest::Approx(2.0));

    // identity weight, zero bias
    auto id = Tensor<double>::matrix(2, 2);
    id.m << 1, 0, 0, 1;
    auto zb = Tensor<double>::vector(2);
    nn::Vec<double> v(2);
    v << 3, -1;
    auto yi = nn::linear_forward(id, zb, v);
    CHECK(yi(0) == 3.0);
    CHECK(yi(1) == -1.0);

    // zero input returns the bias
    nn::Vec<double> z = nn::Vec<double>::Zero(2);
    auto yb = nn::linear_forward(w, b, z);
    CHECK(yb(0) == 1.0);
    CHECK(yb(1) == 1.0);

    // dimension mismatch
    nn::Vec<double> bad(3);
    bad.setZero();
    CHECK_THROWS_AS(nn::linear_forward(w, b, bad), ConfigError);
}

TEST_CASE("embed_lookup reads rows and bounds-checks") {
    auto table = Tensor<double>::matrix(3, 3);
    table.m.setIdentity();
    auto row = nn::embed_lookup(table, 1);
    CHECK(row(0) == 0.0);
    CHECK(row(1) == 1.0);
    CHECK(row(2) == 0.0);

    auto small = Tensor<double>::matrix(2, 2);
    small.m << 0.1, 0.2, 0.3, 0.4;
    auto r0 = nn::embed_lookup(small, 0);
    CHECK(r0(0) == doctest::Approx(0.1));
    CHECK(r0(1) == doctest::Approx(0.2));

    CHECK_THROWS_AS(nn::embed_lookup(table, 5), InputError);
    CHECK_THROWS_AS(nn::embed_lookup(table, -1), InputError);
}

TEST_CASE("lstm_step: zero parameters are a fixed point") {
    const int H = 4, in = 3;
    auto w = Tensor<double>::matrix(4 * H, in);
    auto u = Tensor<double>::matrix(4 * H, H);
    auto b = Tensor<double>::vector(4 * H);
    auto state = nn::LstmState<double>::zeros(H);
    nn::Vec<double> x(in);
    x << 0.3, -2.0, 5.0;
    auto h = nn::lstm_step(w, u, b, x, state);
    CHECK(h.cwiseAbs().maxCoeff() == 0.0);
    CHECK(state.cell.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lstm_step: saturated-gate scalar hand case") {
    // gate biases +10 (input/forget/output), candidate weight 1; c=0, x=1
    auto w = Tensor<double>::matrix(4, 1);
    w.m.setZero();
    w.m(2, 0) = 1.0;  // candidate row
    auto u = Tensor<double>::matrix(4, 1);
    auto b = Tensor<double>::vector(4);
    b.m(0, 0) = 10.0;
    b.m(1, 0) = 10.0;
    b.m(3, 0) = 10.0;
    auto state = nn::LstmState<double>::zeros(1);
    nn::Vec<double> x(1);
    x << 1.0;
    auto h = nn::lstm_step(w, u, b, x, state);

    const double sig10 = 1.0 / (1.0 + std::exp(-10.0));
    const double c_expect = sig10 * std::tanh(1.0);
    const double h_expect = sig10 * std::tanh(c_expect);
    CHECK(state.cell(0) == doctest::Approx(c_expect).epsilon(1e-12));
    CHECK(h(0) == doctest::Approx(h_expect).epsilon(1e-12));
    CHECK(state.cell(0) == doctest::Approx(std::tanh(1.0)).epsilon(1e-3));
    CHECK(h(0) == doctest::Approx(0.6421).epsilon(1e-3));
}

TEST_CASE("lstm_step: deterministic given frozen state") {
    const int H = 3, in = 2;
    Rng rng(7);
    auto w = Tensor<double>::matrix(4 * H, in);
    nn::init_uniform_fan_in(w, rng);
    auto u = Tensor<double>::matrix(4 * H, H);
    nn::init_uniform_fan_in(u, rng);
    auto b = Tensor<double>::vector(4 * H);
    nn::Vec<double> x(2);
    x << 0.5, -0.25;
    auto s1 = nn::LstmState<double>::zeros(H);
    auto s2 = nn::LstmState<double>::zeros(H);
    auto h1 = nn::lstm_step(w, u, b, x, s1);
    auto h2 = nn::lstm_step(w, u, b, x, s2);
    CHECK((h1 - h2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lstm_step rejects non-finite state with diagnostics") {
    auto w = Tensor<double>::matrix(4, 1);
    auto u = Tensor<double>::matrix(4, 1);
    auto b = Tensor<double>::vector(4);
    auto state = nn::LstmState<double>::zeros(1);
    state.hidden(0) = std::numeric_limits<double>::quiet_NaN();
    nn::Vec<double> x(1);
    x << 1.0;
    CHECK_THROWS_AS(nn::lstm_step(w, u, b, x, state), NumericError);
}

TEST_CASE("softmax_cross_entropy hand cases and stability") {
    nn::Vec<double> logits(2);
    logits << 0, 0;
    auto [loss0, probs0] = nn::softmax_cross_entropy(logits, 0);
    CHECK(probs0(0) == doctest::Approx(0.5));
    CHECK(probs0(1) == doctest::Approx(0.5));
    CHECK(loss0 == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    logits << 1000, 0;
    auto [loss1, probs1] = nn::softmax_cross_entropy(logits, 0);
    CHECK(std::isfinite(loss1));
    CHECK(loss1 == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(probs1.allFinite());

    logits << 1, -1;
    auto [loss2, probs2] = nn::softmax_cross_entropy(logits, 1);
    CHECK(probs2(0) == doctest::Approx(0.8808).epsilon(1e-3));
    CHECK(probs2(1) == doctest::Approx(0.1192).epsilon(1e-3));
    CHECK(loss2 == doctest::Approx(2.1269).epsilon(1e-3));

    CHECK_THROWS_AS(nn::softmax_cross_entropy(logits, 5), InputError);
}

TEST_CASE("softmax outputs sum to one and stay positive") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_index(6));
        nn::Vec<double> logits(n);
        for (int i = 0; i < n; ++i) logits(i) = rng.uniform(-50.0, 50.0);
        auto probs = nn::softmax(logits);
        CHECK(std::abs(probs.sum() - 1.0) < 1e-9);
        CHECK(probs.minCoeff() > 0.0);
    }
}

TEST_CASE("clip_grad_norm scales only above the threshold") {
    nn::ParameterSet<double> params;
    params.add("p", Tensor<double>::vector(2));
    auto grads = params.zero_gradients();
    grads.at("p").m << 3, 4;

    auto below = grads;
    nn::clip_grad_norm(below, 10.0);
    CHECK(below.at("p").m(0, 0) == 3.0);
    CHECK(below.at("p").m(1, 0) == 4.0);

    auto above = grads;
    nn::clip_grad_norm(above, 1.0);
    CHECK(above.at("p").m(0, 0) == doctest::Approx(0.6));
    CHECK(above.at("p").m(1, 0) == doctest::Approx(0.8));
    CHECK(above.global_norm() <= 1.0 + 1e-9);

    auto zero = params.zero_gradients();
    nn::clip_grad_norm(zero, 1.0);
    CHECK(zero.at("p").m.cwiseAbs().maxCoeff() == 0.0);

    // randomized: norm never exceeds the cap, direction preserved
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto g = params.zero_gradients();
        g.at("p").m << rng.uniform(-20, 20), rng.uniform(-20, 20);
        const double before = g.global_norm();
        auto clipped = g;
        nn::clip_grad_norm(clipped, 5.0);
        CHECK(clipped.global_norm() <= 5.0 + 1e-9);
        if (before > 1e-12) {
            const double cross = g.at("p").m(0, 0) * clipped.at("p").m(1, 0) -
                                 g.at("p").m(1, 0) * clipped.at("p").m(0, 0);
            CHECK(std::abs(cross) < 1e-9);
        }
    }
}

TEST_CASE("adam_step: first step is a signed unit move, zero grad is a no-op") {
    nn::ParameterSet<double> params;
    params.add("p", Tensor<double>::from_vector({1.0, -2.0}));
    auto grads = params.zero_gradients();
    grads.at("p").m << 0.5, -3.0;
    nn::adam_step(params, grads, 0.1);
    // first-step update ~ -lr * sign(g)
    CHECK(params.at("p").m(0, 0) == doctest::Approx(1.0 - 0.1).epsilon(1e-4));
    CHECK(params.at("p").m(1, 0) == doctest::Approx(-2.0 + 0.1).epsilon(1e-4));

    nn::ParameterSet<double> fresh;
    fresh.add("p", Tensor<double>::from_vector({1.0, -2.0}));
    auto zero = fresh.zero_gradients();
    for (int i = 0; i < 5; ++i) nn::adam_step(fresh, zero, 0.1);
    CHECK(fresh.at("p").m(0, 0) == 1.0);
    CHECK(fresh.at("p").m(1, 0) == -2.0);
    CHECK(fresh.adam_step_count == 5);
}

TEST_CASE("adam_step: constant gradient descends monotonically; lr=0 is bit-exact") {
    nn::ParameterSet<double> params;
    params.add("p", Tensor<double>::from_vector({0.7}));
    auto grads = params.zero_gradients();
    grads.at("p").m << 1.0;
    double prev = params.at("p").m(0, 0);
    for (int i = 0; i < 10; ++i) {
        nn::adam_step(params, grads, 0.1);
        CHECK(params.at("p").m(0, 0) < prev);
        prev = params.at("p").m(0, 0);
    }

    nn::ParameterSet<double> frozen;
    frozen.add("p", Tensor<double>::from_vector({0.7}));
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        auto g = frozen.zero_gradients();
        g.at("p").m << rng.uniform(-3, 3);
        nn::adam_step(frozen, g, 0.0);
    }
    CHECK(frozen.at("p").m(0, 0) == 0.7);
}

TEST_CASE("backprop: scalar linear gradient and disconnected parameters") {
    nn::ParameterSet<double> params;
    params.add("w", Tensor<double>::from_vector({2.0}));
    params.add("unused", Tensor<double>::from_vector({5.0}));
    Graph g;
    nn::Mat<double> xv(1, 1);
    xv << 3.0;
    auto loss = g.sum_all(g.linear(g.param(params, "w"), g.input(xv)));
    CHECK(g.scalar(loss) == doctest::Approx(6.0));
    auto grads = params.zero_gradients();
    g.backward(loss, 1.0, grads);
    CHECK(grads.at("w").m(0, 0) == doctest::Approx(3.0));  // d(w*x)/dw = x
    CHECK(grads.at("unused").m(0, 0) == 0.0);
}

TEST_CASE("backprop: finite differences on every op (linear/relu/embed/concat/dueling/ce)") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        nn::ParameterSet<double> params;
        auto& w1 = params.add("w1", Tensor<double>::matrix(4, 3));
        nn::init_uniform_fan_in(w1, rng);
        params.add("b1", Tensor<double>::vector(4));
        auto& table = params.add("tab", Tensor<double>::matrix(3, 2));
        nn::init_embedding(table, rng);
        auto& w2 = params.add("w2", Tensor<double>::matrix(2, 12));
        nn::init_uniform_fan_in(w2, rng);
        auto& vw = params.add("vw", Tensor<double>::matrix(1, 12));
        nn::init_uniform_fan_in(vw, rng);

        nn::Mat<double> x(3, 4);
        for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);

        auto build = [&](Graph& g, const nn::ParameterSet<double>& p) {
            auto h = g.relu(g.linear(g.param(p, "w1"), g.input(x), g.param(p, "b1")));
            auto e = g.embed_cols(g.param(p, "tab"), {0, 2, 1, 2});
            // column 0 of h is consumed twice, exercising scatter-add
            auto cat = g.tuple_concat(h, e, e, {0, 0, 1, 2}, {0, 1, 2, 3});
            auto a = g.linear(g.param(p, "w2"), cat);
            auto v = g.linear(g.param(p, "vw"), cat);
            auto q = g.dueling(v, a);
            return g.add(g.softmax_ce(g.col(q, 1), 0), g.softmax_ce(g.col(q, 3), 1));
        };
        fd_check(params, build);
    }
}

TEST_CASE("backprop: finite differences through the fused LSTM over a sequence") {
    Rng rng(23);
    const int H = 3, in = 2, T = 6;
    for (int trial = 0; trial < 3; ++trial) {
        nn::ParameterSet<double> params;
        auto& w = params.add("w", Tensor<double>::matrix(4 * H, in));
        nn::init_uniform_fan_in(w, rng);
        auto& u = params.add("u", Tensor<double>::matrix(4 * H, H));
        nn::init_uniform_fan_in(u, rng);
        auto& b = params.add("b", Tensor<double>::vector(4 * H));
        for (int j = 0; j < H; ++j) b.m(H + j, 0) = 1.0;
        auto& head = params.add("head", Tensor<double>::matrix(2, H));
        nn::init_uniform_fan_in(head, rng);

        nn::Mat<double> x(in, T);
        for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);

        auto build = [&](Graph& g, const nn::ParameterSet<double>& p) {
            auto h = g.lstm_seq(g.param(p, "w"), g.param(p, "u"), g.param(p, "b"), g.input(x));
            auto logits = g.linear(g.param(p, "head"), h);
            // gradient flows into several timesteps
            auto l0 = g.softmax_ce(g.col(logits, T - 1), 1);
            auto l1 = g.softmax_ce(g.col(logits, T / 2), 0);
            return g.add(l0, l1);
        };
        fd_check(params, build);
    }
}

TEST_CASE("backprop: finite differences on both full network graphs (small dims)") {
    Rng rng(31);
    EmbedderDims dims;
    dims.obs_dim = 4;
    dims.num_actions = 3;
    dims.state_h = 6;
    dims.state_out = 5;
    dims.act_dim = 3;
    dims.reward_dim = 2;

    QNetConfig qcfg;
    qcfg.emb = dims;
    qcfg.tuple_out = 5;
    qcfg.lstm_dim = 4;

    ClassifierConfig ccfg;
    ccfg.emb = dims;
    ccfg.tuple_h = 6;
    ccfg.tuple_out = 5;
    ccfg.lstm_dim = 4;
    ccfg.head_h = 6;

    for (int trial = 0; trial < 3; ++trial) {
        auto traj = random_trajectory(dims.obs_dim, 5, dims.num_actions, rng);

        auto qparams = make_qnet_params<double>(qcfg, derive_seed(900 + trial, "q"));
        auto qbuild = [&](Graph& g, const nn::ParameterSet<double>& p) {
            auto q = qnet_graph_pass(g, qcfg, p, traj);
            std::vector<Graph::TdEntry> entries;
            for (int t = 0; t < traj.steps(); ++t)
                entries.push_back({t, traj.actions[static_cast<std::size_t>(t)], 0.3 * t});
            return g.td_sse(q, entries);
        };
        fd_check(qparams, qbuild);

        auto cparams = make_classifier_params<double>(ccfg, derive_seed(900 + trial, "c"));
        auto cbuild = [&](Graph& g, const nn::ParameterSet<double>& p) {
            auto logits = classifier_graph_pass(g, ccfg, p, traj);
            return g.softmax_ce(g.col(logits, traj.steps()), 1);
        };
        fd_check(cparams, cbuild);
    }
}

TEST_CASE("graph pass matches the streaming session numerically") {
    Rng rng(41);
    EmbedderDims dims;
    dims.obs_dim = 7;
    QNetConfig qcfg;
    qcfg.emb = dims;
    ClassifierConfig ccfg;
    ccfg.emb = dims;

    auto qparams = make_qnet_params<double>(qcfg, 1234);
    auto cparams = make_classifier_params<double>(ccfg, 4321);
    auto traj = random_trajectory(dims.obs_dim, 12, dims.num_actions, rng);

    Graph g;
    auto qnode = qnet_graph_pass(g, qcfg, qparams, traj);
    const auto& qmat = g.value(qnode);

    QNetSession<double> session(qcfg, qparams);
    auto q0 = session.start(traj.observations[0]);
    CHECK((q0 - qmat.col(0)).cwiseAbs().maxCoeff() < 1e-9);
    for (int t = 0; t < traj.steps(); ++t) {
        auto qt = session.step(traj.actions[static_cast<std::size_t>(t)],
                               traj.env_rewards[static_cast<std::size_t>(t)],
                               traj.observations[static_cast<std::size_t>(t) + 1]);
        CHECK((qt - qmat.col(t + 1)).cwiseAbs().maxCoeff() < 1e-9);
    }

    Graph cg;
    auto lnode = classifier_graph_pass(cg, ccfg, cparams, traj);
    const auto& lmat = cg.value(lnode);
    ClassifierSession<double> csession(ccfg, cparams);
    auto p0 = csession.start(traj.observations[0]);
    auto expect0 = nn::softmax<double>(lmat.col(0));
    CHECK((p0 - expect0).cwiseAbs().maxCoeff() < 1e-9);
    for (int t = 0; t < traj.steps(); ++t) {
        auto pt = csession.step(traj.actions[static_cast<std::size_t>(t)],
                                traj.env_rewards[static_cast<std::size_t>(t)],
                                traj.observations[static_cast<std::size_t>(t) + 1]);
        auto expect = nn::softmax<double>(lmat.col(t + 1));
        CHECK((pt - expect).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("forward determinism: identical parameters and inputs, identical bits") {
    Rng rng(51);
    EmbedderDims dims;
    dims.obs_dim = 5;
    QNetConfig qcfg;
    qcfg.emb = dims;
    auto params = make_qnet_params<double>(qcfg, 777);
    auto traj = random_trajectory(dims.obs_dim, 8, dims.num_actions, rng);

    Graph g1, g2;
    auto n1 = qnet_graph_pass(g1, qcfg, params, traj);
    auto n2 = qnet_graph_pass(g2, qcfg, params, traj);
    CHECK(g1.value(n1) == g2.value(n2));
}

TEST_CASE("checkpoint round-trips parameters bit-exactly") {
    QNetConfig qcfg;
    qcfg.emb.obs_dim = 9;
    auto params = make_qnet_params<double>(qcfg, 99);
    params.adam_step_count = 17;
    nlohmann::json meta = {{"seed", 99}, {"net", qcfg.to_json()}};
    const std::string path = "test_nn_ckpt.bin";
    nn::save_checkpoint(path, params, meta);

    nlohmann::json meta2;
    auto loaded = nn::load_checkpoint<double>(path, &meta2);
    CHECK(loaded.adam_step_count == 17);
    CHECK(meta2.at("seed") == 99);
    REQUIRE(loaded.values.size() == params.values.size());
    for (const auto& [name, t] : params.values) {
        CHECK(loaded.at(name).m == t.m);
    }

    auto header = nn::read_checkpoint_header(path);
    CHECK(header.at("precision") == "f64");

    // precision mismatch is a configuration error
    CHECK_THROWS_AS(nn::load_checkpoint<float>(path), ConfigError);
    std::remove(path.c_str());
}
