#pragma once

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "bugprobe/errors.hpp"
#include "bugprobe/nn/ops.hpp"
#include "bugprobe/nn/params.hpp"
#include "bugprobe/nn/tensor.hpp"

namespace bugprobe::nn {

// Reverse-mode tape over matrix-valued nodes. A node's columns are timesteps
// (or a single column for vectors), so the recorded ops stay coarse: one
// linear node covers a whole unrolled sequence and the LSTM is a single fused
// node that runs BPTT internally. Tape order is topological by construction.
//
// Typical use:
//   Graph<double> g;
//   auto x = g.input(...); auto w = g.param(params, "w");
//   auto y = g.relu(g.linear(w, x, b));
//   auto loss = g.sum_all(y);
//   g.forward_value(loss);                       // values are already computed eagerly
//   auto grads = params.zero_gradients();
//   g.backward(loss, 1.0, grads);
template <typename S>
class Graph {
public:
    struct NodeRef {
        int id = -1;
    };

    struct TdEntry {
        int col = 0;      // prefix index t
        int action = 0;   // row of Q charged with the error
        S target = S(0);  // fixed regression target
    };

    // ---- leaves ----

    NodeRef input(Mat<S> value) {
        Node n;
        n.kind = Op::Input;
        n.value = std::move(value);
        return push(std::move(n));
    }

    NodeRef param(const ParameterSet<S>& params, const std::string& name) {
        Node n;
        n.kind = Op::Param;
        n.bound = &params.at(name);
        n.param_name = name;
        n.needs_grad = true;
        return push(std::move(n));
    }

    // ---- ops ----

    // W X, optionally plus a column-broadcast bias.
    NodeRef linear(NodeRef w, NodeRef x, NodeRef b = NodeRef{}) {
        const Mat<S>& wm = value(w);
        const Mat<S>& xm = value(x);
        if (wm.cols() != xm.rows())
            throw ConfigError("graph linear: weight cols " + std::to_string(wm.cols()) +
                              " vs input rows " + std::to_string(xm.rows()));
        Node n;
        n.kind = Op::Linear;
        n.in = {w.id, x.id, b.id, -1};
        n.value.noalias() = wm * xm;
        if (b.id >= 0) n.value.colwise() += Eigen::Matrix<S, Eigen::Dynamic, 1>(value(b).col(0));
        return push(std::move(n));
    }

    NodeRef relu(NodeRef x) {
        Node n;
        n.kind = Op::Relu;
        n.in = {x.id, -1, -1, -1};
        n.value = value(x).cwiseMax(S(0));
        return push(std::move(n));
    }

    // Fused LSTM over a [in x T] input sequence; initial state is zeros.
    // Output is [H x T] with column t = h_t. Gate caches are kept for BPTT.
    NodeRef lstm_seq(NodeRef w, NodeRef u, NodeRef b, NodeRef x) {
        const Mat<S>& wm = value(w);
        const Mat<S>& um = value(u);
        const Mat<S>& bm = value(b);
        const Mat<S>& xm = value(x);
        const Eigen::Index hidden = um.cols();
        if (wm.rows() != 4 * hidden || um.rows() != 4 * hidden || bm.rows() != 4 * hidden)
            throw ConfigError("graph lstm_seq: gate rows must be 4x hidden dim");
        if (wm.cols() != xm.rows())
            throw ConfigError("graph lstm_seq: input dim mismatch");
        const Eigen::Index T = xm.cols();

        Node n;
        n.kind = Op::LstmSeq;
        n.in = {w.id, u.id, b.id, x.id};
        n.lstm = std::make_unique<LstmCache>();
        n.lstm->gates.resize(4 * hidden, T);
        n.lstm->cells.resize(hidden, T);
        n.value.resize(hidden, T);

        // Input contributions for all timesteps in one product; the recurrent
        // term is added per step.
        Mat<S> z_in = (wm * xm).colwise() + Eigen::Matrix<S, Eigen::Dynamic, 1>(bm.col(0));
        Vec<S> h = Vec<S>::Zero(hidden);
        Vec<S> c = Vec<S>::Zero(hidden);
        Vec<S> z(4 * hidden);
        for (Eigen::Index t = 0; t < T; ++t) {
            z = z_in.col(t);
            z.noalias() += um * h;
            for (Eigen::Index j = 0; j < hidden; ++j) {
                const S ig = sigmoid(z(j));
                const S fg = sigmoid(z(hidden + j));
                const S gg = std::tanh(z(2 * hidden + j));
                const S og = sigmoid(z(3 * hidden + j));
                c(j) = fg * c(j) + ig * gg;
                h(j) = og * std::tanh(c(j));
                n.lstm->gates(j, t) = ig;
                n.lstm->gates(hidden + j, t) = fg;
                n.lstm->gates(2 * hidden + j, t) = gg;
                n.lstm->gates(3 * hidden + j, t) = og;
            }
            n.lstm->cells.col(t) = c;
            n.value.col(t) = h;
        }
        return push(std::move(n));
    }

    // table [rows x dim] gathered into [dim x N] columns.
    NodeRef embed_cols(NodeRef table, std::vector<int> ids) {
        const Mat<S>& tm = value(table);
        Node n;
        n.kind = Op::EmbedCols;
        n.in = {table.id, -1, -1, -1};
        n.value.resize(tm.cols(), static_cast<Eigen::Index>(ids.size()));
        for (std::size_t j = 0; j < ids.size(); ++j) {
            if (ids[j] < 0 || ids[j] >= tm.rows())
                throw InputError("embed_cols: row index out of range");
            n.value.col(static_cast<Eigen::Index>(j)) = tm.row(ids[j]).transpose();
        }
        n.ids = std::move(ids);
        return push(std::move(n));
    }

    // Transition-tuple assembly: column j is the concatenation
    //   [ s_emb[:, first[j]]; a_emb[:, j]; r_emb[:, j]; s_emb[:, second[j]] ].
    // first/second express the sharing of observation embeddings between
    // consecutive tuples, so gradients scatter-add back into s_emb.
    NodeRef tuple_concat(NodeRef s_emb, NodeRef a_emb, NodeRef r_emb,
                         std::vector<int> first, std::vector<int> second) {
        const Mat<S>& se = value(s_emb);
        const Mat<S>& ae = value(a_emb);
        const Mat<S>& re = value(r_emb);
        const Eigen::Index T = ae.cols();
        if (static_cast<Eigen::Index>(first.size()) != T ||
            static_cast<Eigen::Index>(second.size()) != T || re.cols() != T)
            throw ConfigError("tuple_concat: inconsistent tuple counts");
        Node n;
        n.kind = Op::TupleConcat;
        n.in = {s_emb.id, a_emb.id, r_emb.id, -1};
        const Eigen::Index sd = se.rows(), ad = ae.rows(), rd = re.rows();
        n.value.resize(2 * sd + ad + rd, T);
        for (Eigen::Index j = 0; j < T; ++j) {
            n.value.block(0, j, sd, 1) = se.col(first[static_cast<std::size_t>(j)]);
            n.value.block(sd, j, ad, 1) = ae.col(j);
            n.value.block(sd + ad, j, rd, 1) = re.col(j);
            n.value.block(sd + ad + rd, j, sd, 1) = se.col(second[static_cast<std::size_t>(j)]);
        }
        n.ids = std::move(first);
        n.ids2 = std::move(second);
        return push(std::move(n));
    }

    // Q = A - colmean(A) + V, with V broadcast across action rows.
    NodeRef dueling(NodeRef v, NodeRef a) {
        const Mat<S>& vm = value(v);
        const Mat<S>& am = value(a);
        if (vm.rows() != 1 || vm.cols() != am.cols())
            throw ConfigError("dueling: V must be [1 x T] matching A columns");
        Node n;
        n.kind = Op::Dueling;
        n.in = {v.id, a.id, -1, -1};
        n.value = am;
        n.value.rowwise() -= am.colwise().mean();
        n.value.rowwise() += vm.row(0);
        return push(std::move(n));
    }

    NodeRef col(NodeRef x, int j) {
        const Mat<S>& xm = value(x);
        if (j < 0 || j >= xm.cols()) throw InputError("col: column index out of range");
        Node n;
        n.kind = Op::Col;
        n.in = {x.id, -1, -1, -1};
        n.col_index = j;
        n.value = xm.col(j);
        return push(std::move(n));
    }

    // Sum of squared TD errors over the listed (col, action, target) entries.
    NodeRef td_sse(NodeRef q, std::vector<TdEntry> entries) {
        const Mat<S>& qm = value(q);
        S sse = S(0);
        for (const auto& e : entries) {
            if (e.col < 0 || e.col >= qm.cols() || e.action < 0 || e.action >= qm.rows())
                throw InputError("td_sse: entry out of range");
            const S d = qm(e.action, e.col) - e.target;
            sse += d * d;
        }
        Node n;
        n.kind = Op::TdSse;
        n.in = {q.id, -1, -1, -1};
        n.value = Mat<S>::Constant(1, 1, sse);
        n.td = std::move(entries);
        return push(std::move(n));
    }

    // Cross-entropy of a single-column logit vector against a class index.
    NodeRef softmax_ce(NodeRef logits, int target) {
        const Mat<S>& lm = value(logits);
        if (lm.cols() != 1) throw ConfigError("softmax_ce: expected a single column");
        auto [loss, probs] = softmax_cross_entropy<S>(lm.col(0), target);
        Node n;
        n.kind = Op::SoftmaxCe;
        n.in = {logits.id, -1, -1, -1};
        n.col_index = target;
        n.value = Mat<S>::Constant(1, 1, loss);
        n.probs = std::move(probs);
        return push(std::move(n));
    }

    NodeRef sum_all(NodeRef x) {
        Node n;
        n.kind = Op::SumAll;
        n.in = {x.id, -1, -1, -1};
        n.value = Mat<S>::Constant(1, 1, value(x).sum());
        return push(std::move(n));
    }

    NodeRef add(NodeRef a, NodeRef b) {
        if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
            throw ConfigError("add: shape mismatch");
        Node n;
        n.kind = Op::Add;
        n.in = {a.id, b.id, -1, -1};
        n.value = value(a) + value(b);
        return push(std::move(n));
    }

    const Mat<S>& value(NodeRef r) const {
        if (r.id < 0 || r.id >= static_cast<int>(nodes_.size()))
            throw UsageError("graph: reference to unrecorded node");
        const Node& n = nodes_[static_cast<std::size_t>(r.id)];
        return n.kind == Op::Param ? n.bound->m : n.value;
    }

    S scalar(NodeRef r) const {
        const Mat<S>& v = value(r);
        if (v.size() != 1) throw UsageError("graph: node is not a scalar");
        return v(0, 0);
    }

    const Vec<S>& probs(NodeRef r) const {
        const Node& n = nodes_.at(static_cast<std::size_t>(r.id));
        if (n.kind != Op::SoftmaxCe) throw UsageError("graph: probs() on a non-softmax node");
        return n.probs;
    }

    // Reverse pass from a scalar loss. Parameter gradients are accumulated
    // (scaled by `seed`) into `sink`, which must be zero_gradients()-shaped
    // for every parameter set bound into this graph.
    void backward(NodeRef loss, S seed, Gradients<S>& sink) {
        if (loss.id < 0 || loss.id >= static_cast<int>(nodes_.size()))
            throw UsageError("graph backward: unrecorded loss node");
        Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
        if (ln.value.size() != 1) throw UsageError("graph backward: loss must be scalar");

        for (auto& n : nodes_) n.grad.resize(0, 0);
        ln.grad = Mat<S>::Constant(1, 1, seed);

        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.grad.size() == 0 || !n.needs_grad) continue;
            backward_node(n, sink);
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        Input,
        Param,
        Linear,
        Relu,
        LstmSeq,
        EmbedCols,
        TupleConcat,
        Dueling,
        Col,
        TdSse,
        SoftmaxCe,
        SumAll,
        Add,
    };

    struct LstmCache {
        Mat<S> gates;  // [4H x T] post-activation (i, f, g, o)
        Mat<S> cells;  // [H x T]
    };

    struct Node {
        Op kind = Op::Input;
        std::array<int, 4> in{-1, -1, -1, -1};
        Mat<S> value;
        Mat<S> grad;
        bool needs_grad = false;
        const Tensor<S>* bound = nullptr;  // Param
        std::string param_name;
        std::vector<int> ids;   // EmbedCols row ids / TupleConcat first
        std::vector<int> ids2;  // TupleConcat second
        int col_index = 0;      // Col / SoftmaxCe target
        std::vector<TdEntry> td;
        Vec<S> probs;
        std::unique_ptr<LstmCache> lstm;
    };

    NodeRef push(Node n) {
        if (n.kind != Op::Param && n.kind != Op::Input) {
            for (int i : n.in)
                if (i >= 0 && nodes_[static_cast<std::size_t>(i)].needs_grad) n.needs_grad = true;
        }
        nodes_.push_back(std::move(n));
        return NodeRef{static_cast<int>(nodes_.size()) - 1};
    }

    Mat<S>& grad_of(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.size() == 0) {
            const Mat<S>& v = n.kind == Op::Param ? n.bound->m : n.value;
            n.grad = Mat<S>::Zero(v.rows(), v.cols());
        }
        return n.grad;
    }

    bool wants_grad(int id) const {
        return id >= 0 && nodes_[static_cast<std::size_t>(id)].needs_grad;
    }

    void backward_node(Node& n, Gradients<S>& sink) {
        switch (n.kind) {
            case Op::Input:
                break;
            case Op::Param:
                sink.at(n.param_name).m += n.grad;
                break;
            case Op::Linear: {
                const Mat<S>& wm = value(NodeRef{n.in[0]});
                const Mat<S>& xm = value(NodeRef{n.in[1]});
                if (wants_grad(n.in[0])) grad_of(n.in[0]).noalias() += n.grad * xm.transpose();
                if (wants_grad(n.in[1])) grad_of(n.in[1]).noalias() += wm.transpose() * n.grad;
                if (n.in[2] >= 0 && wants_grad(n.in[2]))
                    grad_of(n.in[2]).col(0) += n.grad.rowwise().sum();
                break;
            }
            case Op::Relu: {
                if (wants_grad(n.in[0])) {
                    const Mat<S>& xm = value(NodeRef{n.in[0]});
                    grad_of(n.in[0]).array() +=
                        n.grad.array() * (xm.array() > S(0)).template cast<S>();
                }
                break;
            }
            case Op::LstmSeq:
                backward_lstm(n, sink);
                break;
            case Op::EmbedCols: {
                if (wants_grad(n.in[0])) {
                    Mat<S>& tg = grad_of(n.in[0]);
                    for (std::size_t j = 0; j < n.ids.size(); ++j)
                        tg.row(n.ids[j]) += n.grad.col(static_cast<Eigen::Index>(j)).transpose();
                }
                break;
            }
            case Op::TupleConcat: {
                const Eigen::Index sd = value(NodeRef{n.in[0]}).rows();
                const Eigen::Index ad = value(NodeRef{n.in[1]}).rows();
                const Eigen::Index rd = value(NodeRef{n.in[2]}).rows();
                const Eigen::Index T = n.grad.cols();
                if (wants_grad(n.in[0])) {
                    Mat<S>& sg = grad_of(n.in[0]);
                    for (Eigen::Index j = 0; j < T; ++j) {
                        sg.col(n.ids[static_cast<std::size_t>(j)]) += n.grad.block(0, j, sd, 1);
                        sg.col(n.ids2[static_cast<std::size_t>(j)]) +=
                            n.grad.block(sd + ad + rd, j, sd, 1);
                    }
                }
                if (wants_grad(n.in[1])) grad_of(n.in[1]) += n.grad.block(sd, 0, ad, T);
                if (wants_grad(n.in[2])) grad_of(n.in[2]) += n.grad.block(sd + ad, 0, rd, T);
                break;
            }
            case Op::Dueling: {
                // dA = dQ - colmean(dQ); dV = colsum(dQ)
                if (wants_grad(n.in[1])) {
                    Mat<S>& ag = grad_of(n.in[1]);
                    Mat<S> centered = n.grad;
                    centered.rowwise() -= n.grad.colwise().mean();
                    ag += centered;
                }
                if (wants_grad(n.in[0])) grad_of(n.in[0]).row(0) += n.grad.colwise().sum();
                break;
            }
            case Op::Col:
                if (wants_grad(n.in[0])) grad_of(n.in[0]).col(n.col_index) += n.grad.col(0);
                break;
            case Op::TdSse: {
                if (wants_grad(n.in[0])) {
                    const Mat<S>& qm = value(NodeRef{n.in[0]});
                    Mat<S>& qg = grad_of(n.in[0]);
                    const S up = n.grad(0, 0);
                    for (const auto& e : n.td)
                        qg(e.action, e.col) += S(2) * (qm(e.action, e.col) - e.target) * up;
                }
                break;
            }
            case Op::SoftmaxCe: {
                if (wants_grad(n.in[0])) {
                    Mat<S>& lg = grad_of(n.in[0]);
                    const S up = n.grad(0, 0);
                    lg.col(0) += up * n.probs;
                    lg(n.col_index, 0) -= up;
                }
                break;
            }
            case Op::SumAll:
                if (wants_grad(n.in[0])) {
                    grad_of(n.in[0]).array() += n.grad(0, 0);
                }
                break;
            case Op::Add:
                if (wants_grad(n.in[0])) grad_of(n.in[0]) += n.grad;
                if (wants_grad(n.in[1])) grad_of(n.in[1]) += n.grad;
                break;
        }
    }

    void backward_lstm(Node& n, Gradients<S>& sink) {
        (void)sink;
        const Mat<S>& wm = value(NodeRef{n.in[0]});
        const Mat<S>& um = value(NodeRef{n.in[1]});
        const Mat<S>& xm = value(NodeRef{n.in[3]});
        const Eigen::Index hidden = um.cols();
        const Eigen::Index T = xm.cols();
        const Mat<S>& gates = n.lstm->gates;
        const Mat<S>& cells = n.lstm->cells;

        Mat<S> dz_all(4 * hidden, T);
        Vec<S> dh = Vec<S>::Zero(hidden);
        Vec<S> dc = Vec<S>::Zero(hidden);
        Vec<S> dz(4 * hidden);
        for (Eigen::Index t = T - 1; t >= 0; --t) {
            dh += n.grad.col(t);
            for (Eigen::Index j = 0; j < hidden; ++j) {
                const S ig = gates(j, t);
                const S fg = gates(hidden + j, t);
                const S gg = gates(2 * hidden + j, t);
                const S og = gates(3 * hidden + j, t);
                const S c = cells(j, t);
                const S tc = std::tanh(c);
                const S c_prev = t > 0 ? cells(j, t - 1) : S(0);

                const S dct = dc(j) + dh(j) * og * (S(1) - tc * tc);
                dz(3 * hidden + j) = dh(j) * tc * og * (S(1) - og);       // d z_o
                dz(j) = dct * gg * ig * (S(1) - ig);                      // d z_i
                dz(hidden + j) = dct * c_prev * fg * (S(1) - fg);         // d z_f
                dz(2 * hidden + j) = dct * ig * (S(1) - gg * gg);         // d z_g
                dc(j) = dct * fg;
            }
            dz_all.col(t) = dz;
            dh.noalias() = um.transpose() * dz;
        }

        if (wants_grad(n.in[0])) grad_of(n.in[0]).noalias() += dz_all * xm.transpose();
        if (wants_grad(n.in[1])) {
            // h_prev matrix: [0, h_0, ..., h_{T-2}]
            Mat<S>& ug = grad_of(n.in[1]);
            if (T > 1) ug.noalias() += dz_all.rightCols(T - 1) * n.value.leftCols(T - 1).transpose();
        }
        if (wants_grad(n.in[2])) grad_of(n.in[2]).col(0) += dz_all.rowwise().sum();
        if (wants_grad(n.in[3])) grad_of(n.in[3]).noalias() += wm.transpose() * dz_all;
    }

    std::vector<Node> nodes_;
};

}  // namespace bugprobe::nn
