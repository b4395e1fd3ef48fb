#pragma once

// Reverse-mode automatic differentiation over dense column-batched matrices.
//
// A Graph records every operation applied to its nodes; backward() walks the
// record in reverse and accumulates gradients into every node, including the
// leaves that read Parameters. A graph is built per batch and discarded.

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "histag/common.hpp"

namespace histag::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Parameter {
    std::string name;
    Matrix value;

    Parameter() = default;
    Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)), value(Matrix::Zero(rows, cols)) {}
};

struct Var {
    int id = -1;
};

class Graph {
public:
    /// With `record == false` no backward closures are stored.
    explicit Graph(bool record = true) : record_(record) {}

    Var constant(Matrix value);
    Var param(const Parameter& p);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    /// a (R x B) + bias (R x 1) broadcast over columns.
    Var add_bias(Var a, Var bias);
    Var mul(Var a, Var b);
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
    /// Columns of `table` selected by `ids`.
    Var lookup(const Parameter& table, const std::vector<int>& ids);
    /// Columns of `src` selected by `idx`; -1 yields a zero column.
    Var gather_cols(Var src, const std::vector<int>& idx);
    /// Per column: keep[j] ? a[:, j] : b[:, j].
    Var select_cols(const std::vector<char>& keep, Var a, Var b);
    /// Elementwise multiplication by a fixed inverted-dropout mask.
    Var dropout(Var a, double rate, Rng& rng);
    /// Row vector (1 x B) scaling each column of m (R x B).
    Var scale_cols(Var row, Var m);
    /// Column-wise softmax over the rows of `scores`, ignoring entries where
    /// mask(r, c) == 0.
    Var masked_softmax(Var scores, const Matrix& mask);
    /// Sum over columns c with weight[c] > 0 of
    /// weight[c] * -log softmax(logits[:, c])[target[c]]. Returns a 1x1 node.
    Var cross_entropy(Var logits, const std::vector<int>& targets, const std::vector<double>& weights);
    Var sum(const std::vector<Var>& parts);
    Var scale(Var a, double factor);

    const Matrix& value(Var v) const;
    const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
    double scalar(Var v) const { return value(v)(0, 0); }

    /// Seeds d(out)/d(out) = 1 and propagates to every node.
    void backward(Var out);
    /// Gradient with respect to a parameter after backward(), or nullptr if
    /// the parameter was not used or received no gradient.
    const Matrix* gradient_of(const Parameter& p) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        const Matrix* external = nullptr;
        Matrix grad;
        std::function<void()> backward;
    };

    Var push(Matrix value);
    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
    const Matrix& val(Var v) const { return value(v); }
    /// Gradient accumulator of `v`, zero-initialized on first use.
    Matrix& acc(Var v);
    void on_backward(Var out, std::function<void()> fn);

    bool record_;
    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, int> param_nodes_;
};

}  // namespace histag::nn
