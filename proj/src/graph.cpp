#include "histag/graph.hpp"

#include <cmath>
#include <limits>

namespace histag::nn {

Var Graph::push(Matrix value) {
    nodes_.push_back(Node{std::move(value), nullptr, Matrix(), {}});
    return Var{static_cast<int>(nodes_.size() - 1)};
}

const Matrix& Graph::value(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.external ? *n.external : n.value;
}

Matrix& Graph::acc(Var v) {
    Node& n = node(v);
    if (n.grad.size() == 0) {
        const Matrix& x = value(v);
        n.grad = Matrix::Zero(x.rows(), x.cols());
    }
    return n.grad;
}

void Graph::on_backward(Var out, std::function<void()> fn) {
    if (record_) node(out).backward = std::move(fn);
}

Var Graph::constant(Matrix value) { return push(std::move(value)); }

Var Graph::param(const Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var{it->second};
    nodes_.push_back(Node{Matrix(), &p.value, Matrix(), {}});
    Var out{static_cast<int>(nodes_.size() - 1)};
    param_nodes_[&p] = out.id;
    return out;
}

const Matrix* Graph::gradient_of(const Parameter& p) const {
    auto it = param_nodes_.find(&p);
    if (it == param_nodes_.end()) return nullptr;
    const Node& n = nodes_[static_cast<std::size_t>(it->second)];
    return n.grad.size() == 0 ? nullptr : &n.grad;
}

Var Graph::matmul(Var a, Var b) {
    Var out = push(val(a) * val(b));
    on_backward(out, [this, a, b, out] {
        const Matrix& g = node(out).grad;
        acc(a).noalias() += g * val(b).transpose();
        acc(b).noalias() += val(a).transpose() * g;
    });
    return out;
}

Var Graph::add(Var a, Var b) {
    Var out = push(val(a) + val(b));
    on_backward(out, [this, a, b, out] {
        const Matrix& g = node(out).grad;
        acc(a) += g;
        acc(b) += g;
    });
    return out;
}

Var Graph::add_bias(Var a, Var bias) {
    Var out = push(val(a).colwise() + val(bias).col(0));
    on_backward(out, [this, a, bias, out] {
        const Matrix& g = node(out).grad;
        acc(a) += g;
        acc(bias).col(0) += g.rowwise().sum();
    });
    return out;
}

Var Graph::mul(Var a, Var b) {
    Var out = push(val(a).cwiseProduct(val(b)));
    on_backward(out, [this, a, b, out] {
        const Matrix& g = node(out).grad;
        acc(a) += g.cwiseProduct(val(b));
        acc(b) += g.cwiseProduct(val(a));
    });
    return out;
}

Var Graph::sigmoid(Var a) {
    Matrix y = val(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    Var out = push(std::move(y));
    on_backward(out, [this, a, out] {
        const Matrix& y = val(out);
        acc(a).array() += node(out).grad.array() * y.array() * (1.0 - y.array());
    });
    return out;
}

Var Graph::tanh(Var a) {
    Var out = push(val(a).array().tanh().matrix());
    on_backward(out, [this, a, out] {
        const Matrix& y = val(out);
        acc(a).array() += node(out).grad.array() * (1.0 - y.array().square());
    });
    return out;
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
    Eigen::Index rows = 0;
    Eigen::Index cols = val(parts.front()).cols();
    for (Var p : parts) rows += val(p).rows();
    Matrix y(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
        const Matrix& x = val(p);
        y.middleRows(r, x.rows()) = x;
        r += x.rows();
    }
    Var out = push(std::move(y));
    on_backward(out, [this, parts, out] {
        const Matrix& g = node(out).grad;
        Eigen::Index r = 0;
        for (Var p : parts) {
            Eigen::Index n = val(p).rows();
            acc(p) += g.middleRows(r, n);
            r += n;
        }
    });
    return out;
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
    Eigen::Index cols = 0;
    Eigen::Index rows = val(parts.front()).rows();
    for (Var p : parts) cols += val(p).cols();
    Matrix y(rows, cols);
    Eigen::Index c = 0;
    for (Var p : parts) {
        const Matrix& x = val(p);
        y.middleCols(c, x.cols()) = x;
        c += x.cols();
    }
    Var out = push(std::move(y));
    on_backward(out, [this, parts, out] {
        const Matrix& g = node(out).grad;
        Eigen::Index c = 0;
        for (Var p : parts) {
            Eigen::Index n = val(p).cols();
            acc(p) += g.middleCols(c, n);
            c += n;
        }
    });
    return out;
}

Var Graph::slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
    Var out = push(val(a).middleRows(start, count));
    on_backward(out, [this, a, start, count, out] {
        acc(a).middleRows(start, count) += node(out).grad;
    });
    return out;
}

Var Graph::lookup(const Parameter& table, const std::vector<int>& ids) {
    Var t = param(table);
    const Matrix& w = table.value;
    Matrix y(w.rows(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t j = 0; j < ids.size(); ++j) y.col(static_cast<Eigen::Index>(j)) = w.col(ids[j]);
    Var out = push(std::move(y));
    on_backward(out, [this, t, ids, out] {
        const Matrix& g = node(out).grad;
        Matrix& gt = acc(t);
        for (std::size_t j = 0; j < ids.size(); ++j) gt.col(ids[j]) += g.col(static_cast<Eigen::Index>(j));
    });
    return out;
}

Var Graph::gather_cols(Var src, const std::vector<int>& idx) {
    const Matrix& x = val(src);
    Matrix y = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
        if (idx[j] >= 0) y.col(static_cast<Eigen::Index>(j)) = x.col(idx[j]);
    }
    Var out = push(std::move(y));
    on_backward(out, [this, src, idx, out] {
        const Matrix& g = node(out).grad;
        Matrix& gs = acc(src);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            if (idx[j] >= 0) gs.col(idx[j]) += g.col(static_cast<Eigen::Index>(j));
        }
    });
    return out;
}

Var Graph::select_cols(const std::vector<char>& keep, Var a, Var b) {
    Matrix y = val(b);
    const Matrix& xa = val(a);
    for (std::size_t j = 0; j < keep.size(); ++j) {
        if (keep[j]) y.col(static_cast<Eigen::Index>(j)) = xa.col(static_cast<Eigen::Index>(j));
    }
    Var out = push(std::move(y));
    on_backward(out, [this, keep, a, b, out] {
        const Matrix& g = node(out).grad;
        Matrix& ga = acc(a);
        Matrix& gb = acc(b);
        for (std::size_t j = 0; j < keep.size(); ++j) {
            auto c = static_cast<Eigen::Index>(j);
            if (keep[j]) {
                ga.col(c) += g.col(c);
            } else {
                gb.col(c) += g.col(c);
            }
        }
    });
    return out;
}

Var Graph::dropout(Var a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    const Matrix& x = val(a);
    Matrix mask(x.rows(), x.cols());
    const double keep = 1.0 - rate;
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        for (Eigen::Index i = 0; i < mask.rows(); ++i) {
            mask(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
        }
    }
    return mul(a, constant(std::move(mask)));
}

Var Graph::scale_cols(Var row, Var m) {
    const Matrix& r = val(row);
    Matrix y = val(m) * r.row(0).asDiagonal();
    Var out = push(std::move(y));
    on_backward(out, [this, row, m, out] {
        const Matrix& g = node(out).grad;
        acc(m) += g * val(row).row(0).asDiagonal();
        acc(row).row(0) += (g.cwiseProduct(val(m))).colwise().sum();
    });
    return out;
}

Var Graph::masked_softmax(Var scores, const Matrix& mask) {
    const Matrix& s = val(scores);
    Matrix y = Matrix::Zero(s.rows(), s.cols());
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
        double best = -std::numeric_limits<double>::infinity();
        for (Eigen::Index r = 0; r < s.rows(); ++r) {
            if (mask(r, c) != 0.0) best = std::max(best, s(r, c));
        }
        double total = 0.0;
        for (Eigen::Index r = 0; r < s.rows(); ++r) {
            if (mask(r, c) != 0.0) {
                y(r, c) = std::exp(s(r, c) - best);
                total += y(r, c);
            }
        }
        if (total > 0.0) y.col(c) /= total;
    }
    Var out = push(std::move(y));
    on_backward(out, [this, scores, out] {
        const Matrix& y = val(out);
        const Matrix& g = node(out).grad;
        Matrix& gs = acc(scores);
        for (Eigen::Index c = 0; c < y.cols(); ++c) {
            double dot = y.col(c).dot(g.col(c));
            gs.col(c).array() += y.col(c).array() * (g.col(c).array() - dot);
        }
    });
    return out;
}

Var Graph::cross_entropy(Var logits, const std::vector<int>& targets,
                         const std::vector<double>& weights) {
    const Matrix& z = val(logits);
    Matrix probs(z.rows(), z.cols());
    double loss = 0.0;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        double best = z.col(c).maxCoeff();
        probs.col(c) = (z.col(c).array() - best).exp().matrix();
        double total = probs.col(c).sum();
        probs.col(c) /= total;
        double w = weights[static_cast<std::size_t>(c)];
        if (w > 0.0) {
            int t = targets[static_cast<std::size_t>(c)];
            loss -= w * (z(t, c) - best - std::log(total));
        }
    }
    Var out = push(Matrix::Constant(1, 1, loss));
    on_backward(out, [this, logits, targets, weights, probs = std::move(probs), out] {
        double g = node(out).grad(0, 0);
        Matrix& gz = acc(logits);
        for (Eigen::Index c = 0; c < probs.cols(); ++c) {
            double w = weights[static_cast<std::size_t>(c)];
            if (w <= 0.0) continue;
            gz.col(c) += g * w * probs.col(c);
            gz(targets[static_cast<std::size_t>(c)], c) -= g * w;
        }
    });
    return out;
}

Var Graph::sum(const std::vector<Var>& parts) {
    Matrix y = val(parts.front());
    for (std::size_t i = 1; i < parts.size(); ++i) y += val(parts[i]);
    Var out = push(std::move(y));
    on_backward(out, [this, parts, out] {
        const Matrix& g = node(out).grad;
        for (Var p : parts) acc(p) += g;
    });
    return out;
}

Var Graph::scale(Var a, double factor) {
    Var out = push(val(a) * factor);
    on_backward(out, [this, a, factor, out] { acc(a) += node(out).grad * factor; });
    return out;
}

void Graph::backward(Var out) {
    acc(out).setOnes();
    for (int i = out.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.grad.size() == 0 || !n.backward) continue;
        n.backward();
    }
}

}  // namespace histag::nn
