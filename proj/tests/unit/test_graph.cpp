#include <doctest.h>

#include "histag/graph.hpp"
#include "support/gradcheck.hpp"

using namespace histag;
using namespace histag::nn;

namespace {

constexpr double kTol = 1e-6;

Parameter random_param(const char* name, Eigen::Index r, Eigen::Index c, Rng& rng) {
    Parameter p(name, r, c);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value(i) = rng.uniform() * 2.0 - 1.0;
    return p;
}

/// Reduces any R x C node to a scalar with fixed random weights.
Var reduce(Graph& g, Var v, std::uint64_t seed = 99) {
    const Matrix& x = g.value(v);
    Rng rng(seed);
    Matrix left(1, x.rows()), right(x.cols(), 1);
    for (Eigen::Index i = 0; i < left.size(); ++i) left(i) = rng.uniform() - 0.5;
    for (Eigen::Index i = 0; i < right.size(); ++i) right(i) = rng.uniform() - 0.5;
    return g.matmul(g.matmul(g.constant(left), v), g.constant(right));
}

}  // namespace

TEST_CASE("elementwise and matrix ops") {
    Rng rng(1);
    auto a = random_param("a", 3, 4, rng);
    auto b = random_param("b", 3, 4, rng);
    auto w = random_param("w", 5, 3, rng);
    auto bias = random_param("bias", 5, 1, rng);
    CHECK(oracle::graph_gradcheck({&a, &b}, [&](Graph& g) { return reduce(g, g.add(g.param(a), g.param(b))); }) < kTol);
    CHECK(oracle::graph_gradcheck({&a, &b}, [&](Graph& g) { return reduce(g, g.mul(g.param(a), g.param(b))); }) < kTol);
    CHECK(oracle::graph_gradcheck({&a}, [&](Graph& g) { return reduce(g, g.sigmoid(g.param(a))); }) < kTol);
    CHECK(oracle::graph_gradcheck({&a}, [&](Graph& g) { return reduce(g, g.tanh(g.param(a))); }) < kTol);
    CHECK(oracle::graph_gradcheck({&a}, [&](Graph& g) { return reduce(g, g.scale(g.param(a), -2.5)); }) < kTol);
    CHECK(oracle::graph_gradcheck({&w, &a, &bias}, [&](Graph& g) {
              return reduce(g, g.add_bias(g.matmul(g.param(w), g.param(a)), g.param(bias)));
          }) < kTol);
    CHECK(oracle::graph_gradcheck({&a, &b}, [&](Graph& g) {
              return reduce(g, g.sum({g.param(a), g.param(b), g.param(a)}));
          }) < kTol);
}

TEST_CASE("reshaping ops") {
    Rng rng(2);
    auto a = random_param("a", 3, 4, rng);
    auto b = random_param("b", 2, 4, rng);
    auto c = random_param("c", 3, 2, rng);
    auto table = random_param("table", 3, 6, rng);
    CHECK(oracle::graph_gradcheck({&a, &b}, [&](Graph& g) {
              return reduce(g, g.concat_rows({g.param(a), g.param(b)}));
          }) < kTol);
    CHECK(oracle::graph_gradcheck({&a, &c}, [&](Graph& g) {
              return reduce(g, g.concat_cols({g.param(a), g.param(c)}));
          }) < kTol);
    CHECK(oracle::graph_gradcheck({&a}, [&](Graph& g) { return reduce(g, g.slice_rows(g.param(a), 1, 2)); }) < kTol);
    CHECK(oracle::graph_gradcheck({&table}, [&](Graph& g) { return reduce(g, g.lookup(table, {5, 0, 5, 2})); }) <
          kTol);
    CHECK(oracle::graph_gradcheck({&a}, [&](Graph& g) {
              return reduce(g, g.gather_cols(g.param(a), {3, -1, 0, 3, 1}));
          }) < kTol);
    auto a2 = random_param("a2", 3, 4, rng);
    CHECK(oracle::graph_gradcheck({&a, &a2}, [&](Graph& g) {
              return reduce(g, g.select_cols({1, 0, 0, 1}, g.param(a), g.param(a2)));
          }) < kTol);
}

TEST_CASE("attention and loss ops") {
    Rng rng(3);
    auto s = random_param("s", 4, 3, rng);
    auto row = random_param("row", 1, 3, rng);
    auto m = random_param("m", 2, 3, rng);
    Matrix mask = Matrix::Ones(4, 3);
    mask(3, 0) = 0;
    mask(2, 0) = 0;
    mask(0, 2) = 0;
    CHECK(oracle::graph_gradcheck({&s}, [&](Graph& g) { return reduce(g, g.masked_softmax(g.param(s), mask)); }) <
          kTol);
    CHECK(oracle::graph_gradcheck({&row, &m}, [&](Graph& g) {
              return reduce(g, g.scale_cols(g.param(row), g.param(m)));
          }) < kTol);
    CHECK(oracle::graph_gradcheck({&s}, [&](Graph& g) {
              return g.cross_entropy(g.param(s), {1, 3, 0}, {1.0, 0.5, 0.0});
          }) < kTol);
    CHECK(oracle::graph_gradcheck({&s}, [&](Graph& g) {
              Rng drop(4);
              return reduce(g, g.dropout(g.param(s), 0.3, drop));
          }) < kTol);
}

TEST_CASE("forward values") {
    Graph g;
    Matrix logits(3, 1);
    logits << 1.0, 2.0, 3.0;
    Var l = g.constant(logits);
    double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    CHECK(g.scalar(g.cross_entropy(l, {0}, {2.0})) == doctest::Approx(2.0 * (lse - 1.0)));

    Matrix mask = Matrix::Ones(3, 1);
    mask(2, 0) = 0;
    const Matrix& p = g.value(g.masked_softmax(l, mask));
    CHECK(p(2, 0) == 0.0);
    CHECK(p(0, 0) + p(1, 0) == doctest::Approx(1.0));

    Var gathered = g.gather_cols(l, {-1, 0});
    CHECK(g.value(gathered).col(0).isZero());

    Rng rng(5);
    Var same = g.dropout(l, 0.0, rng);
    CHECK(same.id == l.id);
}

TEST_CASE("unused parameters get no gradient") {
    Parameter a("a", 2, 2), b("b", 2, 2);
    a.value.setOnes();
    Graph g;
    Var out = g.cross_entropy(g.param(a), {0, 1}, {1.0, 1.0});
    g.backward(out);
    CHECK(g.gradient_of(a) != nullptr);
    CHECK(g.gradient_of(b) == nullptr);
}
