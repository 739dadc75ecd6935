#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "demlearn/errors.hpp"
#include "demlearn/model.hpp"
#include "oracles.hpp"

using namespace demlearn;

namespace {

RowMatrix random_features(int n, int dim, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RowMatrix x(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) x(i, j) = u(gen);
  return x;
}

std::vector<int> random_labels(int n, int classes, std::mt19937_64& gen) {
  std::uniform_int_distribution<int> lab(0, classes - 1);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = lab(gen);
  return y;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("parameter counts follow the layout") {
  CHECK(ModelSpec::logistic(784, 10).param_count() == 7850);
  CHECK(ModelSpec::mlp(784, 32, 10).param_count() == 784 * 32 + 32 + 32 * 10 + 10);
  const ParamLayout l = ModelSpec::mlp(3, 4, 2).layout();
  CHECK(l.hidden_w == 0);
  CHECK(l.hidden_b == 12);
  CHECK(l.out_w == 16);
  CHECK(l.out_b == 24);
  CHECK(l.total == 26);
  CHECK_THROWS_AS(ModelSpec::logistic(0, 10).validate(), ArgumentError);
}

TEST_CASE("zero logistic weights give uniform rows") {
  std::mt19937_64 gen(3);
  const auto spec = ModelSpec::logistic(5, 4);
  RowMatrix x = random_features(7, 5, gen);
  std::vector<int> y(7, 0);
  const RowMatrix p = forward(spec, ParamVector::Zero(spec.param_count()), Batch(x, y));
  for (Index i = 0; i < p.rows(); ++i)
    for (Index c = 0; c < p.cols(); ++c) CHECK(p(i, c) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("a repeated sample yields identical rows") {
  std::mt19937_64 gen(4);
  for (const auto& spec : {ModelSpec::logistic(3, 3), ModelSpec::mlp(3, 5, 3)}) {
    RowMatrix x(2, 3);
    x << 0.2, 0.7, 0.1, 0.2, 0.7, 0.1;
    std::vector<int> y{0, 0};
    const RowMatrix p = forward(spec, oracle::random_vector(spec.param_count(), gen), Batch(x, y));
    CHECK(p.row(0) == p.row(1));
  }
}

TEST_CASE("large logit gap saturates to one-hot") {
  const auto spec = ModelSpec::logistic(1, 2);
  ParamVector w(4);
  w << 40.0, -40.0, 0.0, 0.0;  // W = [40; -40], b = 0
  RowMatrix x(1, 1);
  x << 1.0;
  std::vector<int> y{0};
  const RowMatrix p = forward(spec, w, Batch(x, y));
  const double expected0 = 1.0 / (1.0 + std::exp(-80.0));
  CHECK(p(0, 0) == doctest::Approx(expected0).epsilon(1e-15));
  CHECK(p(0, 1) == doctest::Approx(std::exp(-80.0) / (1.0 + std::exp(-80.0))).epsilon(1e-9));
}

TEST_CASE("forward rows are finite distributions even for huge inputs") {
  std::mt19937_64 gen(5);
  for (const auto& spec : {ModelSpec::logistic(6, 5), ModelSpec::mlp(6, 4, 5)}) {
    RowMatrix x = random_features(20, 6, gen) * 2e3;
    x.array() -= 1e3;
    std::vector<int> y(20, 1);
    const RowMatrix p = forward(spec, oracle::random_vector(spec.param_count(), gen, 3.0), Batch(x, y));
    for (Index i = 0; i < p.rows(); ++i) {
      CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-9);
      CHECK(p.row(i).allFinite());
      CHECK(p.row(i).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("dimension mismatches are rejected") {
  const auto spec = ModelSpec::logistic(3, 2);
  RowMatrix x = RowMatrix::Zero(2, 3);
  RowMatrix wide = RowMatrix::Zero(2, 4);
  std::vector<int> y{0, 1};
  std::vector<int> bad{0, 2};
  CHECK_THROWS_AS(forward(spec, ParamVector::Zero(7), Batch(x, y)), DimensionError);
  CHECK_THROWS_AS(forward(spec, ParamVector::Zero(8), Batch(wide, y)), DimensionError);
  CHECK_THROWS_AS(loss(spec, ParamVector::Zero(8), Batch(x, bad)), DimensionError);
  CHECK_THROWS_AS(grad(spec, ParamVector::Zero(9), Batch(x, y)), DimensionError);
}

TEST_CASE("loss at zero weights is ln(classes)") {
  std::mt19937_64 gen(6);
  const auto spec = ModelSpec::logistic(8, 10);
  RowMatrix x = random_features(10, 8, gen);
  std::vector<int> y{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(std::abs(loss(spec, ParamVector::Zero(spec.param_count()), Batch(x, y)) - std::log(10.0)) <= 1e-9);
  for (int trial = 0; trial < 20; ++trial) {
    RowMatrix xr = random_features(13, 8, gen);
    auto yr = random_labels(13, 10, gen);
    CHECK(std::abs(loss(spec, ParamVector::Zero(spec.param_count()), Batch(xr, yr)) - std::log(10.0)) <= 1e-9);
  }
}

TEST_CASE("loss matches a scalar recomputation on a hand-set batch") {
  const auto spec = ModelSpec::logistic(2, 3);
  ParamVector w(9);
  w << 0.5, -1.0, 2.0, 0.3, -0.7, 1.1, 0.1, -0.2, 0.05;
  std::vector<std::vector<double>> xs{{0.1, 0.9}, {0.5, 0.5}, {1.0, 0.0}};
  std::vector<int> y{0, 2, 1};
  RowMatrix x(3, 2);
  for (int i = 0; i < 3; ++i) x.row(i) << xs[static_cast<std::size_t>(i)][0], xs[static_cast<std::size_t>(i)][1];
  CHECK(loss(spec, w, Batch(x, y)) == doctest::Approx(oracle::logistic_loss_loops(w, 2, 3, xs, y)).epsilon(1e-13));
}

TEST_CASE("near-perfect predictor has near-zero loss and gradient") {
  const auto spec = ModelSpec::logistic(2, 2);
  ParamVector w(6);
  w << 30.0, -30.0, -30.0, 30.0, 0.0, 0.0;
  RowMatrix x(2, 2);
  x << 1.0, 0.0, 0.0, 1.0;
  std::vector<int> y{0, 1};
  const Batch b(x, y);
  CHECK(loss(spec, w, b) >= 0.0);
  CHECK(loss(spec, w, b) < 1e-20);
  CHECK(grad(spec, w, b).norm() < 1e-20);
}

TEST_CASE("gradient of a 10-parameter logistic model matches finite differences per coordinate") {
  std::mt19937_64 gen(7);
  const auto spec = ModelSpec::logistic(4, 2);
  REQUIRE(spec.param_count() == 10);
  for (int trial = 0; trial < 20; ++trial) {
    RowMatrix x = random_features(6, 4, gen);
    auto y = random_labels(6, 2, gen);
    const Batch b(x, y);
    const ParamVector w = oracle::random_vector(10, gen);
    const ParamVector g = grad(spec, w, b);
    const ParamVector fd = oracle::central_difference([&](const ParamVector& v) { return loss(spec, v, b); }, w);
    for (Index i = 0; i < 10; ++i) {
      const double scale = std::max({std::abs(g[i]), std::abs(fd[i]), 1e-3});
      CHECK(std::abs(g[i] - fd[i]) / scale < 1e-5);
    }
  }
}

TEST_CASE("mlp gradient matches finite differences") {
  std::mt19937_64 gen(8);
  const auto spec = ModelSpec::mlp(3, 4, 3);
  for (int trial = 0; trial < 20; ++trial) {
    RowMatrix x = random_features(5, 3, gen);
    auto y = random_labels(5, 3, gen);
    const Batch b(x, y);
    const ParamVector w = oracle::random_vector(spec.param_count(), gen);
    const ParamVector fd = oracle::central_difference([&](const ParamVector& v) { return loss(spec, v, b); }, w);
    CHECK(oracle::relative_error(grad(spec, w, b), fd) < 1e-5);
  }
}

TEST_CASE("duplicating every sample leaves the mean gradient unchanged") {
  std::mt19937_64 gen(9);
  const auto spec = ModelSpec::mlp(3, 4, 3);
  RowMatrix x = random_features(4, 3, gen);
  auto y = random_labels(4, 3, gen);
  RowMatrix xx(8, 3);
  xx << x, x;
  std::vector<int> yy = y;
  yy.insert(yy.end(), y.begin(), y.end());
  const ParamVector w = oracle::random_vector(spec.param_count(), gen);
  CHECK((grad(spec, w, Batch(x, y)) - grad(spec, w, Batch(xx, yy))).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("proximal objective") {
  std::mt19937_64 gen(10);
  const auto spec = ModelSpec::logistic(3, 2);
  RowMatrix x = random_features(5, 3, gen);
  auto y = random_labels(5, 2, gen);
  const Batch b(x, y);
  const ParamVector w = oracle::random_vector(8, gen);
  std::vector<ProxAnchor> anchors{{oracle::random_vector(8, gen), 0.5}, {oracle::random_vector(8, gen), 0.25}};

  SUBCASE("mu = 0 is the plain loss") {
    CHECK(prox_objective(spec, w, b, anchors, 0.0) == loss(spec, w, b));
    CHECK(prox_grad(spec, w, b, anchors, 0.0) == grad(spec, w, b));
  }
  SUBCASE("anchors equal to w add nothing") {
    std::vector<ProxAnchor> same{{w, 0.5}, {w, 1.0}};
    CHECK(prox_objective(spec, w, b, same, 7.0) == loss(spec, w, b));
  }
  SUBCASE("analytic penalty value") {
    ParamVector a(2), z = ParamVector::Zero(2);
    a << 1.0, 0.0;
    std::vector<ProxAnchor> one{{z, 0.5}};
    CHECK(prox_penalty(a, one) == doctest::Approx(0.5));
    ParamVector w8 = ParamVector::Zero(8);
    w8[0] = 1.0;
    std::vector<ProxAnchor> one8{{ParamVector::Zero(8), 0.5}};
    CHECK(prox_objective(spec, w8, b, one8, 2.0) - loss(spec, w8, b) == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("argument checks") {
    CHECK_THROWS_AS(prox_objective(spec, w, b, anchors, -0.1), ArgumentError);
    CHECK_THROWS_AS(prox_grad(spec, w, b, anchors, -0.1), ArgumentError);
    std::vector<ProxAnchor> bad_coeff{{w, 1.5}};
    CHECK_THROWS_AS(prox_grad(spec, w, b, bad_coeff, 0.1), ArgumentError);
    std::vector<ProxAnchor> bad_len{{ParamVector::Zero(3), 0.5}};
    CHECK_THROWS_AS(prox_objective(spec, w, b, bad_len, 0.1), DimensionError);
  }
  SUBCASE("two anchors, mu = 0.1, finite differences") {
    const ParamVector fd = oracle::central_difference(
        [&](const ParamVector& v) { return prox_objective(spec, v, b, anchors, 0.1); }, w);
    CHECK(oracle::relative_error(prox_grad(spec, w, b, anchors, 0.1), fd) < 1e-5);
  }
}

TEST_CASE("penalty-only gradient at a perfect fit") {
  const auto spec = ModelSpec::logistic(2, 2);
  ParamVector w(6);
  w << 30.0, -30.0, -30.0, 30.0, 0.0, 0.0;
  RowMatrix x(2, 2);
  x << 1.0, 0.0, 0.0, 1.0;
  std::vector<int> y{0, 1};
  ParamVector anchor = ParamVector::Constant(6, 1.0);
  std::vector<ProxAnchor> one{{anchor, 0.25}};
  const ParamVector g = prox_grad(spec, w, Batch(x, y), one, 3.0);
  const ParamVector expected = 3.0 * 0.25 * (w - anchor);
  CHECK((g - expected).norm() < 1e-12);
}

TEST_CASE("local solve") {
  std::mt19937_64 gen(11);
  const auto spec = ModelSpec::logistic(4, 3);
  RowMatrix x = random_features(30, 4, gen);
  auto y = random_labels(30, 3, gen);
  const Batch b(x, y);
  const ParamVector w0 = oracle::random_vector(spec.param_count(), gen, 0.1);
  std::vector<ProxAnchor> anchors{{oracle::random_vector(spec.param_count(), gen, 0.1), 0.5}};

  SUBCASE("lr = 0 returns the start point") {
    SolveOptions o{3, 4, 0.0};
    CHECK(local_solve(spec, w0, b, anchors, 0.2, o, 1u) == w0);
  }
  SUBCASE("negative lr and empty data are rejected") {
    SolveOptions o{1, 4, -0.1};
    CHECK_THROWS_AS(local_solve(spec, w0, b, anchors, 0.2, o, 1u), ArgumentError);
    RowMatrix none(0, 4);
    std::vector<int> no_labels;
    CHECK_THROWS(local_solve(spec, w0, Batch(none, no_labels), anchors, 0.2, SolveOptions{}, 1u));
  }
  SUBCASE("full-batch steps never increase the objective") {
    ParamVector w = w0;
    double prev = prox_objective(spec, w, b, anchors, 0.2);
    for (int i = 0; i < 50; ++i) {
      w = local_solve(spec, w, b, anchors, 0.2, SolveOptions{1, 30, 0.1}, static_cast<std::uint64_t>(i));
      const double cur = prox_objective(spec, w, b, anchors, 0.2);
      CHECK(cur <= prev);
      prev = cur;
    }
    CHECK(prev < prox_objective(spec, w0, b, anchors, 0.2));
  }
  SUBCASE("bitwise deterministic given the seed") {
    SolveOptions o{3, 7, 0.05};
    const ParamVector a = local_solve(spec, w0, b, anchors, 0.2, o, 42u);
    const ParamVector c = local_solve(spec, w0, b, anchors, 0.2, o, 42u);
    CHECK(a == c);
    CHECK(a != local_solve(spec, w0, b, anchors, 0.2, o, 43u));
  }
}

TEST_CASE("quadratic surrogate converges to the closed-form proximal minimizer") {
  for (double mu : {0.0, 0.3, 2.0}) {
    for (double coeff : {0.25, 1.0}) {
      const double a = 1.5, anchor = -2.0;
      // d/dw [(w - a)^2 + (mu/2) coeff (w - anchor)^2]
      MinibatchGradient g = [&](const ParamVector& w, std::span<const int>) {
        ParamVector out(1);
        out[0] = 2.0 * (w[0] - a) + mu * coeff * (w[0] - anchor);
        return out;
      };
      Rng rng(1);
      const ParamVector w = sgd_minimize(ParamVector::Zero(1), 1, SolveOptions{200, 1, 0.1}, rng, g);
      const double closed = (2.0 * a + mu * coeff * anchor) / (2.0 + mu * coeff);
      CHECK(std::abs(w[0] - closed) < 1e-4);
    }
  }
}

TEST_CASE("predict breaks ties towards the lowest class") {
  const auto spec = ModelSpec::logistic(2, 3);
  RowMatrix x(2, 2);
  x << 0.3, 0.4, 0.9, 0.1;
  std::vector<int> y{0, 0};
  CHECK(predict(spec, ParamVector::Zero(9), Batch(x, y)) == std::vector<int>{0, 0});
  ParamVector w = ParamVector::Zero(9);
  w[6 + 1] = 1.0;
  w[6 + 2] = 1.0;  // classes 1 and 2 tie above class 0
  CHECK(predict(spec, w, Batch(x, y)) == std::vector<int>{1, 1});
}

TEST_CASE("initialization is seeded and small") {
  const auto spec = ModelSpec::mlp(50, 20, 10);
  const ParamVector a = init_params(spec, 5), b = init_params(spec, 5), c = init_params(spec, 6);
  CHECK(a == b);
  CHECK(a != c);
  const double sd = std::sqrt(a.squaredNorm() / static_cast<double>(a.size()));
  CHECK(sd == doctest::Approx(0.01).epsilon(0.05));
}

}  // TEST_SUITE
