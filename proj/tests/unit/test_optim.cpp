#include "disa/optim.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <limits>

using namespace disa;

namespace {

class Counting : public Objective {
 public:
  explicit Counting(const Objective& inner) : inner_(inner) {}
  int dimension() const override { return inner_.dimension(); }
  double value(const VecX& x) const override {
    ++values;
    return inner_.value(x);
  }
  bool has_gradient() const override { return inner_.has_gradient(); }
  double value_and_gradient(const VecX& x, VecX& g) const override {
    ++gradients;
    return inner_.value_and_gradient(x, g);
  }
  std::size_t total() const { return values + gradients; }

  mutable std::atomic<std::size_t> values{0};
  mutable std::atomic<std::size_t> gradients{0};

 private:
  const Objective& inner_;
};

// f(x) = 0.5 (x - c)^T A (x - c) with A symmetric positive definite.
FunctionObjective quadratic(const Eigen::MatrixXd& a, const VecX& c, bool with_gradient = true) {
  auto value = [a, c](const VecX& x) { return 0.5 * (x - c).dot(a * (x - c)); };
  FunctionObjective::GradientFn grad = nullptr;
  if (with_gradient)
    grad = [a, c](const VecX& x, VecX& g) {
      g = a * (x - c);
      return 0.5 * (x - c).dot(g);
    };
  return FunctionObjective(static_cast<int>(c.size()), value, grad);
}

Eigen::MatrixXd spd(int n) {
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = 1.0 / (1.0 + i + j);
  return m + n * Eigen::MatrixXd::Identity(n, n);
}

FunctionObjective rosenbrock() {
  return FunctionObjective(
      2, [](const VecX& x) { return std::pow(1 - x[0], 2) + 100 * std::pow(x[1] - x[0] * x[0], 2); },
      [](const VecX& x, VecX& g) {
        g.resize(2);
        g[0] = -2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] * x[0]);
        g[1] = 200 * (x[1] - x[0] * x[0]);
        return std::pow(1 - x[0], 2) + 100 * std::pow(x[1] - x[0] * x[0], 2);
      });
}

// Many local minima; global minimum 0 at the origin.
FunctionObjective rastrigin(int n) {
  auto v = [](const VecX& x) {
    double s = 10.0 * static_cast<double>(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) s += x[i] * x[i] - 10.0 * std::cos(2 * M_PI * x[i]);
    return s;
  };
  return FunctionObjective(n, v, [v](const VecX& x, VecX& g) {
    g.resize(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) g[i] = 2 * x[i] + 20 * M_PI * std::sin(2 * M_PI * x[i]);
    return v(x);
  });
}

Bounds box(int n, double lo, double hi) { return {VecX::Constant(n, lo), VecX::Constant(n, hi)}; }

}  // namespace

TEST(Objective, DefaultGradientIsUnsupported) {
  const FunctionObjective f(1, [](const VecX& x) { return x[0]; });
  EXPECT_FALSE(f.has_gradient());
  VecX g;
  try {
    f.value_and_gradient(VecX::Zero(1), g);
    FAIL() << "expected UnsupportedError";
  } catch (const UnsupportedError& e) {
    EXPECT_STREQ(e.what(), "gradient unavailable");
  }
}

TEST(BoundsTest, ProjectAndContains) {
  const Bounds b = box(2, -1, 1);
  EXPECT_EQ(b.project(Eigen::Vector2d(3.0, -0.5)), Eigen::Vector2d(1.0, -0.5));
  EXPECT_TRUE(b.contains(Eigen::Vector2d(1.0, -1.0)));
  EXPECT_FALSE(b.contains(Eigen::Vector2d(1.0001, 0.0)));
  EXPECT_TRUE(Bounds{}.empty());
}

TEST(Bfgs, QuadraticConvergesAndCountsEvaluations) {
  VecX c(5);
  c << 1, -2, 3, 0.5, -0.25;
  const auto q = quadratic(spd(5), c);
  const Counting f(q);
  const OptimizationResult r = bfgs_minimize(f, VecX::Zero(5));
  EXPECT_TRUE(r.converged) << r.stop_reason;
  EXPECT_LT((r.x - c).norm(), 1e-6);
  EXPECT_NEAR(r.value, 0.0, 1e-12);
  EXPECT_EQ(r.evaluations, f.total());
  EXPECT_EQ(r.gradient_evaluations, f.gradients.load());
  EXPECT_EQ(f.values.load(), 0u);  // every trial point is evaluated with its gradient
}

TEST(Bfgs, Rosenbrock) {
  const auto f = rosenbrock();
  BfgsOptions o;
  o.max_iters = 500;
  const OptimizationResult r = bfgs_minimize(f, Eigen::Vector2d(-1.2, 1.0), o);
  EXPECT_LT((r.x - Eigen::Vector2d(1, 1)).norm(), 1e-4);
}

TEST(Bfgs, RespectsBoundsAndEvaluationCap) {
  VecX c = VecX::Constant(3, 5.0);
  const auto q = quadratic(spd(3), c);
  BfgsOptions o;
  o.bounds = box(3, -1, 2);
  const OptimizationResult r = bfgs_minimize(q, VecX::Zero(3), o);
  EXPECT_TRUE(o.bounds.contains(r.x));
  EXPECT_NEAR(r.x.maxCoeff(), 2.0, 1e-9);

  const Counting f(q);
  BfgsOptions capped;
  capped.max_evals = 7;
  const OptimizationResult rc = bfgs_minimize(f, VecX::Zero(3), capped);
  EXPECT_LE(rc.evaluations, 7u);
  EXPECT_EQ(rc.evaluations, f.total());
}

TEST(Bfgs, ErrorsOnMissingGradientOrNonFiniteStart) {
  const auto no_grad = quadratic(spd(2), VecX::Zero(2), false);
  EXPECT_THROW(bfgs_minimize(no_grad, VecX::Ones(2)), UnsupportedError);
  const FunctionObjective inf(
      1, [](const VecX&) { return std::numeric_limits<double>::infinity(); },
      [](const VecX&, VecX& g) {
        g = VecX::Zero(1);
        return std::numeric_limits<double>::infinity();
      });
  EXPECT_THROW(bfgs_minimize(inf, VecX::Zero(1)), NumericalError);
}

TEST(DerivativeFree, QuadraticWithoutGradient) {
  VecX c(4);
  c << 0.3, -0.2, 0.1, 0.05;
  const auto q = quadratic(spd(4), c, false);
  const Counting f(q);
  TrustRegionOptions o;
  o.bounds = box(4, -1, 1);
  const OptimizationResult r = derivative_free_minimize(f, VecX::Zero(4), o);
  EXPECT_LT((r.x - c).norm(), 1e-4);
  EXPECT_EQ(f.gradients.load(), 0u);
  EXPECT_EQ(r.evaluations, f.total());
}

TEST(DerivativeFree, NeverRequestsGradientEvenWhenAvailable) {
  const auto q = quadratic(spd(3), VecX::Constant(3, 0.2));
  const Counting f(q);
  TrustRegionOptions o;
  o.bounds = box(3, -1, 1);
  derivative_free_minimize(f, VecX::Zero(3), o);
  EXPECT_EQ(f.gradients.load(), 0u);
}

TEST(DerivativeFree, BoundsCapAndBadStart) {
  const auto q = quadratic(spd(3), VecX::Constant(3, 4.0), false);
  const Counting f(q);
  TrustRegionOptions o;
  o.bounds = box(3, -1, 1);
  o.max_evals = 25;
  const OptimizationResult r = derivative_free_minimize(f, VecX::Zero(3), o);
  EXPECT_TRUE(o.bounds.contains(r.x));
  EXPECT_LE(r.evaluations, 25u);
  EXPECT_EQ(r.evaluations, f.total());
  EXPECT_THROW(derivative_free_minimize(q, VecX::Constant(3, 2.0), o), DataError);
}

TEST(DerivativeFree, Rosenbrock) {
  const auto f = rosenbrock();
  TrustRegionOptions o;
  o.bounds = box(2, -2, 2);
  o.rho_end = 1e-8;
  o.max_evals = 3000;
  const OptimizationResult r = derivative_free_minimize(f, Eigen::Vector2d(-1.2, 1.0), o);
  EXPECT_LT((r.x - Eigen::Vector2d(1, 1)).norm(), 1e-3);
}

TEST(GlobalSearch, DrawStartsDeterministicInBox) {
  SearchRanges s{VecX::Constant(3, -2.0), VecX::Constant(3, 1.0), {}};
  const auto a = draw_starts(s, 50, 9), b = draw_starts(s, 50, 9), c = draw_starts(s, 50, 10);
  ASSERT_EQ(a.size(), 50u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    EXPECT_TRUE((a[i].array() >= -2.0).all() && (a[i].array() <= 1.0).all());
  }
  EXPECT_NE(a[0], c[0]);
  SearchRanges bad{VecX::Constant(2, 1.0), VecX::Constant(2, 1.0), {}};
  EXPECT_THROW(bad.validate(), DataError);
}

TEST(GlobalSearch, FindsGlobalMinimumOfMultimodal) {
  const auto f = rastrigin(2);
  SearchRanges s{VecX::Constant(2, -4.0), VecX::Constant(2, 4.0), {}};
  GlobalSearchOptions o;
  o.n_starts = 200;
  o.seed = 3;
  const OptimizationResult r = global_search(f, s, o);
  EXPECT_LT(r.x.norm(), 1e-3);
  EXPECT_LT(r.value, 1e-6);
  ASSERT_EQ(r.restart_values.size(), 200u);
  EXPECT_EQ(r.restart_values[r.best_restart], *std::min_element(r.restart_values.begin(), r.restart_values.end()));
  EXPECT_GT(*std::max_element(r.restart_values.begin(), r.restart_values.end()), 0.5);  // locals exist
}

TEST(GlobalSearch, DeterministicAndCountsEverything) {
  const auto inner = rastrigin(3);
  SearchRanges s{VecX::Constant(3, -3.0), VecX::Constant(3, 3.0), {}};
  GlobalSearchOptions o;
  o.n_starts = 40;
  o.seed = 11;
  const Counting f(inner);
  const OptimizationResult a = global_search(f, s, o);
  const OptimizationResult b = global_search(inner, s, o);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.restart_values, b.restart_values);
  EXPECT_EQ(a.evaluations, f.total());
  EXPECT_LE(a.evaluations, 40u * o.per_start_evals);
}

TEST(GlobalSearch, DerivativeFreeLocalMethod) {
  const auto inner = quadratic(spd(2), Eigen::Vector2d(0.5, -0.5));
  SearchRanges s{VecX::Constant(2, -2.0), VecX::Constant(2, 2.0), box(2, -3, 3)};
  GlobalSearchOptions o;
  o.n_starts = 5;
  o.method = LocalMethod::DerivativeFree;
  const Counting f(inner);
  const OptimizationResult r = global_search(f, s, o);
  EXPECT_EQ(f.gradients.load(), 0u);
  EXPECT_LT((r.x - Eigen::Vector2d(0.5, -0.5)).norm(), 1e-2);
}

TEST(GlobalSearch, TiesGoToLowestIndex) {
  const FunctionObjective flat(
      2, [](const VecX&) { return 1.0; },
      [](const VecX& x, VecX& g) {
        g = VecX::Zero(x.size());
        return 1.0;
      });
  SearchRanges s{VecX::Constant(2, -1.0), VecX::Constant(2, 1.0), {}};
  GlobalSearchOptions o;
  o.n_starts = 10;
  const OptimizationResult r = global_search(flat, s, o);
  EXPECT_EQ(r.best_restart, 0u);
  EXPECT_EQ(r.x, draw_starts(s, 10, o.seed)[0]);
}

TEST(GlobalSearch, FailingStartsScoreInfinity) {
  const FunctionObjective f(
      1, [](const VecX& x) { return x[0] > 0 ? x[0] * x[0] : std::numeric_limits<double>::infinity(); },
      [](const VecX& x, VecX& g) {
        g = VecX::Constant(1, 2 * x[0]);
        return x[0] > 0 ? x[0] * x[0] : std::numeric_limits<double>::infinity();
      });
  SearchRanges s{VecX::Constant(1, -1.0), VecX::Constant(1, 1.0), {}};
  GlobalSearchOptions o;
  o.n_starts = 20;
  const OptimizationResult r = global_search(f, s, o);
  EXPECT_TRUE(std::isfinite(r.value));
  EXPECT_GT(r.x[0], 0.0);
  EXPECT_TRUE(std::any_of(r.restart_values.begin(), r.restart_values.end(), [](double v) { return std::isinf(v); }));
}
