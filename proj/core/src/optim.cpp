#include "disa/optim.hpp"

#include "disa/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

namespace disa {

double Objective::value_and_gradient(const VecX&, VecX&) const { throw UnsupportedError("gradient unavailable"); }

FunctionObjective::FunctionObjective(int dimension, ValueFn value, GradientFn value_and_gradient)
    : dimension_(dimension), value_(std::move(value)), gradient_(std::move(value_and_gradient)) {
  if (dimension_ < 1) throw DataError("objective dimension must be positive");
  if (!value_) throw DataError("objective needs a value function");
}

double FunctionObjective::value_and_gradient(const VecX& x, VecX& gradient) const {
  if (!gradient_) throw UnsupportedError("gradient unavailable");
  return gradient_(x, gradient);
}

VecX Bounds::project(const VecX& x) const {
  VecX y = x;
  if (lower.size() == x.size()) y = y.cwiseMax(lower);
  if (upper.size() == x.size()) y = y.cwiseMin(upper);
  return y;
}

bool Bounds::contains(const VecX& x) const {
  if (lower.size() == x.size() && (x.array() < lower.array()).any()) return false;
  if (upper.size() == x.size() && (x.array() > upper.array()).any()) return false;
  return true;
}

namespace {

// Gradient with components zeroed where a bound blocks descent.
VecX projected_gradient(const VecX& x, const VecX& g, const Bounds& b) {
  VecX pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (b.lower.size() == x.size() && x[i] <= b.lower[i] && g[i] > 0.0) pg[i] = 0.0;
    if (b.upper.size() == x.size() && x[i] >= b.upper[i] && g[i] < 0.0) pg[i] = 0.0;
  }
  return pg;
}

bool finite(const VecX& v) { return v.allFinite(); }

}  // namespace

OptimizationResult bfgs_minimize(const Objective& f, const VecX& x0, const BfgsOptions& options) {
  if (!f.has_gradient()) throw UnsupportedError("gradient unavailable");
  const int n = f.dimension();
  if (x0.size() != n) throw DataError("x0 dimension does not match the objective");

  OptimizationResult res;
  auto evaluate = [&](const VecX& x, VecX& g) {
    ++res.evaluations;
    ++res.gradient_evaluations;
    g.resize(n);
    return f.value_and_gradient(x, g);
  };
  auto budget_left = [&] { return options.max_evals == 0 || res.evaluations < options.max_evals; };

  VecX x = options.bounds.project(x0);
  VecX g;
  double fx = evaluate(x, g);
  if (!std::isfinite(fx) || !finite(g)) throw NumericalError("objective or gradient not finite at x0");

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  res.stop_reason = "max_iters";
  for (int it = 0; it < options.max_iters; ++it) {
    const VecX pg = projected_gradient(x, g, options.bounds);
    if (pg.norm() <= options.grad_tol) {
      res.converged = true;
      res.stop_reason = "gradient";
      break;
    }
    if (!budget_left()) {
      res.stop_reason = "max_evals";
      break;
    }
    VecX d = -(h * g);
    for (Eigen::Index i = 0; i < n; ++i)
      if (pg[i] == 0.0) d[i] = 0.0;
    if (!(d.dot(g) < 0.0)) {
      h.setIdentity();
      d = -pg;
    }
    double step = scaled ? 1.0 : std::min(1.0, 1.0 / d.norm());

    bool accepted = false;
    VecX xt, gt;
    double ft = 0.0;
    for (int bt = 0; bt < options.max_backtracks && budget_left(); ++bt, step *= 0.5) {
      xt = options.bounds.project(x + step * d);
      const double slope = g.dot(xt - x);
      if (!(slope < 0.0)) {
        if ((xt - x).norm() < options.step_tol) break;
        continue;
      }
      ft = evaluate(xt, gt);
      if (std::isfinite(ft) && finite(gt) && ft <= fx + options.armijo_c * slope) {
        accepted = true;
        break;
      }
    }
    ++res.iterations;
    if (!accepted) {
      res.stop_reason = budget_left() ? "line_search" : "max_evals";
      break;
    }
    const VecX s = xt - x;
    const VecX y = gt - g;
    x = xt;
    fx = ft;
    g = gt;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      if (!scaled) {
        h *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const VecX hy = h * y;
      h += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }
    if (s.norm() < options.step_tol) {
      res.converged = true;
      res.stop_reason = "step";
      break;
    }
  }
  res.x = x;
  res.value = fx;
  return res;
}

void SearchRanges::validate() const {
  if (lower.size() == 0 || lower.size() != upper.size()) throw DataError("search ranges: dimension mismatch");
  for (Eigen::Index i = 0; i < lower.size(); ++i)
    if (!(lower[i] < upper[i])) throw DataError("search ranges: lower must be < upper");
  if (!hard.empty() && (hard.lower.size() != lower.size() || hard.upper.size() != lower.size()))
    throw DataError("search ranges: hard bounds dimension mismatch");
}

std::vector<VecX> draw_starts(const SearchRanges& ranges, std::size_t n_starts, std::uint64_t seed) {
  ranges.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<VecX> starts(n_starts, VecX(ranges.dimension()));
  for (auto& s : starts)
    for (int i = 0; i < ranges.dimension(); ++i)
      s[i] = ranges.lower[i] + u(rng) * (ranges.upper[i] - ranges.lower[i]);
  return starts;
}

OptimizationResult global_search(const Objective& f, const SearchRanges& ranges, const GlobalSearchOptions& options) {
  if (options.n_starts < 1) throw DataError("global search needs at least one start");
  if (ranges.dimension() != f.dimension()) throw DataError("search ranges do not match the objective");
  const std::vector<VecX> starts = draw_starts(ranges, options.n_starts, options.seed);
  const bool use_bfgs = options.method == LocalMethod::Bfgs ||
                        (options.method == LocalMethod::Auto && f.has_gradient());
  const int n = f.dimension();

  // Derivative-free runs need a finite box: the start box widened by half its width, inside the hard bounds.
  Bounds df_box{VecX(n), VecX(n)};
  for (int i = 0; i < n; ++i) {
    const double half = 0.5 * (ranges.upper[i] - ranges.lower[i]);
    df_box.lower[i] = ranges.lower[i] - half;
    df_box.upper[i] = ranges.upper[i] + half;
    if (!ranges.hard.empty()) {
      df_box.lower[i] = std::max(df_box.lower[i], ranges.hard.lower[i]);
      df_box.upper[i] = std::min(df_box.upper[i], ranges.hard.upper[i]);
    }
  }

  std::vector<OptimizationResult> runs(starts.size());
  parallel::for_each(starts.size(), [&](std::size_t k) {
    OptimizationResult r;
    try {
      if (use_bfgs) {
        BfgsOptions o;
        o.max_iters = options.max_iters;
        o.max_evals = options.per_start_evals;
        o.bounds = ranges.hard;
        r = bfgs_minimize(f, starts[k], o);
      } else {
        TrustRegionOptions o;
        o.bounds = df_box;
        o.max_evals = options.per_start_evals;
        r = derivative_free_minimize(f, df_box.project(starts[k]), o);
      }
    } catch (const NumericalError&) {
      r.x = starts[k];
      r.value = std::numeric_limits<double>::infinity();
      r.evaluations = 1;
      r.gradient_evaluations = use_bfgs ? 1 : 0;
      r.stop_reason = "not_finite";
    }
    runs[k] = std::move(r);
  });

  OptimizationResult best;
  best.restart_values.reserve(runs.size());
  std::size_t best_index = 0;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    best.restart_values.push_back(runs[k].value);
    if (runs[k].value < runs[best_index].value) best_index = k;
  }
  for (const auto& r : runs) {
    best.evaluations += r.evaluations;
    best.gradient_evaluations += r.gradient_evaluations;
    best.iterations += r.iterations;
  }
  best.x = runs[best_index].x;
  best.value = runs[best_index].value;
  best.converged = runs[best_index].converged;
  best.stop_reason = runs[best_index].stop_reason;
  best.best_restart = best_index;
  return best;
}

}  // namespace disa
