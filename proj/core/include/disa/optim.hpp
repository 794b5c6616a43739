#pragma once

#include "disa/common.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace disa {

/// A scalar function to minimise. Implementations must be safe to call concurrently.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual int dimension() const = 0;
  virtual double value(const VecX& x) const = 0;
  virtual bool has_gradient() const { return false; }

  /// Throws UnsupportedError("gradient unavailable") unless has_gradient().
  virtual double value_and_gradient(const VecX& x, VecX& gradient) const;
};

/// Objective from plain callables; the gradient callable is optional.
class FunctionObjective : public Objective {
 public:
  using ValueFn = std::function<double(const VecX&)>;
  using GradientFn = std::function<double(const VecX&, VecX&)>;

  FunctionObjective(int dimension, ValueFn value, GradientFn value_and_gradient = nullptr);

  int dimension() const override { return dimension_; }
  double value(const VecX& x) const override { return value_(x); }
  bool has_gradient() const override { return static_cast<bool>(gradient_); }
  double value_and_gradient(const VecX& x, VecX& gradient) const override;

 private:
  int dimension_;
  ValueFn value_;
  GradientFn gradient_;
};

struct OptimizationResult {
  VecX x;
  double value = std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;           ///< objective calls, with or without gradient
  std::size_t gradient_evaluations = 0;  ///< calls that also returned a gradient
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  std::vector<double> restart_values;  ///< global search: final value per start, in start order
  std::size_t best_restart = 0;
};

/// Box constraints; empty vectors mean unbounded.
struct Bounds {
  VecX lower;
  VecX upper;

  bool empty() const { return lower.size() == 0 && upper.size() == 0; }
  VecX project(const VecX& x) const;
  bool contains(const VecX& x) const;
};

struct BfgsOptions {
  int max_iters = 100;
  double grad_tol = 1e-6;
  double step_tol = 1e-10;
  std::size_t max_evals = 0;  ///< 0 = no cap
  double armijo_c = 1e-4;
  int max_backtracks = 40;
  Bounds bounds;  ///< handled by projection
};

/// Quasi-Newton descent with an inverse-Hessian BFGS update and Armijo backtracking.
/// Every trial point is evaluated with its gradient. Throws NumericalError when the value or
/// gradient at x0 is not finite, UnsupportedError when the objective has no gradient.
OptimizationResult bfgs_minimize(const Objective& f, const VecX& x0, const BfgsOptions& options = {});

struct TrustRegionOptions {
  Bounds bounds;             ///< required, finite
  double rho_begin = 0.0;    ///< 0 = 0.1 * smallest box width, capped at 0.5 * width
  double rho_end = 1e-6;
  std::size_t max_evals = 0;  ///< 0 = 500 * (n + 1)
};

/// Bound-constrained derivative-free minimisation: 2n+1 point quadratic interpolation model
/// with least-Frobenius-change Hessian updates inside a trust region. Never requests a gradient.
/// Throws DataError when x0 violates the bounds.
OptimizationResult derivative_free_minimize(const Objective& f, const VecX& x0, const TrustRegionOptions& options);

/// Start box for global search, in the objective's own coordinates, plus hard bounds that
/// local runs must respect (may be +-infinity).
struct SearchRanges {
  VecX lower;
  VecX upper;
  Bounds hard;

  int dimension() const { return static_cast<int>(lower.size()); }
  /// Throws DataError unless lower < upper component-wise.
  void validate() const;
};

enum class LocalMethod { Auto, Bfgs, DerivativeFree };

struct GlobalSearchOptions {
  std::size_t n_starts = 500;
  std::uint64_t seed = 0;
  std::size_t per_start_evals = 60;
  int max_iters = 100;
  LocalMethod method = LocalMethod::Auto;  ///< Auto: BFGS when a gradient exists
};

/// Seeded random restarts. Starts are drawn sequentially from one mt19937_64 stream; local runs
/// may execute concurrently, results are kept per start and the best is picked with the lowest
/// index winning ties, so the outcome does not depend on scheduling. Starts whose local run
/// fails numerically count their evaluations and score +infinity.
OptimizationResult global_search(const Objective& f, const SearchRanges& ranges, const GlobalSearchOptions& options = {});

/// The start points global_search would use.
std::vector<VecX> draw_starts(const SearchRanges& ranges, std::size_t n_starts, std::uint64_t seed);

}  // namespace disa
