#include "disa/registration.hpp"

#include "disa/mind.hpp"

#include <chrono>
#include <cmath>

namespace disa {

std::string_view to_string(Similarity s) {
  switch (s) {
    case Similarity::Disa: return "disa";
    case Similarity::Lc2: return "lc2";
    case Similarity::Mind: return "mind";
  }
  return "?";
}

Similarity parse_similarity(std::string_view text) {
  for (Similarity s : {Similarity::Disa, Similarity::Lc2, Similarity::Mind})
    if (to_string(s) == text) return s;
  throw DataError("unknown similarity '" + std::string(text) + "'");
}

VecX parameter_scale(TransformMode mode) {
  VecX s = VecX::Ones(parameter_count(mode));
  s.head<3>().setConstant(100.0);
  if (mode == TransformMode::RigidProbe) s[7] = 10.0;
  return s;
}

double SimilarityFunction::value_and_gradient(const TransformChain&, VecX&) const {
  throw UnsupportedError("gradient unavailable");
}

RegistrationObjective::RegistrationObjective(std::shared_ptr<const SimilarityFunction> similarity,
                                             TransformChain prototype)
    : similarity_(std::move(similarity)), prototype_(std::move(prototype)),
      scale_(parameter_scale(prototype_.mode())) {}

bool RegistrationObjective::in_domain(const VecX& alpha) const {
  if (!alpha.allFinite()) return false;
  if (prototype_.mode() != TransformMode::RigidProbe) return true;
  return alpha[6] >= 0.0 && alpha[6] <= 1.0 && alpha[7] >= 0.0 && alpha[7] <= 10.0;
}

double RegistrationObjective::value(const VecX& x) const {
  if (x.size() != dimension()) throw DataError("parameter vector length does not match the transform mode");
  const VecX alpha = to_parameters(x);
  if (!in_domain(alpha)) return std::numeric_limits<double>::infinity();
  try {
    return -similarity_->value(prototype_.with_parameters(alpha));
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  }
}

double RegistrationObjective::value_and_gradient(const VecX& x, VecX& gradient) const {
  if (!similarity_->has_gradient()) throw UnsupportedError("gradient unavailable");
  if (x.size() != dimension()) throw DataError("parameter vector length does not match the transform mode");
  const VecX alpha = to_parameters(x);
  gradient = VecX::Zero(dimension());
  if (!in_domain(alpha)) return std::numeric_limits<double>::infinity();
  try {
    VecX g;
    const double v = similarity_->value_and_gradient(prototype_.with_parameters(alpha), g);
    gradient = -g.cwiseProduct(scale_);
    return -v;
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  }
}

namespace {

class DisaSimilarity : public SimilarityFunction {
 public:
  DisaSimilarity(FeatureMap fixed, FeatureMap moving, const WeightMap& cell_weights, std::size_t max_samples,
                 std::uint64_t seed)
      : fixed_(std::move(fixed)), moving_(std::move(moving)), weights_(cell_weights),
        objective_(fixed_, moving_, weights_, default_samples(weights_, max_samples, seed)) {}

  double value(const TransformChain& t) const override { return objective_.value(t); }
  bool has_gradient() const override { return true; }
  double value_and_gradient(const TransformChain& t, VecX& g) const override {
    return objective_.value_and_gradient(t, g);
  }

 private:
  FeatureMap fixed_;
  FeatureMap moving_;
  WeightMap weights_;
  DotObjective objective_;
};

class Lc2Similarity : public SimilarityFunction {
 public:
  Lc2Similarity(Volume fixed, Volume moving, const WeightMap& w, const Lc2Options& options)
      : fixed_(std::move(fixed)), moving_(std::move(moving)), objective_(fixed_, moving_, w, options) {}

  double value(const TransformChain& t) const override { return objective_.evaluate(t); }

 private:
  Volume fixed_;
  Volume moving_;
  Lc2GlobalObjective objective_;
};

class MindSimilarity : public SimilarityFunction {
 public:
  MindSimilarity(FeatureMap fixed, FeatureMap moving, std::size_t max_samples, std::uint64_t seed)
      : fixed_(std::move(fixed)), moving_(std::move(moving)),
        objective_(fixed_, moving_, mind_samples(fixed_, max_samples, seed)) {}

  double value(const TransformChain& t) const override { return objective_.value(t); }
  bool has_gradient() const override { return true; }
  double value_and_gradient(const TransformChain& t, VecX& g) const override {
    return objective_.value_and_gradient(t, g);
  }

 private:
  FeatureMap fixed_;
  FeatureMap moving_;
  MindObjective objective_;
};

}  // namespace

std::unique_ptr<RegistrationObjective> make_disa_objective(FeatureMap fixed, FeatureMap moving,
                                                           const WeightMap& cell_weights,
                                                           const TransformChain& prototype, std::size_t max_samples,
                                                           std::uint64_t seed) {
  auto sim = std::make_shared<DisaSimilarity>(std::move(fixed), std::move(moving), cell_weights, max_samples, seed);
  return std::make_unique<RegistrationObjective>(std::move(sim), prototype);
}

std::unique_ptr<RegistrationObjective> make_lc2_objective(Volume fixed, Volume moving, const WeightMap& w,
                                                          const TransformChain& prototype,
                                                          const Lc2Options& options) {
  auto sim = std::make_shared<Lc2Similarity>(std::move(fixed), std::move(moving), w, options);
  return std::make_unique<RegistrationObjective>(std::move(sim), prototype);
}

std::unique_ptr<RegistrationObjective> make_mind_objective(FeatureMap fixed, FeatureMap moving,
                                                           const TransformChain& prototype, std::size_t max_samples,
                                                           std::uint64_t seed) {
  auto sim = std::make_shared<MindSimilarity>(std::move(fixed), std::move(moving), max_samples, seed);
  return std::make_unique<RegistrationObjective>(std::move(sim), prototype);
}

SearchRanges make_search_ranges(TransformMode mode, double rotation_range, double translation_range,
                                const VecX& centre) {
  const int n = parameter_count(mode);
  if (centre.size() != n) throw DataError("search centre does not match the transform mode");
  if (!(rotation_range > 0.0) || !(translation_range > 0.0)) throw DataError("search ranges must be positive");
  const VecX scale = parameter_scale(mode);
  VecX half(n);
  half.head<3>().setConstant(translation_range);
  for (int i = 3; i < n; ++i) half[i] = rotation_range;
  SearchRanges r;
  r.lower = centre - half.cwiseQuotient(scale);
  r.upper = centre + half.cwiseQuotient(scale);
  if (mode == TransformMode::RigidProbe) {
    const double inf = std::numeric_limits<double>::infinity();
    r.hard.lower = VecX::Constant(n, -inf);
    r.hard.upper = VecX::Constant(n, inf);
    r.lower[6] = r.hard.lower[6] = 0.0;
    r.upper[6] = r.hard.upper[6] = 1.0;
    r.lower[7] = r.hard.lower[7] = 0.0;
    r.upper[7] = r.hard.upper[7] = 1.0;  // beta / 10
  }
  r.validate();
  return r;
}

RegistrationResult register_volumes(const Volume& fixed, const Volume& moving, const RegistrationOptions& options,
                                    const DescriptorExtractor& extract) {
  const auto start = std::chrono::steady_clock::now();
  RegistrationResult result;
  const Vec3 center = options.center.value_or(fixed.geometry().center());
  if (options.mode == TransformMode::RigidProbe && !options.probe)
    throw DataError("rigid+probe registration needs probe geometry (c, r, R)");
  const TransformChain prototype = TransformChain::identity(options.mode, center, options.probe);

  const WeightMap w = weight_map(fixed, options.weight_radius);
  std::unique_ptr<RegistrationObjective> objective;
  switch (options.similarity) {
    case Similarity::Disa: {
      if (!extract) throw DataError("DISA registration needs a descriptor extractor");
      FeatureMap ff = extract(fixed);
      FeatureMap fm = extract(moving);
      result.extractor_calls = 2;
      if (options.quantize) {
        ff = quantize(ff);
        fm = quantize(fm);
      }
      const WeightMap cw = resample_weights_to_feature_grid(w, ff);
      objective = make_disa_objective(std::move(ff), std::move(fm), cw, prototype, options.max_samples, options.seed);
      break;
    }
    case Similarity::Lc2:
      objective = make_lc2_objective(fixed, moving, w, prototype, options.lc2);
      break;
    case Similarity::Mind:
      objective = make_mind_objective(mind_ssc(fixed), mind_ssc(moving), prototype, options.max_samples, options.seed);
      break;
  }

  const VecX alpha0 = options.initial.value_or(prototype.parameters());
  if (alpha0.size() != prototype.parameter_count()) throw DataError("initial parameters do not match the mode");
  const VecX x0 = objective->from_parameters(alpha0);
  const double f0 = objective->value(x0);
  result.initial_similarity = std::isfinite(f0) ? -f0 : std::numeric_limits<double>::quiet_NaN();

  const SearchRanges ranges = make_search_ranges(options.mode, options.rotation_range, options.translation_range, x0);
  if (options.global) {
    GlobalSearchOptions g;
    g.n_starts = options.n_starts;
    g.seed = options.seed;
    g.per_start_evals = options.per_start_evals;
    g.max_iters = options.bfgs.max_iters;
    result.optimization = global_search(*objective, ranges, g);
  } else if (objective->has_gradient()) {
    BfgsOptions b = options.bfgs;
    if (b.bounds.empty()) b.bounds = ranges.hard;
    result.optimization = bfgs_minimize(*objective, x0, b);
  } else {
    TrustRegionOptions t = options.trust_region;
    if (t.bounds.empty()) {
      const VecX half = 0.5 * (ranges.upper - ranges.lower);
      t.bounds.lower = ranges.lower - half;
      t.bounds.upper = ranges.upper + half;
      if (!ranges.hard.empty()) {
        t.bounds.lower = t.bounds.lower.cwiseMax(ranges.hard.lower);
        t.bounds.upper = t.bounds.upper.cwiseMin(ranges.hard.upper);
      }
    }
    if (!std::isfinite(f0)) throw NumericalError("no overlap at the initial transform");
    result.optimization = derivative_free_minimize(*objective, x0, t);
  }
  ++result.optimization.evaluations;  // the initial-similarity probe above
  if (!std::isfinite(result.optimization.value)) throw NumericalError("no overlap");
  result.transform = objective->chain(result.optimization.x);
  result.optimization.x = objective->to_parameters(result.optimization.x);
  result.final_similarity = -result.optimization.value;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace disa
