#pragma once

#include "disa/features.hpp"
#include "disa/metrics.hpp"
#include "disa/optim.hpp"
#include "disa/transform.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string_view>

namespace disa {

enum class Similarity { Disa, Lc2, Mind };

std::string_view to_string(Similarity s);
Similarity parse_similarity(std::string_view text);

/// Per-parameter divisors: 1 rad, 100 mm, alpha 1, beta 10, affine matrix entries 1.
VecX parameter_scale(TransformMode mode);

/// Similarity of F and M o T for a transform chain; larger is better.
class SimilarityFunction {
 public:
  virtual ~SimilarityFunction() = default;
  virtual double value(const TransformChain& t) const = 0;
  virtual bool has_gradient() const { return false; }
  virtual double value_and_gradient(const TransformChain& t, VecX& gradient) const;
};

/// -similarity over scaled parameters x, where the chain parameters are x * parameter_scale.
/// Returns +infinity where the similarity has no overlap or probe parameters leave their domain.
class RegistrationObjective : public Objective {
 public:
  RegistrationObjective(std::shared_ptr<const SimilarityFunction> similarity, TransformChain prototype);

  int dimension() const override { return prototype_.parameter_count(); }
  double value(const VecX& x) const override;
  bool has_gradient() const override { return similarity_->has_gradient(); }
  double value_and_gradient(const VecX& x, VecX& gradient) const override;

  const VecX& scale() const { return scale_; }
  VecX to_parameters(const VecX& x) const { return x.cwiseProduct(scale_); }
  VecX from_parameters(const VecX& alpha) const { return alpha.cwiseQuotient(scale_); }
  TransformChain chain(const VecX& x) const { return prototype_.with_parameters(to_parameters(x)); }
  const TransformChain& prototype() const { return prototype_; }

 private:
  bool in_domain(const VecX& alpha) const;

  std::shared_ptr<const SimilarityFunction> similarity_;
  TransformChain prototype_;
  VecX scale_;
};

/// Dot-product similarity of pre-computed descriptors. The maps are copied into the objective.
std::unique_ptr<RegistrationObjective> make_disa_objective(FeatureMap fixed, FeatureMap moving,
                                                           const WeightMap& cell_weights,
                                                           const TransformChain& prototype,
                                                           std::size_t max_samples = 32768,
                                                           std::uint64_t seed = 0);

/// Weighted multi-radius LC2; evaluation only.
std::unique_ptr<RegistrationObjective> make_lc2_objective(Volume fixed, Volume moving, const WeightMap& w,
                                                          const TransformChain& prototype,
                                                          const Lc2Options& options = {});

/// Negative mean SSD of MIND-SSC descriptors.
std::unique_ptr<RegistrationObjective> make_mind_objective(FeatureMap fixed, FeatureMap moving,
                                                           const TransformChain& prototype,
                                                           std::size_t max_samples = 32768,
                                                           std::uint64_t seed = 0);

/// Start box around `centre` (scaled coordinates): +-rotation (rad) and +-translation (mm) for the
/// rigid part, +-rotation on the affine matrix entries, [0,1] x [0,10] for the probe alpha/beta,
/// which are also hard bounds.
SearchRanges make_search_ranges(TransformMode mode, double rotation_range, double translation_range,
                                const VecX& centre);

using DescriptorExtractor = std::function<FeatureMap(const Volume&)>;

struct RegistrationOptions {
  Similarity similarity = Similarity::Disa;
  TransformMode mode = TransformMode::Rigid;
  std::optional<Vec3> center;  ///< rotation centre; default: centre of the fixed grid
  std::optional<ProbeDeform> probe;
  std::optional<VecX> initial;  ///< chain parameters; default identity

  bool global = false;
  double rotation_range = 10.0 * 3.14159265358979323846 / 180.0;
  double translation_range = 25.0;
  std::size_t n_starts = 500;
  std::uint64_t seed = 0;
  std::size_t per_start_evals = 60;

  BfgsOptions bfgs;
  TrustRegionOptions trust_region;  ///< bounds default to the search box widened by half its width
  bool quantize = false;
  std::size_t max_samples = 32768;
  int weight_radius = 7;
  Lc2Options lc2;
};

struct RegistrationResult {
  TransformChain transform;
  OptimizationResult optimization;
  double initial_similarity = 0.0;  ///< NaN without overlap
  double final_similarity = 0.0;
  double seconds = 0.0;
  std::size_t extractor_calls = 0;
};

/// F and M are expected normalized. For DISA the extractor runs exactly once per volume,
/// before optimisation starts.
RegistrationResult register_volumes(const Volume& fixed, const Volume& moving, const RegistrationOptions& options,
                                    const DescriptorExtractor& extract = nullptr);

}  // namespace disa
