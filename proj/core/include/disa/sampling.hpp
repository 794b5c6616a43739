#pragma once

#include "disa/metrics.hpp"
#include "disa/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace disa {

/// One training sample: a patch of M, a patch of F and their multi-radius LC2.
struct PatchPairRecord {
  std::vector<float> patch_m;  ///< side^3, x-fastest
  std::vector<float> patch_f;
  float target = 0.0f;
};

/// Which volume supplies the intensity + gradient-magnitude regressors of the LC2 target.
/// The other volume's patch is the regressed side.
enum class GradientSide : std::uint8_t { F = 0, M = 1 };

struct SamplingOptions {
  std::size_t n = 5000;
  int candidate_stride = 2;
  std::uint64_t seed = 0;
  int radius = 7;  ///< stored patch radius and weight-map radius
  std::vector<int> radii{3, 5, 7};
  GradientSide gradient_side = GradientSide::F;
};

/// Where each record came from; for verification and diagnostics.
struct SampleTrace {
  Index3 center_m;
  std::size_t candidate = 0;  ///< index into the candidate list
  double t = 0.0;
  std::vector<double> similarities;  ///< filled only when keep_similarities is set
};

struct SamplingResult {
  std::vector<PatchPairRecord> records;
  std::vector<SampleTrace> trace;
  std::vector<Index3> candidates;  ///< F centres, x-fastest grid order
  GradientSide gradient_side = GradientSide::F;
};

/// Cumulative distribution over positive weights; draw(u) for u in [0, 1) picks index i with
/// probability weight_i / total.
class WeightedSampler {
 public:
  explicit WeightedSampler(std::span<const double> weights);
  std::size_t draw(double u) const;
  double total() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }

 private:
  std::vector<double> cumulative_;
};

/// Index of the value closest to t; ties go to the lowest index.
std::size_t nearest_to(std::span<const double> values, double t);

/// Candidate F centres with the whole radius cube inside the grid, on a stride grid from `radius`.
std::vector<Index3> candidate_centers(const Geometry& g, int radius, int stride);

/// The patch-pair procedure: (1) a centre of M drawn with probability proportional to the
/// variance weight (interior centres only); (2) LC2 of that patch against every candidate F
/// patch; (3) t ~ U[0,1]; (4) the candidate whose similarity is nearest to t.
/// M and F may have different grids. Deterministic in the seed.
SamplingResult sample_pairs(const Volume& moving, const Volume& fixed, const SamplingOptions& options,
                            bool keep_similarities = false);

/// "DISAP1": magic[8] | u32 count | u32 side | u8 gradient side | records of f32
/// (patch_m side^3, patch_f side^3, target).
void write_dataset(const std::vector<PatchPairRecord>& records, GradientSide side, const std::filesystem::path& path);

struct Dataset {
  std::vector<PatchPairRecord> records;
  GradientSide gradient_side = GradientSide::F;
  int side = 0;
};

Dataset read_dataset(const std::filesystem::path& path);

}  // namespace disa
