#pragma once

#include "disa/features.hpp"
#include "disa/transform.hpp"
#include "disa/volume.hpp"

#include <array>

namespace disa {

/// MIND with self-similarity context: 12 channels, one per pair of 6-neighbourhood offsets
/// at distance sqrt(2). Stored as a stride-1 FeatureMap on the source grid.
struct MindOptions {
  double sigma = 0.8;   ///< Gaussian patch weight, voxels
  int kernel_radius = 2;
  double variance_floor = 1e-6;  ///< V >= floor * mean(V)
};

inline constexpr int kMindChannels = 12;

/// The 12 offset pairs, in channel order.
const std::array<std::pair<Index3, Index3>, kMindChannels>& mind_ssc_pairs();

FeatureMap mind_ssc(const Volume& v, const MindOptions& options = {});

/// Negative mean squared descriptor difference over channels and in-overlap samples of dF
/// against dM sampled at T(p). Larger is better; 0 for identical descriptors.
class MindObjective {
 public:
  MindObjective(const FeatureMap& fixed, const FeatureMap& moving, std::vector<std::size_t> samples);

  double value(const TransformChain& t) const;
  double value_and_gradient(const TransformChain& t, VecX& gradient) const;
  std::size_t sample_count() const { return samples_.size(); }

 private:
  template <bool kGradient>
  double evaluate(const TransformChain& t, VecX* gradient) const;

  const FeatureMap& fixed_;
  const FeatureMap& moving_;
  std::vector<std::size_t> samples_;
  std::vector<Vec3> world_;
};

/// Every voxel index, capped at max_samples by a seeded subsample (0 = no cap).
std::vector<std::size_t> mind_samples(const FeatureMap& fixed, std::size_t max_samples = 32768,
                                      std::uint64_t seed = 0);

double mind_similarity(const FeatureMap& fixed, const FeatureMap& moving, const TransformChain& t);

}  // namespace disa
