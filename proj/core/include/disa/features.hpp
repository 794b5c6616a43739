#pragma once

#include "disa/metrics.hpp"
#include "disa/transform.hpp"
#include "disa/volume.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace disa {

enum class FeatureStorage : std::uint8_t { Float32 = 0, Int8 = 1 };

/// Multi-channel descriptor grid over a source volume.
///
/// Cell i sits at source index stride*i, the centre of its receptive field: each blurpool
/// keeps the even samples of a centred [1,2,1] blur. Values are stored channel-fastest. Quantized maps hold
/// round(127 * v) and dequantize with the single global scale 1/127.
class FeatureMap {
 public:
  static constexpr float kQuantScale = 127.0f;
  static constexpr int kDescriptorChannels = 16;

  FeatureMap() = default;
  FeatureMap(Geometry source, int stride, Index3 dims, int channels, std::vector<float> values);
  FeatureMap(Geometry source, int stride, Index3 dims, int channels, std::vector<std::int8_t> values);

  const Geometry& source_geometry() const { return source_; }
  int stride() const { return stride_; }
  const Index3& dims() const { return dims_; }
  int channels() const { return channels_; }
  std::size_t cell_count() const { return product(dims_); }
  FeatureStorage storage() const { return storage_; }
  bool quantized() const { return storage_ == FeatureStorage::Int8; }

  /// Geometry of the cell centres (spacing = stride * source spacing).
  const Geometry& cell_geometry() const { return cells_; }

  std::span<const float> float_values() const { return floats_; }
  std::span<const std::int8_t> int8_values() const { return int8_; }

  /// Dequantized component.
  float value(std::size_t cell, int channel) const;
  std::vector<float> descriptor(std::size_t cell) const;

 private:
  void init_geometry();

  Geometry source_;
  Geometry cells_;
  int stride_ = 1;
  Index3 dims_{0, 0, 0};
  int channels_ = 0;
  FeatureStorage storage_ = FeatureStorage::Float32;
  AlignedVector<float> floats_;
  AlignedVector<std::int8_t> int8_;
};

/// q = round(127 v) clamped to [-127, 127]. Throws DataError("unclipped features") when a
/// component lies outside [-1.001, 1.001].
FeatureMap quantize(const FeatureMap& f);
FeatureMap dequantize(const FeatureMap& f);

/// Per-cell mean of the weights over the stride^3 source block centred on each cell (clipped at the border).
WeightMap resample_weights_to_feature_grid(const WeightMap& w, const FeatureMap& f);

/// Cells with positive weight; capped at max_samples by a seeded, order-preserving subsample.
std::vector<std::size_t> default_samples(const WeightMap& cell_weights, std::size_t max_samples = 32768,
                                         std::uint64_t seed = 0);

/// Weighted dot-product similarity between a fixed descriptor map and the moving map
/// interpolated (channel-wise trilinear) at T(world(p)).
///
/// value = sum_p w(p) <fF[p], fM(T p)> / sum_p w(p), both sums over in-overlap samples only.
/// With both maps quantized the corner dot products are integer and rescaled once by 1/127^2.
/// Instances are immutable and safe to evaluate concurrently.
class DotObjective {
 public:
  DotObjective(const FeatureMap& fixed, const FeatureMap& moving, const WeightMap& cell_weights,
               std::vector<std::size_t> samples);

  /// Throws NumericalError("no overlap") when every sample maps outside the moving map.
  double value(const TransformChain& t) const;

  /// Value and d(value)/d(alpha); the in-overlap normaliser is treated as locally constant.
  double value_and_gradient(const TransformChain& t, VecX& gradient) const;

  std::size_t sample_count() const { return samples_.size(); }

 private:
  template <bool kGradient>
  double evaluate(const TransformChain& t, VecX* gradient) const;

  struct SamplePoint {
    Vec3 world;
    double weight;
    std::size_t cell;
  };

  const FeatureMap& fixed_;
  const FeatureMap& moving_;
  bool integer_path_ = false;
  std::vector<SamplePoint> samples_;
  AlignedVector<float> fixed_f32_;       // channel-fastest, one row per sample
  AlignedVector<std::int8_t> fixed_i8_;  // idem, quantized path
  AlignedVector<float> moving_f32_;      // dequantized copy when storages differ
};

double dot_objective(const FeatureMap& fixed, const FeatureMap& moving, const TransformChain& t,
                     const WeightMap& cell_weights, const std::vector<std::size_t>& samples);

double dot_objective_gradient(const FeatureMap& fixed, const FeatureMap& moving, const TransformChain& t,
                              const WeightMap& cell_weights, const std::vector<std::size_t>& samples,
                              VecX& gradient);

/// <fA[cell], fB[q]> for every cell q of fB, as a volume on fB's cell grid.
Volume heatmap(const FeatureMap& a, const Index3& cell, const FeatureMap& b);

}  // namespace disa
