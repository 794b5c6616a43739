#include "disa/features.hpp"

#include "disa/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iterator>
#include <random>

namespace disa {

FeatureMap::FeatureMap(Geometry source, int stride, Index3 dims, int channels, std::vector<float> values)
    : source_(std::move(source)), stride_(stride), dims_(dims), channels_(channels),
      storage_(FeatureStorage::Float32), floats_(values.begin(), values.end()) {
  init_geometry();
  if (floats_.size() != cell_count() * static_cast<std::size_t>(channels_))
    throw DataError("feature data length does not match dims x channels");
}

FeatureMap::FeatureMap(Geometry source, int stride, Index3 dims, int channels, std::vector<std::int8_t> values)
    : source_(std::move(source)), stride_(stride), dims_(dims), channels_(channels),
      storage_(FeatureStorage::Int8), int8_(values.begin(), values.end()) {
  init_geometry();
  if (int8_.size() != cell_count() * static_cast<std::size_t>(channels_))
    throw DataError("feature data length does not match dims x channels");
  for (std::int8_t q : int8_)
    if (q == -128) throw DataError("quantized features must lie in [-127, 127]");
}

void FeatureMap::init_geometry() {
  source_.validate();
  if (stride_ < 1) throw DataError("feature stride must be >= 1");
  if (channels_ < 1) throw DataError("feature map needs at least one channel");
  for (int a = 0; a < 3; ++a)
    if (dims_[a] < 1) throw DataError("feature dims must be positive");
  cells_.dims = dims_;
  cells_.spacing = source_.spacing * stride_;
  cells_.direction = source_.direction;
  cells_.origin = source_.origin;
}

float FeatureMap::value(std::size_t cell, int channel) const {
  const std::size_t i = cell * static_cast<std::size_t>(channels_) + static_cast<std::size_t>(channel);
  return quantized() ? static_cast<float>(int8_[i]) / kQuantScale : floats_[i];
}

std::vector<float> FeatureMap::descriptor(std::size_t cell) const {
  std::vector<float> d(static_cast<std::size_t>(channels_));
  for (int c = 0; c < channels_; ++c) d[static_cast<std::size_t>(c)] = value(cell, c);
  return d;
}

FeatureMap quantize(const FeatureMap& f) {
  if (f.quantized()) return f;
  const auto values = f.float_values();
  std::vector<std::int8_t> q(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = values[i];
    if (!(v >= -1.001f && v <= 1.001f)) throw DataError("unclipped features");
    const float r = std::nearbyint(v * FeatureMap::kQuantScale);
    q[i] = static_cast<std::int8_t>(std::clamp(r, -127.0f, 127.0f));
  }
  return FeatureMap(f.source_geometry(), f.stride(), f.dims(), f.channels(), std::move(q));
}

FeatureMap dequantize(const FeatureMap& f) {
  if (!f.quantized()) return f;
  const auto q = f.int8_values();
  std::vector<float> v(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) v[i] = static_cast<float>(q[i]) / FeatureMap::kQuantScale;
  return FeatureMap(f.source_geometry(), f.stride(), f.dims(), f.channels(), std::move(v));
}

WeightMap resample_weights_to_feature_grid(const WeightMap& w, const FeatureMap& f) {
  if (!same_grid(w.weights.geometry(), f.source_geometry()))
    throw DataError("weight map geometry does not match the feature map's source");
  const Index3& src = w.weights.dims();
  const int s = f.stride();
  Volume cells(f.cell_geometry());
  for (int cz = 0; cz < f.dims()[2]; ++cz) {
    for (int cy = 0; cy < f.dims()[1]; ++cy) {
      for (int cx = 0; cx < f.dims()[0]; ++cx) {
        double sum = 0.0;
        int count = 0;
        // The stride^3 block of source voxels nearest to the cell centre at index s * c.
        const int h = s / 2;
        for (int z = std::max(0, cz * s - h); z < std::min(src[2], cz * s - h + s); ++z)
          for (int y = std::max(0, cy * s - h); y < std::min(src[1], cy * s - h + s); ++y)
            for (int x = std::max(0, cx * s - h); x < std::min(src[0], cx * s - h + s); ++x) {
              sum += w.weights.at(x, y, z);
              ++count;
            }
        cells.at(cx, cy, cz) = count > 0 ? static_cast<float>(sum / count) : 0.0f;
      }
    }
  }
  return WeightMap::from_volume(std::move(cells));
}

std::vector<std::size_t> default_samples(const WeightMap& cell_weights, std::size_t max_samples,
                                         std::uint64_t seed) {
  std::vector<std::size_t> all;
  const auto w = cell_weights.weights.data();
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] > 0.0f) all.push_back(i);
  if (max_samples == 0 || all.size() <= max_samples) return all;
  std::vector<std::size_t> picked;
  picked.reserve(max_samples);
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), max_samples, rng);
  return picked;
}

namespace {

// Fixed-size Eigen maps vectorize the reduction, which a plain strict-FP loop cannot.
template <int C>
inline float dot_f32(const float* a, const float* b) {
  using V = Eigen::Matrix<float, C, 1>;
  return Eigen::Map<const V>(a).dot(Eigen::Map<const V>(b));
}

inline float dot_f32(const float* a, const float* b, int channels) {
  if (channels == 16) return dot_f32<16>(a, b);
  if (channels == 12) return dot_f32<12>(a, b);
  float s = 0.0f;
  for (int c = 0; c < channels; ++c) s += a[c] * b[c];
  return s;
}

inline std::int32_t dot_i8(const std::int8_t* a, const std::int8_t* b, int channels) {
  std::int32_t s = 0;
  if (channels == 16) {
    // Integer sums are associative, so this loop vectorizes as written.
    for (int c = 0; c < 16; ++c) s += static_cast<std::int16_t>(a[c]) * static_cast<std::int16_t>(b[c]);
    return s;
  }
  for (int c = 0; c < channels; ++c) s += static_cast<std::int16_t>(a[c]) * static_cast<std::int16_t>(b[c]);
  return s;
}

#if defined(__GNUC__) && !defined(__clang__)
#define DISA_VECTOR_EXT 1
using v16f = float __attribute__((vector_size(64)));
using v16i = int __attribute__((vector_size(64)));

// Horizontal sums of 8 16-lane vectors in one shuffle tree. Inputs in the order 0,4,2,6,1,5,3,7
// come out in natural order.
template <class V, class T>
inline void transposed_sums(V a0, V a1, V a2, V a3, V a4, V a5, V a6, V a7, T (&out)[8]) {
  const v16i lo1 = {0, 1, 2, 3, 4, 5, 6, 7, 16, 17, 18, 19, 20, 21, 22, 23};
  const v16i hi1 = {8, 9, 10, 11, 12, 13, 14, 15, 24, 25, 26, 27, 28, 29, 30, 31};
  const V b0 = __builtin_shuffle(a0, a1, lo1) + __builtin_shuffle(a0, a1, hi1);
  const V b1 = __builtin_shuffle(a2, a3, lo1) + __builtin_shuffle(a2, a3, hi1);
  const V b2 = __builtin_shuffle(a4, a5, lo1) + __builtin_shuffle(a4, a5, hi1);
  const V b3 = __builtin_shuffle(a6, a7, lo1) + __builtin_shuffle(a6, a7, hi1);
  const v16i lo2 = {0, 1, 2, 3, 16, 17, 18, 19, 8, 9, 10, 11, 24, 25, 26, 27};
  const v16i hi2 = {4, 5, 6, 7, 20, 21, 22, 23, 12, 13, 14, 15, 28, 29, 30, 31};
  const V c0 = __builtin_shuffle(b0, b1, lo2) + __builtin_shuffle(b0, b1, hi2);
  const V c1 = __builtin_shuffle(b2, b3, lo2) + __builtin_shuffle(b2, b3, hi2);
  const v16i lo3 = {0, 1, 16, 17, 4, 5, 20, 21, 8, 9, 24, 25, 12, 13, 28, 29};
  const v16i hi3 = {2, 3, 18, 19, 6, 7, 22, 23, 10, 11, 26, 27, 14, 15, 30, 31};
  const V d = __builtin_shuffle(c0, c1, lo3) + __builtin_shuffle(c0, c1, hi3);
  const v16i lo4 = {0, 2, 4, 6, 8, 10, 12, 14, 0, 0, 0, 0, 0, 0, 0, 0};
  const v16i hi4 = {1, 3, 5, 7, 9, 11, 13, 15, 0, 0, 0, 0, 0, 0, 0, 0};
  const V e = __builtin_shuffle(d, lo4) + __builtin_shuffle(d, hi4);
  for (int k = 0; k < 8; ++k) out[k] = e[k];
}

template <class V, class S>
inline V load16(const S* p) {
  V v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
#endif

// Dot products of one fixed descriptor with the 8 moving corner descriptors at `at`, corner k
// having bit 0 for x, bit 1 for y and bit 2 for z. This is the inner loop of every evaluation.
inline void corner_dots_f32(const float* f, const float* m, const std::size_t (&at)[8], int channels,
                            double (&out)[8]) {
#ifdef DISA_VECTOR_EXT
  if (channels == 16) {
    const v16f fv = load16<v16f>(f);
    float sums[8];
    transposed_sums(fv * load16<v16f>(m + at[0]), fv * load16<v16f>(m + at[4]), fv * load16<v16f>(m + at[2]),
                    fv * load16<v16f>(m + at[6]), fv * load16<v16f>(m + at[1]), fv * load16<v16f>(m + at[5]),
                    fv * load16<v16f>(m + at[3]), fv * load16<v16f>(m + at[7]), sums);
    for (int k = 0; k < 8; ++k) out[k] = sums[k];
    return;
  }
#endif
  for (int k = 0; k < 8; ++k) out[k] = dot_f32(f, m + at[k], channels);
}

inline void corner_dots_i8(const std::int8_t* f, const std::int8_t* m, const std::size_t (&at)[8], int channels,
                           double scale, double (&out)[8]) {
  for (int k = 0; k < 8; ++k) out[k] = dot_i8(f, m + at[k], channels) * scale;
}

constexpr double kInsideTolerance = 1e-6;

struct Accumulator {
  double num = 0.0;
  double den = 0.0;
  Vec3 g = Vec3::Zero();
  Mat3 h = Mat3::Zero();
  VecX full;  // per-sample Jacobian path (deformation)
};

}  // namespace

DotObjective::DotObjective(const FeatureMap& fixed, const FeatureMap& moving, const WeightMap& cell_weights,
                           std::vector<std::size_t> samples)
    : fixed_(fixed), moving_(moving) {
  if (fixed.channels() != moving.channels()) throw DataError("feature maps differ in channel count");
  if (cell_weights.weights.dims() != fixed.dims()) throw DataError("weights are not on the fixed feature grid");
  if (samples.empty()) throw DataError("dot objective needs at least one sample");
  integer_path_ = fixed.quantized() && moving.quantized();
  if (!integer_path_ && moving.quantized()) {
    const FeatureMap dq = dequantize(moving);
    moving_f32_.assign(dq.float_values().begin(), dq.float_values().end());
  }

  const int channels = fixed.channels();
  samples_.reserve(samples.size());
  for (std::size_t cell : samples) {
    if (cell >= fixed.cell_count()) throw DataError("sample cell index out of range");
    const Index3 idx = fixed.cell_geometry().index_of(cell);
    samples_.push_back({fixed.cell_geometry().index_to_world(Vec3(idx[0], idx[1], idx[2])),
                        static_cast<double>(cell_weights.weights[cell]), cell});
  }
  for (const SamplePoint& s : samples_) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t i = s.cell * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c);
      if (integer_path_) {
        fixed_i8_.push_back(fixed.int8_values()[i]);
      } else {
        fixed_f32_.push_back(fixed.value(s.cell, c));
      }
    }
  }
}

template <bool kGradient>
double DotObjective::evaluate(const TransformChain& t, VecX* gradient) const {
  const Geometry& cg = moving_.cell_geometry();
  const Mat3 w2i = cg.world_to_index_matrix();
  const Index3 d = moving_.dims();
  const int channels = moving_.channels();
  const bool deform = t.has_deform();
  const Mat3 lin = w2i * t.linear_matrix();
  const Vec3 off = w2i * (t.linear_offset() - cg.origin);
  const Vec3 center = t.center();
  const std::span<const float> moving_f32 =
      moving_f32_.empty() ? moving_.float_values() : std::span<const float>(moving_f32_);
  const std::span<const std::int8_t> moving_i8 = moving_.int8_values();
  const double corner_scale = integer_path_ ? 1.0 / (FeatureMap::kQuantScale * FeatureMap::kQuantScale) : 1.0;
  const auto sx = static_cast<std::size_t>(channels);
  const std::size_t sy = sx * static_cast<std::size_t>(d[0]);
  const std::size_t sz = sy * static_cast<std::size_t>(d[1]);
  const int nparam = t.parameter_count();
  const bool fast_path = std::min({d[0], d[1], d[2]}) >= 2;
  const Vec3 upper(d[0] - 1, d[1] - 1, d[2] - 1);

  const std::size_t n = samples_.size();
  const std::size_t blocks = (n + parallel::kReductionBlock - 1) / parallel::kReductionBlock;
  std::vector<Accumulator> partial(blocks);

  parallel::for_each(blocks, [&](std::size_t b) {
    Accumulator acc;
    if (kGradient && deform) acc.full = VecX::Zero(nparam);
    const std::size_t end = std::min(n, (b + 1) * parallel::kReductionBlock);
    // Block-local copies: stores to the accumulators could otherwise alias the captured doubles.
    const Mat3 lin_b = lin;
    const Vec3 off_b = off, upper_b = upper;
    const float* moving_b = moving_f32.data();
    const float* fixed_b = fixed_f32_.data();
    const std::int8_t* fixed_i8_b = fixed_i8_.data();
    const std::int8_t* moving_i8_b = moving_i8.data();
    double fast_num = 0.0, fast_den = 0.0;
    for (std::size_t s = b * parallel::kReductionBlock; s < end; ++s) {
      const SamplePoint& sp = samples_[s];
      const Vec3 idx = deform ? Vec3(w2i * (t.apply(sp.world) - cg.origin)) : Vec3(lin_b * sp.world + off_b);
      if constexpr (!kGradient) {
        if (fast_path && idx.minCoeff() >= 0.0 && (idx - upper_b).maxCoeff() < 0.0) {
          // Value only, strictly inside the moving grid.
          const int x0 = static_cast<int>(idx[0]), y0 = static_cast<int>(idx[1]), z0 = static_cast<int>(idx[2]);
          const double tx = idx[0] - x0, ty = idx[1] - y0, tz = idx[2] - z0;
          const double ux = 1.0 - tx, uy = 1.0 - ty, uz = 1.0 - tz;
          const std::size_t base = x0 * sx + y0 * sy + z0 * sz;
          const std::size_t at[8] = {base,           base + sx,           base + sy,      base + sy + sx,
                                     base + sz,      base + sz + sx,      base + sz + sy, base + sz + sy + sx};
          double corner[8];
          if (integer_path_) {
            corner_dots_i8(fixed_i8_b + s * sx, moving_i8_b, at, channels, corner_scale, corner);
          } else {
            corner_dots_f32(fixed_b + s * sx, moving_b, at, channels, corner);
          }
          // Double interpolation of data-only corner dots keeps the value smooth in the pose.
          const double c0 = uy * (ux * corner[0] + tx * corner[1]) + ty * (ux * corner[2] + tx * corner[3]);
          const double c1 = uy * (ux * corner[4] + tx * corner[5]) + ty * (ux * corner[6] + tx * corner[7]);
          const double value = uz * c0 + tz * c1;
          fast_num += sp.weight * value;
          fast_den += sp.weight;
          continue;
        }
      }
      bool inside = true;
      std::array<int, 3> i0{};
      std::array<double, 3> fr{};
      std::array<std::size_t, 3> step{sx, sy, sz};
      for (int a = 0; a < 3; ++a) {
        const double hi = d[a] - 1;
        if (!(idx[a] >= -kInsideTolerance && idx[a] <= hi + kInsideTolerance)) {
          inside = false;
          break;
        }
        const double c = std::clamp(idx[a], 0.0, hi);
        if (d[a] == 1) {
          i0[a] = 0;
          fr[a] = 0.0;
          step[a] = 0;
        } else {
          i0[a] = std::min(static_cast<int>(c), d[a] - 2);
          fr[a] = c - i0[a];
        }
      }
      if (!inside) continue;

      const std::size_t base = i0[0] * sx + i0[1] * sy + i0[2] * sz;
      std::size_t at[8];
      for (int k = 0; k < 8; ++k)
        at[k] = base + ((k & 1) ? step[0] : 0) + ((k & 2) ? step[1] : 0) + ((k & 4) ? step[2] : 0);
      double corner[8];
      if (integer_path_) {
        corner_dots_i8(fixed_i8_.data() + s * sx, moving_i8.data(), at, channels, corner_scale, corner);
      } else {
        corner_dots_f32(&fixed_f32_[s * sx], moving_f32.data(), at, channels, corner);
      }
      const double tx = fr[0], ty = fr[1], tz = fr[2];
      const double ux = 1.0 - tx, uy = 1.0 - ty, uz = 1.0 - tz;
      const double c00 = ux * corner[0] + tx * corner[1];
      const double c10 = ux * corner[2] + tx * corner[3];
      const double c01 = ux * corner[4] + tx * corner[5];
      const double c11 = ux * corner[6] + tx * corner[7];
      const double c0 = uy * c00 + ty * c10;
      const double c1 = uy * c01 + ty * c11;
      const double value = uz * c0 + tz * c1;
      acc.num += sp.weight * value;
      acc.den += sp.weight;

      if constexpr (kGradient) {
        Vec3 gi;
        gi[0] = uy * uz * (corner[1] - corner[0]) + ty * uz * (corner[3] - corner[2]) +
                uy * tz * (corner[5] - corner[4]) + ty * tz * (corner[7] - corner[6]);
        gi[1] = uz * (c10 - c00) + tz * (c11 - c01);
        gi[2] = c1 - c0;
        for (int a = 0; a < 3; ++a)
          if (step[a] == 0) gi[a] = 0.0;
        const Vec3 gw = sp.weight * (w2i.transpose() * gi);
        if (deform) {
          acc.full.noalias() += t.jacobian(sp.world).transpose() * gw;
        } else {
          acc.g += gw;
          acc.h.noalias() += gw * (sp.world - center).transpose();
        }
      }
    }
    acc.num += fast_num;
    acc.den += fast_den;
    partial[b] = std::move(acc);
  });

  Accumulator total;
  if (kGradient && deform) total.full = VecX::Zero(nparam);
  for (const Accumulator& a : partial) {
    total.num += a.num;
    total.den += a.den;
    if constexpr (kGradient) {
      if (deform) {
        if (a.full.size() == nparam) total.full += a.full;
      } else {
        total.g += a.g;
        total.h += a.h;
      }
    }
  }
  if (!(total.den > 0.0)) throw NumericalError("no overlap");
  if constexpr (kGradient) {
    *gradient = (deform ? total.full : t.contract_linear(total.g, total.h)) / total.den;
  }
  return total.num / total.den;
}

double DotObjective::value(const TransformChain& t) const { return evaluate<false>(t, nullptr); }

double DotObjective::value_and_gradient(const TransformChain& t, VecX& gradient) const {
  return evaluate<true>(t, &gradient);
}

double dot_objective(const FeatureMap& fixed, const FeatureMap& moving, const TransformChain& t,
                     const WeightMap& cell_weights, const std::vector<std::size_t>& samples) {
  return DotObjective(fixed, moving, cell_weights, samples).value(t);
}

double dot_objective_gradient(const FeatureMap& fixed, const FeatureMap& moving, const TransformChain& t,
                              const WeightMap& cell_weights, const std::vector<std::size_t>& samples,
                              VecX& gradient) {
  return DotObjective(fixed, moving, cell_weights, samples).value_and_gradient(t, gradient);
}

Volume heatmap(const FeatureMap& a, const Index3& cell, const FeatureMap& b) {
  if (a.channels() != b.channels()) throw DataError("feature maps differ in channel count");
  if (!a.cell_geometry().contains(cell[0], cell[1], cell[2])) throw DataError("query cell out of bounds");
  const std::vector<float> query = a.descriptor(a.cell_geometry().linear_index(cell[0], cell[1], cell[2]));
  Volume out(b.cell_geometry());
  const int channels = b.channels();
  for (std::size_t q = 0; q < b.cell_count(); ++q) {
    float s = 0.0f;
    for (int c = 0; c < channels; ++c) s += query[static_cast<std::size_t>(c)] * b.value(q, c);
    out[q] = s;
  }
  return out;
}

}  // namespace disa
