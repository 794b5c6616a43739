#include "disa/mind.hpp"

#include "disa/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <random>

namespace disa {

const std::array<std::pair<Index3, Index3>, kMindChannels>& mind_ssc_pairs() {
  static const auto pairs = [] {
    const std::array<Index3, 6> six{{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
    std::array<std::pair<Index3, Index3>, kMindChannels> out{};
    std::size_t k = 0;
    for (std::size_t i = 0; i < six.size(); ++i)
      for (std::size_t j = i + 1; j < six.size(); ++j) {
        const bool opposite = six[i][0] == -six[j][0] && six[i][1] == -six[j][1] && six[i][2] == -six[j][2];
        if (!opposite) out[k++] = {six[i], six[j]};
      }
    return out;
  }();
  return pairs;
}

namespace {

void smooth_axis(std::vector<double>& buf, const Index3& d, int axis, std::span<const double> kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const std::array<std::size_t, 3> stride{1, static_cast<std::size_t>(d[0]),
                                          static_cast<std::size_t>(d[0]) * d[1]};
  const int n = d[axis];
  const int u = axis == 0 ? 1 : 0;
  const int w = axis == 2 ? 1 : 2;
  const std::size_t lines = static_cast<std::size_t>(d[u]) * d[w];
  parallel::for_each(lines, [&](std::size_t line) {
    const std::size_t base = (line % d[u]) * stride[u] + (line / d[u]) * stride[w];
    std::vector<double> src(n);
    for (int i = 0; i < n; ++i) src[i] = buf[base + i * stride[axis]];
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k) s += kernel[k + radius] * src[std::clamp(i + k, 0, n - 1)];
      buf[base + i * stride[axis]] = s;
    }
  });
}

}  // namespace

FeatureMap mind_ssc(const Volume& v, const MindOptions& options) {
  const Index3& d = v.dims();
  if (d[0] < 5 || d[1] < 5 || d[2] < 5) throw DataError("mind_ssc needs at least 5 voxels per axis");
  const std::size_t n = v.size();

  std::vector<double> kernel(2 * options.kernel_radius + 1);
  double ksum = 0.0;
  for (int k = -options.kernel_radius; k <= options.kernel_radius; ++k) {
    kernel[k + options.kernel_radius] = std::exp(-(k * k) / (2.0 * options.sigma * options.sigma));
    ksum += kernel[k + options.kernel_radius];
  }
  for (double& k : kernel) k /= ksum;

  auto clamped = [&](int x, int y, int z) {
    return static_cast<double>(v.at(std::clamp(x, 0, d[0] - 1), std::clamp(y, 0, d[1] - 1), std::clamp(z, 0, d[2] - 1)));
  };

  std::vector<std::vector<double>> dist(kMindChannels, std::vector<double>(n));
  const auto& pairs = mind_ssc_pairs();
  for (int c = 0; c < kMindChannels; ++c) {
    const auto& [a, b] = pairs[static_cast<std::size_t>(c)];
    auto& buf = dist[static_cast<std::size_t>(c)];
    for (int z = 0; z < d[2]; ++z)
      for (int y = 0; y < d[1]; ++y)
        for (int x = 0; x < d[0]; ++x) {
          const double diff = clamped(x + a[0], y + a[1], z + a[2]) - clamped(x + b[0], y + b[1], z + b[2]);
          buf[v.geometry().linear_index(x, y, z)] = diff * diff;
        }
    for (int axis = 0; axis < 3; ++axis) smooth_axis(buf, d, axis, kernel);
  }

  std::vector<double> variance(n, 0.0);
  double mean_variance = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < kMindChannels; ++c) variance[i] += dist[static_cast<std::size_t>(c)][i];
    variance[i] /= kMindChannels;
    mean_variance += variance[i];
  }
  mean_variance /= static_cast<double>(n);
  const double floor = options.variance_floor * mean_variance;

  std::vector<float> out(n * kMindChannels);
  for (std::size_t i = 0; i < n; ++i) {
    const double var = std::max(variance[i], floor);
    std::array<double, kMindChannels> ch{};
    double peak = 0.0;
    for (int c = 0; c < kMindChannels; ++c) {
      const double dd = dist[static_cast<std::size_t>(c)][i];
      ch[static_cast<std::size_t>(c)] = var > 0.0 ? std::exp(-dd / var) : 1.0;
      peak = std::max(peak, ch[static_cast<std::size_t>(c)]);
    }
    for (int c = 0; c < kMindChannels; ++c)
      out[i * kMindChannels + static_cast<std::size_t>(c)] = static_cast<float>(ch[static_cast<std::size_t>(c)] / peak);
  }
  return FeatureMap(v.geometry(), 1, d, kMindChannels, std::move(out));
}

std::vector<std::size_t> mind_samples(const FeatureMap& fixed, std::size_t max_samples, std::uint64_t seed) {
  std::vector<std::size_t> all(fixed.cell_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  if (max_samples == 0 || all.size() <= max_samples) return all;
  std::vector<std::size_t> picked;
  picked.reserve(max_samples);
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), max_samples, rng);
  return picked;
}

MindObjective::MindObjective(const FeatureMap& fixed, const FeatureMap& moving, std::vector<std::size_t> samples)
    : fixed_(fixed), moving_(moving), samples_(std::move(samples)) {
  if (fixed.channels() != moving.channels()) throw DataError("descriptor maps differ in channel count");
  if (fixed.quantized() || moving.quantized()) throw DataError("MIND descriptors must be float");
  if (samples_.empty()) throw DataError("MIND objective needs at least one sample");
  world_.reserve(samples_.size());
  for (std::size_t s : samples_) {
    if (s >= fixed.cell_count()) throw DataError("sample index out of range");
    const Index3 i = fixed.cell_geometry().index_of(s);
    world_.push_back(fixed.cell_geometry().index_to_world(Vec3(i[0], i[1], i[2])));
  }
}

namespace {
struct MindAccumulator {
  double ssd = 0.0;
  double count = 0.0;
  Vec3 g = Vec3::Zero();
  Mat3 h = Mat3::Zero();
  VecX full;
};
}  // namespace

template <bool kGradient>
double MindObjective::evaluate(const TransformChain& t, VecX* gradient) const {
  const Geometry& cg = moving_.cell_geometry();
  const Mat3 w2i = cg.world_to_index_matrix();
  const Index3 d = moving_.dims();
  const int channels = moving_.channels();
  const bool deform = t.has_deform();
  const Mat3 lin = w2i * t.linear_matrix();
  const Vec3 off = w2i * (t.linear_offset() - cg.origin);
  const auto fv = fixed_.float_values();
  const auto mv = moving_.float_values();
  const auto sx = static_cast<std::size_t>(channels);
  const std::size_t sy = sx * static_cast<std::size_t>(d[0]);
  const std::size_t sz = sy * static_cast<std::size_t>(d[1]);
  const int nparam = t.parameter_count();

  const std::size_t n = samples_.size();
  const std::size_t blocks = (n + parallel::kReductionBlock - 1) / parallel::kReductionBlock;
  std::vector<MindAccumulator> partial(blocks);
  parallel::for_each(blocks, [&](std::size_t b) {
    MindAccumulator acc;
    if (kGradient && deform) acc.full = VecX::Zero(nparam);
    std::vector<double> interp(sx);
    std::vector<Vec3> dinterp(sx);
    const std::size_t end = std::min(n, (b + 1) * parallel::kReductionBlock);
    for (std::size_t s = b * parallel::kReductionBlock; s < end; ++s) {
      const Vec3 idx = deform ? Vec3(w2i * (t.apply(world_[s]) - cg.origin)) : Vec3(lin * world_[s] + off);
      bool inside = true;
      std::array<int, 3> i0{};
      std::array<double, 3> fr{};
      std::array<std::size_t, 3> step{sx, sy, sz};
      for (int a = 0; a < 3; ++a) {
        const double hi = d[a] - 1;
        if (!(idx[a] >= -1e-6 && idx[a] <= hi + 1e-6)) {
          inside = false;
          break;
        }
        const double c = std::clamp(idx[a], 0.0, hi);
        if (d[a] == 1) {
          step[a] = 0;
        } else {
          i0[a] = std::min(static_cast<int>(c), d[a] - 2);
          fr[a] = c - i0[a];
        }
      }
      if (!inside) continue;
      const std::size_t base = i0[0] * sx + i0[1] * sy + i0[2] * sz;
      std::fill(interp.begin(), interp.end(), 0.0);
      if (kGradient) std::fill(dinterp.begin(), dinterp.end(), Vec3::Zero());
      for (int k = 0; k < 8; ++k) {
        const double wx = (k & 1) ? fr[0] : 1.0 - fr[0];
        const double wy = (k & 2) ? fr[1] : 1.0 - fr[1];
        const double wz = (k & 4) ? fr[2] : 1.0 - fr[2];
        const double w = wx * wy * wz;
        const std::size_t at = base + ((k & 1) ? step[0] : 0) + ((k & 2) ? step[1] : 0) + ((k & 4) ? step[2] : 0);
        Vec3 dw;
        if (kGradient) {
          dw = Vec3(((k & 1) ? 1.0 : -1.0) * wy * wz, ((k & 2) ? 1.0 : -1.0) * wx * wz,
                    ((k & 4) ? 1.0 : -1.0) * wx * wy);
          for (int a = 0; a < 3; ++a)
            if (step[a] == 0) dw[a] = 0.0;
        }
        for (std::size_t c = 0; c < sx; ++c) {
          interp[c] += w * mv[at + c];
          if (kGradient) dinterp[c] += dw * mv[at + c];
        }
      }
      const std::size_t row = samples_[s] * sx;
      Vec3 gi = Vec3::Zero();
      for (std::size_t c = 0; c < sx; ++c) {
        const double diff = fv[row + c] - interp[c];
        acc.ssd += diff * diff;
        if (kGradient) gi += (2.0 * diff) * dinterp[c];  // d(-(a-b)^2)/d idx
      }
      acc.count += 1.0;
      if constexpr (kGradient) {
        const Vec3 gw = w2i.transpose() * gi;
        if (deform) {
          acc.full.noalias() += t.jacobian(world_[s]).transpose() * gw;
        } else {
          acc.g += gw;
          acc.h.noalias() += gw * (world_[s] - t.center()).transpose();
        }
      }
    }
    partial[b] = std::move(acc);
  });

  MindAccumulator total;
  if (kGradient && deform) total.full = VecX::Zero(nparam);
  for (const auto& a : partial) {
    total.ssd += a.ssd;
    total.count += a.count;
    if constexpr (kGradient) {
      if (deform) {
        if (a.full.size() == nparam) total.full += a.full;
      } else {
        total.g += a.g;
        total.h += a.h;
      }
    }
  }
  if (!(total.count > 0.0)) throw NumericalError("no overlap");
  const double norm = total.count * channels;
  if constexpr (kGradient) {
    *gradient = (deform ? total.full : t.contract_linear(total.g, total.h)) / norm;
  }
  return -total.ssd / norm;
}

double MindObjective::value(const TransformChain& t) const { return evaluate<false>(t, nullptr); }

double MindObjective::value_and_gradient(const TransformChain& t, VecX& gradient) const {
  return evaluate<true>(t, &gradient);
}

double mind_similarity(const FeatureMap& fixed, const FeatureMap& moving, const TransformChain& t) {
  return MindObjective(fixed, moving, mind_samples(fixed, 0)).value(t);
}

}  // namespace disa
