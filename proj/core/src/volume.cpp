#include "disa/volume.hpp"

#include "disa/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace disa {

Index3 Geometry::index_of(std::size_t linear) const {
  const auto nx = static_cast<std::size_t>(dims[0]);
  const auto ny = static_cast<std::size_t>(dims[1]);
  return {static_cast<int>(linear % nx), static_cast<int>((linear / nx) % ny),
          static_cast<int>(linear / (nx * ny))};
}

Vec3 Geometry::center() const {
  const Vec3 mid((dims[0] - 1) * 0.5, (dims[1] - 1) * 0.5, (dims[2] - 1) * 0.5);
  return index_to_world(mid);
}

void Geometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) throw DataError("volume dims must be positive");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      throw DataError("volume spacing must be positive");
  }
  const double off = (direction.transpose() * direction - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(off < 1e-6)) throw DataError("direction matrix is not orthonormal");
}

bool same_grid(const Geometry& a, const Geometry& b, double tolerance) {
  return a.dims == b.dims && (a.spacing - b.spacing).cwiseAbs().maxCoeff() <= tolerance &&
         (a.origin - b.origin).cwiseAbs().maxCoeff() <= tolerance &&
         (a.direction - b.direction).cwiseAbs().maxCoeff() <= tolerance;
}

Volume::Volume(Geometry geometry, float fill) : geometry_(std::move(geometry)) {
  geometry_.validate();
  data_.assign(geometry_.voxel_count(), fill);
}

Volume::Volume(Geometry geometry, std::vector<float> data)
    : geometry_(std::move(geometry)), data_(std::move(data)) {
  geometry_.validate();
  if (data_.size() != geometry_.voxel_count())
    throw DataError("volume data length does not match dims");
}

namespace {

constexpr double kInsideTolerance = 1e-6;

// Lower corner and fractional offset along one axis for an index already clamped to [0, n-1].
inline void cell_along(double x, int n, int& i0, double& t) {
  if (n == 1) {
    i0 = 0;
    t = 0.0;
    return;
  }
  i0 = std::min(static_cast<int>(std::floor(x)), n - 2);
  t = x - i0;
}

}  // namespace

Sample sample_index(const Volume& v, const Vec3& index, OutsidePolicy policy) {
  const Index3& d = v.dims();
  bool inside = true;
  Vec3 c;
  for (int a = 0; a < 3; ++a) {
    const double hi = d[a] - 1;
    if (!(index[a] >= -kInsideTolerance && index[a] <= hi + kInsideTolerance)) inside = false;
    c[a] = std::clamp(index[a], 0.0, hi);
  }
  if (!inside && policy == OutsidePolicy::Flag) return {0.0, false};

  int x0, y0, z0;
  double tx, ty, tz;
  cell_along(c[0], d[0], x0, tx);
  cell_along(c[1], d[1], y0, ty);
  cell_along(c[2], d[2], z0, tz);
  const int x1 = std::min(x0 + 1, d[0] - 1);
  const int y1 = std::min(y0 + 1, d[1] - 1);
  const int z1 = std::min(z0 + 1, d[2] - 1);

  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  const double c00 = lerp(v.at(x0, y0, z0), v.at(x1, y0, z0), tx);
  const double c10 = lerp(v.at(x0, y1, z0), v.at(x1, y1, z0), tx);
  const double c01 = lerp(v.at(x0, y0, z1), v.at(x1, y0, z1), tx);
  const double c11 = lerp(v.at(x0, y1, z1), v.at(x1, y1, z1), tx);
  const double value = lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz);
  return {value, inside};
}

Sample sample_trilinear(const Volume& v, const Vec3& world, OutsidePolicy policy) {
  return sample_index(v, v.geometry().world_to_index(world), policy);
}

Volume resample(const Volume& v, const Vec3& new_spacing) {
  if ((new_spacing.array() <= 0.0).any()) throw DataError("resample spacing must be positive");
  const Geometry& src = v.geometry();
  Geometry dst = src;
  dst.spacing = new_spacing;
  for (int a = 0; a < 3; ++a) {
    const double extent = src.dims[a] * src.spacing[a] / new_spacing[a];
    // Guard against 10.000000001 style rounding when the ratio is integral.
    dst.dims[a] = std::max(1, static_cast<int>(std::ceil(extent - 1e-9)));
  }
  Volume out(dst);
  // Direction and origin are shared, so source index = diag(new/old) * target index.
  const Vec3 ratio = new_spacing.cwiseQuotient(src.spacing);
  parallel::for_each(static_cast<std::size_t>(dst.dims[2]), [&](std::size_t z) {
    for (int y = 0; y < dst.dims[1]; ++y) {
      for (int x = 0; x < dst.dims[0]; ++x) {
        const Vec3 idx = Vec3(x, y, static_cast<double>(z)).cwiseProduct(ratio);
        out.at(x, y, static_cast<int>(z)) =
            static_cast<float>(sample_index(v, idx, OutsidePolicy::Clamp).value);
      }
    }
  });
  return out;
}

Volume normalize(const Volume& v) {
  const std::size_t n = v.size();
  if (n < 2) throw DataError("constant volume");
  const auto data = v.data();
  double mean = 0.0;
  for (float x : data) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (float x : data) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n));
  if (!(sd > 0.0) || sd < 1e-12 * std::max(1.0, std::abs(mean))) throw DataError("constant volume");
  Volume out(v.geometry());
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i) o[i] = static_cast<float>((data[i] - mean) / sd);
  return out;
}

Volume gradient_magnitude(const Volume& v) {
  const Index3& d = v.dims();
  if (d[0] < 3 || d[1] < 3 || d[2] < 3) throw DataError("gradient_magnitude needs at least 3 voxels per axis");
  const Vec3& s = v.geometry().spacing;
  Volume out(v.geometry());

  auto derivative = [&](int x, int y, int z, int axis) {
    Index3 lo{x, y, z}, hi{x, y, z};
    const int i = lo[axis];
    double scale = 2.0 * s[axis];
    if (i == 0) {
      hi[axis] = 1;
      scale = s[axis];
    } else if (i == d[axis] - 1) {
      lo[axis] = i - 1;
      scale = s[axis];
    } else {
      lo[axis] = i - 1;
      hi[axis] = i + 1;
    }
    return (static_cast<double>(v.at(hi[0], hi[1], hi[2])) - v.at(lo[0], lo[1], lo[2])) / scale;
  };

  parallel::for_each(static_cast<std::size_t>(d[2]), [&](std::size_t zz) {
    const int z = static_cast<int>(zz);
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[0]; ++x) {
        const double gx = derivative(x, y, z, 0);
        const double gy = derivative(x, y, z, 1);
        const double gz = derivative(x, y, z, 2);
        out.at(x, y, z) = static_cast<float>(std::sqrt(gx * gx + gy * gy + gz * gz));
      }
    }
  });
  return out;
}

bool patch_in_bounds(const Geometry& g, const Index3& center, int radius) {
  for (int a = 0; a < 3; ++a) {
    if (center[a] - radius < 0 || center[a] + radius >= g.dims[a]) return false;
  }
  return true;
}

Patch extract_patch(const Volume& v, const Index3& center, int radius) {
  if (radius < 0) throw DataError("patch radius must be non-negative");
  if (!patch_in_bounds(v.geometry(), center, radius)) throw DataError("patch out of bounds");
  Patch p;
  p.radius = radius;
  p.center = center;
  const int side = p.side();
  p.data.resize(static_cast<std::size_t>(side) * side * side);
  std::size_t k = 0;
  for (int z = center[2] - radius; z <= center[2] + radius; ++z)
    for (int y = center[1] - radius; y <= center[1] + radius; ++y)
      for (int x = center[0] - radius; x <= center[0] + radius; ++x) p.data[k++] = v.at(x, y, z);
  return p;
}

namespace {

// Edge-clamped moving box sum along one axis, in place on a double buffer.
void box_sum_axis(std::vector<double>& buf, const Index3& d, int axis, int radius) {
  const std::array<std::size_t, 3> stride{1, static_cast<std::size_t>(d[0]),
                                          static_cast<std::size_t>(d[0]) * d[1]};
  const int n = d[axis];
  const int u = axis == 0 ? 1 : 0;
  const int w = axis == 2 ? 1 : 2;
  const std::size_t lines = static_cast<std::size_t>(d[u]) * d[w];
  parallel::for_each(lines, [&](std::size_t line) {
    const int iu = static_cast<int>(line % d[u]);
    const int iw = static_cast<int>(line / d[u]);
    const std::size_t base = iu * stride[u] + iw * stride[w];
    std::vector<double> src(n);
    for (int i = 0; i < n; ++i) src[i] = buf[base + i * stride[axis]];
    // prefix over the clamped extension [-radius, n-1+radius]
    std::vector<double> prefix(n + 2 * radius + 1, 0.0);
    for (int i = -radius; i < n + radius; ++i)
      prefix[i + radius + 1] = prefix[i + radius] + src[std::clamp(i, 0, n - 1)];
    for (int i = 0; i < n; ++i)
      buf[base + i * stride[axis]] = prefix[i + 2 * radius + 1] - prefix[i];
  });
}

}  // namespace

Volume local_variance(const Volume& v, int radius) {
  if (radius < 1) throw DataError("local_variance radius must be >= 1");
  const Index3& d = v.dims();
  const std::size_t n = v.size();
  std::vector<double> s1(n), s2(n);
  const auto data = v.data();
  for (std::size_t i = 0; i < n; ++i) {
    s1[i] = data[i];
    s2[i] = static_cast<double>(data[i]) * data[i];
  }
  for (int axis = 0; axis < 3; ++axis) {
    box_sum_axis(s1, d, axis, radius);
    box_sum_axis(s2, d, axis, radius);
  }
  const double count = std::pow(2.0 * radius + 1.0, 3);
  Volume out(v.geometry());
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double var = (s2[i] - s1[i] * s1[i] / count) / (count - 1.0);
    o[i] = static_cast<float>(std::max(0.0, var));
  }
  return out;
}

}  // namespace disa
