#include "disa/metrics.hpp"

#include "disa/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace disa {

WeightMap WeightMap::from_volume(Volume weights) {
  WeightMap w{std::move(weights), 0.0};
  for (float& x : w.weights.data()) {
    if (!(x > 0.0f)) x = 0.0f;
    w.total_weight += x;
  }
  return w;
}

namespace {

void require_same_radius(const Patch& a, const Patch& b) {
  if (a.radius != b.radius || a.data.size() != b.data.size()) throw DataError("patch radius mismatch");
}

}  // namespace

double ssd_patch(const Patch& a, const Patch& b) {
  require_same_radius(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

double ncc_patch(const Patch& a, const Patch& b, double eps) {
  require_same_radius(a, b);
  const auto n = static_cast<double>(a.data.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    ma += a.data[i];
    mb += b.data[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double da = a.data[i] - ma, db = b.data[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa / n <= eps || sbb / n <= eps) throw NumericalError("degenerate patch");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

namespace {

// LC2 over values gathered by `at(i)` for i in [0, n). Centred 2x2 normal equations: the
// intercept is absorbed exactly by centring, the two slopes get Tikhonov damping 1e-6 * trace.
template <typename Fixed, typename Source, typename Grad>
Lc2Value lc2_generic(std::size_t n, Fixed f, Source m, Grad g) {
  const auto count = static_cast<double>(n);
  double mf = 0.0, mm = 0.0, mg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mf += f(i);
    mm += m(i);
    mg += g(i);
  }
  mf /= count;
  mm /= count;
  mg /= count;
  double sff = 0.0, smm = 0.0, sgg = 0.0, smg = 0.0, sfm = 0.0, sfg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double df = f(i) - mf, dm = m(i) - mm, dg = g(i) - mg;
    sff += df * df;
    smm += dm * dm;
    sgg += dg * dg;
    smg += dm * dg;
    sfm += df * dm;
    sfg += df * dg;
  }
  if (sff / count <= kLc2VarianceEps) return {0.0, true};

  const double lambda = 1e-6 * (smm + sgg);
  double a = 0.0, b = 0.0;
  if (smm + sgg > 0.0) {
    const double h00 = smm + lambda, h11 = sgg + lambda, h01 = smg;
    const double det = h00 * h11 - h01 * h01;
    if (det > 0.0) {
      a = (h11 * sfm - h01 * sfg) / det;
      b = (h00 * sfg - h01 * sfm) / det;
    }
  }
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (f(i) - mf) - a * (m(i) - mm) - b * (g(i) - mg);
    rss += r * r;
  }
  if (rss <= 1e-12 * sff) return {1.0, false};
  return {std::clamp(1.0 - rss / sff, 0.0, 1.0), false};
}

}  // namespace

Lc2Value lc2_values(std::span<const float> fixed, std::span<const float> source,
                    std::span<const float> source_grad) {
  if (fixed.size() != source.size() || fixed.size() != source_grad.size())
    throw DataError("patch radius mismatch");
  if (fixed.empty()) return {0.0, true};
  return lc2_generic(
      fixed.size(), [&](std::size_t i) { return static_cast<double>(fixed[i]); },
      [&](std::size_t i) { return static_cast<double>(source[i]); },
      [&](std::size_t i) { return static_cast<double>(source_grad[i]); });
}

Lc2Value lc2_patch(const Patch& fixed, const Patch& moving, const Patch& moving_grad) {
  require_same_radius(fixed, moving);
  require_same_radius(fixed, moving_grad);
  return lc2_values(fixed.data, moving.data, moving_grad.data);
}

namespace {

// LC2 of the radius-r cube nested in the centre of a radius-big cube stored x-fastest.
Lc2Value lc2_nested(std::span<const float> f, std::span<const float> m, std::span<const float> g, int big,
                    int r) {
  if (r == big) return lc2_values(f, m, g);
  const int side = 2 * big + 1;
  const int sub = 2 * r + 1;
  const int off = big - r;
  auto map = [=](std::size_t i) {
    const int x = static_cast<int>(i % sub);
    const int y = static_cast<int>((i / sub) % sub);
    const int z = static_cast<int>(i / (static_cast<std::size_t>(sub) * sub));
    return (static_cast<std::size_t>(z + off) * side + (y + off)) * side + (x + off);
  };
  const std::size_t n = static_cast<std::size_t>(sub) * sub * sub;
  return lc2_generic(
      n, [&](std::size_t i) { return static_cast<double>(f[map(i)]); },
      [&](std::size_t i) { return static_cast<double>(m[map(i)]); },
      [&](std::size_t i) { return static_cast<double>(g[map(i)]); });
}

}  // namespace

double lc2_cube_multiradius(std::span<const float> fixed, std::span<const float> source,
                            std::span<const float> source_grad, int radius, std::span<const int> radii) {
  const int side = 2 * radius + 1;
  const std::size_t n = static_cast<std::size_t>(side) * side * side;
  if (fixed.size() != n || source.size() != n || source_grad.size() != n) throw DataError("patch radius mismatch");
  double sum = 0.0;
  int used = 0;
  for (int r : radii) {
    if (r > radius) continue;
    sum += lc2_nested(fixed, source, source_grad, radius, r).value;
    ++used;
  }
  return used == 0 ? 0.0 : sum / used;
}

double lc2_multiradius(const Volume& fixed, const Volume& moving, const Volume& moving_grad,
                       const Index3& center, std::span<const int> radii) {
  if (fixed.dims() != moving.dims() || fixed.dims() != moving_grad.dims())
    throw DataError("lc2_multiradius needs volumes on one grid");
  double sum = 0.0;
  int used = 0;
  for (int r : radii) {
    if (!patch_in_bounds(fixed.geometry(), center, r)) continue;
    const Patch pf = extract_patch(fixed, center, r);
    const Patch pm = extract_patch(moving, center, r);
    const Patch pg = extract_patch(moving_grad, center, r);
    sum += lc2_patch(pf, pm, pg).value;
    ++used;
  }
  return used == 0 ? 0.0 : sum / used;
}

WeightMap weight_map(const Volume& fixed, int radius) {
  return WeightMap::from_volume(local_variance(fixed, radius));
}

Lc2GlobalObjective::Lc2GlobalObjective(const Volume& fixed, const Volume& moving, const WeightMap& w,
                                       Lc2Options options)
    : fixed_(fixed), moving_(moving), options_(std::move(options)) {
  if (!same_grid(w.weights.geometry(), fixed.geometry())) throw DataError("weight map is not on the fixed grid");
  if (options_.radii.empty()) throw DataError("LC2 needs at least one radius");
  if (options_.sample_step < 1) throw DataError("sample step must be >= 1");
  std::sort(options_.radii.begin(), options_.radii.end());
  if (options_.source == Lc2Source::Moving) {
    moving_grad_ = gradient_magnitude(moving);
  } else {
    fixed_grad_ = gradient_magnitude(fixed);
  }

  const Index3& d = fixed.dims();
  const int step = options_.sample_step;
  for (int z = 0; z < d[2]; z += step) {
    for (int y = 0; y < d[1]; y += step) {
      for (int x = 0; x < d[0]; x += step) {
        const double weight = w.weights.at(x, y, z);
        if (!(weight > 0.0)) continue;
        int max_radius = -1;
        for (int r : options_.radii)
          if (patch_in_bounds(fixed.geometry(), {x, y, z}, r)) max_radius = r;
        if (max_radius < 0) continue;
        centers_.push_back({{x, y, z}, weight, max_radius});
      }
    }
  }
}

double Lc2GlobalObjective::evaluate(const TransformChain& t) const {
  const Geometry& fg = fixed_.geometry();
  const Geometry& mg = moving_.geometry();
  // Composite fixed-index -> moving-index map for the linear part.
  const Mat3 lin = mg.world_to_index_matrix() * t.linear_matrix() * fg.index_to_world_matrix();
  const Vec3 off = mg.world_to_index_matrix() * (t.linear_matrix() * fg.origin + t.linear_offset() - mg.origin);
  const bool deform = t.has_deform();
  const bool source_moving = options_.source == Lc2Source::Moving;

  const std::size_t n = centers_.size();
  std::vector<double> num(n, 0.0), den(n, 0.0);
  parallel::for_each_chunk(n, 16, [&](std::size_t begin, std::size_t end) {
    std::vector<float> pf, pm, pg;
    for (std::size_t c = begin; c < end; ++c) {
      const Center& ctr = centers_[c];
      const int r = ctr.max_radius;
      const int side = 2 * r + 1;
      const std::size_t count = static_cast<std::size_t>(side) * side * side;
      pf.resize(count);
      pm.resize(count);
      pg.resize(count);
      bool inside = true;
      std::size_t k = 0;
      for (int dz = -r; dz <= r && inside; ++dz) {
        for (int dy = -r; dy <= r && inside; ++dy) {
          for (int dx = -r; dx <= r; ++dx, ++k) {
            const int fx = ctr.index[0] + dx, fy = ctr.index[1] + dy, fz = ctr.index[2] + dz;
            const Vec3 fi(fx, fy, fz);
            Vec3 mi;
            if (deform) {
              mi = mg.world_to_index(t.apply(fg.index_to_world(fi)));
            } else {
              mi = lin * fi + off;
            }
            const Sample sm = sample_index(moving_, mi, OutsidePolicy::Flag);
            if (!sm.inside) {
              inside = false;
              break;
            }
            if (source_moving) {
              pf[k] = fixed_.at(fx, fy, fz);
              pm[k] = static_cast<float>(sm.value);
              pg[k] = static_cast<float>(sample_index(moving_grad_, mi, OutsidePolicy::Clamp).value);
            } else {
              // M o T is regressed on F and |grad F|.
              pf[k] = static_cast<float>(sm.value);
              pm[k] = fixed_.at(fx, fy, fz);
              pg[k] = fixed_grad_.at(fx, fy, fz);
            }
          }
        }
      }
      if (!inside) continue;
      double sum = 0.0;
      int used = 0;
      for (int radius : options_.radii) {
        if (radius > r) break;
        sum += lc2_nested(pf, pm, pg, r, radius).value;
        ++used;
      }
      num[c] = ctr.weight * (sum / used);
      den[c] = ctr.weight;
    }
  });
  double total_num = 0.0, total_den = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    total_num += num[c];
    total_den += den[c];
  }
  if (!(total_den > 0.0)) throw NumericalError("no overlap");
  return total_num / total_den;
}

double lc2_global(const Volume& fixed, const Volume& moving, const TransformChain& t, const WeightMap& w,
                  int sample_grid_step, const Lc2Options& options) {
  Lc2Options o = options;
  o.sample_step = sample_grid_step;
  return Lc2GlobalObjective(fixed, moving, w, o).evaluate(t);
}

}  // namespace disa
