#include "disa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace disa {

std::vector<double> fiducial_errors(const LandmarkSet& targets, const LandmarkSet& sources, const TransformChain& t) {
  if (targets.size() != sources.size()) throw DataError("landmark sets differ in length");
  if (targets.empty()) throw DataError("landmark sets are empty");
  std::vector<double> e(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) e[i] = (targets[i] - t.apply(sources[i])).norm();
  return e;
}

double fre(const LandmarkSet& targets, const LandmarkSet& sources, const TransformChain& t) {
  const std::vector<double> e = fiducial_errors(targets, sources, t);
  return std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw DataError("percentile of an empty list");
  if (!(p >= 0.0 && p <= 1.0)) throw DataError("percentile fraction must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

FreSummary fre_percentiles(const std::vector<double>& per_case) {
  if (per_case.empty()) throw DataError("no FRE values");
  FreSummary s;
  s.avg = std::accumulate(per_case.begin(), per_case.end(), 0.0) / static_cast<double>(per_case.size());
  s.p25 = percentile(per_case, 0.25);
  s.p50 = percentile(per_case, 0.50);
  s.p75 = percentile(per_case, 0.75);
  return s;
}

std::vector<std::uint8_t> label_mask(const Volume& labels, int label) {
  std::vector<std::uint8_t> m(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) m[i] = std::lround(labels[i]) == label ? 1 : 0;
  return m;
}

double dice(const Volume& a, const Volume& b, int label) {
  if (!same_grid(a.geometry(), b.geometry())) throw DataError("label volumes are on different grids");
  const auto ma = label_mask(a, label);
  const auto mb = label_mask(b, label);
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    na += ma[i];
    nb += mb[i];
    both += ma[i] & mb[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

namespace {

std::vector<std::uint8_t> surface(const std::vector<std::uint8_t>& mask, const Geometry& g) {
  std::vector<std::uint8_t> s(mask.size(), 0);
  const Index3& d = g.dims;
  static const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const std::size_t i = g.linear_index(x, y, z);
        if (!mask[i]) continue;
        for (const auto& o : off) {
          const int nx = x + o[0], ny = y + o[1], nz = z + o[2];
          if (!g.contains(nx, ny, nz) || !mask[g.linear_index(nx, ny, nz)]) {
            s[i] = 1;
            break;
          }
        }
      }
  return s;
}

std::vector<Vec3> scaled_points(const std::vector<std::uint8_t>& s, const Geometry& g) {
  std::vector<Vec3> p;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i]) {
      const Index3 idx = g.index_of(i);
      p.emplace_back(idx[0] * g.spacing[0], idx[1] * g.spacing[1], idx[2] * g.spacing[2]);
    }
  return p;
}

std::vector<double> directed_brute(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  std::vector<double> d(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : to) best = std::min(best, (from[i] - q).squaredNorm());
    d[i] = std::sqrt(best);
  }
  return d;
}

// 1-D lower envelope of parabolas: out[q] = min_p (s (q - p))^2 + f[p].
void edt_1d(const double* f, double* out, int n, double s, std::vector<int>& v, std::vector<double>& z) {
  const double inf = std::numeric_limits<double>::infinity();
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    const double xq = s * q;
    while (k >= 0) {
      const double xv = s * v[static_cast<std::size_t>(k)];
      const double sep = ((f[q] + xq * xq) - (f[v[static_cast<std::size_t>(k)]] + xv * xv)) / (2.0 * (xq - xv));
      if (sep <= z[static_cast<std::size_t>(k)]) {
        --k;
      } else {
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = sep;
        z[static_cast<std::size_t>(k) + 1] = inf;
        break;
      }
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
    }
  }
  if (k < 0) {
    std::fill(out, out + n, inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    const double xq = s * q;
    while (z[static_cast<std::size_t>(j) + 1] < xq) ++j;
    const double dx = xq - s * v[static_cast<std::size_t>(j)];
    out[q] = dx * dx + f[v[static_cast<std::size_t>(j)]];
  }
}

// Squared distance (mm^2) from every voxel to the nearest site.
std::vector<double> squared_edt(const std::vector<std::uint8_t>& sites, const Geometry& g) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) d[i] = sites[i] ? 0.0 : inf;
  const Index3& n = g.dims;
  const std::array<std::size_t, 3> stride{1, static_cast<std::size_t>(n[0]), static_cast<std::size_t>(n[0]) * n[1]};
  std::vector<int> v;
  std::vector<double> z;
  for (int axis = 0; axis < 3; ++axis) {
    const int len = n[axis];
    const int u = axis == 0 ? 1 : 0;
    const int w = axis == 2 ? 1 : 2;
    std::vector<double> line(static_cast<std::size_t>(len)), out(static_cast<std::size_t>(len));
    for (int b = 0; b < n[w]; ++b)
      for (int a = 0; a < n[u]; ++a) {
        const std::size_t base = a * stride[u] + b * stride[w];
        for (int i = 0; i < len; ++i) line[static_cast<std::size_t>(i)] = d[base + i * stride[axis]];
        edt_1d(line.data(), out.data(), len, g.spacing[axis], v, z);
        for (int i = 0; i < len; ++i) d[base + i * stride[axis]] = out[static_cast<std::size_t>(i)];
      }
  }
  return d;
}

std::vector<double> directed_edt(const std::vector<std::uint8_t>& from, const std::vector<std::uint8_t>& to,
                                 const Geometry& g) {
  const std::vector<double> d2 = squared_edt(to, g);
  std::vector<double> out;
  for (std::size_t i = 0; i < from.size(); ++i)
    if (from[i]) out.push_back(std::sqrt(d2[i]));
  return out;
}

}  // namespace

double hd95(const Volume& a, const Volume& b, int label, Hd95Method method) {
  if (!same_grid(a.geometry(), b.geometry())) throw DataError("label volumes are on different grids");
  const Geometry& g = a.geometry();
  const auto sa = surface(label_mask(a, label), g);
  const auto sb = surface(label_mask(b, label), g);
  const auto na = static_cast<std::size_t>(std::count(sa.begin(), sa.end(), 1));
  const auto nb = static_cast<std::size_t>(std::count(sb.begin(), sb.end(), 1));
  if (na == 0 || nb == 0) throw DataError("hd95 needs two non-empty masks");
  if (method == Hd95Method::Auto) method = na + nb <= 10000 ? Hd95Method::BruteForce : Hd95Method::DistanceTransform;
  std::vector<double> ab, ba;
  if (method == Hd95Method::BruteForce) {
    const auto pa = scaled_points(sa, g);
    const auto pb = scaled_points(sb, g);
    ab = directed_brute(pa, pb);
    ba = directed_brute(pb, pa);
  } else {
    ab = directed_edt(sa, sb, g);
    ba = directed_edt(sb, sa, g);
  }
  return std::max(percentile(std::move(ab), 0.95), percentile(std::move(ba), 0.95));
}

double ConvergenceBucket::percent() const {
  return cases == 0 ? std::numeric_limits<double>::quiet_NaN()
                    : 100.0 * static_cast<double>(converged) / static_cast<double>(cases);
}

std::vector<ConvergenceBucket> convergence_buckets(const std::vector<double>& initial_fres,
                                                   const std::vector<double>& final_fres, double threshold,
                                                   const std::vector<double>& edges) {
  if (initial_fres.size() != final_fres.size()) throw DataError("initial and final FRE lists differ in length");
  if (edges.size() < 2) throw DataError("need at least two bucket edges");
  std::vector<ConvergenceBucket> buckets(edges.size() - 1);
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    if (!(edges[k] < edges[k + 1])) throw DataError("bucket edges must increase");
    buckets[k].lower = edges[k];
    buckets[k].upper = edges[k + 1];
  }
  for (std::size_t i = 0; i < initial_fres.size(); ++i) {
    const double e = initial_fres[i];
    for (std::size_t k = 0; k < buckets.size(); ++k) {
      const bool last = k + 1 == buckets.size();
      if (e >= buckets[k].lower && (e < buckets[k].upper || (last && e <= buckets[k].upper))) {
        ++buckets[k].cases;
        if (final_fres[i] < threshold) ++buckets[k].converged;
        break;
      }
    }
  }
  return buckets;
}

namespace {

std::string fixed_point(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string format_fre_row(const FreTableRow& r) {
  return "| " + r.method + " | " + r.mode + " | " + fixed_point(r.fre.avg, 2) + " | " + fixed_point(r.fre.p25, 2) +
         " | " + fixed_point(r.fre.p50, 2) + " | " + fixed_point(r.fre.p75, 2) + " |";
}

std::string format_fre_table(const std::vector<FreTableRow>& rows) {
  std::string out = "| Method | Mode | Avg. FRE | FRE25 | FRE50 | FRE75 |\n|---|---|---|---|---|---|\n";
  for (const auto& r : rows) out += format_fre_row(r) + "\n";
  return out;
}

std::string format_convergence_row(const ConvergenceTableRow& r) {
  std::string out = "| " + r.similarity + " | " + r.search + " |";
  if (r.percents) {
    for (double p : *r.percents) out += std::isnan(p) ? " N/A |" : " " + fixed_point(p, 1) + "% |";
  } else {
    out += " N/A | N/A | N/A | N/A |";
  }
  const std::string star = r.estimated ? "*" : "";
  out += " " + fixed_point(r.seconds, 1) + star + " | " + std::to_string(r.evaluations) + star + " |";
  return out;
}

std::string format_convergence_table(const std::vector<ConvergenceTableRow>& rows) {
  std::string out =
      "| Similarity | Search | 0-25mm | 25-50mm | 50-75mm | 75-100mm | Time (s) | Num. eval. |\n"
      "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) out += format_convergence_row(r) + "\n";
  return out;
}

}  // namespace disa
