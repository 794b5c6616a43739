#include "disa/sampling.hpp"

#include "binary.hpp"
#include "disa/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace disa {

WeightedSampler::WeightedSampler(std::span<const double> weights) {
  cumulative_.reserve(weights.size());
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DataError("weights must be finite and non-negative");
    sum += w;
    cumulative_.push_back(sum);
  }
  if (!(sum > 0.0)) throw DataError("all-zero weight map");
}

std::size_t WeightedSampler::draw(double u) const {
  const double target = u * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
  if (it == cumulative_.end()) --it;
  // Zero-weight entries share their predecessor's cumulative value and are never selected.
  return static_cast<std::size_t>(it - cumulative_.begin());
}

std::size_t nearest_to(std::span<const double> values, double t) {
  if (values.empty()) throw DataError("no candidates");
  std::size_t best = 0;
  double best_d = std::abs(values[0] - t);
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double d = std::abs(values[i] - t);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<Index3> candidate_centers(const Geometry& g, int radius, int stride) {
  if (stride < 1) throw DataError("candidate stride must be >= 1");
  std::vector<Index3> out;
  for (int z = radius; z + radius < g.dims[2]; z += stride)
    for (int y = radius; y + radius < g.dims[1]; y += stride)
      for (int x = radius; x + radius < g.dims[0]; x += stride) out.push_back({x, y, z});
  return out;
}

SamplingResult sample_pairs(const Volume& moving, const Volume& fixed, const SamplingOptions& options,
                            bool keep_similarities) {
  const int r = options.radius;
  SamplingResult result;
  result.gradient_side = options.gradient_side;
  result.candidates = candidate_centers(fixed.geometry(), r, options.candidate_stride);
  if (result.candidates.empty()) throw DataError("no interior candidates");

  // Source centres: interior voxels of M, weighted by local variance.
  const WeightMap w = weight_map(moving, r);
  std::vector<Index3> sources;
  std::vector<double> source_w;
  const Index3& dm = moving.dims();
  for (int z = r; z + r < dm[2]; ++z)
    for (int y = r; y + r < dm[1]; ++y)
      for (int x = r; x + r < dm[0]; ++x) {
        sources.push_back({x, y, z});
        source_w.push_back(w.weights.at(x, y, z));
      }
  if (sources.empty()) throw DataError("no interior centres in M");
  const WeightedSampler sampler(source_w);

  const bool grad_from_f = options.gradient_side == GradientSide::F;
  const Volume grad = gradient_magnitude(grad_from_f ? fixed : moving);

  // Candidate F patches and their gradient cubes are reused by every draw.
  const std::size_t nc = result.candidates.size();
  std::vector<std::vector<float>> cand_f(nc), cand_g(nc);
  for (std::size_t j = 0; j < nc; ++j) {
    cand_f[j] = extract_patch(fixed, result.candidates[j], r).data;
    if (grad_from_f) cand_g[j] = extract_patch(grad, result.candidates[j], r).data;
  }

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> sims(nc);
  result.records.reserve(options.n);
  result.trace.reserve(options.n);
  for (std::size_t k = 0; k < options.n; ++k) {
    const Index3 cm = sources[sampler.draw(unit(rng))];
    const std::vector<float> pm = extract_patch(moving, cm, r).data;
    const std::vector<float> pg = grad_from_f ? std::vector<float>{} : extract_patch(grad, cm, r).data;
    parallel::for_each(nc, [&](std::size_t j) {
      sims[j] = grad_from_f ? lc2_cube_multiradius(pm, cand_f[j], cand_g[j], r, options.radii)
                            : lc2_cube_multiradius(cand_f[j], pm, pg, r, options.radii);
    });
    const double t = unit(rng);
    const std::size_t best = nearest_to(sims, t);
    result.records.push_back({pm, cand_f[best], static_cast<float>(sims[best])});
    SampleTrace tr{cm, best, t, {}};
    if (keep_similarities) tr.similarities = sims;
    result.trace.push_back(std::move(tr));
  }
  return result;
}

namespace {
const std::string kDatasetMagic = detail::magic("DISAP1");
}

void write_dataset(const std::vector<PatchPairRecord>& records, GradientSide side, const std::filesystem::path& path) {
  if (records.empty()) throw DataError("refusing to write an empty dataset");
  const std::size_t n = records.front().patch_m.size();
  const auto s = static_cast<std::uint32_t>(std::lround(std::cbrt(static_cast<double>(n))));
  if (static_cast<std::size_t>(s) * s * s != n) throw DataError("patch size is not a cube");
  detail::ByteWriter w;
  w.put_bytes(kDatasetMagic);
  w.put(static_cast<std::uint32_t>(records.size()));
  w.put(s);
  w.put(static_cast<std::uint8_t>(side));
  for (const auto& rec : records) {
    if (rec.patch_m.size() != n || rec.patch_f.size() != n) throw DataError("records differ in patch size");
    w.put_array(std::span<const float>(rec.patch_m));
    w.put_array(std::span<const float>(rec.patch_f));
    w.put(rec.target);
  }
  detail::write_file(path, w.bytes());
}

Dataset read_dataset(const std::filesystem::path& path) {
  const std::vector<char> bytes = detail::read_file(path);
  detail::ByteReader r(bytes);
  if (r.get_string(8) != kDatasetMagic) throw DataError("not a DISAP1 file: bad magic");
  const auto count = r.get<std::uint32_t>();
  const auto side = r.get<std::uint32_t>();
  const auto flag = r.get<std::uint8_t>();
  if (count == 0) throw DataError("DISAP1: empty dataset");
  if (side == 0 || side > 255) throw DataError("DISAP1: invalid patch side");
  if (flag > 1) throw DataError("DISAP1: invalid gradient-side flag");
  const std::size_t n = static_cast<std::size_t>(side) * side * side;
  const std::size_t record_bytes = (2 * n + 1) * sizeof(float);
  if (r.remaining() != record_bytes * count) throw DataError("DISAP1: size mismatch");
  Dataset d;
  d.side = static_cast<int>(side);
  d.gradient_side = static_cast<GradientSide>(flag);
  d.records.resize(count);
  for (auto& rec : d.records) {
    rec.patch_m.resize(n);
    rec.patch_f.resize(n);
    r.get_array(std::span<float>(rec.patch_m));
    r.get_array(std::span<float>(rec.patch_f));
    rec.target = r.get<float>();
  }
  return d;
}

}  // namespace disa
