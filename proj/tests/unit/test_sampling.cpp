#include "disa/sampling.hpp"

#include "oracles.hpp"
#include "phantom.hpp"
#include "temp_dir.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

using namespace disa;

namespace {

Volume phantom(int kind, std::uint64_t seed, int n, double spacing) {
  return normalize(disa::testing::render(disa::testing::centered_grid({n, n, n}, spacing),
                                         disa::testing::make_phantom(kind, seed)));
}

// Mean over radii of the QR oracle on nested cubes cut from two stored radius-r cubes.
double oracle_target(const std::vector<float>& regressed, const std::vector<float>& source,
                     const std::vector<float>& grad, int r, const std::vector<int>& radii) {
  const int side = 2 * r + 1;
  double s = 0.0;
  int used = 0;
  for (int rr : radii) {
    if (rr > r) continue;
    std::vector<float> a, b, g;
    for (int z = r - rr; z <= r + rr; ++z)
      for (int y = r - rr; y <= r + rr; ++y)
        for (int x = r - rr; x <= r + rr; ++x) {
          const std::size_t i = (static_cast<std::size_t>(z) * side + y) * side + x;
          a.push_back(regressed[i]);
          b.push_back(source[i]);
          g.push_back(grad[i]);
        }
    s += disa::testing::qr_lc2(a, b, g);
    ++used;
  }
  return used ? s / used : 0.0;
}

}  // namespace

TEST(WeightedSampler, CumulativeBoundaries) {
  const std::vector<double> w{1.0, 0.0, 3.0};
  const WeightedSampler s(w);
  EXPECT_DOUBLE_EQ(s.total(), 4.0);
  EXPECT_EQ(s.draw(0.0), 0u);
  EXPECT_EQ(s.draw(0.2499), 0u);
  EXPECT_EQ(s.draw(0.25), 2u);  // the zero-weight entry is never drawn
  EXPECT_EQ(s.draw(0.9999999), 2u);
  EXPECT_THROW(WeightedSampler(std::vector<double>{0.0, 0.0}), DataError);
  EXPECT_THROW(WeightedSampler(std::vector<double>{1.0, -1.0}), DataError);
}

TEST(WeightedSampler, ChiSquareOnTenCentres) {
  const std::vector<double> w{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const WeightedSampler s(w);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 100000;
  std::vector<int> counts(10, 0);
  for (int i = 0; i < n; ++i) ++counts[s.draw(u(rng))];
  double chi2 = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double expect = n * w[i] / 55.0;
    chi2 += (counts[i] - expect) * (counts[i] - expect) / expect;
  }
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(9), chi2));
  EXPECT_GT(p, 0.01) << "chi2 = " << chi2;
}

TEST(NearestTo, ArgminWithLowestIndexTies) {
  const std::vector<double> v{0.9, 0.3, 0.7, 0.5, 0.3};
  EXPECT_EQ(nearest_to(v, 0.31), 1u);
  EXPECT_EQ(nearest_to(v, 0.0), 1u);
  EXPECT_EQ(nearest_to(v, 1.0), 0u);
  const std::vector<double> ties{0.25, 0.75};
  EXPECT_EQ(nearest_to(ties, 0.5), 0u);
  EXPECT_THROW(nearest_to(std::vector<double>{}, 0.5), DataError);
}

TEST(CandidateCenters, InteriorStrideGrid) {
  Geometry g;
  g.dims = {20, 18, 16};
  const auto c = candidate_centers(g, 3, 4);
  for (const Index3& p : c) {
    EXPECT_TRUE(patch_in_bounds(g, p, 3));
    for (int a = 0; a < 3; ++a) EXPECT_EQ((p[a] - 3) % 4, 0);
  }
  // x: 3,7,11,15 ; y: 3,7,11 ; z: 3,7,11
  EXPECT_EQ(c.size(), 4u * 3u * 3u);
  EXPECT_EQ(c.front(), (Index3{3, 3, 3}));
  EXPECT_EQ(c[1], (Index3{7, 3, 3}));
}

TEST(SamplePairs, ChosenCandidateMinimisesDistanceToTarget) {
  const Volume m = phantom(0, 1, 24, 6.0);
  const Volume f = phantom(1, 2, 24, 6.0);
  SamplingOptions o;
  o.n = 50;
  o.candidate_stride = 3;
  o.seed = 4;
  o.radius = 5;
  o.radii = {3, 5};
  const SamplingResult r = sample_pairs(m, f, o, true);
  ASSERT_EQ(r.records.size(), 50u);
  const Volume gf = gradient_magnitude(f);
  for (std::size_t k = 0; k < r.records.size(); ++k) {
    const SampleTrace& tr = r.trace[k];
    ASSERT_EQ(tr.similarities.size(), r.candidates.size());
    // Brute force over every candidate with independently recomputed similarities.
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t j = 0; j < r.candidates.size(); ++j) {
      const auto pf = extract_patch(f, r.candidates[j], o.radius).data;
      const auto pg = extract_patch(gf, r.candidates[j], o.radius).data;
      const double s = oracle_target(r.records[k].patch_m, pf, pg, o.radius, o.radii);
      EXPECT_NEAR(tr.similarities[j], s, 1e-5);
      const double d = std::abs(tr.similarities[j] - tr.t);
      if (d < best_d) best_d = d, best = j;
    }
    EXPECT_EQ(tr.candidate, best);
    EXPECT_EQ(r.records[k].patch_f, extract_patch(f, r.candidates[best], o.radius).data);
    EXPECT_EQ(r.records[k].patch_m, extract_patch(m, tr.center_m, o.radius).data);
    EXPECT_FLOAT_EQ(r.records[k].target, static_cast<float>(tr.similarities[best]));
  }
}

TEST(SamplePairs, GradientSideMSwapsRegressors) {
  const Volume m = phantom(0, 5, 20, 6.0);
  const Volume f = phantom(2, 6, 20, 6.0);
  SamplingOptions o;
  o.n = 5;
  o.candidate_stride = 4;
  o.radius = 3;
  o.radii = {3};
  o.gradient_side = GradientSide::M;
  const SamplingResult r = sample_pairs(m, f, o, true);
  EXPECT_EQ(r.gradient_side, GradientSide::M);
  const Volume gm = gradient_magnitude(m);
  for (std::size_t k = 0; k < r.records.size(); ++k) {
    const auto pg = extract_patch(gm, r.trace[k].center_m, 3).data;
    const auto pf = extract_patch(f, r.candidates[3], 3).data;
    EXPECT_NEAR(r.trace[k].similarities[3], disa::testing::qr_lc2(pf, r.records[k].patch_m, pg), 1e-5);
  }
}

TEST(SamplePairs, SourcesFollowVarianceWeights) {
  // A flat M with a single textured block: every source centre must come from where the weight is positive.
  Geometry g = disa::testing::centered_grid({24, 24, 24}, 4.0);
  Volume m(g, 0.0f);
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (int z = 14; z < 18; ++z)
    for (int y = 6; y < 10; ++y)
      for (int x = 10; x < 14; ++x) m.at(x, y, z) = n(rng);
  const Volume f = phantom(0, 7, 24, 4.0);
  SamplingOptions o;
  o.n = 40;
  o.candidate_stride = 6;
  o.radius = 3;
  o.radii = {3};
  const SamplingResult r = sample_pairs(m, f, o);
  const WeightMap w = weight_map(m, 3);
  for (const SampleTrace& tr : r.trace) EXPECT_GT(w.weights.at(tr.center_m[0], tr.center_m[1], tr.center_m[2]), 0.0f);
}

TEST(SamplePairs, DeterministicInSeed) {
  const Volume m = phantom(0, 8, 20, 6.0);
  const Volume f = phantom(1, 9, 20, 6.0);
  SamplingOptions o;
  o.n = 10;
  o.candidate_stride = 4;
  o.radius = 3;
  o.radii = {3};
  o.seed = 12;
  const auto a = sample_pairs(m, f, o), b = sample_pairs(m, f, o);
  o.seed = 13;
  const auto c = sample_pairs(m, f, o);
  bool differs = false;
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].patch_m, b.records[k].patch_m);
    EXPECT_EQ(a.records[k].patch_f, b.records[k].patch_f);
    EXPECT_EQ(a.records[k].target, b.records[k].target);
    differs |= a.records[k].patch_m != c.records[k].patch_m;
  }
  EXPECT_TRUE(differs);
}

TEST(SamplePairs, TargetsSpreadOverUnitInterval) {
  // t ~ U[0,1] is internal; check the drawn t values with a Kolmogorov-Smirnov statistic.
  const Volume m = phantom(0, 10, 20, 6.0);
  const Volume f = phantom(0, 11, 20, 6.0);
  SamplingOptions o;
  o.n = 400;
  o.candidate_stride = 4;
  o.radius = 3;
  o.radii = {3};
  const SamplingResult r = sample_pairs(m, f, o);
  std::vector<double> t;
  for (const auto& tr : r.trace) t.push_back(tr.t);
  std::sort(t.begin(), t.end());
  double d = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    d = std::max({d, std::abs(t[i] - static_cast<double>(i) / t.size()), std::abs(t[i] - (i + 1.0) / t.size())});
  EXPECT_LT(d, 1.63 / std::sqrt(static_cast<double>(t.size())));  // alpha = 0.01
}

TEST(Dataset, RoundTrip) {
  const disa::testing::TempDir dir;
  std::vector<PatchPairRecord> recs(3);
  for (int k = 0; k < 3; ++k) {
    recs[k].patch_m.assign(27, 0.5f * k);
    recs[k].patch_f.assign(27, -1.0f * k);
    recs[k].target = 0.1f * k;
  }
  write_dataset(recs, GradientSide::M, dir / "d.disap");
  const Dataset d = read_dataset(dir / "d.disap");
  EXPECT_EQ(d.side, 3);
  EXPECT_EQ(d.gradient_side, GradientSide::M);
  ASSERT_EQ(d.records.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(d.records[k].patch_m, recs[k].patch_m);
    EXPECT_EQ(d.records[k].patch_f, recs[k].patch_f);
    EXPECT_EQ(d.records[k].target, recs[k].target);
  }
  std::ifstream in(dir / "d.disap", std::ios::binary);
  std::string magic(8, '\0');
  in.read(magic.data(), 8);
  EXPECT_EQ(magic.substr(0, 6), "DISAP1");
}

TEST(Dataset, RejectsBadInput) {
  const disa::testing::TempDir dir;
  EXPECT_THROW(write_dataset({}, GradientSide::F, dir / "e"), DataError);
  std::vector<PatchPairRecord> recs(1);
  recs[0].patch_m.assign(26, 0.0f);
  recs[0].patch_f.assign(26, 0.0f);
  EXPECT_THROW(write_dataset(recs, GradientSide::F, dir / "e"), DataError);
  recs[0].patch_m.assign(27, 0.0f);
  recs[0].patch_f.assign(27, 0.0f);
  write_dataset(recs, GradientSide::F, dir / "ok");
  std::string bytes;
  {
    std::ifstream in(dir / "ok", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  std::ofstream(dir / "short", std::ios::binary) << bytes.substr(0, bytes.size() - 1);
  EXPECT_THROW(read_dataset(dir / "short"), DataError);
  std::string flag = bytes;
  flag[16] = 7;
  std::ofstream(dir / "flag", std::ios::binary) << flag;
  EXPECT_THROW(read_dataset(dir / "flag"), DataError);
  std::string magic = bytes;
  magic[0] = 'Q';
  std::ofstream(dir / "magic", std::ios::binary) << magic;
  EXPECT_THROW(read_dataset(dir / "magic"), DataError);
}
