#include "disa/volume.hpp"
#include "disa/volume_io.hpp"

#include "oracles.hpp"
#include "phantom.hpp"
#include "temp_dir.hpp"

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

using namespace disa;
using disa::testing::TempDir;

namespace {

Volume ramp_volume(const Index3& dims, const Vec3& spacing, const std::function<double(const Vec3&)>& f) {
  Geometry g;
  g.dims = dims;
  g.spacing = spacing;
  Volume v(g);
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x) v.at(x, y, z) = static_cast<float>(f(g.index_to_world(Vec3(x, y, z))));
  return v;
}

// Minimal NIfTI-1 writer used only to craft headers the library's writer would not emit.
void write_raw_nifti(const std::filesystem::path& path, const Index3& dims, std::int16_t datatype,
                     const std::vector<char>& voxels, float slope, float inter) {
  std::vector<char> h(352, 0);
  auto put = [&](std::size_t off, auto value) { std::memcpy(h.data() + off, &value, sizeof(value)); };
  put(0, std::int32_t{348});
  put(40, std::int16_t{3});
  for (int a = 0; a < 3; ++a) put(42 + 2 * a, static_cast<std::int16_t>(dims[a]));
  put(70, datatype);
  put(72, static_cast<std::int16_t>(datatype == 16 ? 32 : 16));
  put(76, 1.0f);
  for (int a = 0; a < 3; ++a) put(80 + 4 * a, 1.0f);
  put(108, 352.0f);
  put(112, slope);
  put(116, inter);
  std::memcpy(h.data() + 344, "n+1", 4);
  std::ofstream out(path, std::ios::binary);
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(voxels.data(), static_cast<std::streamsize>(voxels.size()));
}

}  // namespace

TEST(Geometry, IndexWorldRoundTrip) {
  Geometry g;
  g.dims = {5, 6, 7};
  g.spacing = Vec3(0.5, 1.5, 2.0);
  g.origin = Vec3(-3, 4, 10);
  g.direction = Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const Vec3 idx(1.25, 4.5, 2.0);
  EXPECT_LT((g.world_to_index(g.index_to_world(idx)) - idx).norm(), 1e-12);
  EXPECT_LT((g.index_to_world(Vec3::Zero()) - g.origin).norm(), 1e-12);
}

TEST(Geometry, RejectsBrokenInvariants) {
  Geometry g;
  g.dims = {2, 2, 0};
  EXPECT_THROW(g.validate(), DataError);
  g.dims = {2, 2, 2};
  g.spacing = Vec3(1, -1, 1);
  EXPECT_THROW(g.validate(), DataError);
  g.spacing = Vec3::Ones();
  g.direction(0, 0) = 2.0;
  EXPECT_THROW(g.validate(), DataError);
  g.direction = Mat3::Identity();
  EXPECT_THROW(Volume(g, std::vector<float>(7)), DataError);
}

TEST(SampleTrilinear, VoxelCentreAndMidpoint) {
  Volume v = disa::testing::random_volume({6, 5, 4}, 3);
  EXPECT_FLOAT_EQ(sample_trilinear(v, v.geometry().index_to_world(Vec3(2, 3, 1))).value, v.at(2, 3, 1));
  const Sample mid = sample_trilinear(v, v.geometry().index_to_world(Vec3(2.5, 3, 1)));
  EXPECT_TRUE(mid.inside);
  EXPECT_NEAR(mid.value, 0.5 * (v.at(2, 3, 1) + v.at(3, 3, 1)), 1e-6);
}

TEST(SampleTrilinear, MatchesIndependentOracle) {
  Geometry g;
  g.dims = {9, 8, 7};
  g.spacing = Vec3(1.2, 0.7, 2.0);
  g.origin = Vec3(4, -2, 1);
  g.direction = Eigen::AngleAxisd(-0.7, Vec3(0.2, 1, 0.1).normalized()).toRotationMatrix();
  Volume v(g);
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n;
  for (float& x : v.data()) x = n(rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const Vec3 idx(u(rng) * 8, u(rng) * 7, u(rng) * 6);
    const Sample s = sample_trilinear(v, g.index_to_world(idx));
    ASSERT_TRUE(s.inside);
    EXPECT_NEAR(s.value, disa::testing::naive_trilinear(v, idx), 1e-6);
  }
}

TEST(SampleTrilinear, AffineAlongAxesWithinCell) {
  Volume v = disa::testing::random_volume({4, 4, 4}, 9);
  const double a = sample_index(v, Vec3(1.0, 2.2, 0.4), OutsidePolicy::Flag).value;
  const double b = sample_index(v, Vec3(2.0, 2.2, 0.4), OutsidePolicy::Flag).value;
  for (double t : {0.1, 0.35, 0.8})
    EXPECT_NEAR(sample_index(v, Vec3(1.0 + t, 2.2, 0.4), OutsidePolicy::Flag).value, a + t * (b - a), 1e-6);
}

TEST(SampleTrilinear, OutsidePolicy) {
  Volume v = disa::testing::random_volume({4, 4, 4}, 1);
  const Sample flagged = sample_index(v, Vec3(-0.5, 1, 1), OutsidePolicy::Flag);
  EXPECT_FALSE(flagged.inside);
  const Sample clamped = sample_index(v, Vec3(-0.5, 1, 1), OutsidePolicy::Clamp);
  EXPECT_FALSE(clamped.inside);
  EXPECT_FLOAT_EQ(clamped.value, v.at(0, 1, 1));
}

TEST(Resample, OwnSpacingIsIdentity) {
  Volume v = disa::testing::random_volume({7, 6, 5}, 2, 1.5);
  Volume r = resample(v, v.geometry().spacing);
  ASSERT_EQ(r.dims(), v.dims());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(r[i], v[i], 1e-6);
}

TEST(Resample, ConstantStaysConstant) {
  Geometry g;
  g.dims = {5, 5, 5};
  Volume v(g, 3.25f);
  Volume r = resample(v, Vec3(0.7, 1.9, 2.3));
  for (float x : r.data()) EXPECT_FLOAT_EQ(x, 3.25f);
}

TEST(Resample, RampKeepsWorldCoordinate) {
  Volume v = ramp_volume({20, 4, 4}, Vec3::Ones(), [](const Vec3& p) { return p.x(); });
  Volume r = resample(v, Vec3(2, 1, 1));
  EXPECT_EQ(r.dims()[0], 10);
  for (int x = 0; x < r.dims()[0]; ++x)
    EXPECT_NEAR(r.at(x, 1, 1), r.geometry().index_to_world(Vec3(x, 1, 1)).x(), 1e-5);
}

TEST(Resample, DimsCoverExtent) {
  Volume v = disa::testing::random_volume({10, 10, 10}, 4, 1.0);
  EXPECT_EQ(resample(v, Vec3(3, 3, 3)).dims(), (Index3{4, 4, 4}));
  EXPECT_THROW(resample(v, Vec3(0, 1, 1)), DataError);
}

TEST(Normalize, TwoPointStandardization) {
  Geometry g;
  g.dims = {2, 1, 1};
  Volume v(g, std::vector<float>{0.0f, 2.0f});
  Volume n = normalize(v);
  EXPECT_NEAR(n[0], -1.0, 1e-6);
  EXPECT_NEAR(n[1], 1.0, 1e-6);
}

TEST(Normalize, StatisticsAndIdempotence) {
  Volume v = disa::testing::random_volume({8, 8, 8}, 7);
  for (float& x : v.data()) x = 5.0f + 3.0f * x;
  Volume n = normalize(v);
  double mean = 0.0, ss = 0.0;
  for (float x : n.data()) mean += x;
  mean /= static_cast<double>(n.size());
  for (float x : n.data()) ss += (x - mean) * (x - mean);
  EXPECT_NEAR(mean, 0.0, 1e-5);
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(n.size())), 1.0, 1e-5);
  Volume again = normalize(n);
  for (std::size_t i = 0; i < n.size(); ++i) EXPECT_NEAR(again[i], n[i], 1e-5);
}

TEST(Normalize, ConstantVolumeThrows) {
  Geometry g;
  g.dims = {3, 3, 3};
  try {
    normalize(Volume(g, 1.0f));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("constant volume"), std::string::npos);
  }
}

TEST(GradientMagnitude, ConstantAndRamp) {
  Geometry g;
  g.dims = {5, 5, 5};
  const Volume flat = gradient_magnitude(Volume(g, 2.0f));
  for (float x : flat.data()) EXPECT_FLOAT_EQ(x, 0.0f);
  Volume ramp = ramp_volume({6, 5, 5}, Vec3(0.5, 2, 1), [](const Vec3& p) { return 3.0 * p.x(); });
  Volume gm = gradient_magnitude(ramp);
  for (int z = 1; z < 4; ++z)
    for (int y = 1; y < 4; ++y)
      for (int x = 1; x < 5; ++x) EXPECT_NEAR(gm.at(x, y, z), 3.0, 1e-5);
}

TEST(GradientMagnitude, MatchesStencilOracle) {
  Volume v = disa::testing::random_volume({6, 5, 7}, 8, 1.0);
  Geometry g = v.geometry();
  g.spacing = Vec3(0.5, 1.25, 2.0);
  v = Volume(g, std::vector<float>(v.data().begin(), v.data().end()));
  Volume gm = gradient_magnitude(v);
  const Index3& d = v.dims();
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        double s = 0.0;
        const int p[3] = {x, y, z};
        for (int a = 0; a < 3; ++a) {
          int lo[3] = {x, y, z}, hi[3] = {x, y, z};
          double span = 2.0;
          if (p[a] == 0) {
            hi[a] += 1;
            span = 1.0;
          } else if (p[a] == d[a] - 1) {
            lo[a] -= 1;
            span = 1.0;
          } else {
            lo[a] -= 1;
            hi[a] += 1;
          }
          const double diff = (static_cast<double>(v.at(hi[0], hi[1], hi[2])) - v.at(lo[0], lo[1], lo[2])) / (span * g.spacing[a]);
          s += diff * diff;
        }
        EXPECT_NEAR(gm.at(x, y, z), std::sqrt(s), 1e-5 * std::max(1.0, std::sqrt(s)));
      }
}

TEST(GradientMagnitude, AffineIntensityScaling) {
  Volume v = disa::testing::random_volume({6, 6, 6}, 11);
  Volume w(v.geometry());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = -2.5f * v[i] + 7.0f;
  Volume gv = gradient_magnitude(v), gw = gradient_magnitude(w);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(gw[i], 2.5 * gv[i], 1e-5 * std::max(1.0f, gw[i]));
  Geometry small;
  small.dims = {2, 5, 5};
  EXPECT_THROW(gradient_magnitude(Volume(small)), DataError);
}

TEST(ExtractPatch, IndexOrderAndBounds) {
  Volume v = disa::testing::random_volume({3, 3, 3}, 4);
  Patch p = extract_patch(v, {1, 1, 1}, 1);
  ASSERT_EQ(p.data.size(), 27u);
  for (std::size_t i = 0; i < 27; ++i) EXPECT_EQ(p.data[i], v[i]);
  EXPECT_EQ(extract_patch(v, {2, 0, 1}, 0).data, std::vector<float>{v.at(2, 0, 1)});
  EXPECT_THROW(extract_patch(v, {1, 1, 1}, 2), DataError);
}

TEST(ExtractPatch, MatchesTripleLoop) {
  Volume v = disa::testing::random_volume({12, 11, 10}, 6);
  const Index3 c{5, 4, 6};
  Patch p = extract_patch(v, c, 3);
  std::size_t k = 0;
  for (int z = -3; z <= 3; ++z)
    for (int y = -3; y <= 3; ++y)
      for (int x = -3; x <= 3; ++x) EXPECT_EQ(p.data[k++], v.at(c[0] + x, c[1] + y, c[2] + z));
}

TEST(LocalVariance, ConstantIsZero) {
  Geometry g;
  g.dims = {6, 6, 6};
  const Volume lv = local_variance(Volume(g, 4.0f), 2);
  for (float x : lv.data()) EXPECT_NEAR(x, 0.0f, 1e-6);
  EXPECT_THROW(local_variance(Volume(g), 0), DataError);
}

TEST(LocalVariance, CheckerboardInteriorValue) {
  Geometry g;
  g.dims = {6, 6, 6};
  Volume v(g);
  for (int z = 0; z < 6; ++z)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) v.at(x, y, z) = static_cast<float>((x + y + z) % 2);
  Volume lv = local_variance(v, 1);
  const double expected = disa::testing::naive_local_variance(v, {2, 2, 2}, 1);
  for (int z = 1; z < 5; ++z)
    for (int y = 1; y < 5; ++y)
      for (int x = 1; x < 5; ++x) EXPECT_NEAR(lv.at(x, y, z), expected, 1e-6);
}

TEST(LocalVariance, MatchesNaiveOracle) {
  Volume v = disa::testing::random_volume({10, 9, 8}, 12);
  Volume lv = local_variance(v, 2);
  double worst = 0.0;
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 10; ++x)
        worst = std::max(worst, std::abs(lv.at(x, y, z) - disa::testing::naive_local_variance(v, {x, y, z}, 2)));
  EXPECT_LT(worst, 1e-4);
}

TEST(LocalVariance, AffineIntensityScaling) {
  Volume v = disa::testing::random_volume({7, 7, 7}, 13);
  Volume w(v.geometry());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = 3.0f * v[i] - 1.0f;
  Volume lv = local_variance(v, 1), lw = local_variance(w, 1);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(lw[i], 9.0 * lv[i], 1e-4 * std::max(1.0f, lw[i]));
}

TEST(VolumeIo, Disav1RoundTripIsExact) {
  TempDir dir;
  Geometry g;
  g.dims = {4, 3, 5};
  g.spacing = Vec3(0.3, 1.7, 2.2);
  g.origin = Vec3(-10.125, 3.5, 99.0);
  g.direction = Eigen::AngleAxisd(1.1, Vec3(1, -1, 0.5).normalized()).toRotationMatrix();
  Volume v(g);
  std::mt19937 rng(3);
  std::normal_distribution<float> n;
  for (float& x : v.data()) x = n(rng);
  save_volume(v, dir / "v.disav");
  Volume r = load_volume(dir / "v.disav");
  ASSERT_EQ(r.dims(), v.dims());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(r[i], v[i]);
  EXPECT_LT((r.geometry().origin - g.origin).norm(), 1e-9);
  EXPECT_LT((r.geometry().spacing - g.spacing).norm(), 1e-9);
  EXPECT_LT((r.geometry().direction - g.direction).norm(), 1e-9);
}

TEST(VolumeIo, Disav1RejectsCorruptFiles) {
  TempDir dir;
  Volume v = disa::testing::random_volume({3, 3, 3}, 1);
  save_disav1(v, dir / "v.disav");
  {
    std::ofstream bad(dir / "bad.disav", std::ios::binary);
    bad << "NOTDISA1garbage";
  }
  EXPECT_THROW(load_disav1(dir / "bad.disav"), DataError);
  std::filesystem::resize_file(dir / "v.disav", std::filesystem::file_size(dir / "v.disav") - 4);
  EXPECT_THROW(load_disav1(dir / "v.disav"), DataError);
  EXPECT_THROW(load_volume(dir / "missing.disav"), DataError);
}

TEST(VolumeIo, NiftiIdentityHeaderValues) {
  TempDir dir;
  std::vector<char> raw(64 * 4);
  for (int i = 0; i < 64; ++i) {
    const float f = static_cast<float>(i);
    std::memcpy(raw.data() + 4 * i, &f, 4);
  }
  write_raw_nifti(dir / "ramp.nii", {4, 4, 4}, 16, raw, 0.0f, 0.0f);
  Volume v = load_nifti(dir / "ramp.nii");
  EXPECT_EQ(v.dims(), (Index3{4, 4, 4}));
  EXPECT_EQ(v[0], 0.0f);
  EXPECT_EQ(v[63], 63.0f);
}

TEST(VolumeIo, NiftiSlopeAndIntercept) {
  TempDir dir;
  std::vector<char> raw(2);
  const std::int16_t three = 3;
  std::memcpy(raw.data(), &three, 2);
  write_raw_nifti(dir / "s.nii", {1, 1, 1}, 4, raw, 2.0f, 1.0f);
  EXPECT_FLOAT_EQ(load_nifti(dir / "s.nii")[0], 7.0f);
}

TEST(VolumeIo, NiftiRoundTripsThroughOwnWriter) {
  TempDir dir;
  Geometry g;
  g.dims = {5, 4, 3};
  g.spacing = Vec3(0.8, 1.0, 2.5);
  g.origin = Vec3(12, -7, 3);
  g.direction = Eigen::AngleAxisd(0.4, Vec3::UnitZ()).toRotationMatrix();
  Volume v(g);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(static_cast<int>(i * 37 % 200) - 100);
  for (const char* name : {"v.nii", "v.nii.gz"}) {
    save_nifti(v, dir / name, NiftiType::Int16);
    Volume r = load_nifti(dir / name);
    ASSERT_EQ(r.dims(), v.dims());
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(r[i], v[i]);
    EXPECT_LT((r.geometry().origin - g.origin).norm(), 1e-4);
    EXPECT_LT((r.geometry().spacing - g.spacing).norm(), 1e-5);
    EXPECT_LT((r.geometry().direction - g.direction).norm(), 1e-5);
  }
  save_nifti(v, dir / "f.nii", NiftiType::Float32);
  Volume f = load_volume(dir / "f.nii");
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(f[i], v[i]);
}

TEST(VolumeIo, NiftiRejectsBadHeaders) {
  TempDir dir;
  std::vector<char> raw(8);
  write_raw_nifti(dir / "odd.nii", {1, 1, 1}, 1024, raw, 1.0f, 0.0f);
  EXPECT_THROW(load_nifti(dir / "odd.nii"), DataError);
  {
    std::ofstream out(dir / "short.nii", std::ios::binary);
    out << "tiny";
  }
  EXPECT_THROW(load_nifti(dir / "short.nii"), DataError);
  Volume v = disa::testing::random_volume({3, 3, 3}, 2);
  for (float& x : v.data()) x *= 1e6f;
  EXPECT_THROW(save_nifti(v, dir / "overflow.nii", NiftiType::Int16), DataError);
}
