#include "disa/transform.hpp"
#include "disa/transform_io.hpp"

#include "oracles.hpp"
#include "phantom.hpp"
#include "temp_dir.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace disa;

namespace {

ProbeDeform random_probe(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ProbeDeform m;
  m.center = Vec3(u(rng) * 20 - 10, u(rng) * 20 - 10, u(rng) * 20 - 10);
  m.inner_radius = 5.0 + 20.0 * u(rng);
  m.outer_radius = m.inner_radius + 5.0 + 40.0 * u(rng);
  m.alpha = u(rng);
  m.beta = 10.0 * u(rng);
  return m;
}

VecX random_rigid(std::mt19937_64& rng, double t = 20.0, double r = 0.6) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VecX p(6);
  for (int i = 0; i < 3; ++i) p[i] = t * u(rng);
  for (int i = 3; i < 6; ++i) p[i] = r * u(rng);
  return p;
}

}  // namespace

TEST(Euler, OrthonormalAndRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.4, 1.4);
  for (int i = 0; i < 100; ++i) {
    const Vec3 a(u(rng), u(rng), u(rng));
    const Mat3 r = euler_zyx(a);
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).norm(), 1e-9);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
    EXPECT_LT((euler_zyx_angles(r) - a).norm(), 1e-9);
  }
}

TEST(Euler, MatchesAxisAngleComposition) {
  const Vec3 a(0.3, -0.5, 1.1);
  const Mat3 oracle = (Eigen::AngleAxisd(a[2], Vec3::UnitZ()) * Eigen::AngleAxisd(a[1], Vec3::UnitY()) *
                       Eigen::AngleAxisd(a[0], Vec3::UnitX()))
                          .toRotationMatrix();
  EXPECT_LT((euler_zyx(a) - oracle).norm(), 1e-12);
}

TEST(Euler, DerivativesMatchFiniteDifferences) {
  const Vec3 a(0.4, -0.2, 0.9);
  const auto d = euler_zyx_derivatives(a);
  for (int k = 0; k < 3; ++k) {
    Vec3 hi = a, lo = a;
    hi[k] += 1e-6;
    lo[k] -= 1e-6;
    const Mat3 fd = (euler_zyx(hi) - euler_zyx(lo)) / 2e-6;
    EXPECT_LT((d[static_cast<std::size_t>(k)] - fd).norm(), 1e-8);
  }
}

TEST(Apply, IdentityAndTranslation) {
  const auto id = TransformChain::identity(TransformMode::Rigid);
  const Vec3 p(3, -4, 5);
  EXPECT_EQ(id.apply(p), p);
  VecX q = VecX::Zero(6);
  q.head<3>() = Vec3(1, 2, 3);
  EXPECT_LT((id.with_parameters(q).apply(p) - (p + Vec3(1, 2, 3))).norm(), 1e-12);
}

TEST(Apply, RotationMatchesHomogeneousProduct) {
  VecX q = VecX::Zero(6);
  q[3] = std::numbers::pi / 2;
  const auto t = TransformChain::identity(TransformMode::Rigid).with_parameters(q);
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitX()).toRotationMatrix();
  const Eigen::Vector4d h = m * Eigen::Vector4d(1, 0, 0, 1);
  EXPECT_LT((t.apply(Vec3(1, 0, 0)) - h.head<3>()).norm(), 1e-12);
  EXPECT_LT((t.apply(Vec3(0, 1, 0)) - Vec3(0, 0, 1)).norm(), 1e-12);
}

TEST(Apply, RotationAboutCenterFixesCenter) {
  std::mt19937_64 rng(2);
  VecX q = random_rigid(rng);
  q.head<3>().setZero();
  const Vec3 c(10, -20, 30);
  const auto t = TransformChain::identity(TransformMode::Rigid, c).with_parameters(q);
  EXPECT_LT((t.apply(c) - c).norm(), 1e-9);
}

TEST(Apply, RigidPreservesDistances) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 50; ++i) {
    const auto t = TransformChain::identity(TransformMode::Rigid, Vec3(u(rng), u(rng), u(rng)))
                       .with_parameters(random_rigid(rng, 50.0, 3.0));
    const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng));
    EXPECT_NEAR((t.apply(a) - t.apply(b)).norm(), (a - b).norm(), 1e-9);
  }
}

TEST(Parameters, RoundTripAndLength) {
  std::mt19937_64 rng(4);
  EXPECT_EQ(parameter_count(TransformMode::Rigid), 6);
  EXPECT_EQ(parameter_count(TransformMode::Affine), 12);
  EXPECT_EQ(parameter_count(TransformMode::RigidProbe), 8);
  const VecX p = random_rigid(rng);
  EXPECT_LT((TransformChain::identity(TransformMode::Rigid).with_parameters(p).parameters() - p).norm(), 1e-15);
  EXPECT_THROW(TransformChain::identity(TransformMode::Rigid).with_parameters(VecX::Zero(5)), Error);
  const auto id = TransformChain::identity(TransformMode::Affine);
  VecX expect = VecX::Zero(12);
  expect[3] = expect[7] = expect[11] = 1.0;
  EXPECT_EQ(id.parameters(), expect);
}

TEST(Parameters, ModeNames) {
  for (auto m : {TransformMode::Rigid, TransformMode::Affine, TransformMode::RigidProbe})
    EXPECT_EQ(parse_transform_mode(to_string(m)), m);
  EXPECT_EQ(to_string(TransformMode::RigidProbe), "rigid+probe");
  EXPECT_THROW(parse_transform_mode("bspline"), Error);
}

TEST(Probe, WorkedExample) {
  ProbeDeform m;
  m.alpha = 0.5;
  EXPECT_LT((probe_displacement(Vec3(10, 0, 0), m) - Vec3(25, 0, 0)).norm(), 1e-12);
  EXPECT_EQ(probe_displacement(Vec3(100, 0, 0), m), Vec3::Zero());
  EXPECT_EQ(probe_displacement(m.center, m), Vec3::Zero());
  m.alpha = 0.0;
  EXPECT_EQ(probe_displacement(Vec3(7, 3, 1), m), Vec3::Zero());
}

TEST(Probe, FalloffBranches) {
  EXPECT_DOUBLE_EQ(probe_falloff(0.0, 10, 50), 0.0);
  EXPECT_DOUBLE_EQ(probe_falloff(4.0, 10, 50), 0.5);
  EXPECT_DOUBLE_EQ(probe_falloff(9.0, 10, 50), 1.0);
  EXPECT_DOUBLE_EQ(probe_falloff(30.0, 10, 50), 0.5);
  EXPECT_DOUBLE_EQ(probe_falloff(60.0, 10, 50), 0.0);
}

TEST(Probe, ContinuityBoundRadial) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int s = 0; s < 20; ++s) {
    const ProbeDeform m = random_probe(rng);
    const double r = m.inner_radius, big = m.outer_radius;
    for (double x : {0.8 * r, r, big}) {
      const double lo = probe_falloff(std::nextafter(x, 0.0), r, big);
      const double hi = probe_falloff(std::nextafter(x, 1e9), r, big);
      EXPECT_NEAR(lo, hi, 1e-9);
    }
    for (int i = 0; i < 500; ++i) {
      const Vec3 dir = Vec3(n(rng), n(rng), n(rng)).normalized();
      const Vec3 p = m.center + dir * (1.2 * big * std::abs(n(rng)));
      const Vec3 d = probe_displacement(p, m);
      EXPECT_LE(d.norm(), m.alpha * big * (1 + 1e-12));
      EXPECT_LT(d.cross(p - m.center).norm(), 1e-9 * std::max(1.0, (p - m.center).norm()));
    }
  }
}

TEST(Probe, Validate) {
  ProbeDeform m;
  EXPECT_NO_THROW(m.validate());
  m.outer_radius = 5;
  EXPECT_THROW(m.validate(), DataError);
  m = ProbeDeform{};
  m.alpha = 1.5;
  EXPECT_THROW(m.validate(), DataError);
  m = ProbeDeform{};
  m.beta = 11;
  EXPECT_THROW(m.validate(), DataError);
}

TEST(Probe, SpatialJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-60, 60);
  for (int i = 0; i < 100; ++i) {
    const ProbeDeform m = random_probe(rng);
    const Vec3 p = m.center + Vec3(u(rng), u(rng), u(rng));
    const double x = (p - m.center).norm();
    if (std::abs(x - 0.8 * m.inner_radius) < 1e-3 || std::abs(x - m.inner_radius) < 1e-3 ||
        std::abs(x - m.outer_radius) < 1e-3)
      continue;
    Mat3 fd;
    for (int k = 0; k < 3; ++k) {
      Vec3 a = p, b = p;
      a[k] += 1e-6;
      b[k] -= 1e-6;
      fd.col(k) = (probe_displacement(a, m) - probe_displacement(b, m)) / 2e-6;
    }
    EXPECT_LT((probe_displacement_jacobian(p, m) - fd).norm(), 1e-5 * std::max(1.0, fd.norm()));
  }
}

TEST(Jacobian, TranslationOnlyIsIdentityBlock) {
  const auto t = TransformChain::identity(TransformMode::Rigid);
  const auto j = t.jacobian(Vec3(4, 5, 6));
  EXPECT_LT((j.leftCols<3>() - Mat3::Identity()).norm(), 1e-15);
}

TEST(Jacobian, AlphaColumnAtPlateau) {
  ProbeDeform m;
  m.alpha = 0.3;
  m.beta = 2.0;
  const auto t = TransformChain::identity(TransformMode::RigidProbe, Vec3::Zero(), m);
  const Vec3 q(0, 9, 0);
  const auto j = t.jacobian(q);
  EXPECT_LT((j.col(6) - m.outer_radius * Vec3(0, 1, 0)).norm(), 1e-12);
  EXPECT_NEAR(j.col(7).norm(), 0.0, 1e-12);  // ln f = 0 on the plateau
}

TEST(Jacobian, AllModesMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  for (int i = 0; i < 100; ++i) {
    const TransformMode mode = i % 3 == 0 ? TransformMode::Rigid : i % 3 == 1 ? TransformMode::Affine
                                                                              : TransformMode::RigidProbe;
    const Vec3 center(30 * u(rng), 30 * u(rng), 30 * u(rng));
    std::optional<ProbeDeform> probe;
    if (mode == TransformMode::RigidProbe) probe = random_probe(rng);
    TransformChain t = TransformChain::identity(mode, center, probe);
    VecX params = t.parameters();
    params.head<3>() = Vec3(20 * u(rng), 20 * u(rng), 20 * u(rng));
    if (mode == TransformMode::Affine) {
      for (int k = 3; k < 12; ++k) params[k] += 0.2 * u(rng);
    } else {
      for (int k = 3; k < 6; ++k) params[k] = 0.8 * u(rng);
    }
    if (probe) {
      params[6] = 0.5 + 0.5 * u(rng);
      params[7] = 5.0 + 4.0 * u(rng);
    }
    t.set_parameters(params);
    const Vec3 p = center + Vec3(40 * u(rng), 40 * u(rng), 40 * u(rng));
    if (probe) {
      const double x = (t.apply_linear(p) - probe->center).norm();
      const double r = probe->inner_radius, big = probe->outer_radius;
      if (std::abs(x - 0.8 * r) < 0.05 || std::abs(x - r) < 0.05 || std::abs(x - big) < 0.05) continue;
    }
    const auto j = t.jacobian(p);
    for (int k = 0; k < t.parameter_count(); ++k) {
      VecX a = params, b = params;
      a[k] += 1e-5;
      b[k] -= 1e-5;
      const Vec3 fd = (t.with_parameters(a).apply(p) - t.with_parameters(b).apply(p)) / 2e-5;
      EXPECT_LT((j.col(k) - fd).norm(), 1e-5 * std::max(1.0, fd.norm())) << "mode " << i % 3 << " col " << k;
    }
    ++checked;
  }
  EXPECT_GT(checked, 90);
}

TEST(Jacobian, ContractLinearMatchesExplicitSum) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (TransformMode mode : {TransformMode::Rigid, TransformMode::Affine}) {
    const Vec3 c(5, -3, 2);
    TransformChain t = TransformChain::identity(mode, c);
    VecX params = t.parameters();
    for (int k = 0; k < params.size(); ++k) params[k] += 0.3 * u(rng);
    t.set_parameters(params);
    Vec3 gs = Vec3::Zero();
    Mat3 hs = Mat3::Zero();
    VecX explicit_sum = VecX::Zero(t.parameter_count());
    for (int i = 0; i < 20; ++i) {
      const Vec3 p(50 * u(rng), 50 * u(rng), 50 * u(rng)), g(u(rng), u(rng), u(rng));
      gs += g;
      hs += g * (p - c).transpose();
      explicit_sum += t.jacobian(p).transpose() * g;
    }
    EXPECT_LT((t.contract_linear(gs, hs) - explicit_sum).norm(), 1e-9 * explicit_sum.norm());
  }
}

TEST(Matrix, IdentityTranslationAndRoundTrip) {
  EXPECT_EQ(TransformChain::identity(TransformMode::Rigid).to_matrix(), Mat4::Identity());
  VecX q = VecX::Zero(6);
  q.head<3>() = Vec3(1, 2, 3);
  const Mat4 m = TransformChain::identity(TransformMode::Rigid).with_parameters(q).to_matrix();
  EXPECT_EQ(m.col(3), Eigen::Vector4d(1, 2, 3, 1));

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 10; ++i) {
    const Vec3 c(u(rng), u(rng), u(rng));
    const auto t = TransformChain::identity(TransformMode::Rigid, c).with_parameters(random_rigid(rng));
    const Mat4 h = t.to_matrix();
    const auto back = TransformChain::from_matrix(h, TransformMode::Rigid, c);
    EXPECT_LT((back.to_matrix() - h).norm(), 1e-12);
    for (int k = 0; k < 10; ++k) {
      const Vec3 p(u(rng), u(rng), u(rng));
      EXPECT_LT(((h * p.homogeneous()).head<3>() - t.apply(p)).norm(), 1e-12);
    }
  }
}

TEST(Matrix, AffineRoundTrip) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() << 1.1, 0.1, 0.0, -0.05, 0.95, 0.2, 0.0, 0.1, 1.05;
  m.topRightCorner<3, 1>() = Vec3(3, -2, 1);
  const auto t = TransformChain::from_matrix(m, TransformMode::Affine, Vec3(10, 10, 10));
  EXPECT_LT((t.to_matrix() - m).norm(), 1e-12);
}

TEST(Matrix, DeformRefusesMatrix) {
  const auto t = TransformChain::identity(TransformMode::RigidProbe, Vec3::Zero(), ProbeDeform{});
  EXPECT_THROW(t.to_matrix(), Error);
}

TEST(TransformJson, RoundTripAllModes) {
  std::mt19937_64 rng(10);
  ProbeDeform m;
  m.center = Vec3(1, 2, 3);
  m.alpha = 0.4;
  m.beta = 3.0;
  const disa::testing::TempDir dir;
  for (TransformMode mode : {TransformMode::Rigid, TransformMode::Affine, TransformMode::RigidProbe}) {
    std::optional<ProbeDeform> probe;
    if (mode == TransformMode::RigidProbe) probe = m;
    TransformChain t = TransformChain::identity(mode, Vec3(4, 5, 6), probe);
    VecX p = t.parameters();
    p.head<3>() = Vec3(7, -8, 9);
    if (mode != TransformMode::Affine) p.segment<3>(3) = Vec3(0.1, -0.2, 0.3);
    else p[4] = 0.1;
    t.set_parameters(p);
    const auto back = transform_from_json(transform_to_json(t));
    EXPECT_EQ(back.mode(), mode);
    const Vec3 q(11, 12, 13);
    EXPECT_LT((back.apply(q) - t.apply(q)).norm(), 1e-9);
    save_transform(t, dir / "t.json");
    EXPECT_LT((load_transform(dir / "t.json").apply(q) - t.apply(q)).norm(), 1e-9);
  }
}

TEST(TransformJson, RejectsMalformed) {
  EXPECT_THROW(transform_from_json("{"), Error);
  EXPECT_THROW(transform_from_json(R"({"mode": "rigid", "matrix": [1, 2, 3]})"), Error);
  EXPECT_THROW(transform_from_json(R"({"mode": "spline", "matrix": [1,0,0,0,0,1,0,0,0,0,1,0,0,0,0,1]})"), Error);
  EXPECT_THROW(transform_from_json(R"({"mode": "rigid+probe", "matrix": [1,0,0,0,0,1,0,0,0,0,1,0,0,0,0,1]})"),
               Error);
}

TEST(Warp, IdentityIsResampling) {
  const Volume m = disa::testing::random_volume({10, 10, 10}, 1);
  const auto w = warp_volume(m, TransformChain::identity(TransformMode::Rigid), m.geometry());
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_NEAR(w.image[i], m[i], 1e-6);
    EXPECT_EQ(w.inside[i], 1);
  }
}

TEST(Warp, IntegerShiftIsShiftedCopy) {
  const Volume m = disa::testing::random_volume({10, 10, 10}, 2);
  VecX q = VecX::Zero(6);
  q[0] = 2.0;
  const auto w = warp_volume(m, TransformChain::identity(TransformMode::Rigid).with_parameters(q), m.geometry());
  for (int z = 0; z < 10; ++z)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x) {
        const std::size_t i = m.geometry().linear_index(x, y, z);
        if (x < 8) {
          EXPECT_NEAR(w.image[i], m.at(x + 2, y, z), 1e-6);
          EXPECT_EQ(w.inside[i], 1);
        } else {
          EXPECT_EQ(w.inside[i], 0);
          EXPECT_EQ(w.image[i], 0.0f);
        }
      }
}

TEST(Warp, RandomRigidMatchesPointwiseComposition) {
  std::mt19937_64 rng(11);
  const Volume m = disa::testing::random_volume({12, 12, 12}, 3, 2.0);
  const Geometry target = disa::testing::centered_grid({9, 9, 9}, 2.5, m.geometry().center());
  const auto t =
      TransformChain::identity(TransformMode::Rigid, m.geometry().center()).with_parameters(random_rigid(rng, 3.0, 0.3));
  const auto w = warp_volume(m, t, target);
  for (std::size_t i = 0; i < w.image.size(); ++i) {
    const Index3 ix = target.index_of(i);
    const Sample s = sample_trilinear(m, t.apply(target.index_to_world(Vec3(ix[0], ix[1], ix[2]))));
    EXPECT_EQ(w.inside[i] != 0, s.inside);
    EXPECT_NEAR(w.image[i], s.inside ? s.value : 0.0, 1e-5);
  }
}
