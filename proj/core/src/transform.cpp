#include "disa/transform.hpp"

#include "disa/parallel.hpp"

#include <Eigen/LU>

#include <cmath>

namespace disa {

std::string_view to_string(TransformMode mode) {
  switch (mode) {
    case TransformMode::Rigid: return "rigid";
    case TransformMode::Affine: return "affine";
    case TransformMode::RigidProbe: return "rigid+probe";
  }
  return "rigid";
}

TransformMode parse_transform_mode(std::string_view text) {
  if (text == "rigid") return TransformMode::Rigid;
  if (text == "affine") return TransformMode::Affine;
  if (text == "rigid+probe") return TransformMode::RigidProbe;
  throw DataError("unknown transform mode '" + std::string(text) + "'");
}

int parameter_count(TransformMode mode) {
  switch (mode) {
    case TransformMode::Rigid: return 6;
    case TransformMode::Affine: return 12;
    case TransformMode::RigidProbe: return 8;
  }
  return 6;
}

void ProbeDeform::validate() const {
  if (!(inner_radius > 0.0 && inner_radius < outer_radius))
    throw DataError("probe deformation needs 0 < r < R");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DataError("probe alpha must lie in [0, 1]");
  if (!(beta >= 0.0 && beta <= 10.0)) throw DataError("probe beta must lie in [0, 10]");
}

double probe_falloff(double x, double r, double big_r) {
  if (x < 0.8 * r) return 10.0 * x / (8.0 * r);
  if (x <= r) return 1.0;
  if (x <= big_r) return 1.0 - (x - r) / (big_r - r);
  return 0.0;
}

double probe_falloff_derivative(double x, double r, double big_r) {
  if (x < 0.8 * r) return 10.0 / (8.0 * r);
  if (x <= r) return 0.0;
  if (x <= big_r) return -1.0 / (big_r - r);
  return 0.0;
}

Vec3 probe_displacement(const Vec3& p, const ProbeDeform& m) {
  const Vec3 u = p - m.center;
  const double x = u.norm();
  if (x == 0.0) return Vec3::Zero();
  const double f = probe_falloff(x, m.inner_radius, m.outer_radius);
  if (f == 0.0) return Vec3::Zero();
  return (m.alpha * m.outer_radius * std::pow(f, 1.0 + m.beta) / x) * u;
}

Mat3 probe_displacement_jacobian(const Vec3& p, const ProbeDeform& m) {
  const Vec3 u = p - m.center;
  const double x = u.norm();
  const double scale = m.alpha * m.outer_radius;
  if (x == 0.0) {
    // f ~ x/(0.8r) near the centre, so d ~ (x/(0.8r))^(1+beta) * u_hat.
    if (m.beta == 0.0) return (scale / (0.8 * m.inner_radius)) * Mat3::Identity();
    return Mat3::Zero();
  }
  const double f = probe_falloff(x, m.inner_radius, m.outer_radius);
  if (f == 0.0) return Mat3::Zero();
  const double df = probe_falloff_derivative(x, m.inner_radius, m.outer_radius);
  const Vec3 uh = u / x;
  const Mat3 radial = uh * uh.transpose();
  const double fb = std::pow(f, m.beta);
  return scale * ((1.0 + m.beta) * fb * df * radial + (fb * f / x) * (Mat3::Identity() - radial));
}

Mat3 euler_zyx(const Vec3& a) {
  const double cx = std::cos(a[0]), sx = std::sin(a[0]);
  const double cy = std::cos(a[1]), sy = std::sin(a[1]);
  const double cz = std::cos(a[2]), sz = std::sin(a[2]);
  Mat3 rx, ry, rz;
  rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  return rz * ry * rx;
}

std::array<Mat3, 3> euler_zyx_derivatives(const Vec3& a) {
  const double cx = std::cos(a[0]), sx = std::sin(a[0]);
  const double cy = std::cos(a[1]), sy = std::sin(a[1]);
  const double cz = std::cos(a[2]), sz = std::sin(a[2]);
  Mat3 rx, ry, rz, drx, dry, drz;
  rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  drx << 0, 0, 0, 0, -sx, -cx, 0, cx, -sx;
  dry << -sy, 0, cy, 0, 0, 0, -cy, 0, -sy;
  drz << -sz, -cz, 0, cz, -sz, 0, 0, 0, 0;
  return {rz * ry * drx, rz * dry * rx, drz * ry * rx};
}

Vec3 euler_zyx_angles(const Mat3& r) {
  const double ry = std::atan2(-r(2, 0), std::hypot(r(0, 0), r(1, 0)));
  const double rx = std::atan2(r(2, 1), r(2, 2));
  const double rz = std::atan2(r(1, 0), r(0, 0));
  return {rx, ry, rz};
}

TransformChain TransformChain::identity(TransformMode mode, const Vec3& center,
                                        const std::optional<ProbeDeform>& probe) {
  TransformChain t;
  t.mode_ = mode;
  t.center_ = center;
  if (mode == TransformMode::RigidProbe) {
    if (!probe) throw DataError("rigid+probe mode needs a probe geometry");
    ProbeDeform p = *probe;
    p.alpha = 0.0;
    p.beta = 0.0;
    p.validate();
    t.probe_ = p;
  }
  t.refresh();
  return t;
}

VecX TransformChain::parameters() const {
  VecX a(parameter_count());
  a.head<3>() = translation_;
  switch (mode_) {
    case TransformMode::Rigid: a.segment<3>(3) = angles_; break;
    case TransformMode::Affine:
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a[3 + 3 * i + j] = matrix_(i, j);
      break;
    case TransformMode::RigidProbe:
      a.segment<3>(3) = angles_;
      a[6] = probe_->alpha;
      a[7] = probe_->beta;
      break;
  }
  return a;
}

void TransformChain::set_parameters(const VecX& a) {
  if (a.size() != parameter_count())
    throw DataError("parameter vector length " + std::to_string(a.size()) + " does not match mode " +
                    std::string(to_string(mode_)));
  translation_ = a.head<3>();
  switch (mode_) {
    case TransformMode::Rigid: angles_ = a.segment<3>(3); break;
    case TransformMode::Affine:
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) matrix_(i, j) = a[3 + 3 * i + j];
      break;
    case TransformMode::RigidProbe:
      angles_ = a.segment<3>(3);
      probe_->alpha = a[6];
      probe_->beta = a[7];
      probe_->validate();
      break;
  }
  refresh();
}

TransformChain TransformChain::with_parameters(const VecX& alpha) const {
  TransformChain t = *this;
  t.set_parameters(alpha);
  return t;
}

void TransformChain::refresh() {
  if (mode_ != TransformMode::Affine) matrix_ = euler_zyx(angles_);
}

Vec3 TransformChain::apply(const Vec3& p) const {
  const Vec3 q = apply_linear(p);
  if (!probe_) return q;
  return q + probe_displacement(q, *probe_);
}

Eigen::Matrix<double, 3, Eigen::Dynamic> TransformChain::jacobian(const Vec3& p) const {
  Eigen::Matrix<double, 3, Eigen::Dynamic> j(3, parameter_count());
  j.setZero();
  const Vec3 rel = p - center_;
  j.leftCols<3>().setIdentity();
  if (mode_ == TransformMode::Affine) {
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) j(i, 3 + 3 * i + k) = rel[k];
  } else {
    const auto d = euler_zyx_derivatives(angles_);
    for (int k = 0; k < 3; ++k) j.col(3 + k) = d[k] * rel;
  }
  if (probe_) {
    const Vec3 q = apply_linear(p);
    const Mat3 chain = Mat3::Identity() + probe_displacement_jacobian(q, *probe_);
    j.leftCols<6>() = chain * j.leftCols<6>();
    const Vec3 u = q - probe_->center;
    const double x = u.norm();
    const double f = x > 0.0 ? probe_falloff(x, probe_->inner_radius, probe_->outer_radius) : 0.0;
    if (f > 0.0) {
      const Vec3 dir = u / x;
      const double fp = std::pow(f, 1.0 + probe_->beta);
      j.col(6) = probe_->outer_radius * fp * dir;
      j.col(7) = probe_->alpha * probe_->outer_radius * fp * std::log(f) * dir;
    }
  }
  return j;
}

VecX TransformChain::contract_linear(const Vec3& g_sum, const Mat3& g_outer_sum) const {
  VecX grad = VecX::Zero(parameter_count());
  grad.head<3>() = g_sum;
  if (mode_ == TransformMode::Affine) {
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) grad[3 + 3 * i + k] = g_outer_sum(i, k);
  } else {
    const auto d = euler_zyx_derivatives(angles_);
    for (int k = 0; k < 3; ++k) grad[3 + k] = d[k].cwiseProduct(g_outer_sum).sum();
  }
  return grad;
}

Mat4 TransformChain::to_matrix() const {
  if (probe_) throw DataError("a probe deformation is not representable as a matrix");
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = matrix_;
  m.topRightCorner<3, 1>() = linear_offset();
  return m;
}

TransformChain TransformChain::from_matrix(const Mat4& m, TransformMode mode, const Vec3& center,
                                           const std::optional<ProbeDeform>& probe) {
  if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9)
    throw DataError("not a homogeneous affine matrix");
  TransformChain t = identity(mode, center, probe);
  const Mat3 a = m.topLeftCorner<3, 3>();
  const Vec3 offset = m.topRightCorner<3, 1>();
  if (mode == TransformMode::Affine) {
    t.matrix_ = a;
  } else {
    if ((a.transpose() * a - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 || a.determinant() <= 0.0)
      throw DataError("matrix is not a proper rotation");
    t.angles_ = euler_zyx_angles(a);
    t.refresh();
  }
  // offset = center + t - A center
  t.translation_ = offset - center + t.matrix_ * center;
  if (probe && mode == TransformMode::RigidProbe) {
    t.probe_->alpha = probe->alpha;
    t.probe_->beta = probe->beta;
    t.probe_->validate();
  }
  return t;
}

WarpedVolume warp_volume(const Volume& moving, const TransformChain& t, const Geometry& target) {
  WarpedVolume out{Volume(target), std::vector<std::uint8_t>(target.voxel_count(), 0)};
  parallel::for_each(static_cast<std::size_t>(target.dims[2]), [&](std::size_t zz) {
    const int z = static_cast<int>(zz);
    for (int y = 0; y < target.dims[1]; ++y) {
      for (int x = 0; x < target.dims[0]; ++x) {
        const Vec3 p = target.index_to_world(Vec3(x, y, z));
        const Sample s = sample_trilinear(moving, t.apply(p), OutsidePolicy::Flag);
        const std::size_t i = target.linear_index(x, y, z);
        out.image[i] = static_cast<float>(s.value);
        out.inside[i] = s.inside ? 1 : 0;
      }
    }
  });
  return out;
}

}  // namespace disa
