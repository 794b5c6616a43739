#pragma once

#include "disa/common.hpp"
#include "disa/volume.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace disa {

enum class TransformMode {
  Rigid,       ///< tx ty tz rx ry rz
  Affine,      ///< tx ty tz a00 a01 a02 a10 a11 a12 a20 a21 a22
  RigidProbe,  ///< rigid followed by the probe-pressure displacement; + alpha beta
};

std::string_view to_string(TransformMode mode);
TransformMode parse_transform_mode(std::string_view text);
int parameter_count(TransformMode mode);

/// Spherical probe-compression displacement.
///
/// The geometry (center, inner/outer radius) is configuration; only alpha (intensity, [0,1])
/// and beta (falloff rate, [0,10]) are optimised.
struct ProbeDeform {
  Vec3 center = Vec3::Zero();
  double inner_radius = 10.0;  ///< r
  double outer_radius = 50.0;  ///< R > r
  double alpha = 0.0;
  double beta = 0.0;

  /// Throws DataError unless 0 < r < R, alpha in [0,1], beta in [0,10].
  void validate() const;
};

/// Radial profile f(x): 10x/(8r) below 0.8r, 1 up to r, linear fall to 0 at R, 0 beyond.
double probe_falloff(double x, double inner_radius, double outer_radius);
double probe_falloff_derivative(double x, double inner_radius, double outer_radius);

/// d(p) = alpha * R * f(|p-c|)^(1+beta) * (p-c)/|p-c|; zero at p == c.
Vec3 probe_displacement(const Vec3& p, const ProbeDeform& m);

/// Spatial Jacobian of probe_displacement with respect to p.
Mat3 probe_displacement_jacobian(const Vec3& p, const ProbeDeform& m);

/// Rotation R = Rz(rz) * Ry(ry) * Rx(rx) (intrinsic Z-Y-X), angles in radians.
Mat3 euler_zyx(const Vec3& angles);

/// dR/d(angle k) for the Z-Y-X convention above.
std::array<Mat3, 3> euler_zyx_derivatives(const Vec3& angles);

/// Inverse of euler_zyx for a proper rotation matrix.
Vec3 euler_zyx_angles(const Mat3& rotation);

/// Parametric world-to-world transform T(p) = L(p) + d(L(p)).
///
/// The linear part rotates/scales about `center`: L(p) = A (p - center) + center + t.
/// Parameter vectors are laid out as described on TransformMode.
class TransformChain {
 public:
  TransformChain() = default;

  static TransformChain identity(TransformMode mode, const Vec3& center = Vec3::Zero(),
                                 const std::optional<ProbeDeform>& probe = std::nullopt);

  TransformMode mode() const { return mode_; }
  int parameter_count() const { return disa::parameter_count(mode_); }
  const Vec3& center() const { return center_; }
  bool has_deform() const { return mode_ == TransformMode::RigidProbe; }
  const std::optional<ProbeDeform>& probe() const { return probe_; }

  VecX parameters() const;
  void set_parameters(const VecX& alpha);
  TransformChain with_parameters(const VecX& alpha) const;

  /// Linear part: A and the offset b with L(p) = A p + b.
  const Mat3& linear_matrix() const { return matrix_; }
  Vec3 linear_offset() const { return center_ + translation_ - matrix_ * center_; }
  const Vec3& translation() const { return translation_; }
  const Vec3& angles() const { return angles_; }

  Vec3 apply_linear(const Vec3& p) const { return matrix_ * p + linear_offset(); }
  Vec3 apply(const Vec3& p) const;

  /// dT(p)/d(alpha), 3 x parameter_count().
  Eigen::Matrix<double, 3, Eigen::Dynamic> jacobian(const Vec3& p) const;

  /// Contracts per-point spatial gradients with the parameter Jacobian of the linear part.
  ///
  /// Given G = sum_i g_i and H = sum_i g_i (p_i - center)^T for gradients g_i taken at L(p_i),
  /// returns sum_i J_L(p_i)^T g_i for the linear parameters. Deformation entries are left 0.
  VecX contract_linear(const Vec3& g_sum, const Mat3& g_outer_sum) const;

  /// Homogeneous matrix of the linear part; throws for chains with a deformation.
  Mat4 to_matrix() const;
  static TransformChain from_matrix(const Mat4& m, TransformMode mode, const Vec3& center = Vec3::Zero(),
                                    const std::optional<ProbeDeform>& probe = std::nullopt);

 private:
  void refresh();

  TransformMode mode_ = TransformMode::Rigid;
  Vec3 center_ = Vec3::Zero();
  Vec3 translation_ = Vec3::Zero();
  Vec3 angles_ = Vec3::Zero();
  Mat3 matrix_ = Mat3::Identity();
  std::optional<ProbeDeform> probe_;
};

struct WarpedVolume {
  Volume image;                      ///< zero where the mapped point leaves M
  std::vector<std::uint8_t> inside;  ///< 1 when the sample came from inside M
};

/// output(p) = M(T(p)) for every voxel centre p of the target grid.
WarpedVolume warp_volume(const Volume& moving, const TransformChain& t, const Geometry& target);

}  // namespace disa
