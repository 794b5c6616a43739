#pragma once

#include "disa/common.hpp"

#include <span>
#include <vector>

namespace disa {

/// Voxel grid placement in world millimetres.
///
/// world = origin + direction * diag(spacing) * index, with index (0,0,0) at the centre of the
/// first voxel. Voxel data are always stored x-fastest.
struct Geometry {
  Index3 dims{1, 1, 1};
  Vec3 spacing = Vec3::Ones();
  Vec3 origin = Vec3::Zero();
  Mat3 direction = Mat3::Identity();

  std::size_t voxel_count() const { return product(dims); }

  std::size_t linear_index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(dims[1]) +
            static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(dims[0]) +
           static_cast<std::size_t>(x);
  }

  Index3 index_of(std::size_t linear) const;

  /// direction * diag(spacing)
  Mat3 index_to_world_matrix() const { return direction * spacing.asDiagonal(); }
  Mat3 world_to_index_matrix() const {
    return spacing.cwiseInverse().asDiagonal() * direction.transpose();
  }

  Vec3 index_to_world(const Vec3& index) const { return origin + index_to_world_matrix() * index; }
  Vec3 world_to_index(const Vec3& world) const { return world_to_index_matrix() * (world - origin); }

  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
  }

  /// World position of the centre of the grid's bounding box.
  Vec3 center() const;

  /// Throws DataError when dims/spacing/direction violate the Volume invariants.
  void validate() const;
};

bool same_grid(const Geometry& a, const Geometry& b, double tolerance = 1e-6);

/// A dense 32-bit float scalar volume.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Geometry geometry, float fill = 0.0f);
  Volume(Geometry geometry, std::vector<float> data);

  const Geometry& geometry() const { return geometry_; }
  const Index3& dims() const { return geometry_.dims; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  float at(int x, int y, int z) const { return data_[geometry_.linear_index(x, y, z)]; }
  float& at(int x, int y, int z) { return data_[geometry_.linear_index(x, y, z)]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

 private:
  Geometry geometry_;
  std::vector<float> data_;
};

/// Cubic neighbourhood of side 2*radius+1, copied x-fastest.
struct Patch {
  int radius = 0;
  Index3 center{0, 0, 0};
  std::vector<float> data;

  int side() const { return 2 * radius + 1; }
};

enum class OutsidePolicy {
  Clamp,  ///< nearest-edge value
  Flag,   ///< report "outside"; callers give the point zero weight
};

struct Sample {
  double value = 0.0;
  bool inside = false;
};

/// Trilinear interpolation at a world point.
Sample sample_trilinear(const Volume& v, const Vec3& world, OutsidePolicy policy = OutsidePolicy::Flag);

/// Trilinear interpolation at a continuous index; shared by all samplers in the library.
Sample sample_index(const Volume& v, const Vec3& index, OutsidePolicy policy);

/// Resamples onto a grid with the same origin/direction covering the same extent.
Volume resample(const Volume& v, const Vec3& new_spacing);

/// Zero mean, unit (population) standard deviation. Throws DataError("constant volume").
Volume normalize(const Volume& v);

/// Per-voxel |grad I| in intensity/mm: central differences inside, one-sided on the border.
Volume gradient_magnitude(const Volume& v);

/// Throws DataError when the cube leaves the grid.
Patch extract_patch(const Volume& v, const Index3& center, int radius);

bool patch_in_bounds(const Geometry& g, const Index3& center, int radius);

/// Unbiased variance over the edge-clamped (2r+1)^3 neighbourhood of every voxel.
Volume local_variance(const Volume& v, int radius);

}  // namespace disa
