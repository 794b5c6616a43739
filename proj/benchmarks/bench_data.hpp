#pragma once

#include "disa/features.hpp"
#include "disa/volume.hpp"

#include <cmath>
#include <random>

namespace disa::bench {

inline Geometry cube_grid(int n, double spacing) {
  Geometry g;
  g.dims = {n, n, n};
  g.spacing = Vec3::Constant(spacing);
  g.origin = Vec3::Constant(-0.5 * spacing * (n - 1));
  return g;
}

// Smooth blobs plus a little noise, so every patch has structure.
inline Volume textured_volume(int n, double spacing, std::uint64_t seed) {
  const Geometry g = cube_grid(n, spacing);
  Volume v(g);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.05f);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const Vec3 p = g.index_to_world(Vec3(x, y, z));
        v.at(x, y, z) = static_cast<float>(std::sin(p[0] / 9.0) * std::cos(p[1] / 7.0) + std::sin(p[2] / 11.0)) +
                        noise(rng);
      }
  return v;
}

inline std::vector<float> unit_descriptors(std::size_t cells, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> out(cells * static_cast<std::size_t>(channels));
  for (std::size_t c = 0; c < cells; ++c) {
    float* d = &out[c * static_cast<std::size_t>(channels)];
    double s = 0.0;
    for (int k = 0; k < channels; ++k) s += (d[k] = n(rng)) * d[k];
    const float inv = static_cast<float>(1.0 / std::sqrt(s));
    for (int k = 0; k < channels; ++k) d[k] *= inv;
  }
  return out;
}

}  // namespace disa::bench
