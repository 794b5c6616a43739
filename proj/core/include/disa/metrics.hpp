#pragma once

#include "disa/transform.hpp"
#include "disa/volume.hpp"

#include <memory>
#include <span>
#include <vector>

namespace disa {

/// Per-voxel weights w(p) on the grid of their source volume.
struct WeightMap {
  Volume weights;
  double total_weight = 0.0;

  static WeightMap from_volume(Volume weights);
};

/// Mean squared difference.
double ssd_patch(const Patch& a, const Patch& b);

/// Pearson correlation; throws NumericalError("degenerate patch") when either variance <= eps.
double ncc_patch(const Patch& a, const Patch& b, double eps = 1e-10);

struct Lc2Value {
  double value = 0.0;
  bool degenerate = false;  ///< fixed variance <= eps; value is 0
};

inline constexpr double kLc2VarianceEps = 1e-10;

/// LC2 of one patch triple: fraction of the fixed patch's variance explained by
/// a * source + b * source_gradient + c (least squares, lightly damped normal equations).
/// The source columns come from `moving`; the similarity is asymmetric by construction.
Lc2Value lc2_patch(const Patch& fixed, const Patch& moving, const Patch& moving_grad);

/// Same computation over raw, equally sized value sequences.
Lc2Value lc2_values(std::span<const float> fixed, std::span<const float> source,
                    std::span<const float> source_grad);

inline const std::vector<int>& default_lc2_radii() {
  static const std::vector<int> radii{3, 5, 7};
  return radii;
}

/// Unweighted mean of LC2 over the radii whose cube fits in the grid (0 if none fits).
/// F, M and M_grad must share one grid.
double lc2_multiradius(const Volume& fixed, const Volume& moving, const Volume& moving_grad,
                       const Index3& center, std::span<const int> radii = default_lc2_radii());

/// Mean LC2 over the cubes of the given radii nested at the centre of radius-`radius` cubes
/// stored x-fastest. Radii larger than `radius` are skipped; 0 if none remain.
double lc2_cube_multiradius(std::span<const float> fixed, std::span<const float> source,
                            std::span<const float> source_grad, int radius,
                            std::span<const int> radii = default_lc2_radii());

/// w = local variance of F over (2r+1)^3, clipped at 0.
WeightMap weight_map(const Volume& fixed, int radius = 7);

/// Which image provides the intensity + gradient-magnitude regressors.
enum class Lc2Source { Moving, Fixed };

struct Lc2Options {
  std::vector<int> radii{3, 5, 7};
  int sample_step = 4;
  Lc2Source source = Lc2Source::Moving;
};

/// Weighted multi-radius LC2 between F and M o T with cached gradients and sample centres.
///
/// A centre contributes only if its whole largest admissible patch maps inside M.
class Lc2GlobalObjective {
 public:
  Lc2GlobalObjective(const Volume& fixed, const Volume& moving, const WeightMap& w, Lc2Options options = {});

  /// Throws NumericalError("no overlap") when no weighted centre maps inside M.
  double evaluate(const TransformChain& t) const;

  std::size_t center_count() const { return centers_.size(); }

 private:
  struct Center {
    Index3 index;
    double weight;
    int max_radius;
  };

  const Volume& fixed_;
  const Volume& moving_;
  Volume fixed_grad_;
  Volume moving_grad_;
  Lc2Options options_;
  std::vector<Center> centers_;
};

double lc2_global(const Volume& fixed, const Volume& moving, const TransformChain& t, const WeightMap& w,
                  int sample_grid_step, const Lc2Options& options = {});

}  // namespace disa
