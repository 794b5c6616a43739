#pragma once

// Independent reference implementations. They share no code with the library beyond the
// plain data types, favour directness over speed and accumulate in double.

#include "disa/cnn.hpp"
#include "disa/features.hpp"
#include "disa/transform.hpp"
#include "disa/volume.hpp"

#include <functional>
#include <span>
#include <vector>

namespace disa::testing {

/// Seven nested loops over (out, z, y, x, in, kz, ky, kx) with zero padding.
Tensor naive_conv3d(const Tensor& in, const LayerSpec& layer, const ConvWeights& w);

/// Direct 27-tap binomial blur evaluated only at the kept (even) positions.
Tensor naive_blurpool(const Tensor& in);

/// Layer-by-layer forward pass built from the naive ops above.
Tensor naive_forward(const Network& net, const Tensor& input);

/// Explicit trilinear weights over the 8 corners of the containing cell.
double naive_trilinear(const Volume& v, const Vec3& index);

/// Unbiased variance of the edge-clamped (2r+1)^3 neighbourhood, summed directly.
double naive_local_variance(const Volume& v, const Index3& p, int radius);

/// 1 - |r|^2 / |f - mean f|^2 with r the least-squares residual of f against [s, g, 1],
/// solved by column-pivoted Householder QR. Returns 0 for a constant fixed patch.
double qr_lc2(std::span<const float> fixed, std::span<const float> source, std::span<const float> source_grad);

/// Sum over samples of w * <fF[p], fM(T p)> / sum w, with the moving map interpolated per
/// channel and samples outside the moving cell grid skipped. Throws NumericalError on no overlap.
double naive_dot_objective(const FeatureMap& fixed, const FeatureMap& moving, const TransformChain& t,
                           const WeightMap& cell_weights, const std::vector<std::size_t>& samples);

/// Central finite differences of f at x, one step per coordinate.
VecX central_difference(const std::function<double(const VecX&)>& f, const VecX& x, const VecX& steps);

/// Symmetric 95th-percentile Hausdorff distance from exhaustive pairwise distances between the
/// 6-connected surface voxels of `label`, in world millimetres.
double naive_hd95(const Volume& a, const Volume& b, int label);

/// Naive MIND-SSC following the textbook definition, for one voxel away from the border.
std::vector<double> naive_mind(const Volume& v, const Index3& p, double sigma = 0.8, int kernel_radius = 2);

}  // namespace disa::testing
