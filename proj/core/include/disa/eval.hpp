#pragma once

#include "disa/transform.hpp"
#include "disa/volume.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace disa {

using LandmarkSet = std::vector<Vec3>;

/// Mean of |target_i - T(source_i)| over paired landmarks, in mm.
///
/// Registration transforms map fixed-space points into the moving image, so the registration
/// error of a result T is fre(moving_landmarks, fixed_landmarks, T).
double fre(const LandmarkSet& targets, const LandmarkSet& sources, const TransformChain& t);

/// Per-pair distances |target_i - T(source_i)|.
std::vector<double> fiducial_errors(const LandmarkSet& targets, const LandmarkSet& sources, const TransformChain& t);

/// Linear-interpolation percentile at fraction p in [0, 1]: position (n-1) p in the sorted values.
double percentile(std::vector<double> values, double p);

struct FreSummary {
  double avg = 0.0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
};

FreSummary fre_percentiles(const std::vector<double>& per_case);

/// Voxels whose rounded value equals `label`. Label volumes store integers as floats.
std::vector<std::uint8_t> label_mask(const Volume& labels, int label);

/// 2|A n B| / (|A| + |B|); 1 when both are empty. Throws DataError on grid mismatch.
double dice(const Volume& a, const Volume& b, int label);

enum class Hd95Method {
  Auto,               ///< brute force up to 10^4 surface voxels in total, distance transform beyond
  BruteForce,
  DistanceTransform,  ///< exact separable squared Euclidean distance transform
};

/// Symmetric 95th-percentile surface distance in mm: the larger of the two directed
/// percentiles. Surface voxels are labelled voxels with an unlabelled (or out-of-grid)
/// 6-neighbour. Throws DataError when either mask is empty or the grids differ.
double hd95(const Volume& a, const Volume& b, int label, Hd95Method method = Hd95Method::Auto);

struct ConvergenceBucket {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t cases = 0;
  std::size_t converged = 0;
  /// 100 * converged / cases; NaN for an empty bucket.
  double percent() const;
};

/// Cases grouped by initial FRE into [e0,e1), [e1,e2), ..., [e_{k-1}, e_k] (last edge inclusive);
/// a case converges when its final FRE is below `threshold`. Cases outside the edges are ignored.
std::vector<ConvergenceBucket> convergence_buckets(const std::vector<double>& initial_fres,
                                                   const std::vector<double>& final_fres, double threshold = 15.0,
                                                   const std::vector<double>& edges = {0.0, 25.0, 50.0, 75.0, 100.0});

// Markdown tables mirroring the published result layouts.

struct FreTableRow {
  std::string method;
  std::string mode;
  FreSummary fre;
};

std::string format_fre_row(const FreTableRow& row);
std::string format_fre_table(const std::vector<FreTableRow>& rows);

struct ConvergenceTableRow {
  std::string similarity;
  std::string search;
  std::optional<std::vector<double>> percents;  ///< per bucket; nullopt prints N/A
  double seconds = 0.0;
  std::size_t evaluations = 0;
  bool estimated = false;  ///< appends '*' to time and evaluations
};

std::string format_convergence_row(const ConvergenceTableRow& row);
std::string format_convergence_table(const std::vector<ConvergenceTableRow>& rows);

/// Landmark CSV: one "x,y,z" per line in world mm; blank lines, '#' comments and a
/// non-numeric header line are skipped.
LandmarkSet load_landmarks(const std::filesystem::path& path);
void save_landmarks(const LandmarkSet& points, const std::filesystem::path& path);

}  // namespace disa
