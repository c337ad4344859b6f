#pragma once

// Deliberately naive reference implementations. Each one recomputes a
// library result the slow, obvious way so tests can compare the two.

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "shrubmap/features.hpp"
#include "shrubmap/forest.hpp"
#include "shrubmap/metrics.hpp"
#include "shrubmap/mlp.hpp"
#include "shrubmap/random.hpp"
#include "shrubmap/raster.hpp"
#include "shrubmap/segmentation.hpp"

namespace oracle {

// ---- classification metrics ------------------------------------------------

/// Counts every pixel one by one.
shrubmap::ConfusionCounts count_confusion(std::span<const std::uint8_t> labels, std::span<const double> probs,
                                          double threshold);

/// Trapezoidal area under the ROC polyline through every distinct threshold.
double trapezoid_auc(std::span<const std::uint8_t> labels, std::span<const double> probs);

/// Exhaustive Youden scan over every distinct score and +inf (ties: higher threshold).
double youden_scan(std::span<const std::uint8_t> labels, std::span<const double> probs);

/// Exhaustive scan: among thresholds whose specificity reaches the target,
/// the one with the highest sensitivity (ties: lower threshold).
double specificity_scan(std::span<const std::uint8_t> labels, std::span<const double> probs, double target);

/// Random labelled score set; `levels` > 0 quantizes scores to that many
/// values to force heavy ties.
struct ScoreSet {
  std::vector<std::uint8_t> labels;
  std::vector<double> probs;
};
ScoreSet random_scores(shrubmap::Rng& rng, std::size_t n, double prevalence, std::size_t levels);

// ---- rasters ----------------------------------------------------------------

/// Coarse cell true iff more than half of its factor x factor subpixels are true.
shrubmap::Raster block_majority(const shrubmap::Raster& fine, std::uint32_t factor);

// ---- segmentation -----------------------------------------------------------

struct Segmentation {
  std::vector<int> vertex_years;
  double sse = 0.0;
};

/// Least-squares SSE of the continuous piecewise-linear fit with the given
/// vertices, by a dense solve over hat basis functions.
double vertex_sse(const shrubmap::AnnualSeries& s, const std::vector<int>& vertex_years);

/// Enumerates every vertex subset (both endpoints included, at most
/// max_segments segments). Among fits within tol of the best SSE: fewest
/// segments, then lexicographically smallest vertex years.
Segmentation exhaustive_segmentation(const shrubmap::AnnualSeries& s, int max_segments, double tol);

// ---- learners ---------------------------------------------------------------

/// Re-grows a forest from its documented growth protocol with a separate,
/// recursive implementation.
std::vector<shrubmap::DecisionTree> reference_forest(const shrubmap::LabeledData& data,
                                                     const shrubmap::ForestParams& params, std::uint64_t seed);

/// Mean binary cross-entropy of a network (dropout off) with plain loops.
double network_loss(const shrubmap::MlpNetwork& net, const std::vector<std::vector<double>>& xs,
                    const std::vector<double>& ys);

// ---- files --------------------------------------------------------------------

/// Fresh, empty directory under the system temp directory.
std::filesystem::path fresh_dir(const std::string& name);

/// Byte-for-byte comparison of two directory trees; returns the first
/// differing relative path, or an empty string when identical. Relative
/// paths listed in `ignore` are skipped.
std::string first_difference(const std::filesystem::path& a, const std::filesystem::path& b,
                             const std::set<std::string>& ignore = {});

}  // namespace oracle
