#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shrubmap/forest.hpp"
#include "shrubmap/gbm.hpp"
#include "shrubmap/metrics.hpp"
#include "shrubmap/mlp.hpp"
#include "shrubmap/model.hpp"
#include "shrubmap/sampling.hpp"
#include "shrubmap/stack.hpp"
#include "shrubmap/stacker.hpp"
#include "shrubmap/synth.hpp"

namespace shrubmap {

/// Seed streams of the pipeline's random stages: each stage draws from
/// derive_seed(config.seed, stream).
inline constexpr std::uint64_t kSampleStream = 1;
inline constexpr std::uint64_t kSplitStream = 2;
inline constexpr std::uint64_t kForestStream = 3;
inline constexpr std::uint64_t kGbmStream = 4;
inline constexpr std::uint64_t kMlpStream = 5;
inline constexpr std::uint64_t kPatchworkAucStream = 6;
inline constexpr std::uint64_t kPlanStream = 7;

/// Stages in execution order.
const std::vector<std::string>& pipeline_stages();

/// Flat `key=value` configuration. Unknown keys are rejected. Learner
/// counts default to desk-scale values; the library structs keep the
/// full-scale defaults.
struct PipelineConfig {
  std::string output_dir = "shrubmap_run";
  std::string from_stage = "synth";  // earlier stages reuse artifacts on disk
  std::uint64_t seed = 42;
  std::size_t workers = 0;  // 0: hardware concurrency

  LandscapeSpec landscape;
  std::optional<std::uint64_t> landscape_seed;  // defaults to `seed`

  double pulse_width_m = kDefaultPulseWidthM;
  std::uint32_t points_per_circle = kDefaultPointsPerCircle;
  double shrub_min_m = 1.0;
  double shrub_max_m = 5.0;

  int max_segments = 4;
  double disturbance_threshold = 0.05;
  int statewide_epoch = 0;  // 0: last series year

  std::size_t sample_size = 0;  // 0: largest balanced sample
  SplitFractions split_fractions = kDefaultSplitFractions;
  std::vector<std::string> features = default_feature_names();

  ForestParams rf;
  GbmParams gbm;
  MlpParams mlp;
  ProbabilityLink stacker_link = ProbabilityLink::Logit;

  std::vector<double> threshold_targets = kDefaultSpecificityTargets;
  std::size_t patchwork_auc_sample = 1000000;
  double hex_apothem_km = 1.5;
  std::size_t hex_per_bin = 5;

  PipelineConfig();
  static PipelineConfig parse_text(const std::string& text);
  static PipelineConfig read(const std::string& path);
  /// Every key with its resolved value, one per line, in a fixed order.
  std::string to_text() const;
  void validate() const;
  LandscapeSpec resolved_landscape() const;
};

struct PipelineResult {
  std::size_t test_records = 0;
  std::vector<std::pair<std::string, double>> test_auc;  // ensemble first, then base learners
  ThresholdSet thresholds;
  std::vector<std::pair<std::string, MetricsReport>> test_metrics;  // in ThresholdSet::named() order
  std::size_t patchwork_pixels = 0;
  std::optional<double> patchwork_auc;
  std::vector<std::pair<std::string, MetricsReport>> patchwork_metrics;

  /// Named AUC lookup; raises ParameterError when absent.
  double auc(const std::string& model) const;
  const MetricsReport& test_at(const std::string& threshold) const;
  const MetricsReport& patchwork_at(const std::string& threshold) const;
  static PipelineResult parse_report(const std::string& text);
};

/// Runs every stage from config.from_stage onward. A failing stage raises
/// an Error of the original kind whose message starts with "stage <name>".
PipelineResult run_pipeline(const PipelineConfig& config);

/// Ensemble probability per pixel; nodata where any model input is nodata.
Raster predict_raster(const ProbabilityModel& model, const PredictorStack& stack);

/// Boolean map: prob >= threshold; nodata stays nodata.
Raster classify_raster(const Raster& prob, double threshold);


/// Ensemble from trained base learners: the stacker is fit on the
/// validation split of the sample.
EnsembleModel build_ensemble(ForestModel rf, GbmModel gbm, MlpModel mlp, const SampleSet& sample,
                             ProbabilityLink link = ProbabilityLink::Logit);

/// Thresholds calibrated on the validation split.
ThresholdSet calibrate_on_sample(const ProbabilityModel& model, const SampleSet& sample,
                                 const std::vector<double>& targets);

/// Test-split AUC for the model (and, for an ensemble, each base learner)
/// plus confusion metrics at every threshold.
void evaluate_on_sample(const ProbabilityModel& model, const SampleSet& sample, const ThresholdSet& thresholds,
                        PipelineResult& result);

/// Sampled AUC and full-population metrics on a labeled probability map.
void evaluate_on_patchwork(const Raster& labels, const Raster& prob, const ThresholdSet& thresholds,
                           std::size_t auc_sample, std::uint64_t seed, PipelineResult& result);

/// Deterministic `key=value` report; undefined metrics print as NA.
std::string format_report(const PipelineResult& r);

/// Label mosaic on the landscape grid: tile labels pasted into a
/// nodata canvas, then masked by land cover and elevation.
Raster mosaic_labels(const GridTransform& grid, const std::vector<std::pair<LidarTile, Raster>>& tile_labels,
                     const Raster& lcpri, const Raster& dem);

}  // namespace shrubmap
