#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shrubmap/raster.hpp"

namespace shrubmap {

/// Shrubland is the positive class. A pixel is classified positive iff its
/// probability is >= the threshold.
struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(std::span<const std::uint8_t> labels, std::span<const double> probs, double threshold);

/// Metrics with undefined (zero-denominator) values left empty.
struct MetricsReport {
  std::optional<double> sensitivity, specificity, precision, f1, auc;
  ConfusionCounts counts;
  double threshold = 0.0;
};

MetricsReport metrics(const ConfusionCounts& c);

/// Rank statistic: P(random positive outranks random negative), ties half.
double roc_auc(std::span<const std::uint8_t> labels, std::span<const double> probs);

/// Area under the precision-recall step curve (average precision).
double pr_auc(std::span<const std::uint8_t> labels, std::span<const double> probs);

/// Distinct observed score maximizing sensitivity + specificity - 1, with
/// +inf as an extra candidate; ties go to the higher threshold.
double youden_threshold(std::span<const std::uint8_t> labels, std::span<const double> probs);

/// Smallest candidate threshold whose specificity reaches the target.
double specificity_threshold(std::span<const std::uint8_t> labels, std::span<const double> probs, double target);

struct ThresholdSet {
  double youden = 0.0;
  std::vector<std::pair<double, double>> by_specificity;  // (target, threshold), ascending targets

  /// Named entries: "youden", then "specNN" per target.
  std::vector<std::pair<std::string, double>> named() const;
  std::string to_text() const;
  static ThresholdSet from_text(const std::string& text);
  void write(const std::string& path) const;
  static ThresholdSet read(const std::string& path);
};

inline const std::vector<double> kDefaultSpecificityTargets{0.90, 0.95, 0.99};

ThresholdSet calibrate_thresholds(std::span<const std::uint8_t> labels, std::span<const double> probs,
                                  const std::vector<double>& targets = kDefaultSpecificityTargets);

/// ROC AUC over a seeded uniform sample of pixels valid in both rasters.
/// A single-class draw is retried once with twice the sample size.
double auc_on_patchwork_sample(const Raster& labels, const Raster& probs, std::size_t n, std::uint64_t seed);

std::string format_number(double v);

}  // namespace shrubmap
