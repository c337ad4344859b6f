#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shrubmap/model.hpp"

namespace shrubmap {

struct GbmParams {
  std::size_t n_trees = 2500;
  std::size_t max_leaves = 14;  // leaf-wise growth, depth unbounded
  double learning_rate = 0.01;
  std::size_t min_leaf = 10;
  std::size_t min_per_bin = 3;
  std::size_t max_bins = 255;
  double l1 = 0.0;
  double l2 = 0.5;
  double min_child_hessian = 1e-3;
  double bagging_fraction = 0.5;  // per tree, without replacement
  double feature_fraction = 0.9;  // per tree
};

/// Per-feature histogram bin upper bounds. Each bin holds at least
/// min_per_bin training values (the final bin absorbs a short remainder);
/// the last upper bound is +inf.
struct FeatureBins {
  std::vector<double> upper;
  std::uint8_t bin_of(double v) const;
};
FeatureBins make_bins(std::vector<double> values, std::size_t min_per_bin, std::size_t max_bins);

/// Gradient-boosted trees for binary log-loss:
/// p = sigmoid(base_score + sum of tree leaf values).
class GbmModel : public ProbabilityModel {
 public:
  GbmModel() = default;
  GbmModel(std::vector<std::string> names, GbmParams params, double base_score, std::vector<DecisionTree> trees);

  ModelType type() const override { return ModelType::Gbm; }
  const std::vector<std::string>& feature_names() const override { return names_; }
  double predict_proba(std::span<const double> x) const override;
  double raw_score(std::span<const double> x) const;
  ParamBlock parameters() const override;
  void save_payload(bin::Writer& w) const override;
  static GbmModel load(const std::map<std::string, double>& params, std::vector<std::string> names, bin::Reader& r);

  const GbmParams& params() const { return params_; }
  double base_score() const { return base_score_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

 private:
  std::vector<std::string> names_;
  GbmParams params_;
  double base_score_ = 0.0;
  std::vector<DecisionTree> trees_;
};

/// Tree k uses Rng(derive_seed(seed, k)) for its row bag and then its
/// feature subset. When loss_trace is given it receives the training
/// log-loss before the first tree and after every tree.
GbmModel train_gbm(const LabeledData& train, const GbmParams& params, std::uint64_t seed,
                   std::vector<double>* loss_trace = nullptr);

double log_loss(std::span<const std::uint8_t> labels, std::span<const double> raw_scores);

}  // namespace shrubmap
