#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shrubmap/model.hpp"

namespace shrubmap {

struct ForestParams {
  std::size_t n_trees = 3000;
  double bootstrap_fraction = 0.2;  // drawn with replacement
  std::size_t min_node = 6;
  std::size_t features_per_split = 1;
};

/// Random forest of Gini classification trees. Prediction is the mean of
/// the per-tree leaf positive fractions.
///
/// Growth protocol (fixed so results are reproducible bit for bit):
///  - tree t uses Rng(derive_seed(seed, t));
///  - its bootstrap is m = max(1, llround(fraction * n)) draws of below(n);
///  - nodes are grown depth first, left subtree before right, and stored in
///    that preorder;
///  - a node with fewer than 2 * min_node records or a single class becomes
///    a leaf without consuming randomness;
///  - otherwise the candidate features are drawn (below(d) when one feature
///    is used, sample_without_replacement(d, k) otherwise) and the split
///    maximizing sum over children of (pos^2 + neg^2) / size is taken, i.e.
///    minimal weighted Gini impurity, compared exactly; ties keep the earlier
///    feature in draw order and then the smaller threshold;
///  - thresholds are midpoints between adjacent distinct values;
///  - a node whose drawn features are all constant becomes a leaf.
class ForestModel : public ProbabilityModel {
 public:
  ForestModel() = default;
  ForestModel(std::vector<std::string> names, ForestParams params, std::vector<DecisionTree> trees);

  ModelType type() const override { return ModelType::Forest; }
  const std::vector<std::string>& feature_names() const override { return names_; }
  double predict_proba(std::span<const double> x) const override;
  ParamBlock parameters() const override;
  void save_payload(bin::Writer& w) const override;
  static ForestModel load(const std::map<std::string, double>& params, std::vector<std::string> names,
                          bin::Reader& r);

  const ForestParams& params() const { return params_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

 private:
  std::vector<std::string> names_;
  ForestParams params_;
  std::vector<DecisionTree> trees_;
};

ForestModel train_forest(const LabeledData& train, const ForestParams& params, std::uint64_t seed);

}  // namespace shrubmap
