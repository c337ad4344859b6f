#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shrubmap/binary_io.hpp"
#include "shrubmap/features.hpp"

namespace shrubmap {

enum class ModelType : std::uint8_t { Forest = 1, Gbm = 2, Mlp = 3, Stacker = 4, Ensemble = 5 };
const char* model_type_name(ModelType t);

using ParamBlock = std::vector<std::pair<std::string, double>>;

/// Common face of every trained model: a probability of shrubland per
/// feature vector, in the order given by feature_names().
class ProbabilityModel {
 public:
  virtual ~ProbabilityModel() = default;

  virtual ModelType type() const = 0;
  virtual const std::vector<std::string>& feature_names() const = 0;

  /// Raises DimensionError if x does not match feature_names().
  virtual double predict_proba(std::span<const double> x) const = 0;

  /// Row-wise predict_proba; bit-identical to the single-record path.
  std::vector<double> predict_batch(const FeatureMatrix& x) const;

  /// Self-describing hyperparameters stored in the model file header.
  virtual ParamBlock parameters() const = 0;
  virtual void save_payload(bin::Writer& w) const = 0;
};

/// Binary decision tree in a flat node array; node 0 is the root.
/// A record goes left iff x[feature] <= threshold.
struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  double value = 0.0;  // leaf output
  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const;
  std::size_t leaf_count() const;
  bool operator==(const DecisionTree&) const = default;

  void save(bin::Writer& w) const;
  static DecisionTree load(bin::Reader& r, std::size_t n_features);
};

/// SMDL container: "SMDL", version byte, model-type byte, parameter block,
/// feature names, then the model-specific payload.
std::vector<std::uint8_t> encode_model(const ProbabilityModel& m);
std::unique_ptr<ProbabilityModel> decode_model(std::span<const std::uint8_t> bytes);
void write_model(const ProbabilityModel& m, const std::string& path);
std::unique_ptr<ProbabilityModel> read_model(const std::string& path);

/// Parameter lookup helpers used by the loaders.
double param_value(const std::map<std::string, double>& params, const std::string& key);

}  // namespace shrubmap
