#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "shrubmap/model.hpp"

namespace shrubmap {

class Rng;

struct MlpParams {
  std::vector<std::size_t> hidden{256, 128, 64, 32, 16};
  double dropout = 0.2;  // applied after the last hidden layer
  std::size_t epochs = 1000;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  double momentum = 0.9;
};

struct DenseLayer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
};

/// Fully connected ReLU network with one sigmoid output unit. Samples are
/// columns of the input matrix.
class MlpNetwork {
 public:
  MlpNetwork() = default;
  explicit MlpNetwork(std::vector<DenseLayer> layers, double dropout = 0.0)
      : layers_(std::move(layers)), dropout_(dropout) {}

  /// He-uniform weights (limit sqrt(6 / fan_in)), zero biases, drawn layer
  /// by layer in row-major order.
  static MlpNetwork he_uniform(std::size_t inputs, const std::vector<std::size_t>& hidden, double dropout, Rng& rng);

  std::size_t input_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().w.cols()); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  double dropout() const { return dropout_; }

  /// Output logit for one sample (inference: no dropout).
  double logit(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Logits for samples stored as columns (inference).
  Eigen::RowVectorXd logits(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  struct Gradient {
    double loss = 0.0;  // mean binary cross-entropy
    std::vector<DenseLayer> grads;
  };
  /// Mean binary cross-entropy over the columns of x and its gradient.
  /// Dropout masks are drawn from rng when given; nullptr disables dropout.
  Gradient loss_and_gradient(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::RowVectorXd>& y,
                             Rng* dropout_rng) const;

 private:
  std::vector<DenseLayer> layers_;
  double dropout_ = 0.0;
};

class MlpModel : public ProbabilityModel {
 public:
  MlpModel() = default;
  MlpModel(std::vector<std::string> names, MlpParams params, FeatureEncoder encoder, MlpNetwork network,
           std::size_t best_epoch, std::vector<double> validation_pr_auc);

  ModelType type() const override { return ModelType::Mlp; }
  const std::vector<std::string>& feature_names() const override { return names_; }
  double predict_proba(std::span<const double> x) const override;
  ParamBlock parameters() const override;
  void save_payload(bin::Writer& w) const override;
  static MlpModel load(const std::map<std::string, double>& params, std::vector<std::string> names, bin::Reader& r);

  const MlpParams& params() const { return params_; }
  const FeatureEncoder& encoder() const { return encoder_; }
  const MlpNetwork& network() const { return network_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based
  const std::vector<double>& validation_history() const { return history_; }

 private:
  std::vector<std::string> names_;
  MlpParams params_;
  FeatureEncoder encoder_;
  MlpNetwork network_;
  std::size_t best_epoch_ = 0;
  std::vector<double> history_;
};

struct MlpHooks {
  /// Replaces the validation PR-AUC used for epoch selection; receives the
  /// 1-based epoch and the weights at the end of that epoch.
  std::function<double(std::size_t epoch, const MlpNetwork& network)> epoch_metric;
};

/// Minibatch SGD with momentum on standardized, one-hot encoded inputs.
/// Returns the weights of the epoch with the highest validation PR-AUC
/// (earliest on ties).
MlpModel train_mlp(const LabeledData& train, const LabeledData& validation, const MlpParams& params,
                   std::uint64_t seed, const MlpHooks& hooks = {});

}  // namespace shrubmap
