#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "shrubmap/forest.hpp"
#include "shrubmap/gbm.hpp"
#include "shrubmap/mlp.hpp"
#include "shrubmap/model.hpp"

namespace shrubmap {

/// How base-model probabilities enter the stacker: as-is, or on the
/// log-odds scale (clamped away from 0 and 1 first).
enum class ProbabilityLink : std::uint8_t { Identity = 0, Logit = 1 };

struct StackerParams {
  std::size_t max_iterations = 10000;
  double tolerance = 1e-8;  // absolute change in mean log-loss
  double ridge_fallback = 1e-6;
  ProbabilityLink link = ProbabilityLink::Logit;
};

/// Probabilities are clamped to [kLinkClamp, 1 - kLinkClamp] before the logit.
constexpr double kLinkClamp = 1e-6;

/// Stacker input value for one base-model probability.
double link_probability(double p, ProbabilityLink link);

ProbabilityLink parse_probability_link(const std::string& text);
std::string probability_link_name(ProbabilityLink link);

/// Names of the base-model probability inputs appended to the features.
inline const std::vector<std::string> kBaseProbabilityNames{"P_RF", "P_GBM", "P_MLP"};

/// Logistic regression over standardized inputs (categorical land cover
/// one-hot encoded, first category dropped). Coefficients are on the
/// encoded scale, intercept first.
class StackerModel : public ProbabilityModel {
 public:
  StackerModel() = default;
  StackerModel(std::vector<std::string> names, FeatureEncoder encoder, std::vector<double> coefficients,
               std::vector<double> standard_errors = {}, double ridge = 0.0);

  ModelType type() const override { return ModelType::Stacker; }
  const std::vector<std::string>& feature_names() const override { return names_; }
  double predict_proba(std::span<const double> x) const override;
  /// Affine score whose sigmoid is the probability.
  double linear_score(std::span<const double> x) const;
  ParamBlock parameters() const override;
  void save_payload(bin::Writer& w) const override;
  static StackerModel load(const std::map<std::string, double>& params, std::vector<std::string> names,
                           bin::Reader& r);

  const FeatureEncoder& encoder() const { return encoder_; }
  const std::vector<double>& coefficients() const { return coefficients_; }
  const std::vector<double>& standard_errors() const { return standard_errors_; }
  double ridge() const { return ridge_; }

 private:
  std::vector<std::string> names_;
  FeatureEncoder encoder_;
  std::vector<double> coefficients_;
  std::vector<double> standard_errors_;
  double ridge_ = 0.0;
};

/// Fits by Newton (IRLS) iterations with step halving. If the data are
/// separable the fit is repeated with a small ridge penalty and a notice is
/// logged. inputs holds the stacker's inputs (features ++ base probabilities).
StackerModel train_logistic(const LabeledData& inputs, const StackerParams& params = {});

/// Stacker over validation features plus the three base probabilities
/// (columns of base_probs in the order rf, gbm, mlp), each passed through
/// params.link.
StackerModel train_stacker(const LabeledData& validation, const FeatureMatrix& base_probs,
                           const StackerParams& params = {});

/// Three base learners combined by the logistic stacker.
class EnsembleModel : public ProbabilityModel {
 public:
  EnsembleModel(ForestModel rf, GbmModel gbm, MlpModel mlp, StackerModel stacker,
                ProbabilityLink link = ProbabilityLink::Logit);

  ModelType type() const override { return ModelType::Ensemble; }
  const std::vector<std::string>& feature_names() const override { return rf_.feature_names(); }
  double predict_proba(std::span<const double> x) const override;
  std::array<double, 3> base_probabilities(std::span<const double> x) const;
  ParamBlock parameters() const override { return {{"probability_link", static_cast<double>(link_)}}; }
  void save_payload(bin::Writer& w) const override;
  static EnsembleModel load(const std::map<std::string, double>& params, const std::vector<std::string>& names,
                            bin::Reader& r);

  const ForestModel& forest() const { return rf_; }
  const GbmModel& gbm() const { return gbm_; }
  const MlpModel& mlp() const { return mlp_; }
  const StackerModel& stacker() const { return stacker_; }
  ProbabilityLink link() const { return link_; }

 private:
  ForestModel rf_;
  GbmModel gbm_;
  MlpModel mlp_;
  StackerModel stacker_;
  ProbabilityLink link_ = ProbabilityLink::Logit;
};

/// Base-model probabilities for each row of x (n x 3).
FeatureMatrix base_probability_matrix(const ForestModel& rf, const GbmModel& gbm, const MlpModel& mlp,
                                      const FeatureMatrix& x);

}  // namespace shrubmap
