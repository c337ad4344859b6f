#include "shrubmap/stacker.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "shrubmap/error.hpp"
#include "shrubmap/log.hpp"
#include "shrubmap/metrics.hpp"
#include "shrubmap/parallel.hpp"

namespace shrubmap {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Separation symptoms of an unpenalized fit on standardized inputs.
constexpr double kMaxCoefficient = 30.0;
constexpr double kPerfectFitLoss = 1e-6;

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

struct Fit {
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  bool converged = false;
  bool singular = false;
  double loss = 0.0;
};

/// Penalized mean log-loss: mean(softplus(eta) - y*eta) + ridge/(2n) * |beta_1..|^2.
double objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta, double ridge) {
  const Eigen::VectorXd eta = X * beta;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) sum += softplus(eta(i)) - y(i) * eta(i);
  const double penalty = 0.5 * ridge * beta.tail(beta.size() - 1).squaredNorm();
  return (sum + penalty) / static_cast<double>(X.rows());
}

Fit irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double ridge, const StackerParams& params) {
  const auto p = X.cols();
  Fit fit;
  fit.beta = Eigen::VectorXd::Zero(p);
  double loss = objective(X, y, fit.beta, ridge);
  Eigen::MatrixXd H(p, p);
  for (std::size_t it = 0; it < params.max_iterations; ++it) {
    const Eigen::VectorXd eta = X * fit.beta;
    Eigen::VectorXd mu(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      mu(i) = sigmoid(eta(i));
      w(i) = mu(i) * (1.0 - mu(i));
    }
    H = X.transpose() * w.asDiagonal() * X;
    Eigen::VectorXd g = X.transpose() * (y - mu);
    for (Eigen::Index j = 1; j < p; ++j) {
      H(j, j) += ridge;
      g(j) -= ridge * fit.beta(j);
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 1e-12 * H.diagonal().maxCoeff()).all()) {
      fit.singular = true;
      break;
    }
    const Eigen::VectorXd step = ldlt.solve(g);
    double t = 1.0;
    Eigen::VectorXd next = fit.beta + step;
    double next_loss = objective(X, y, next, ridge);
    for (int halving = 0; halving < 40 && !(next_loss <= loss); ++halving) {
      t *= 0.5;
      next = fit.beta + t * step;
      next_loss = objective(X, y, next, ridge);
    }
    if (!std::isfinite(next_loss)) break;
    const double change = std::abs(loss - next_loss);
    if (next_loss <= loss) {
      fit.beta = next;
      loss = next_loss;
    }
    if (change < params.tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.loss = loss;
  if (!fit.singular) {
    const Eigen::VectorXd eta = X * fit.beta;
    Eigen::VectorXd w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double m = sigmoid(eta(i));
      w(i) = m * (1.0 - m);
    }
    H = X.transpose() * w.asDiagonal() * X;
    for (Eigen::Index j = 1; j < p; ++j) H(j, j) += ridge;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    fit.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  }
  return fit;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

double link_probability(double p, ProbabilityLink link) {
  if (link == ProbabilityLink::Identity) return p;
  const double q = std::clamp(p, kLinkClamp, 1.0 - kLinkClamp);
  return std::log(q / (1.0 - q));
}

ProbabilityLink parse_probability_link(const std::string& text) {
  if (text == "identity") return ProbabilityLink::Identity;
  if (text == "logit") return ProbabilityLink::Logit;
  throw ParameterError("unknown probability link '" + text + "' (expected identity or logit)");
}

std::string probability_link_name(ProbabilityLink link) {
  return link == ProbabilityLink::Identity ? "identity" : "logit";
}

StackerModel::StackerModel(std::vector<std::string> names, FeatureEncoder encoder, std::vector<double> coefficients,
                           std::vector<double> standard_errors, double ridge)
    : names_(std::move(names)),
      encoder_(std::move(encoder)),
      coefficients_(std::move(coefficients)),
      standard_errors_(std::move(standard_errors)),
      ridge_(ridge) {
  require_dimension(encoder_.input_dim(), names_.size(), "stacker encoder");
  if (coefficients_.size() != encoder_.output_dim() + 1)
    throw DimensionError("stacker needs " + std::to_string(encoder_.output_dim() + 1) + " coefficients");
}

double StackerModel::linear_score(std::span<const double> x) const {
  require_dimension(x.size(), names_.size(), "stacker prediction");
  std::vector<double> encoded(encoder_.output_dim());
  encoder_.transform(x, encoded);
  double z = coefficients_[0];
  for (std::size_t j = 0; j < encoded.size(); ++j) z += coefficients_[j + 1] * encoded[j];
  return z;
}

double StackerModel::predict_proba(std::span<const double> x) const { return sigmoid(linear_score(x)); }

ParamBlock StackerModel::parameters() const {
  return {{"coefficients", static_cast<double>(coefficients_.size())}, {"ridge", ridge_}};
}

void StackerModel::save_payload(bin::Writer& w) const {
  encoder_.save(w);
  w.u32(static_cast<std::uint32_t>(coefficients_.size()));
  for (double c : coefficients_) w.f64(c);
  w.u32(static_cast<std::uint32_t>(standard_errors_.size()));
  for (double s : standard_errors_) w.f64(s);
}

StackerModel StackerModel::load(const std::map<std::string, double>& params, std::vector<std::string> names,
                                bin::Reader& r) {
  const double ridge = param_value(params, "ridge");
  auto encoder = FeatureEncoder::load(r);
  const auto nc = r.u32();
  r.need(static_cast<std::size_t>(nc) * 8);
  std::vector<double> coef(nc);
  for (auto& c : coef) c = r.f64();
  const auto ns = r.u32();
  r.need(static_cast<std::size_t>(ns) * 8);
  std::vector<double> se(ns);
  for (auto& s : se) s = r.f64();
  if (encoder.input_dim() != names.size() || nc != encoder.output_dim() + 1)
    throw FormatError("stacker payload does not match its feature names");
  return StackerModel(std::move(names), std::move(encoder), std::move(coef), std::move(se), ridge);
}

StackerModel train_logistic(const LabeledData& inputs, const StackerParams& params) {
  const std::size_t n = inputs.x.rows;
  if (n == 0) throw ParameterError("cannot fit a logistic model on zero records");
  const auto encoder = FeatureEncoder::fit(inputs.x, inputs.feature_names, FeatureEncoder::OneHot::DropFirst);
  const FeatureMatrix z = encoder.transform(inputs.x);
  const auto p = static_cast<Eigen::Index>(z.cols + 1);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), p);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    X(r, 0) = 1.0;
    for (std::size_t j = 0; j < z.cols; ++j) X(r, static_cast<Eigen::Index>(j + 1)) = z(i, j);
    y(r) = inputs.y[i];
  }

  Fit fit = irls(X, y, 0.0, params);
  // separation: diverging coefficients, a (near) perfect fit, or a singular system
  std::string reason;
  if (fit.singular) reason = "singular information matrix";
  else if (!fit.converged) reason = "no convergence";
  else if (fit.beta.cwiseAbs().maxCoeff() > kMaxCoefficient) reason = "diverging coefficients";
  else if (fit.loss < kPerfectFitLoss) reason = "perfect fit";
  double ridge = 0.0;
  if (!reason.empty()) {
    ridge = params.ridge_fallback;
    log_notice("notice: logistic stacker data look separable (" + reason + "); refitting with ridge " +
               format_number(ridge));
    fit = irls(X, y, ridge, params);
    if (fit.singular) throw DivergenceError("logistic stacker system is singular even with ridge");
  }
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j)
    if (!std::isfinite(fit.beta(j))) throw DivergenceError("logistic stacker coefficients are not finite");
  return StackerModel(inputs.feature_names, encoder, to_vector(fit.beta), to_vector(fit.se), ridge);
}

StackerModel train_stacker(const LabeledData& validation, const FeatureMatrix& base_probs,
                           const StackerParams& params) {
  if (base_probs.rows != validation.x.rows || base_probs.cols != 3)
    throw DimensionError("stacker needs three base probabilities per validation record");
  LabeledData inputs;
  inputs.y = validation.y;
  inputs.feature_names = validation.feature_names;
  inputs.feature_names.insert(inputs.feature_names.end(), kBaseProbabilityNames.begin(), kBaseProbabilityNames.end());
  inputs.x = FeatureMatrix(validation.x.rows, validation.x.cols + 3);
  for (std::size_t i = 0; i < validation.x.rows; ++i) {
    auto row = inputs.x.row(i);
    std::copy(validation.x.row(i).begin(), validation.x.row(i).end(), row.begin());
    for (std::size_t k = 0; k < 3; ++k) row[validation.x.cols + k] = link_probability(base_probs(i, k), params.link);
  }
  return train_logistic(inputs, params);
}

EnsembleModel::EnsembleModel(ForestModel rf, GbmModel gbm, MlpModel mlp, StackerModel stacker, ProbabilityLink link)
    : rf_(std::move(rf)), gbm_(std::move(gbm)), mlp_(std::move(mlp)), stacker_(std::move(stacker)), link_(link) {
  const auto& names = rf_.feature_names();
  if (gbm_.feature_names() != names || mlp_.feature_names() != names)
    throw DimensionError("ensemble base models were trained on different feature lists");
  if (stacker_.feature_names().size() != names.size() + 3)
    throw DimensionError("stacker inputs do not match the base models' features");
}

std::array<double, 3> EnsembleModel::base_probabilities(std::span<const double> x) const {
  return {rf_.predict_proba(x), gbm_.predict_proba(x), mlp_.predict_proba(x)};
}

double EnsembleModel::predict_proba(std::span<const double> x) const {
  require_dimension(x.size(), feature_names().size(), "ensemble prediction");
  const auto base = base_probabilities(x);
  std::vector<double> inputs(x.begin(), x.end());
  for (double p : base) inputs.push_back(link_probability(p, link_));
  return stacker_.predict_proba(inputs);
}

FeatureMatrix base_probability_matrix(const ForestModel& rf, const GbmModel& gbm, const MlpModel& mlp,
                                      const FeatureMatrix& x) {
  FeatureMatrix out(x.rows, 3);
  parallel_for(x.rows, [&](std::size_t i) {
    out(i, 0) = rf.predict_proba(x.row(i));
    out(i, 1) = gbm.predict_proba(x.row(i));
    out(i, 2) = mlp.predict_proba(x.row(i));
  });
  return out;
}

}  // namespace shrubmap
