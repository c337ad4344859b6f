#include "shrubmap/mlp.hpp"

#include <cmath>
#include <numeric>

#include "shrubmap/error.hpp"
#include "shrubmap/metrics.hpp"
#include "shrubmap/random.hpp"

namespace shrubmap {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

Eigen::MatrixXd to_columns(const FeatureMatrix& x, const std::vector<std::size_t>& rows, std::size_t begin,
                           std::size_t end) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(x.cols), static_cast<Eigen::Index>(end - begin));
  for (std::size_t k = begin; k < end; ++k)
    for (std::size_t j = 0; j < x.cols; ++j)
      out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k - begin)) = x(rows[k], j);
  return out;
}

void save_matrix(bin::Writer& w, const Eigen::MatrixXd& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.f64(m(i, j));
}

Eigen::MatrixXd load_matrix(bin::Reader& r) {
  const auto rows = r.u32(), cols = r.u32();
  r.need(static_cast<std::size_t>(rows) * cols * 8);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
  return m;
}

}  // namespace

MlpNetwork MlpNetwork::he_uniform(std::size_t inputs, const std::vector<std::size_t>& hidden, double dropout,
                                  Rng& rng) {
  std::vector<DenseLayer> layers;
  std::size_t fan_in = inputs;
  auto widths = hidden;
  widths.push_back(1);
  for (auto width : widths) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    DenseLayer layer{Eigen::MatrixXd(width, fan_in), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width))};
    for (Eigen::Index i = 0; i < layer.w.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.w.cols(); ++j) layer.w(i, j) = rng.uniform(-limit, limit);
    layers.push_back(std::move(layer));
    fan_in = width;
  }
  return MlpNetwork(std::move(layers), dropout);
}

double MlpNetwork::logit(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::VectorXd z = layers_[l].w * a + layers_[l].b;
    if (l + 1 < layers_.size()) a = z.cwiseMax(0.0);
    else return z(0);
  }
  throw ParameterError("network has no layers");
}

Eigen::RowVectorXd MlpNetwork::logits(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].w * a;
    z.colwise() += layers_[l].b;
    if (l + 1 < layers_.size()) a = z.cwiseMax(0.0);
    else return z.row(0);
  }
  throw ParameterError("network has no layers");
}

MlpNetwork::Gradient MlpNetwork::loss_and_gradient(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                                   const Eigen::Ref<const Eigen::RowVectorXd>& y,
                                                   Rng* dropout_rng) const {
  const std::size_t L = layers_.size();
  const auto batch = x.cols();
  std::vector<Eigen::MatrixXd> acts;  // acts[l] is the input to layer l
  std::vector<Eigen::MatrixXd> pre;   // pre-activations of hidden layers
  Eigen::MatrixXd mask;               // dropout mask on the last hidden layer
  acts.emplace_back(x);
  Eigen::RowVectorXd out;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = layers_[l].w * acts.back();
    z.colwise() += layers_[l].b;
    if (l + 1 == L) {
      out = z.row(0);
      break;
    }
    Eigen::MatrixXd a = z.cwiseMax(0.0);
    pre.push_back(std::move(z));
    if (l + 2 == L && dropout_rng && dropout_ > 0.0) {
      mask.resize(a.rows(), a.cols());
      const double keep_scale = 1.0 / (1.0 - dropout_);
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i) mask(i, j) = dropout_rng->uniform() < dropout_ ? 0.0 : keep_scale;
      a = a.cwiseProduct(mask);
    }
    acts.push_back(std::move(a));
  }

  Gradient g;
  g.grads.resize(L);
  double loss = 0.0;
  Eigen::MatrixXd delta(1, batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    loss += softplus(out(j)) - y(j) * out(j);
    delta(0, j) = (sigmoid(out(j)) - y(j)) / static_cast<double>(batch);
  }
  g.loss = loss / static_cast<double>(batch);

  for (std::size_t l = L; l-- > 0;) {
    g.grads[l].w = delta * acts[l].transpose();
    g.grads[l].b = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = layers_[l].w.transpose() * delta;
    if (l + 1 == L && mask.size() > 0) back = back.cwiseProduct(mask);
    delta = back.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return g;
}

MlpModel::MlpModel(std::vector<std::string> names, MlpParams params, FeatureEncoder encoder, MlpNetwork network,
                   std::size_t best_epoch, std::vector<double> validation_pr_auc)
    : names_(std::move(names)),
      params_(std::move(params)),
      encoder_(std::move(encoder)),
      network_(std::move(network)),
      best_epoch_(best_epoch),
      history_(std::move(validation_pr_auc)) {}

double MlpModel::predict_proba(std::span<const double> x) const {
  require_dimension(x.size(), names_.size(), "mlp prediction");
  Eigen::VectorXd encoded(static_cast<Eigen::Index>(encoder_.output_dim()));
  encoder_.transform(x, std::span<double>(encoded.data(), static_cast<std::size_t>(encoded.size())));
  return sigmoid(network_.logit(encoded));
}

ParamBlock MlpModel::parameters() const {
  ParamBlock p;
  p.emplace_back("hidden_layers", static_cast<double>(params_.hidden.size()));
  for (std::size_t i = 0; i < params_.hidden.size(); ++i)
    p.emplace_back("hidden_" + std::to_string(i), static_cast<double>(params_.hidden[i]));
  p.emplace_back("dropout", params_.dropout);
  p.emplace_back("epochs", static_cast<double>(params_.epochs));
  p.emplace_back("batch_size", static_cast<double>(params_.batch_size));
  p.emplace_back("learning_rate", params_.learning_rate);
  p.emplace_back("momentum", params_.momentum);
  p.emplace_back("best_epoch", static_cast<double>(best_epoch_));
  return p;
}

void MlpModel::save_payload(bin::Writer& w) const {
  encoder_.save(w);
  w.u32(static_cast<std::uint32_t>(network_.layers().size()));
  for (const auto& layer : network_.layers()) {
    save_matrix(w, layer.w);
    save_matrix(w, layer.b);
  }
  w.u32(static_cast<std::uint32_t>(history_.size()));
  for (double v : history_) w.f64(v);
}

MlpModel MlpModel::load(const std::map<std::string, double>& params, std::vector<std::string> names,
                        bin::Reader& r) {
  MlpParams p;
  p.hidden.clear();
  const auto n_hidden = static_cast<std::size_t>(param_value(params, "hidden_layers"));
  for (std::size_t i = 0; i < n_hidden; ++i)
    p.hidden.push_back(static_cast<std::size_t>(param_value(params, "hidden_" + std::to_string(i))));
  p.dropout = param_value(params, "dropout");
  p.epochs = static_cast<std::size_t>(param_value(params, "epochs"));
  p.batch_size = static_cast<std::size_t>(param_value(params, "batch_size"));
  p.learning_rate = param_value(params, "learning_rate");
  p.momentum = param_value(params, "momentum");
  const auto best = static_cast<std::size_t>(param_value(params, "best_epoch"));

  auto encoder = FeatureEncoder::load(r);
  if (encoder.input_dim() != names.size()) throw FormatError("mlp encoder does not match feature names");
  const auto n_layers = r.u32();
  if (n_layers != n_hidden + 1) throw FormatError("mlp layer count does not match parameter block");
  std::vector<DenseLayer> layers;
  Eigen::Index expected_in = static_cast<Eigen::Index>(encoder.output_dim());
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    DenseLayer layer;
    layer.w = load_matrix(r);
    Eigen::MatrixXd b = load_matrix(r);
    if (layer.w.cols() != expected_in || b.rows() != layer.w.rows() || b.cols() != 1)
      throw FormatError("mlp layer shapes are inconsistent");
    layer.b = b.col(0);
    expected_in = layer.w.rows();
    layers.push_back(std::move(layer));
  }
  if (expected_in != 1) throw FormatError("mlp output layer must have one unit");
  const auto nh = r.u32();
  r.need(static_cast<std::size_t>(nh) * 8);
  std::vector<double> history;
  for (std::uint32_t i = 0; i < nh; ++i) history.push_back(r.f64());
  return MlpModel(std::move(names), p, std::move(encoder), MlpNetwork(std::move(layers), p.dropout), best,
                  std::move(history));
}

MlpModel train_mlp(const LabeledData& train, const LabeledData& validation, const MlpParams& params,
                   std::uint64_t seed, const MlpHooks& hooks) {
  if (train.x.rows == 0) throw ParameterError("cannot train an mlp on an empty training set");
  if (validation.x.rows == 0) throw ParameterError("mlp training needs a non-empty validation set");
  require_dimension(validation.x.cols, train.x.cols, "mlp validation set");
  if (params.epochs == 0) throw ParameterError("mlp epochs must be positive");
  if (params.batch_size == 0) throw ParameterError("mlp batch_size must be positive");
  if (!(params.dropout >= 0.0 && params.dropout < 1.0)) throw ParameterError("mlp dropout must lie in [0, 1)");
  if (!(params.learning_rate > 0.0)) throw ParameterError("mlp learning_rate must be positive");
  if (params.momentum < 0.0 || params.momentum >= 1.0) throw ParameterError("mlp momentum must lie in [0, 1)");

  const auto encoder = FeatureEncoder::fit(train.x, train.feature_names, FeatureEncoder::OneHot::Full);
  const FeatureMatrix xt = encoder.transform(train.x);
  const FeatureMatrix xv = encoder.transform(validation.x);

  Rng init_rng(derive_seed(seed, 1));
  Rng order_rng(derive_seed(seed, 2));
  Rng dropout_rng(derive_seed(seed, 3));
  MlpNetwork net = MlpNetwork::he_uniform(encoder.output_dim(), params.hidden, params.dropout, init_rng);

  std::vector<DenseLayer> velocity;
  for (const auto& layer : net.layers())
    velocity.push_back({Eigen::MatrixXd::Zero(layer.w.rows(), layer.w.cols()), Eigen::VectorXd::Zero(layer.b.size())});

  std::vector<std::size_t> all_val(xv.rows);
  std::iota(all_val.begin(), all_val.end(), std::size_t{0});
  const Eigen::MatrixXd val_cols = to_columns(xv, all_val, 0, xv.rows);

  std::vector<std::size_t> order(xt.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  MlpNetwork best = net;
  std::size_t best_epoch = 0;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::vector<double> history;

  for (std::size_t epoch = 1; epoch <= params.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += params.batch_size) {
      const std::size_t end = std::min(order.size(), begin + params.batch_size);
      const Eigen::MatrixXd xb = to_columns(xt, order, begin, end);
      Eigen::RowVectorXd yb(static_cast<Eigen::Index>(end - begin));
      for (std::size_t k = begin; k < end; ++k) yb(static_cast<Eigen::Index>(k - begin)) = train.y[order[k]];
      const auto g = net.loss_and_gradient(xb, yb, &dropout_rng);
      if (!std::isfinite(g.loss)) throw DivergenceError("mlp loss became non-finite at epoch " + std::to_string(epoch));
      loss_sum += g.loss * static_cast<double>(end - begin);
      for (std::size_t l = 0; l < velocity.size(); ++l) {
        velocity[l].w = params.momentum * velocity[l].w - params.learning_rate * g.grads[l].w;
        velocity[l].b = params.momentum * velocity[l].b - params.learning_rate * g.grads[l].b;
        net.layers()[l].w += velocity[l].w;
        net.layers()[l].b += velocity[l].b;
      }
    }
    if (!std::isfinite(loss_sum)) throw DivergenceError("mlp loss became non-finite at epoch " + std::to_string(epoch));

    double metric;
    if (hooks.epoch_metric) {
      metric = hooks.epoch_metric(epoch, net);
    } else {
      const Eigen::RowVectorXd z = net.logits(val_cols);
      std::vector<double> probs(static_cast<std::size_t>(z.size()));
      for (Eigen::Index j = 0; j < z.size(); ++j) probs[static_cast<std::size_t>(j)] = sigmoid(z(j));
      for (double p : probs)
        if (!std::isfinite(p))
          throw DivergenceError("mlp validation output became non-finite at epoch " + std::to_string(epoch));
      metric = pr_auc(validation.y, probs);
    }
    history.push_back(metric);
    if (metric > best_metric) {
      best_metric = metric;
      best_epoch = epoch;
      best = net;
    }
  }
  return MlpModel(train.feature_names, params, encoder, std::move(best), best_epoch, std::move(history));
}

}  // namespace shrubmap
