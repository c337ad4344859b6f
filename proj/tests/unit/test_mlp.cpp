#include <cmath>

#include "doctest.h"
#include "shrubmap/error.hpp"
#include "shrubmap/metrics.hpp"
#include "shrubmap/mlp.hpp"
#include "shrubmap/random.hpp"
#include "support/oracles.hpp"

using namespace shrubmap;

namespace {

struct Fixture {
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  Eigen::MatrixXd x;
  Eigen::RowVectorXd y;
};

Fixture twenty_samples(std::size_t inputs, std::uint64_t seed) {
  Rng rng(seed);
  Fixture f;
  f.x.resize(static_cast<Eigen::Index>(inputs), 20);
  f.y.resize(20);
  for (Eigen::Index j = 0; j < 20; ++j) {
    std::vector<double> col;
    for (std::size_t i = 0; i < inputs; ++i) {
      col.push_back(rng.normal());
      f.x(static_cast<Eigen::Index>(i), j) = col.back();
    }
    f.xs.push_back(col);
    f.ys.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
    f.y(j) = f.ys.back();
  }
  return f;
}

LabeledData separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  LabeledData d;
  d.x = FeatureMatrix(n, 3);
  d.feature_names = {"A", "B", "C"};
  for (std::size_t i = 0; i < n; ++i) {
    const bool y = rng.bernoulli(0.5);
    d.y.push_back(y);
    d.x(i, 0) = rng.normal() + (y ? 2.0 : -2.0);
    d.x(i, 1) = 100.0 + 10.0 * rng.normal();  // unscaled nuisance
    d.x(i, 2) = rng.normal();
  }
  return d;
}

MlpParams small_params(std::size_t epochs) {
  MlpParams p;
  p.hidden = {8, 4};
  p.epochs = epochs;
  p.batch_size = 16;
  p.learning_rate = 0.05;
  return p;
}

}  // namespace

TEST_SUITE("mlp") {
  TEST_CASE("backpropagated gradients match central finite differences") {
    const auto f = twenty_samples(4, 1);
    Rng rng(2);
    auto net = MlpNetwork::he_uniform(4, {6, 5, 3}, 0.0, rng);
    for (auto& layer : net.layers()) layer.b.setConstant(0.05);  // keep ReLUs off their kinks
    const auto g = net.loss_and_gradient(f.x, f.y, nullptr);
    CHECK(g.loss == doctest::Approx(oracle::network_loss(net, f.xs, f.ys)).epsilon(1e-12));

    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      auto probe = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + h;
        const double up = oracle::network_loss(net, f.xs, f.ys);
        param = saved - h;
        const double down = oracle::network_loss(net, f.xs, f.ys);
        param = saved;
        const double numeric = (up - down) / (2 * h);
        const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(analytic - numeric) / scale);
      };
      auto& layer = net.layers()[l];
      for (Eigen::Index i = 0; i < layer.w.rows(); ++i)
        for (Eigen::Index j = 0; j < layer.w.cols(); ++j) probe(layer.w(i, j), g.grads[l].w(i, j));
      for (Eigen::Index i = 0; i < layer.b.size(); ++i) probe(layer.b(i), g.grads[l].b(i));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("dropout masks come from the given generator") {
    const auto f = twenty_samples(3, 3);
    Rng init(4);
    const auto net = MlpNetwork::he_uniform(3, {10}, 0.5, init);
    Rng a(9), b(9), c(10);
    const auto ga = net.loss_and_gradient(f.x, f.y, &a);
    const auto gb = net.loss_and_gradient(f.x, f.y, &b);
    const auto gc = net.loss_and_gradient(f.x, f.y, &c);
    CHECK(ga.loss == gb.loss);
    CHECK(ga.loss != gc.loss);
    // without a generator, dropout is off
    CHECK(net.loss_and_gradient(f.x, f.y, nullptr).loss ==
          doctest::Approx(oracle::network_loss(net, f.xs, f.ys)).epsilon(1e-12));
  }

  TEST_CASE("zero weights output the sigmoid of the final bias") {
    Rng rng(5);
    auto net = MlpNetwork::he_uniform(3, {4, 2}, 0.0, rng);
    for (auto& layer : net.layers()) {
      layer.w.setZero();
      layer.b.setZero();
    }
    net.layers().back().b(0) = 0.7;
    const Eigen::Vector3d x(1.0, -2.0, 3.0);
    CHECK(net.logit(x) == 0.7);
  }

  TEST_CASE("He-uniform layer shapes and limits") {
    Rng rng(6);
    const auto net = MlpNetwork::he_uniform(10, {256, 128, 64, 32, 16}, 0.2, rng);
    const std::vector<std::size_t> widths{256, 128, 64, 32, 16, 1};
    REQUIRE(net.layers().size() == widths.size());
    std::size_t fan_in = 10;
    for (std::size_t l = 0; l < widths.size(); ++l) {
      const auto& layer = net.layers()[l];
      CHECK(static_cast<std::size_t>(layer.w.rows()) == widths[l]);
      CHECK(static_cast<std::size_t>(layer.w.cols()) == fan_in);
      CHECK(layer.w.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / fan_in));
      CHECK(layer.b.isZero());
      fan_in = widths[l];
    }
    CHECK(net.input_dim() == 10);
  }

  TEST_CASE("the epoch with the best validation metric is returned") {
    const auto train = separable(200, 7);
    const auto val = separable(100, 8);
    std::vector<MlpNetwork> seen;
    MlpHooks hooks;
    hooks.epoch_metric = [&](std::size_t epoch, const MlpNetwork& net) {
      seen.push_back(net);
      return epoch == 3 ? 0.9 : 0.5;
    };
    const auto model = train_mlp(train, val, small_params(10), 1, hooks);
    REQUIRE(seen.size() == 10);
    CHECK(model.best_epoch() == 3);
    for (std::size_t l = 0; l < seen[2].layers().size(); ++l) {
      CHECK(model.network().layers()[l].w == seen[2].layers()[l].w);
      CHECK(model.network().layers()[l].b == seen[2].layers()[l].b);
    }
    REQUIRE(model.validation_history().size() == 10);
    CHECK(model.validation_history()[2] == 0.9);
  }

  TEST_CASE("metric ties keep the earliest epoch") {
    MlpHooks hooks;
    hooks.epoch_metric = [](std::size_t, const MlpNetwork&) { return 0.5; };
    const auto model = train_mlp(separable(60, 9), separable(30, 10), small_params(4), 1, hooks);
    CHECK(model.best_epoch() == 1);
  }

  TEST_CASE("training learns separable data and is seed-deterministic") {
    const auto train = separable(400, 11);
    const auto val = separable(200, 12);
    const auto a = train_mlp(train, val, small_params(15), 3);
    const auto b = train_mlp(train, val, small_params(15), 3);
    CHECK(roc_auc(val.y, a.predict_batch(val.x)) > 0.98);
    CHECK(encode_model(a) == encode_model(b));
  }

  TEST_CASE("model file round trip and dimension checks") {
    const auto train = separable(100, 13);
    const auto model = train_mlp(train, separable(50, 14), small_params(3), 5);
    const auto bytes = encode_model(model);
    const auto back = decode_model(bytes);
    REQUIRE(back->type() == ModelType::Mlp);
    CHECK(back->predict_batch(train.x) == model.predict_batch(train.x));
    CHECK(encode_model(*back) == bytes);
    const std::vector<double> wrong{1.0};
    CHECK_THROWS_AS(model.predict_proba(wrong), DimensionError);
  }

  TEST_CASE("invalid parameters") {
    const auto d = separable(20, 15);
    auto p = small_params(2);
    p.dropout = 1.0;
    CHECK_THROWS_AS(train_mlp(d, d, p, 1), ParameterError);
    p = small_params(0);
    CHECK_THROWS_AS(train_mlp(d, d, p, 1), ParameterError);
    CHECK_THROWS_AS(train_mlp(d, LabeledData{}, small_params(2), 1), ParameterError);
  }
}
