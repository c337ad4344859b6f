#include <cmath>

#include "doctest.h"
#include "shrubmap/error.hpp"
#include "shrubmap/forest.hpp"
#include "shrubmap/metrics.hpp"
#include "shrubmap/parallel.hpp"
#include "shrubmap/random.hpp"
#include "support/oracles.hpp"

using namespace shrubmap;

namespace {

/// Label is 1 when a noisy linear score of the features is positive.
/// Features are rounded to `grid` steps so that ties between values occur.
LabeledData noisy_linear(std::size_t n, std::size_t d, double noise, std::uint64_t seed, double grid = 0.0) {
  Rng rng(seed);
  LabeledData data;
  data.x = FeatureMatrix(n, d);
  for (std::size_t j = 0; j < d; ++j) data.feature_names.push_back("F" + std::to_string(j));
  for (std::size_t i = 0; i < n; ++i) {
    double score = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double v = rng.normal();
      if (grid > 0) v = std::round(v / grid) * grid;
      data.x(i, j) = v;
      score += (j % 2 ? -0.5 : 1.0) * v;
    }
    data.y.push_back(score + noise * rng.normal() > 0 ? 1 : 0);
  }
  return data;
}

std::vector<double> predictions(const ProbabilityModel& m, const LabeledData& d) {
  return m.predict_batch(d.x);
}

}  // namespace

TEST_SUITE("forest") {
  TEST_CASE("trees equal an independent grower following the same protocol") {
    const auto data = noisy_linear(200, 2, 0.5, 1, 0.25);
    ForestParams p;
    p.n_trees = 10;
    p.bootstrap_fraction = 0.5;
    p.min_node = 3;
    p.features_per_split = 1;
    const auto model = train_forest(data, p, 77);
    const auto ref = oracle::reference_forest(data, p, 77);
    REQUIRE(model.trees().size() == ref.size());
    for (std::size_t t = 0; t < ref.size(); ++t) CHECK(model.trees()[t] == ref[t]);

    const auto data3 = noisy_linear(300, 4, 1.0, 2, 0.1);
    p.features_per_split = 2;
    p.bootstrap_fraction = 0.2;
    p.min_node = 6;
    const auto m3 = train_forest(data3, p, 5);
    const auto r3 = oracle::reference_forest(data3, p, 5);
    for (std::size_t t = 0; t < r3.size(); ++t) CHECK(m3.trees()[t] == r3[t]);
  }

  TEST_CASE("growth is independent of the worker count") {
    const auto data = noisy_linear(400, 3, 0.5, 3);
    ForestParams p;
    p.n_trees = 24;
    set_worker_count(1);
    const auto a = train_forest(data, p, 9);
    set_worker_count(5);
    const auto b = train_forest(data, p, 9);
    set_worker_count(0);
    CHECK(a.trees() == b.trees());
    CHECK(encode_model(a) == encode_model(b));
  }

  TEST_CASE("separable data is ranked perfectly") {
    const auto data = noisy_linear(300, 1, 0.0, 4);
    ForestParams p;
    p.n_trees = 50;
    p.bootstrap_fraction = 0.5;
    p.min_node = 1;
    const auto model = train_forest(data, p, 1);
    CHECK(roc_auc(data.y, predictions(model, data)) == 1.0);
  }

  TEST_CASE("leaf values are positive fractions") {
    const auto data = noisy_linear(250, 2, 1.0, 5);
    ForestParams p;
    p.n_trees = 5;
    p.min_node = 4;
    p.bootstrap_fraction = 1.0;
    const auto model = train_forest(data, p, 2);
    for (const auto& tree : model.trees())
      for (const auto& node : tree.nodes) {
        if (!node.is_leaf()) continue;
        CHECK(node.value >= 0.0);
        CHECK(node.value <= 1.0);
      }
  }

  TEST_CASE("unanimous training labels give probability one") {
    auto data = noisy_linear(50, 2, 0.0, 6);
    for (auto& y : data.y) y = 1;
    ForestParams p;
    p.n_trees = 7;
    const auto model = train_forest(data, p, 3);
    for (double v : predictions(model, data)) CHECK(v == 1.0);
    for (const auto& tree : model.trees()) CHECK(tree.nodes.size() == 1);
  }

  TEST_CASE("prediction is the mean of tree leaf values") {
    const auto data = noisy_linear(200, 3, 0.8, 7);
    ForestParams p;
    p.n_trees = 13;
    const auto model = train_forest(data, p, 4);
    for (std::size_t i = 0; i < 20; ++i) {
      double sum = 0.0;
      for (const auto& t : model.trees()) sum += t.predict(data.x.row(i));
      CHECK(model.predict_proba(data.x.row(i)) == doctest::Approx(sum / 13.0).epsilon(1e-12));
    }
  }

  TEST_CASE("model file round trip and dimension checks") {
    const auto data = noisy_linear(150, 2, 0.5, 8);
    ForestParams p;
    p.n_trees = 6;
    const auto model = train_forest(data, p, 6);
    const auto bytes = encode_model(model);
    const auto back = decode_model(bytes);
    REQUIRE(back->type() == ModelType::Forest);
    CHECK(back->feature_names() == data.feature_names);
    CHECK(back->predict_batch(data.x) == model.predict_batch(data.x));
    CHECK(encode_model(*back) == bytes);
    const std::vector<double> wrong{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(model.predict_proba(wrong), DimensionError);
    auto cut = bytes;
    cut.resize(cut.size() - 3);
    CHECK_THROWS_AS(decode_model(cut), TruncationError);
  }

  TEST_CASE("invalid parameters") {
    const auto data = noisy_linear(20, 2, 0.5, 9);
    ForestParams p;
    p.n_trees = 0;
    CHECK_THROWS_AS(train_forest(data, p, 1), ParameterError);
    p = ForestParams{};
    p.min_node = 0;
    CHECK_THROWS_AS(train_forest(data, p, 1), ParameterError);
  }
}
