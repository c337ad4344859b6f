#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "shrubmap/error.hpp"
#include "shrubmap/metrics.hpp"
#include "shrubmap/random.hpp"
#include "support/oracles.hpp"

using namespace shrubmap;

namespace {

/// Confusion table with exactly the given sensitivity and precision, both in
/// thousandths: tp = S*P, fn = (1000-S)*P, fp = S*(1000-P).
ConfusionCounts table_for(std::uint64_t sens_milli, std::uint64_t prec_milli) {
  ConfusionCounts c;
  c.tp = sens_milli * prec_milli;
  c.fn = (1000 - sens_milli) * prec_milli;
  c.fp = sens_milli * (1000 - prec_milli);
  c.tn = 500000;
  return c;
}

double specificity_at(const oracle::ScoreSet& s, double threshold) {
  const auto c = oracle::count_confusion(s.labels, s.probs, threshold);
  return static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("confusion counts and formulas match direct counting") {
    Rng rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
      const auto s = oracle::random_scores(rng, 1 + rng.below(200), rng.uniform(0.05, 0.95), trial % 3 ? 0 : 7);
      const double thr = rng.uniform();
      const auto c = confusion(s.labels, s.probs, thr);
      REQUIRE(c == oracle::count_confusion(s.labels, s.probs, thr));
      const auto m = metrics(c);
      const double tp = c.tp, fp = c.fp, tn = c.tn, fn = c.fn;
      if (c.tp + c.fn > 0) {
        REQUIRE(m.sensitivity);
        CHECK(*m.sensitivity == tp / (tp + fn));
      } else {
        CHECK_FALSE(m.sensitivity);
      }
      if (c.tn + c.fp > 0) {
        REQUIRE(m.specificity);
        CHECK(*m.specificity == tn / (tn + fp));
      } else {
        CHECK_FALSE(m.specificity);
      }
      if (c.tp + c.fp > 0) {
        REQUIRE(m.precision);
        CHECK(*m.precision == tp / (tp + fp));
      } else {
        CHECK_FALSE(m.precision);
      }
      if (c.tp > 0) {
        REQUIRE(m.f1);
        CHECK(*m.f1 == doctest::Approx(2 * tp / (2 * tp + fp + fn)).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("published F1 values follow from sensitivity and precision") {
    const struct {
      std::uint64_t sens, prec;
      double f1;
    } fixtures[] = {{842, 791, 0.816}, {514, 219, 0.307}, {247, 376, 0.298}};
    for (const auto& f : fixtures) {
      const auto m = metrics(table_for(f.sens, f.prec));
      CHECK(*m.sensitivity == doctest::Approx(f.sens / 1000.0).epsilon(1e-12));
      CHECK(*m.precision == doctest::Approx(f.prec / 1000.0).epsilon(1e-12));
      CHECK(std::abs(*m.f1 - f.f1) <= 0.001);
    }
  }

  TEST_CASE("probability equal to the threshold is positive") {
    const std::vector<std::uint8_t> y{1, 0};
    const std::vector<double> p{0.5, 0.5};
    const auto c = confusion(y, p, 0.5);
    CHECK(c.tp == 1);
    CHECK(c.fp == 1);
  }

  TEST_CASE("mismatched lengths are rejected") {
    const std::vector<std::uint8_t> y{1, 0, 1};
    const std::vector<double> p{0.5, 0.5};
    CHECK_THROWS_AS(confusion(y, p, 0.5), ParameterError);
    CHECK_THROWS_AS(roc_auc(y, p), ParameterError);
  }

  TEST_CASE("rank AUC equals the trapezoid, with and without ties") {
    Rng rng(202);
    for (int trial = 0; trial < 40; ++trial) {
      const auto s = oracle::random_scores(rng, 2000, rng.uniform(0.1, 0.9), trial % 2 ? 0 : 1 + rng.below(20));
      CHECK(std::abs(roc_auc(s.labels, s.probs) - oracle::trapezoid_auc(s.labels, s.probs)) < 1e-9);
    }
  }

  TEST_CASE("constant scores give 0.5, perfect ranking gives 1") {
    const std::vector<std::uint8_t> y{1, 0, 1, 0, 0};
    CHECK(roc_auc(y, std::vector<double>(5, 0.3)) == 0.5);
    CHECK(roc_auc(y, std::vector<double>{0.9, 0.1, 0.8, 0.2, 0.3}) == 1.0);
    CHECK(roc_auc(y, std::vector<double>{0.1, 0.9, 0.2, 0.8, 0.7}) == 0.0);
  }

  TEST_CASE("single-class AUC is undefined") {
    const std::vector<std::uint8_t> y{1, 1};
    const std::vector<double> p{0.2, 0.4};
    CHECK_THROWS_AS(roc_auc(y, p), ParameterError);
  }

  TEST_CASE("average precision") {
    const std::vector<std::uint8_t> y{1, 0, 1, 0};
    CHECK(pr_auc(y, std::vector<double>{0.9, 0.1, 0.8, 0.2}) == doctest::Approx(1.0));
    // ranking 1,0,1,0 -> precision 1 at recall 0.5, 2/3 at recall 1
    CHECK(pr_auc(y, std::vector<double>{0.9, 0.8, 0.7, 0.1}) == doctest::Approx(0.5 * 1.0 + 0.5 * 2.0 / 3.0));
  }

  TEST_CASE("thresholds equal exhaustive scans") {
    Rng rng(303);
    for (int trial = 0; trial < 60; ++trial) {
      const auto s = oracle::random_scores(rng, 10 + rng.below(1500), rng.uniform(0.1, 0.9),
                                           trial % 3 ? 0 : 1 + rng.below(30));
      CHECK(youden_threshold(s.labels, s.probs) == oracle::youden_scan(s.labels, s.probs));
      double previous = -std::numeric_limits<double>::infinity();
      for (double target : {0.5, 0.8, 0.9, 0.95, 0.99}) {
        const double t = specificity_threshold(s.labels, s.probs, target);
        CHECK(t == oracle::specificity_scan(s.labels, s.probs, target));
        CHECK(t >= previous);
        CHECK(specificity_at(s, t) >= target);
        previous = t;
      }
    }
  }

  TEST_CASE("Youden ties go to the higher threshold, +inf is a candidate") {
    // cuts at 0.3 (sens 1, spec 1/2) and 0.7 (sens 1/2, spec 1) tie at J = 1/2
    const std::vector<std::uint8_t> y{0, 1, 0, 1};
    CHECK(youden_threshold(y, std::vector<double>{0.1, 0.3, 0.5, 0.7}) == 0.7);
    // anti-correlated scores: predicting nothing beats every finite cut
    const std::vector<std::uint8_t> y2{1, 0};
    CHECK(std::isinf(youden_threshold(y2, std::vector<double>{0.1, 0.9})));
  }

  TEST_CASE("threshold set text round trip and names") {
    ThresholdSet t;
    t.youden = 0.4871;
    t.by_specificity = {{0.90, 0.61}, {0.95, 0.7}, {0.99, 0.912345678}};
    const auto named = t.named();
    REQUIRE(named.size() == 4);
    CHECK(named[0].first == "youden");
    CHECK(named[1].first == "spec90");
    CHECK(named[2].first == "spec95");
    CHECK(named[3].first == "spec99");
    const auto back = ThresholdSet::from_text(t.to_text());
    CHECK(back.youden == t.youden);
    CHECK(back.by_specificity == t.by_specificity);
    CHECK(back.to_text() == t.to_text());
    CHECK_THROWS_AS(ThresholdSet::from_text("youden=abc\n"), FormatError);
  }

  TEST_CASE("calibration uses the requested targets") {
    Rng rng(4);
    const auto s = oracle::random_scores(rng, 500, 0.5, 0);
    const auto t = calibrate_thresholds(s.labels, s.probs);
    CHECK(t.youden == youden_threshold(s.labels, s.probs));
    REQUIRE(t.by_specificity.size() == 3);
    for (const auto& [target, thr] : t.by_specificity)
      CHECK(thr == specificity_threshold(s.labels, s.probs, target));
  }

  TEST_CASE("patchwork AUC sample is seed-deterministic and ignores nodata") {
    const GridTransform g(0, 100, 1, 100, 100);
    Raster labels(g, DType::Boolean, kByteNodata), probs(g, DType::Float32, kFloatNodata);
    Rng rng(8);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool y = rng.bernoulli(0.3);
      labels[i] = y ? 1.0f : 0.0f;
      probs[i] = static_cast<float>(y ? 0.9 : 0.1);
      if (i % 4 == 0) probs[i] = probs.nodata_value();
    }
    const double a = auc_on_patchwork_sample(labels, probs, 2000, 3);
    CHECK(a == auc_on_patchwork_sample(labels, probs, 2000, 3));
    CHECK(a == 1.0);
  }
}
