#include <cmath>

#include "doctest.h"
#include "shrubmap/error.hpp"
#include "shrubmap/random.hpp"
#include "shrubmap/segmentation.hpp"
#include "support/oracles.hpp"

using namespace shrubmap;

namespace {

AnnualSeries random_series(Rng& rng, int n, bool with_gaps) {
  std::vector<int> years;
  std::vector<double> values;
  double level = rng.uniform(0.3, 0.8);
  for (int y = 2000; y < 2000 + n; ++y) {
    if (with_gaps && y != 2000 && y != 2000 + n - 1 && rng.bernoulli(0.15)) continue;
    if (rng.bernoulli(0.2)) level -= rng.uniform(0.1, 0.4);
    level += rng.uniform(-0.02, 0.05);
    years.push_back(y);
    values.push_back(level + rng.normal(0.0, 0.02));
  }
  return AnnualSeries(years, values);
}

AnnualSeries range_series(int first, const std::vector<double>& values) {
  std::vector<int> years;
  for (std::size_t i = 0; i < values.size(); ++i) years.push_back(first + static_cast<int>(i));
  return AnnualSeries(years, values);
}

}  // namespace

TEST_SUITE("segmentation") {
  TEST_CASE("linear series needs only its endpoints") {
    std::vector<double> v;
    for (int i = 0; i < 12; ++i) v.push_back(0.2 + 0.03 * i);
    for (int k = 1; k <= 4; ++k) {
      const auto fit = segment_series(range_series(2000, v), k);
      CHECK(fit.vertex_years == std::vector<int>{2000, 2011});
      CHECK(fit.sse < 1e-20);
    }
  }

  TEST_CASE("an abrupt level drop gets a vertex at the break") {
    std::vector<double> v;
    for (int i = 0; i < 10; ++i) v.push_back(i < 5 ? 0.8 : 0.3);
    const auto s = range_series(2000, v);
    const auto fit = segment_series(s, 3);
    CHECK(fit.vertex_years == std::vector<int>{2000, 2004, 2005, 2009});
    CHECK(fit.sse < 1e-20);
    const auto brute = oracle::exhaustive_segmentation(s, 2, segmentation_tie_tolerance(s));
    const auto two = segment_series(s, 2);
    CHECK(two.vertex_years == brute.vertex_years);
    CHECK(std::abs(two.sse - brute.sse) < 1e-9);
    CHECK(two.sse < segment_series(s, 1).sse);
  }

  TEST_CASE("dynamic programme equals exhaustive enumeration") {
    Rng rng(31);
    for (int trial = 0; trial < 60; ++trial) {
      const int n = 4 + static_cast<int>(rng.below(9));  // 4..12 years
      const auto s = random_series(rng, n, trial % 3 == 0);
      for (int k = 1; k <= 4; ++k) {
        const auto fit = segment_series(s, k);
        const auto brute = oracle::exhaustive_segmentation(s, k, segmentation_tie_tolerance(s));
        CHECK(std::abs(fit.sse - brute.sse) < 1e-9);
        CHECK(fit.vertex_years == brute.vertex_years);
      }
    }
  }

  TEST_CASE("SSE is nonincreasing in the segment budget and vertices are interpolated") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
      const auto s = random_series(rng, 15, true);
      double prev = INFINITY;
      for (int k = 1; k <= 5; ++k) {
        const auto fit = segment_series(s, k);
        CHECK(fit.sse <= prev + 1e-12);
        prev = fit.sse;
        CHECK(fit.segment_count() <= static_cast<std::size_t>(k));
        CHECK(fit.vertex_years.front() == s.years.front());
        CHECK(fit.vertex_years.back() == s.years.back());
        for (std::size_t v = 0; v < fit.vertex_years.size(); ++v)
          CHECK(fit.at(fit.vertex_years[v]) == doctest::Approx(fit.vertex_values[v]).epsilon(1e-12));
        // gap years are filled: one fitted value per calendar year
        CHECK(fit.fitted.size() == static_cast<std::size_t>(s.years.back() - s.years.front() + 1));
      }
    }
  }

  TEST_CASE("invalid budgets and series") {
    CHECK_THROWS_AS(segment_series(range_series(2000, {0.1, 0.2, 0.3}), 0), ParameterError);
    CHECK_THROWS_AS(segment_series(range_series(2000, {0.1}), 2), ParameterError);
  }

  TEST_CASE("endpoint vertices give the least-squares line") {
    Rng rng(2);
    const auto s = random_series(rng, 10, false);
    const std::vector<int> ends{s.years.front(), s.years.back()};
    const auto fit = fit_to_vertices(s, ends);
    // ordinary least squares by the normal equations
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      sx += s.years[i];
      sy += s.values[i];
      sxx += double(s.years[i]) * s.years[i];
      sxy += s.years[i] * s.values[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icept = (sy - slope * sx) / n;
    for (int y = s.years.front(); y <= s.years.back(); ++y)
      CHECK(fit.at(y) == doctest::Approx(icept + slope * y).epsilon(1e-8));
  }

  TEST_CASE("refitting the source series reproduces its SSE") {
    Rng rng(9);
    const auto s = random_series(rng, 12, false);
    const auto fit = segment_series(s, 3);
    CHECK(fit_to_vertices(s, fit.vertex_years).sse == doctest::Approx(fit.sse).epsilon(1e-12));
  }

  TEST_CASE("fixed-vertex fit beats perturbed vertex values") {
    Rng rng(13);
    const auto s = random_series(rng, 12, false);
    const std::vector<int> vy{s.years[0], s.years[4], s.years[8], s.years[11]};
    const auto fit = fit_to_vertices(s, vy);
    CHECK(fit.sse == doctest::Approx(oracle::vertex_sse(s, vy)).epsilon(1e-9));
    for (int trial = 0; trial < 100; ++trial) {
      auto values = fit.vertex_values;
      for (auto& v : values) v += rng.normal(0.0, 0.05);
      double sse = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        std::size_t k = 0;
        while (k + 2 < vy.size() && s.years[i] > vy[k + 1]) ++k;
        const double w = double(s.years[i] - vy[k]) / (vy[k + 1] - vy[k]);
        const double f = values[k] * (1 - w) + values[k + 1] * w;
        sse += (f - s.values[i]) * (f - s.values[i]);
      }
      CHECK(fit.sse <= sse + 1e-12);
    }
  }

  TEST_CASE("fit_to_vertices rejects bad vertex sets") {
    const auto s = range_series(2000, {0.1, 0.2, 0.3, 0.4});
    CHECK_THROWS_AS(fit_to_vertices(s, std::vector<int>{2001, 2003}), ParameterError);
    CHECK_THROWS_AS(fit_to_vertices(s, std::vector<int>{2000, 2005}), ParameterError);
    CHECK_THROWS_AS(fit_to_vertices(s, std::vector<int>{2000, 2002, 2002, 2003}), ParameterError);
  }

  TEST_CASE("no drop means no disturbance") {
    const auto fit = fit_to_vertices(range_series(2000, {0.1, 0.2, 0.3, 0.5}), std::vector<int>{2000, 2003});
    const auto d = disturbance_from_fit(fit);
    CHECK_FALSE(d.yod);
    CHECK(d.mag == 0.0);
  }

  TEST_CASE("single drop of 0.3 ending in 2012") {
    std::vector<double> v;
    for (int y = 2005; y <= 2020; ++y) v.push_back(y <= 2011 ? 0.7 : 0.4);
    const auto fit = fit_to_vertices(range_series(2005, v), std::vector<int>{2005, 2011, 2012, 2020});
    const auto d = disturbance_from_fit(fit);
    REQUIRE(d.yod);
    CHECK(*d.yod == 2012);
    CHECK(d.mag == doctest::Approx(0.3).epsilon(1e-9));
  }

  TEST_CASE("the most recent drop wins over the largest") {
    std::vector<double> v;
    for (int y = 2000; y <= 2020; ++y) v.push_back(y < 2005 ? 0.9 : (y < 2015 ? 0.5 : 0.3));
    const auto fit =
        fit_to_vertices(range_series(2000, v), std::vector<int>{2000, 2004, 2005, 2014, 2015, 2020});
    const auto d = disturbance_from_fit(fit);
    REQUIRE(d.yod);
    CHECK(*d.yod == 2015);
    CHECK(d.mag == doctest::Approx(0.2).epsilon(1e-9));
    // as of 2010 only the first drop has happened
    const auto early = disturbance_from_fit(fit, kDefaultDisturbanceThreshold, 2010);
    REQUIRE(early.yod);
    CHECK(*early.yod == 2005);
    CHECK(early.mag == doctest::Approx(0.4).epsilon(1e-9));
  }

  TEST_CASE("drops below the threshold are ignored") {
    std::vector<double> v{0.5, 0.5, 0.47, 0.47};
    const auto fit = fit_to_vertices(range_series(2000, v), std::vector<int>{2000, 2001, 2002, 2003});
    CHECK_FALSE(disturbance_from_fit(fit, 0.05).yod);
  }

  TEST_CASE("lag-1 deltas") {
    const std::vector<double> f{0.1, 0.4, 0.2};
    const auto d = delta_lag1(f);
    CHECK_FALSE(d[0]);
    CHECK(*d[1] == doctest::Approx(0.3));
    CHECK(*d[2] == doctest::Approx(-0.2));
    const std::vector<double> flat(5, 0.7);
    for (std::size_t i = 1; i < 5; ++i) CHECK(*delta_lag1(flat)[i] == 0.0);
  }

  TEST_CASE("deltas telescope and are constant on one segment") {
    Rng rng(21);
    const auto s = random_series(rng, 14, true);
    const auto fit = segment_series(s, 3);
    const auto d = delta_lag1(fit.fitted);
    double sum = 0.0;
    for (std::size_t i = 1; i < d.size(); ++i) sum += *d[i];
    CHECK(std::abs(sum - (fit.fitted.back() - fit.fitted.front())) < 1e-9);
    const auto line = fit_to_vertices(s, std::vector<int>{s.years.front(), s.years.back()});
    const auto dl = delta_lag1(line.fitted);
    for (std::size_t i = 2; i < dl.size(); ++i) CHECK(*dl[i] == doctest::Approx(*dl[1]).epsilon(1e-9));
  }
}
