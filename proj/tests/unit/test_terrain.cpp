#include <cmath>
#include <numbers>

#include "doctest.h"
#include "shrubmap/error.hpp"
#include "shrubmap/random.hpp"
#include "shrubmap/terrain.hpp"

using namespace shrubmap;

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

Raster plane(std::uint32_t w, std::uint32_t h, double per_col, double per_row) {
  Raster r(GridTransform(0, 30.0 * h, 30.0, w, h), DType::Float32, kFloatNodata);
  for (std::uint32_t row = 0; row < h; ++row)
    for (std::uint32_t col = 0; col < w; ++col) r.set(col, row, static_cast<float>(100 + per_col * col + per_row * row));
  return r;
}

Raster from_rows(const std::vector<std::vector<float>>& rows) {
  const auto h = static_cast<std::uint32_t>(rows.size()), w = static_cast<std::uint32_t>(rows[0].size());
  Raster r(GridTransform(0, 30.0 * h, 30.0, w, h), DType::Float32, kFloatNodata);
  for (std::uint32_t row = 0; row < h; ++row)
    for (std::uint32_t col = 0; col < w; ++col) r.set(col, row, rows[row][col]);
  return r;
}

}  // namespace

TEST_SUITE("terrain") {
  TEST_CASE("flat dem: zero slope and no aspect") {
    const auto sa = slope_aspect(plane(5, 5, 0, 0));
    for (std::size_t i = 0; i < 25; ++i) {
      CHECK(sa.slope_deg[i] == 0.0f);
      CHECK(sa.aspect_deg.is_nodata_at(i));
    }
  }

  TEST_CASE("eastward rise of 1 m per cell faces west") {
    const auto sa = slope_aspect(plane(6, 5, 1.0, 0.0));
    const double expected = std::atan(1.0 / 30.0) * kDeg;
    CHECK(expected == doctest::Approx(1.909).epsilon(1e-3));
    for (std::uint32_t row = 0; row < 5; ++row)
      for (std::uint32_t col = 1; col < 5; ++col) {
        CHECK(std::abs(sa.slope_deg.at(col, row) - expected) < 1e-5);
        CHECK(std::abs(sa.aspect_deg.at(col, row) - 270.0) < 1e-5);
      }
  }

  TEST_CASE("rotating a plane by 90 degrees rotates aspect and keeps slope") {
    // rise to the south faces north (0); rise to the west faces east (90);
    // rise to the north faces south (180)
    const std::vector<std::pair<Raster, double>> cases{
        {plane(5, 5, 0.0, 2.0), 0.0}, {plane(5, 5, -2.0, 0.0), 90.0}, {plane(5, 5, 0.0, -2.0), 180.0},
        {plane(5, 5, 2.0, 0.0), 270.0}};
    const double expected_slope = std::atan(2.0 / 30.0) * kDeg;
    for (const auto& [dem, aspect] : cases) {
      const auto sa = slope_aspect(dem);
      CHECK(std::abs(sa.slope_deg.at(2, 2) - expected_slope) < 1e-5);
      CHECK(std::abs(sa.aspect_deg.at(2, 2) - aspect) < 1e-5);
    }
  }

  TEST_CASE("diagonal plane matches the analytic gradient") {
    const auto sa = slope_aspect(plane(5, 5, 1.0, 1.0));
    const double slope = std::atan(std::sqrt(2.0) / 30.0) * kDeg;
    CHECK(std::abs(sa.slope_deg.at(2, 2) - slope) < 1e-5);
    CHECK(std::abs(sa.aspect_deg.at(2, 2) - 315.0) < 1e-4);  // downslope to the north-west
  }

  TEST_CASE("dem smaller than 3x3 is rejected") {
    CHECK_THROWS_AS(slope_aspect(plane(2, 5, 1, 1)), DimensionError);
    CHECK_THROWS_AS(twi(plane(5, 2, 1, 1)), DimensionError);
  }

  TEST_CASE("bowl: the pit collects all eight neighbours") {
    const Raster bowl = from_rows({{2, 1, 2}, {1, 0, 1}, {2, 1, 2}});
    const Raster acc = d8_accumulation(bowl);
    CHECK(acc.at(1, 1) == 9.0f);
    for (std::size_t i = 0; i < 9; ++i)
      if (i != 4) CHECK(acc[i] == 1.0f);
    const Raster t = twi(bowl);
    // centre: symmetric Horn gradient is zero, so the slope floor applies
    CHECK(t.at(1, 1) == doctest::Approx(std::log(270.0 / std::tan(kTwiMinSlopeRad))).epsilon(1e-6));
    // north edge: Horn with edge replication gives dz/dy = 4 / 240
    CHECK(t.at(1, 0) == doctest::Approx(std::log(30.0 / (4.0 / 240.0))).epsilon(1e-6));
    for (std::size_t i = 0; i < 9; ++i)
      if (i != 4) CHECK(t[i] < t.at(1, 1));
    CHECK(slope_aspect(bowl).aspect_deg.at(1, 0) == doctest::Approx(180.0));
  }

  TEST_CASE("D8 ties go to the first neighbour in scan order") {
    // centre drops equally to west and east; west comes first. The corner
    // ridges drain straight down to their side pits, the middle ridges to
    // the centre, so the centre carries 3 cells into the west pit.
    const Raster dem = from_rows({{9, 9, 9}, {4, 5, 4}, {9, 9, 9}});
    const Raster acc = d8_accumulation(dem);
    CHECK(acc.at(1, 1) == 3.0f);
    CHECK(acc.at(0, 1) == 6.0f);
    CHECK(acc.at(2, 1) == 3.0f);
  }

  TEST_CASE("inclined plane: wetness grows downslope") {
    const Raster dem = plane(5, 8, 0.0, 1.0);  // rises to the south, drains north
    const Raster acc = d8_accumulation(dem);
    const Raster t = twi(dem);
    for (std::uint32_t col = 0; col < 5; ++col)
      for (std::uint32_t row = 0; row + 1 < 8; ++row) {
        CHECK(acc.at(col, row) == static_cast<float>(8 - row));
        // the last row's replicated edge halves its gradient, exactly
        // offsetting the halved accumulation, so only interior rows are strict
        if (row + 2 < 8)
          CHECK(t.at(col, row) > t.at(col, row + 1));
        else
          CHECK(t.at(col, row) == doctest::Approx(t.at(col, row + 1)).epsilon(1e-6));
      }
  }

  TEST_CASE("flat dem gives equal, finite wetness") {
    const Raster t = twi(plane(4, 4, 0, 0));
    const double expected = std::log(30.0 / std::tan(kTwiMinSlopeRad));
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(std::isfinite(t[i]));
      CHECK(t[i] == doctest::Approx(expected).epsilon(1e-6));
    }
  }
}
