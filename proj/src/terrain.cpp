#include "shrubmap/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "shrubmap/error.hpp"

namespace shrubmap {

namespace {

void require_dem(const Raster& dem) {
  if (dem.dtype() != DType::Float32) throw ParameterError("DEM must be float32");
  if (dem.width() < 3 || dem.height() < 3) throw DimensionError("DEM must be at least 3x3");
}

/// Elevation with edge replication; nodata neighbours fall back to the centre.
double sample(const Raster& dem, long col, long row, double centre) {
  col = std::clamp<long>(col, 0, dem.width() - 1);
  row = std::clamp<long>(row, 0, dem.height() - 1);
  const float v = dem.at(static_cast<std::uint32_t>(col), static_cast<std::uint32_t>(row));
  return dem.is_nodata(v) ? centre : v;
}

struct Gradient {
  double dzdx;       // east
  double dzdy_south; // increasing row
};

Gradient horn(const Raster& dem, std::uint32_t col, std::uint32_t row) {
  const double e = dem.at(col, row);
  const long c = col, r = row;
  const double a = sample(dem, c - 1, r - 1, e), b = sample(dem, c, r - 1, e), cc = sample(dem, c + 1, r - 1, e);
  const double d = sample(dem, c - 1, r, e), f = sample(dem, c + 1, r, e);
  const double g = sample(dem, c - 1, r + 1, e), h = sample(dem, c, r + 1, e), i = sample(dem, c + 1, r + 1, e);
  const double res = dem.transform().resolution;
  return {((cc + 2 * f + i) - (a + 2 * d + g)) / (8 * res), ((g + 2 * h + i) - (a + 2 * b + cc)) / (8 * res)};
}

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

}  // namespace

SlopeAspect slope_aspect(const Raster& dem) {
  require_dem(dem);
  SlopeAspect out{Raster(dem.transform(), DType::Float32, kFloatNodata),
                  Raster(dem.transform(), DType::Float32, kFloatNodata)};
  for (std::uint32_t row = 0; row < dem.height(); ++row)
    for (std::uint32_t col = 0; col < dem.width(); ++col) {
      if (dem.is_nodata(dem.at(col, row))) continue;
      const auto g = horn(dem, col, row);
      const double mag = std::hypot(g.dzdx, g.dzdy_south);
      out.slope_deg.set(col, row, static_cast<float>(std::atan(mag) * kRadToDeg));
      if (mag == 0.0) continue;
      // downslope azimuth: east component -dzdx, north component +dzdy_south
      double az = std::atan2(-g.dzdx, g.dzdy_south) * kRadToDeg;
      if (az < 0) az += 360.0;
      if (az >= 360.0) az -= 360.0;
      out.aspect_deg.set(col, row, static_cast<float>(az));
    }
  return out;
}

Raster d8_accumulation(const Raster& dem) {
  require_dem(dem);
  const std::uint32_t w = dem.width(), h = dem.height();
  const std::size_t n = dem.size();
  const double res = dem.transform().resolution;
  // neighbours in raster scan order
  constexpr int kDc[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
  constexpr int kDr[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
  std::vector<std::int64_t> downstream(n, -1);
  for (std::uint32_t row = 0; row < h; ++row)
    for (std::uint32_t col = 0; col < w; ++col) {
      const float z = dem.at(col, row);
      if (dem.is_nodata(z)) continue;
      double best = 0.0;
      for (int k = 0; k < 8; ++k) {
        const long c = static_cast<long>(col) + kDc[k], r = static_cast<long>(row) + kDr[k];
        if (c < 0 || r < 0 || c >= w || r >= h) continue;
        const float zn = dem.at(static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r));
        if (dem.is_nodata(zn)) continue;
        const double dist = (kDc[k] != 0 && kDr[k] != 0) ? res * std::numbers::sqrt2 : res;
        const double drop = (static_cast<double>(z) - zn) / dist;
        if (drop > best) {
          best = drop;
          downstream[dem.transform().index(col, row)] = static_cast<std::int64_t>(dem.transform().index(
              static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r)));
        }
      }
    }
  // flow only moves to strictly lower cells, so descending elevation is a topological order
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dem[a] > dem[b]; });
  std::vector<double> acc(n, 1.0);
  for (const auto i : order) {
    if (dem.is_nodata_at(i)) continue;
    if (downstream[i] >= 0) acc[static_cast<std::size_t>(downstream[i])] += acc[i];
  }
  Raster out(dem.transform(), DType::Float32, kFloatNodata);
  for (std::size_t i = 0; i < n; ++i)
    if (!dem.is_nodata_at(i)) out[i] = static_cast<float>(acc[i]);
  return out;
}

Raster twi(const Raster& dem) {
  require_dem(dem);
  const auto acc = d8_accumulation(dem);
  const double res = dem.transform().resolution;
  Raster out(dem.transform(), DType::Float32, kFloatNodata);
  for (std::uint32_t row = 0; row < dem.height(); ++row)
    for (std::uint32_t col = 0; col < dem.width(); ++col) {
      if (dem.is_nodata(dem.at(col, row))) continue;
      const auto g = horn(dem, col, row);
      const double beta = std::max(std::atan(std::hypot(g.dzdx, g.dzdy_south)), kTwiMinSlopeRad);
      const double a = acc.at(col, row) * res;
      out.set(col, row, static_cast<float>(std::log(a / std::tan(beta))));
    }
  return out;
}

}  // namespace shrubmap
