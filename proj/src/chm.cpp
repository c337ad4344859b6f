#include "shrubmap/chm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "shrubmap/binary_io.hpp"
#include "shrubmap/error.hpp"

namespace shrubmap {

namespace {

void check_return(const Return& r) {
  if (!(r.h >= 0.0f) || !std::isfinite(r.h)) throw ParameterError("return height must be finite and >= 0");
  if (!std::isfinite(r.x) || !std::isfinite(r.y)) throw ParameterError("return coordinates must be finite");
}

constexpr std::uint8_t kSptsVersion = 1;
constexpr std::size_t kSptsRecordBytes = 20;

}  // namespace

PointCloud::PointCloud(std::vector<Return> returns) : returns_(std::move(returns)) {
  for (const auto& r : returns_) check_return(r);
}

void PointCloud::add(const Return& r) {
  check_return(r);
  returns_.push_back(r);
}

std::vector<std::uint8_t> encode_cloud(const PointCloud& cloud) {
  bin::Writer w;
  w.reserve(13 + cloud.size() * kSptsRecordBytes);
  w.tag("SPTS");
  w.u8(kSptsVersion);
  w.u64(cloud.size());
  for (const auto& r : cloud.returns()) {
    w.f64(r.x);
    w.f64(r.y);
    w.f32(r.h);
  }
  return w.take();
}

PointCloud decode_cloud(std::span<const std::uint8_t> bytes) {
  bin::Reader in(bytes);
  if (!in.tag("SPTS")) throw FormatError("not an SPTS point cloud (bad magic)");
  if (in.remaining() < 9) throw FormatError("SPTS header truncated");
  const auto version = in.u8();
  if (version != kSptsVersion) throw FormatError("unsupported SPTS version " + std::to_string(version));
  const auto count = in.u64();
  if (in.remaining() / kSptsRecordBytes < count || in.remaining() != count * kSptsRecordBytes)
    throw TruncationError("SPTS record payload does not match count " + std::to_string(count));
  std::vector<Return> returns(count);
  for (auto& r : returns) {
    r.x = in.f64();
    r.y = in.f64();
    r.h = in.f32();
  }
  try {
    return PointCloud(std::move(returns));
  } catch (const ParameterError& e) {
    throw FormatError(std::string("invalid SPTS record: ") + e.what());
  }
}

PointCloud read_cloud(const std::string& path) { return decode_cloud(bin::read_file(path)); }

void write_cloud(const PointCloud& cloud, const std::string& path) { bin::write_file(path, encode_cloud(cloud)); }

ShrubRule::ShrubRule(double lo, double hi) : min_height_m(lo), max_height_m(hi) {
  if (!(lo > 0.0 && lo < hi)) throw ParameterError("shrub rule requires 0 < min < max");
}

std::pair<double, double> splat_offset(std::uint32_t k, std::uint32_t n, double radius) {
  const double angle = 2.0 * std::numbers::pi * k / n;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

namespace {
void check_splat(double pulse_width_m, std::uint32_t points_per_circle) {
  if (!(pulse_width_m > 0.0)) throw ParameterError("pulse width must be positive");
  if (points_per_circle < 3) throw ParameterError("points_per_circle must be at least 3");
}
}  // namespace

PointCloud splat_returns(const PointCloud& cloud, double pulse_width_m, std::uint32_t points_per_circle) {
  check_splat(pulse_width_m, points_per_circle);
  const double radius = pulse_width_m / 2.0;
  std::vector<Return> out;
  out.reserve(cloud.size() * (points_per_circle + 1));
  for (const auto& r : cloud.returns()) {
    out.push_back(r);
    for (std::uint32_t k = 0; k < points_per_circle; ++k) {
      const auto [dx, dy] = splat_offset(k, points_per_circle, radius);
      out.push_back({r.x + dx, r.y + dy, r.h});
    }
  }
  return PointCloud(std::move(out));
}

namespace {

inline void take_max(Raster& chm, const GridTransform& t, double x, double y, float h) {
  if (const auto px = t.map_to_pixel(x, y)) {
    float& cell = chm.cells()[t.index(px->first, px->second)];
    if (chm.is_nodata(cell) || h > cell) cell = h;
  }
}

}  // namespace

GridTransform cloud_grid(const PointCloud& cloud, double resolution) {
  if (!(resolution > 0.0)) throw ParameterError("resolution must be positive");
  if (cloud.empty()) throw ParameterError("cannot derive a grid from an empty point cloud");
  double xmin = HUGE_VAL, xmax = -HUGE_VAL, ymin = HUGE_VAL, ymax = -HUGE_VAL;
  for (const auto& r : cloud.returns()) {
    xmin = std::min(xmin, r.x);
    xmax = std::max(xmax, r.x);
    ymin = std::min(ymin, r.y);
    ymax = std::max(ymax, r.y);
  }
  const double ox = std::floor(xmin / resolution) * resolution;
  const double oy = std::ceil(ymax / resolution) * resolution;
  const double w = std::floor((xmax - ox) / resolution) + 1.0;
  const double h = std::floor((oy - ymin) / resolution) + 1.0;
  if (w * h > 4.0e9) throw ParameterError("point cloud extent is too large for the requested resolution");
  return GridTransform(ox, oy, resolution, static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(h));
}

Raster build_chm(const PointCloud& cloud, const GridTransform& transform) {
  Raster chm(transform, DType::Float32, kFloatNodata);
  for (const auto& r : cloud.returns()) take_max(chm, transform, r.x, r.y, r.h);
  return chm;
}

Raster build_chm_splatted(const PointCloud& cloud, const GridTransform& transform, double pulse_width_m,
                          std::uint32_t points_per_circle) {
  check_splat(pulse_width_m, points_per_circle);
  const double radius = pulse_width_m / 2.0;
  std::vector<std::pair<double, double>> offsets(points_per_circle);
  for (std::uint32_t k = 0; k < points_per_circle; ++k) offsets[k] = splat_offset(k, points_per_circle, radius);
  Raster chm(transform, DType::Float32, kFloatNodata);
  for (const auto& r : cloud.returns()) {
    take_max(chm, transform, r.x, r.y, r.h);
    for (const auto& [dx, dy] : offsets) take_max(chm, transform, r.x + dx, r.y + dy, r.h);
  }
  return chm;
}

Raster label_shrub_fine(const Raster& chm, const ShrubRule& rule) {
  if (chm.dtype() != DType::Float32) throw ParameterError("label_shrub_fine expects a float32 CHM");
  Raster out(chm.transform(), DType::Boolean, kByteNodata);
  for (std::size_t i = 0; i < chm.size(); ++i) out[i] = (!chm.is_nodata_at(i) && rule.is_shrub(chm[i])) ? 1.0f : 0.0f;
  return out;
}

Raster label_shrub_coarse(const Raster& fine_labels, std::uint32_t factor) {
  return aggregate_majority(fine_labels, factor, 0.5);
}

}  // namespace shrubmap
