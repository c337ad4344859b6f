#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shrubmap/raster.hpp"

namespace shrubmap {

struct Return {
  double x = 0.0;
  double y = 0.0;
  float h = 0.0f;  // height above ground, meters

  bool operator==(const Return&) const = default;
};

/// Height-normalized LiDAR returns. Negative heights are rejected.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Return> returns);

  void add(const Return& r);
  std::span<const Return> returns() const { return returns_; }
  std::size_t size() const { return returns_.size(); }
  bool empty() const { return returns_.empty(); }
  void reserve(std::size_t n) { returns_.reserve(n); }

  bool operator==(const PointCloud&) const = default;

 private:
  std::vector<Return> returns_;
};

/// SPTS: "SPTS", version byte, uint64 count, then (f64 x, f64 y, f32 h) records.
std::vector<std::uint8_t> encode_cloud(const PointCloud& cloud);
PointCloud decode_cloud(std::span<const std::uint8_t> bytes);
PointCloud read_cloud(const std::string& path);
void write_cloud(const PointCloud& cloud, const std::string& path);

struct ShrubRule {
  double min_height_m = 1.0;
  double max_height_m = 5.0;

  ShrubRule() = default;
  ShrubRule(double lo, double hi);
  bool is_shrub(float h) const { return h >= min_height_m && h <= max_height_m; }
};

inline constexpr double kDefaultPulseWidthM = 0.5;
inline constexpr std::uint32_t kDefaultPointsPerCircle = 8;

/// Offsets of the footprint circle points (index k of n, radius r).
std::pair<double, double> splat_offset(std::uint32_t k, std::uint32_t n, double radius);

/// Each return becomes itself plus points_per_circle copies spaced evenly on
/// a circle of diameter pulse_width_m.
PointCloud splat_returns(const PointCloud& cloud, double pulse_width_m = kDefaultPulseWidthM,
                         std::uint32_t points_per_circle = kDefaultPointsPerCircle);

/// Smallest grid at `resolution` whose cell edges fall on multiples of the
/// resolution and which contains every return. Empty clouds are rejected.
GridTransform cloud_grid(const PointCloud& cloud, double resolution);

/// Per-cell maximum return height; empty cells are nodata.
Raster build_chm(const PointCloud& cloud, const GridTransform& transform);

/// build_chm(splat_returns(cloud, ...)) without materializing the splatted cloud.
Raster build_chm_splatted(const PointCloud& cloud, const GridTransform& transform, double pulse_width_m,
                          std::uint32_t points_per_circle);

/// Boolean shrub raster: true iff the height lies in [min, max]; nodata is false.
Raster label_shrub_fine(const Raster& chm, const ShrubRule& rule = {});

inline constexpr std::uint32_t kLabelAggregationFactor = 30;

/// 30:1 block majority of fine labels (strictly more than half).
Raster label_shrub_coarse(const Raster& fine_labels, std::uint32_t factor = kLabelAggregationFactor);

}  // namespace shrubmap
