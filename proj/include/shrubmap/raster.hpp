#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace shrubmap {

/// Top-left anchored north-up grid. Row 0 is the northern edge; y decreases
/// with increasing row.
struct GridTransform {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double resolution = 1.0;
  std::uint32_t width = 1;
  std::uint32_t height = 1;

  GridTransform() = default;
  GridTransform(double ox, double oy, double res, std::uint32_t w, std::uint32_t h);

  std::size_t cell_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t index(std::uint32_t col, std::uint32_t row) const {
    return static_cast<std::size_t>(row) * width + col;
  }

  std::pair<double, double> pixel_center(std::uint32_t col, std::uint32_t row) const {
    return {origin_x + (col + 0.5) * resolution, origin_y - (row + 0.5) * resolution};
  }
  /// Pixel containing map point (x, y), if inside the grid.
  std::optional<std::pair<std::uint32_t, std::uint32_t>> map_to_pixel(double x, double y) const;

  /// Same footprint at resolution * factor.
  GridTransform coarsened(std::uint32_t factor) const;
  /// Same footprint at resolution / factor.
  GridTransform refined(std::uint32_t factor) const;
  /// Sub-grid of w x h pixels starting at (col0, row0).
  GridTransform window(std::uint32_t col0, std::uint32_t row0, std::uint32_t w, std::uint32_t h) const;

  bool operator==(const GridTransform&) const = default;
};

enum class DType : std::uint8_t { Float32 = 1, UInt8 = 2, Boolean = 3 };

inline constexpr double kFloatNodata = -9999.0;
inline constexpr double kByteNodata = 255.0;

/// Single-band raster. Cells are held as float regardless of dtype; the
/// 8-bit types are restricted to integral codes in [0, 255].
class Raster {
 public:
  /// 1x1 float placeholder.
  Raster() : Raster(GridTransform(), DType::Float32, kFloatNodata) {}
  Raster(GridTransform transform, DType dtype, double nodata);
  Raster(GridTransform transform, DType dtype, double nodata, std::vector<float> cells);

  static Raster filled(GridTransform transform, DType dtype, double nodata, float value);

  const GridTransform& transform() const { return transform_; }
  DType dtype() const { return dtype_; }
  double nodata() const { return nodata_; }
  std::uint32_t width() const { return transform_.width; }
  std::uint32_t height() const { return transform_.height; }
  std::size_t size() const { return cells_.size(); }

  std::span<const float> cells() const { return cells_; }
  std::span<float> cells() { return cells_; }

  float at(std::uint32_t col, std::uint32_t row) const { return cells_[transform_.index(col, row)]; }
  void set(std::uint32_t col, std::uint32_t row, float v) { cells_[transform_.index(col, row)] = v; }
  float operator[](std::size_t i) const { return cells_[i]; }
  float& operator[](std::size_t i) { return cells_[i]; }

  bool is_nodata(float v) const;
  bool is_nodata_at(std::size_t i) const { return is_nodata(cells_[i]); }
  float nodata_value() const { return static_cast<float>(nodata_); }
  std::size_t count_valid() const;

  bool operator==(const Raster& other) const;

 private:
  void validate() const;

  GridTransform transform_;
  DType dtype_;
  double nodata_;
  std::vector<float> cells_;
};

/// SRAS encoding: little-endian, row-major, uncompressed.
std::vector<std::uint8_t> encode_raster(const Raster& r);
Raster decode_raster(std::span<const std::uint8_t> bytes);
Raster read_raster(const std::string& path);
void write_raster(const Raster& r, const std::string& path);

namespace landcover {
// Primary land-cover codes (LCMAP class numbering).
inline constexpr std::uint8_t kDeveloped = 1;
inline constexpr std::uint8_t kCropland = 2;
inline constexpr std::uint8_t kGrassShrub = 3;
inline constexpr std::uint8_t kTreeCover = 4;
inline constexpr std::uint8_t kWater = 5;
inline constexpr std::uint8_t kWetland = 6;
inline constexpr std::uint8_t kIceSnow = 7;
inline constexpr std::uint8_t kBarren = 8;
}  // namespace landcover

struct MaskSpec {
  std::set<std::uint8_t> excluded_classes{landcover::kDeveloped, landcover::kWater, landcover::kIceSnow,
                                          landcover::kBarren};
  double max_elevation_m = 1067.0;

  bool masks(float landcover_code, bool landcover_valid, float elevation, bool elevation_valid) const;
};

/// Cells whose land cover is excluded or whose elevation is strictly above
/// the cutoff become nodata. All three rasters must share one grid.
Raster apply_mask(const Raster& target, const Raster& landcover, const Raster& dem, const MaskSpec& spec = {});

/// Boolean block majority: a coarse cell is true iff its count of true
/// subpixels exceeds threshold_fraction * factor^2. Nodata subpixels count
/// as false.
Raster aggregate_majority(const Raster& fine, std::uint32_t factor, double threshold_fraction = 0.5);

/// Copy of a pixel window.
Raster crop(const Raster& r, std::uint32_t col0, std::uint32_t row0, std::uint32_t w, std::uint32_t h);
/// Writes src into dst with src's (0,0) at dst's (col0,row0). Resolutions must match.
void paste(Raster& dst, const Raster& src, std::uint32_t col0, std::uint32_t row0);

void require_aligned(const Raster& a, const Raster& b, const std::string& what);

}  // namespace shrubmap
