#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "shrubmap/chm.hpp"
#include "shrubmap/raster.hpp"
#include "shrubmap/stack.hpp"

namespace shrubmap {

/// Generator settings; read from `key=value` text.
struct LandscapeSpec {
  std::uint32_t width = 300;  // pixels
  std::uint32_t height = 300;
  double origin_x = 500000.0;
  double origin_y = 4700000.0;
  double prevalence = 0.025;  // shrub fraction of all pixels
  int first_year = 2000;
  int n_years = 20;
  int n_epochs = 3;               // distinct LiDAR acquisition years
  double disturbance_rate = 0.05; // fraction of forest pixels thinned
  double noise_sigma = 0.02;      // approximate NBR noise standard deviation
  std::uint64_t seed = 1;
  std::uint32_t lidar_tiles = 20;
  std::uint32_t tile_size = 60;  // pixels per tile side
  double lidar_density = 0.8;    // returns per square meter
  double spectral_mixing = 0.5;  // maximum sub-pixel blend toward another vegetation type

  static constexpr double kResolution = 30.0;

  static LandscapeSpec parse_text(const std::string& text);
  static LandscapeSpec read(const std::string& path);
  std::string to_text() const;
  void validate() const;

  int last_year() const { return first_year + n_years - 1; }
  std::vector<int> epochs() const;  // descending, two years apart
};

/// Structural class behind every pixel's spectra and canopy heights.
enum class Cover : std::uint8_t {
  Water,
  Developed,
  Barren,
  Wetland,
  Crop,
  Grass,
  Forest,
  Shrub,
  ThinnedForest,  // partial disturbance, recovers to forest
  Hedgerow,       // open land with sparse woody cover
  Regrowth,       // young forest on a clearcut: shrub-like spectra, taller canopy
};

struct LidarTile {
  std::uint32_t index = 0;
  std::uint32_t col0 = 0, row0 = 0, size = 0;
  int epoch = 0;
  std::string cloud;  // path relative to the landscape directory
};

/// 30 m window of the landscape grid covered by a tile.
GridTransform tile_window(const GridTransform& grid, const LidarTile& t);
/// 1 m grid over the same footprint.
GridTransform tile_fine_grid(const GridTransform& grid, const LidarTile& t);

struct Landscape {
  LandscapeSpec spec;
  GridTransform grid;
  Raster dem, lcpri, lcsec, precip, tmax, tmin;
  Raster truth;      // boolean shrub labels
  Raster truth_yod;  // planted disturbance year, 0 when none
  Raster epoch;      // LiDAR year inside tiles, nodata elsewhere
  Raster tile;       // tile index inside tiles, nodata elsewhere
  std::vector<Cover> cover;
  std::vector<int> years;
  std::vector<std::array<Raster, 6>> reflectance;  // [year][band]
  std::vector<LidarTile> tiles;
  std::size_t shrub_pixels = 0;

  double prevalence() const { return static_cast<double>(shrub_pixels) / static_cast<double>(grid.cell_count()); }
  StackInputs stack_inputs(bool with_epoch) const;
};

/// Deterministic given spec.seed. Raises SamplingError when the shrub
/// prevalence cannot be planted on the eligible (unmasked) area.
Landscape generate_landscape(const LandscapeSpec& spec);

/// Canopy height of the 1 m cell (gx, gy) counted from the landscape's
/// top-left corner.
float canopy_height(const Landscape& land, std::uint64_t gx, std::uint64_t gy);

/// Height-normalized returns over one tile (uniform positions).
PointCloud generate_tile_cloud(const Landscape& land, const LidarTile& tile);

/// Writes rasters, reflectance series, per-tile clouds, tiles.txt,
/// manifest.txt (stack input keys) and landscape.txt into dir.
void write_landscape(const Landscape& land, const std::string& dir);

/// Reads tiles.txt written by write_landscape.
std::vector<LidarTile> read_tiles(const std::string& path);

}  // namespace shrubmap
