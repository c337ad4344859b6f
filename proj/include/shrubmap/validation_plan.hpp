#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "shrubmap/raster.hpp"

namespace shrubmap {

/// Area (km^2) of a regular hexagon with the given apothem (km).
double hex_area(double apothem_km);

/// Flat-topped hexagon tessellation anchored with a hexagon centre at the
/// extent's lower-left corner. Cells are addressed by axial (q, r).
struct HexGrid {
  double anchor_x = 0.0;
  double anchor_y = 0.0;
  double apothem_m = 1.0;

  std::pair<int, int> cell_of(double x, double y) const;
  std::pair<double, double> centre(int q, int r) const;
};

/// Reported probability bins: (0,.05], (.05,.1], (.1,.2], ..., (.8,.9],
/// (.9,.95], (.95,1]. A probability of exactly 0 joins the first bin.
inline constexpr std::size_t kPlanBins = 12;
std::size_t probability_bin(double p);
const std::array<double, kPlanBins + 1>& probability_bin_edges();

enum class Stratum : std::uint8_t { Regular = 0, ExtremeLow = 1, ExtremeHigh = 2 };
const char* stratum_name(Stratum s);

struct PlanPixel {
  std::uint32_t col = 0, row = 0;
  double x = 0.0, y = 0.0;
  double prob = 0.0;
  Stratum stratum = Stratum::Regular;
  bool operator==(const PlanPixel&) const = default;
};

struct Shortfall {
  std::size_t bin = 0;
  Stratum stratum = Stratum::Regular;
  std::size_t target = 0;
  std::size_t available = 0;
  bool operator==(const Shortfall&) const = default;
};

struct HexSample {
  int q = 0, r = 0;
  double centre_x = 0.0, centre_y = 0.0;
  std::size_t mapped_pixels = 0;
  double mapped_fraction = 0.0;  // mapped area / hexagon area, capped at 1
  std::size_t per_bin_target = 0;
  std::array<std::vector<PlanPixel>, kPlanBins> bins;  // extreme draws merged into bins 0 and 11
  std::vector<Shortfall> shortfalls;
  bool operator==(const HexSample&) const = default;
};

struct HexValidationPlan {
  double apothem_km = 0.0;
  std::size_t per_bin = 0;
  std::uint64_t seed = 0;
  std::vector<HexSample> hexagons;  // ordered by (q, r)

  std::size_t pixel_count() const;
  std::string to_tsv() const;
  std::string shortfall_tsv() const;
  bool operator==(const HexValidationPlan&) const = default;
};

/// Per hexagon and reported bin, lround(per_bin * mapped_fraction) pixels are
/// drawn uniformly without replacement. Two extra strata, (0,0.01] and
/// (0.99,1], receive the same target from pixels not already drawn and are
/// merged into the first and last bins. Bins short of population yield all
/// available pixels and a shortfall entry. Nodata marks unmapped pixels.
HexValidationPlan build_validation_plan(const Raster& prob, double apothem_km, std::size_t per_bin,
                                        std::uint64_t seed);

}  // namespace shrubmap
