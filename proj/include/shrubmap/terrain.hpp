#pragma once

#include "shrubmap/raster.hpp"

namespace shrubmap {

struct SlopeAspect {
  Raster slope_deg;   // [0, 90)
  Raster aspect_deg;  // [0, 360) clockwise from north, downslope direction; nodata on flats
};

/// Horn 3x3 gradient with edge replication at the borders.
SlopeAspect slope_aspect(const Raster& dem);

inline constexpr double kTwiMinSlopeRad = 1e-4;

/// D8 flow accumulation (cell count, including the cell itself). Each cell
/// drains to its steepest strictly-lower neighbour; equal drops resolve to
/// the first neighbour in raster scan order. Cells without a lower neighbour
/// keep their flow.
Raster d8_accumulation(const Raster& dem);

/// ln(a / tan(beta)) with a = accumulation * cell size and beta floored at
/// kTwiMinSlopeRad.
Raster twi(const Raster& dem);

}  // namespace shrubmap
