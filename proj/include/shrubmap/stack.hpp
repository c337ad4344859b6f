#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shrubmap/raster.hpp"
#include "shrubmap/spectral.hpp"

namespace shrubmap {

/// `name=path` lines; blank lines and `#` comments ignored. Relative paths
/// resolve against the manifest's directory.
class Manifest {
 public:
  static Manifest parse(const std::string& path);
  static Manifest parse_text(const std::string& text, const std::string& base_dir = ".");

  void add(const std::string& name, const std::string& path);
  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  /// Throws ManifestError naming the band when absent.
  const std::string& path(const std::string& name) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }
  std::string to_text() const;
  void write(const std::string& path) const;

 private:
  std::map<std::string, std::string> entries_;
  std::vector<std::string> order_;
};

/// Every band the stack carries, in file order.
const std::vector<std::string>& stack_band_names();
/// Default model inputs: the fourteen predictor names of the published
/// predictor table (fitted indices, disturbance, climate, terrain, LCSEC).
const std::vector<std::string>& default_feature_names();

inline constexpr const char* kCategoricalBand = "LCSEC";

class PredictorStack {
 public:
  explicit PredictorStack(GridTransform transform) : transform_(transform) {}

  const GridTransform& transform() const { return transform_; }
  void set(const std::string& name, Raster band);
  bool has(const std::string& name) const { return bands_.count(name) > 0; }
  const Raster& band(const std::string& name) const;
  const std::map<std::string, Raster>& bands() const { return bands_; }

  void write(const std::string& dir) const;
  static PredictorStack read(const std::string& dir);

 private:
  GridTransform transform_;
  std::map<std::string, Raster> bands_;
};

/// Raw inputs on one 30 m grid.
struct StackInputs {
  std::optional<Raster> dem, landcover, lcsec, precip, tmax, tmin;
  std::vector<int> years;
  std::vector<std::array<std::optional<Raster>, 6>> reflectance;  // [year][band]
  std::optional<Raster> epoch;  // per-pixel epoch for temporal patchworks

  /// Manifest keys: DEM, LCPRI, LCSEC, PRECIP, TMAX, TMIN, optional EPOCH,
  /// and BLUE_/GREEN_/RED_/NIR_/SWIR1_/SWIR2_<year> reflectance bands.
  static StackInputs from_manifest(const Manifest& m);
};

const std::array<std::string, 6>& reflectance_band_names();

struct StackOptions {
  int epoch = 0;
  int max_segments = 4;
  int disturbance_max_segments = 4;
  double disturbance_threshold = 0.05;
  MaskSpec mask{};
  TasseledCapCoefficients tasseled_cap = TasseledCapCoefficients::crist1985();
};

/// Per-pixel predictor assembly. YOD holds 0 where no disturbance precedes
/// the epoch. Masked pixels, pixels outside the epoch raster, and pixels
/// with fewer than two usable years are nodata in every band.
PredictorStack assemble_stack(const StackInputs& inputs, const StackOptions& options);

/// Predictors for one pixel's reflectance history at one epoch.
struct PixelPredictors {
  double tcb, tcg, tcw, nbr;
  std::optional<double> dtcb, dtcg, dtcw, dnbr;
  double mag;
  int yod;  // 0 when none
};
std::optional<PixelPredictors> pixel_predictors(const std::vector<int>& years,
                                                const std::vector<Reflectance>& reflectance, int epoch,
                                                const StackOptions& options);

}  // namespace shrubmap
