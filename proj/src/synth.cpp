#include "shrubmap/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "shrubmap/error.hpp"
#include "shrubmap/metrics.hpp"
#include "shrubmap/random.hpp"

namespace shrubmap {

namespace fs = std::filesystem;

namespace {

// Stream identifiers for derived seeds.
enum Stream : std::uint64_t {
  kTerrain = 1,
  kLandcover,
  kPatches,
  kSecondary,
  kPixelFactor,
  kSeries,
  kTiles,
  kHeights,
  kCloud,
  kThinning,
  kMixing,
  kRegrowth,
};

template <typename T>
void parse_number(const std::string& key, const std::string& text, T& out) {
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ConfigError("landscape spec: bad value for " + key + ": '" + text + "'");
}

/// Smooth value noise with roughly unit variance: a lattice of normal draws
/// every `cell` pixels, blended with a smoothstep.
std::vector<double> smooth_field(std::uint32_t w, std::uint32_t h, double cell, Rng& rng) {
  const auto lw = static_cast<std::size_t>(std::ceil(w / cell)) + 2;
  const auto lh = static_cast<std::size_t>(std::ceil(h / cell)) + 2;
  std::vector<double> lattice(lw * lh);
  for (auto& v : lattice) v = rng.normal();
  std::vector<double> out(static_cast<std::size_t>(w) * h);
  const auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  for (std::uint32_t r = 0; r < h; ++r) {
    const double fy = r / cell;
    const auto y0 = static_cast<std::size_t>(fy);
    const double ty = smooth(fy - static_cast<double>(y0));
    for (std::uint32_t c = 0; c < w; ++c) {
      const double fx = c / cell;
      const auto x0 = static_cast<std::size_t>(fx);
      const double tx = smooth(fx - static_cast<double>(x0));
      const double a = lattice[y0 * lw + x0], b = lattice[y0 * lw + x0 + 1];
      const double cc = lattice[(y0 + 1) * lw + x0], d = lattice[(y0 + 1) * lw + x0 + 1];
      out[static_cast<std::size_t>(r) * w + c] = (a + (b - a) * tx) * (1 - ty) + (cc + (d - cc) * tx) * ty;
    }
  }
  return out;
}

double hash_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t salt = 0) {
  const std::uint64_t h = mix64(seed ^ mix64(a * 0x9e3779b97f4a7c15ULL + b) ^ mix64(salt + 0x51ed27));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

using Spectrum = std::array<double, 6>;

// Mean surface reflectance (blue, green, red, NIR, SWIR1, SWIR2) per state.
constexpr Spectrum kForest{0.020, 0.040, 0.030, 0.300, 0.150, 0.060};
constexpr Spectrum kShrub{0.030, 0.060, 0.050, 0.280, 0.200, 0.100};
constexpr Spectrum kGrass{0.040, 0.080, 0.070, 0.320, 0.250, 0.140};
constexpr Spectrum kCrop{0.050, 0.090, 0.080, 0.350, 0.240, 0.130};
constexpr Spectrum kDeveloped{0.080, 0.100, 0.120, 0.200, 0.220, 0.180};
constexpr Spectrum kWater{0.040, 0.050, 0.040, 0.020, 0.010, 0.005};
constexpr Spectrum kWetland{0.030, 0.050, 0.040, 0.220, 0.120, 0.060};
constexpr Spectrum kBarren{0.120, 0.150, 0.180, 0.250, 0.300, 0.250};
constexpr Spectrum kCleared{0.060, 0.090, 0.100, 0.220, 0.280, 0.200};

constexpr double kStableShrub = 0.3;       // shrub pixels without a disturbance in the record
constexpr double kStableShrubContrast = 0.5;  // their largest spectral departure from the prior cover
constexpr double kOpenDisturbance = 0.15;  // grass and crop pixels with a brief disturbance
constexpr double kPixelVariation = 0.10;   // per-pixel multiplicative band factor, standard deviation
constexpr double kRegrowthShare = 1.0;     // regrowing clearcut pixels per shrub pixel
// Shrub suitability: standardized precipitation, minimum temperature and elevation.
constexpr double kSuitPrecip = 0.6;
constexpr double kSuitTmin = 0.5;
constexpr double kSuitElevation = 0.5;
constexpr double kSuitStrength = 1.2;

Spectrum blend(const Spectrum& a, const Spectrum& b, double t) {
  Spectrum out;
  for (std::size_t k = 0; k < 6; ++k) out[k] = a[k] + (b[k] - a[k]) * t;
  return out;
}

/// Noise-free reflectance of a pixel in a given year.
struct Trajectory {
  Spectrum before{}, after{}, settled{};
  int yod = 0;       // 0: stable at `before`
  int recovery = 1;  // years from `after` to `settled`

  Spectrum at(int year) const {
    if (yod == 0 || year < yod) return before;
    if (year >= yod + recovery) return settled;
    return blend(after, settled, static_cast<double>(year - yod) / recovery);
  }
};

/// Pixels of one noisy elliptical patch around `centre`, nearest the centre first.
std::vector<std::size_t> patch_members(std::uint32_t W, std::uint32_t H, std::size_t centre, Rng& rng) {
  const double cx = static_cast<double>(centre % W), cy = static_cast<double>(centre / W);
  const double a = rng.uniform(1.5, 6.0), b = rng.uniform(1.5, 4.0);
  const double theta = rng.uniform(0.0, std::numbers::pi);
  const double lobes = static_cast<double>(2 + rng.below(3)), phase = rng.uniform(0.0, 2 * std::numbers::pi);
  const double wobble = rng.uniform(0.05, 0.25);
  std::vector<std::pair<double, std::size_t>> members;
  const int reach = static_cast<int>(std::ceil(std::max(a, b) * (1.0 + wobble))) + 1;
  for (int dy = -reach; dy <= reach; ++dy)
    for (int dx = -reach; dx <= reach; ++dx) {
      const double px = cx + dx, py = cy + dy;
      if (px < 0 || py < 0 || px >= W || py >= H) continue;
      const double u = dx * std::cos(theta) + dy * std::sin(theta);
      const double v = -dx * std::sin(theta) + dy * std::cos(theta);
      const double rho = std::sqrt((u / a) * (u / a) + (v / b) * (v / b));
      const double phi = std::atan2(v, u);
      if (rho > 1.0 + wobble * std::sin(lobes * phi + phase)) continue;
      members.emplace_back(rho, static_cast<std::size_t>(py) * W + static_cast<std::size_t>(px));
    }
  std::sort(members.begin(), members.end());
  std::vector<std::size_t> out;
  out.reserve(members.size());
  for (const auto& m : members) out.push_back(m.second);
  return out;
}

Raster float_raster(const GridTransform& g) { return Raster::filled(g, DType::Float32, kFloatNodata, 0.0f); }

}  // namespace

// ---------------------------------------------------------------------------

LandscapeSpec LandscapeSpec::parse_text(const std::string& text) {
  LandscapeSpec s;
  std::istringstream in(text);
  std::string line;
  std::map<std::string, bool> seen;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("landscape spec: expected key=value, got '" + line + "'");
    auto key = line.substr(0, eq);
    auto value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    if (seen[key]) throw ConfigError("landscape spec: duplicate key " + key);
    seen[key] = true;
    if (key == "width") parse_number(key, value, s.width);
    else if (key == "height") parse_number(key, value, s.height);
    else if (key == "origin_x") parse_number(key, value, s.origin_x);
    else if (key == "origin_y") parse_number(key, value, s.origin_y);
    else if (key == "prevalence") parse_number(key, value, s.prevalence);
    else if (key == "first_year") parse_number(key, value, s.first_year);
    else if (key == "n_years") parse_number(key, value, s.n_years);
    else if (key == "n_epochs") parse_number(key, value, s.n_epochs);
    else if (key == "disturbance_rate") parse_number(key, value, s.disturbance_rate);
    else if (key == "noise_sigma") parse_number(key, value, s.noise_sigma);
    else if (key == "seed") parse_number(key, value, s.seed);
    else if (key == "lidar_tiles") parse_number(key, value, s.lidar_tiles);
    else if (key == "tile_size") parse_number(key, value, s.tile_size);
    else if (key == "lidar_density") parse_number(key, value, s.lidar_density);
    else if (key == "spectral_mixing") parse_number(key, value, s.spectral_mixing);
    else throw ConfigError("landscape spec: unknown key " + key);
  }
  s.validate();
  return s;
}

LandscapeSpec LandscapeSpec::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

std::string LandscapeSpec::to_text() const {
  std::ostringstream out;
  out << "width=" << width << "\nheight=" << height << "\norigin_x=" << format_number(origin_x)
      << "\norigin_y=" << format_number(origin_y) << "\nprevalence=" << format_number(prevalence)
      << "\nfirst_year=" << first_year << "\nn_years=" << n_years << "\nn_epochs=" << n_epochs
      << "\ndisturbance_rate=" << format_number(disturbance_rate) << "\nnoise_sigma=" << format_number(noise_sigma)
      << "\nseed=" << seed << "\nlidar_tiles=" << lidar_tiles << "\ntile_size=" << tile_size
      << "\nlidar_density=" << format_number(lidar_density)
      << "\nspectral_mixing=" << format_number(spectral_mixing) << "\n";
  return out.str();
}

void LandscapeSpec::validate() const {
  if (width < 3 || height < 3) throw ConfigError("landscape must be at least 3x3 pixels");
  if (!(prevalence > 0.0 && prevalence < 1.0)) throw ConfigError("prevalence must lie in (0,1)");
  if (n_epochs < 2) throw ConfigError("n_epochs must be at least 2");
  if (n_years < 8) throw ConfigError("n_years must be at least 8");
  if (2 * (n_epochs - 1) + 8 > n_years) throw ConfigError("n_years too short for the requested LiDAR epochs");
  if (!(disturbance_rate >= 0.0 && disturbance_rate < 1.0)) throw ConfigError("disturbance_rate must lie in [0,1)");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be nonnegative");
  if (tile_size == 0 || tile_size > width || tile_size > height) throw ConfigError("tile_size must fit the landscape");
  const std::uint64_t slots = static_cast<std::uint64_t>(width / tile_size) * (height / tile_size);
  if (lidar_tiles == 0 || lidar_tiles > slots)
    throw ConfigError("lidar_tiles must lie in [1, " + std::to_string(slots) + "]");
  if (!(lidar_density > 0.0)) throw ConfigError("lidar_density must be positive");
  if (!(spectral_mixing >= 0.0 && spectral_mixing <= 1.0)) throw ConfigError("spectral_mixing must lie in [0,1]");
}

std::vector<int> LandscapeSpec::epochs() const {
  std::vector<int> e;
  for (int k = 0; k < n_epochs; ++k) e.push_back(last_year() - 2 * k);
  return e;
}

GridTransform tile_window(const GridTransform& grid, const LidarTile& t) {
  return grid.window(t.col0, t.row0, t.size, t.size);
}

GridTransform tile_fine_grid(const GridTransform& grid, const LidarTile& t) {
  return tile_window(grid, t).refined(static_cast<std::uint32_t>(std::lround(grid.resolution)));
}

StackInputs Landscape::stack_inputs(bool with_epoch) const {
  StackInputs in;
  in.dem = dem;
  in.landcover = lcpri;
  in.lcsec = lcsec;
  in.precip = precip;
  in.tmax = tmax;
  in.tmin = tmin;
  in.years = years;
  for (const auto& yr : reflectance) {
    std::array<std::optional<Raster>, 6> bands;
    for (std::size_t b = 0; b < 6; ++b) bands[b] = yr[b];
    in.reflectance.push_back(std::move(bands));
  }
  if (with_epoch) in.epoch = epoch;
  return in;
}

Landscape generate_landscape(const LandscapeSpec& spec) {
  spec.validate();
  const std::uint32_t W = spec.width, H = spec.height;
  const std::size_t N = static_cast<std::size_t>(W) * H;
  Landscape land;
  land.spec = spec;
  land.grid = GridTransform(spec.origin_x, spec.origin_y, LandscapeSpec::kResolution, W, H);
  const auto& g = land.grid;

  // --- terrain: rolling hills plus one mountain rising above the elevation cutoff
  Rng terrain(derive_seed(spec.seed, kTerrain));
  const auto hills = smooth_field(W, H, 60.0, terrain);
  const auto ridges = smooth_field(W, H, 15.0, terrain);
  const double mx = terrain.uniform(0.15, 0.85) * W, my = terrain.uniform(0.15, 0.85) * H;
  const double msig = 0.12 * std::min(W, H);
  land.dem = float_raster(g);
  for (std::uint32_t r = 0; r < H; ++r)
    for (std::uint32_t c = 0; c < W; ++c) {
      const std::size_t i = g.index(c, r);
      const double d2 = ((c - mx) * (c - mx) + (r - my) * (r - my)) / (msig * msig);
      const double z = 380.0 + 150.0 * hills[i] + 25.0 * ridges[i] + 900.0 * std::exp(-0.5 * d2);
      land.dem[i] = static_cast<float>(std::max(20.0, z));
    }

  // --- primary land cover
  Rng lc(derive_seed(spec.seed, kLandcover));
  const auto woods = smooth_field(W, H, 25.0, lc);
  const auto wet = smooth_field(W, H, 12.0, lc);
  const auto open = smooth_field(W, H, 8.0, lc);
  struct Blob {
    double x, y, r;
  };
  std::vector<Blob> lakes, towns;
  for (int k = 0; k < 2; ++k) lakes.push_back({lc.uniform(0, W), lc.uniform(0, H), lc.uniform(4.0, 8.0)});
  for (int k = 0; k < 2; ++k) towns.push_back({lc.uniform(0, W), lc.uniform(0, H), lc.uniform(6.0, 10.0)});
  const auto inside = [](const std::vector<Blob>& blobs, double c, double r) {
    for (const auto& b : blobs)
      if ((c - b.x) * (c - b.x) + (r - b.y) * (r - b.y) <= b.r * b.r) return true;
    return false;
  };

  land.cover.assign(N, Cover::Grass);
  land.lcpri = Raster::filled(g, DType::UInt8, kByteNodata, landcover::kGrassShrub);
  for (std::uint32_t r = 0; r < H; ++r)
    for (std::uint32_t c = 0; c < W; ++c) {
      const std::size_t i = g.index(c, r);
      Cover cv;
      if (inside(lakes, c, r)) cv = Cover::Water;
      else if (land.dem[i] > 1150.0f) cv = Cover::Barren;
      else if (inside(towns, c, r)) cv = Cover::Developed;
      else if (wet[i] > 1.5) cv = Cover::Wetland;
      else if (woods[i] > -0.1) cv = Cover::Forest;
      else if (woods[i] < -0.8) cv = Cover::Crop;
      else cv = Cover::Grass;
      land.cover[i] = cv;
    }

  const MaskSpec mask;
  const auto eligible = [&](std::size_t i) {
    const auto cv = land.cover[i];
    if (cv != Cover::Forest && cv != Cover::Grass && cv != Cover::Crop) return false;
    return land.dem[i] <= mask.max_elevation_m;
  };

  // --- climate normals tied to elevation
  Rng clim(derive_seed(spec.seed, kTerrain + 100));
  // lapse-rate trends plus a shared regional pattern and one local pattern per normal
  const auto rain = smooth_field(W, H, 40.0, clim);
  const auto warm = smooth_field(W, H, 30.0, clim);
  const auto cold = smooth_field(W, H, 20.0, clim);
  const auto wet_local = smooth_field(W, H, 25.0, clim);
  land.precip = float_raster(g);
  land.tmax = float_raster(g);
  land.tmin = float_raster(g);
  for (std::size_t i = 0; i < N; ++i) {
    const double z = land.dem[i];
    land.precip[i] = static_cast<float>(950.0 + 0.35 * z + 60.0 * rain[i] + 25.0 * wet_local[i]);
    land.tmax[i] = static_cast<float>(27.0 - 0.0065 * z + 0.4 * rain[i] + 0.5 * warm[i]);
    land.tmin[i] = static_cast<float>(13.0 - 0.0060 * z + 0.3 * rain[i] + 0.6 * cold[i]);
  }

  // --- shrub patches: noisy ellipses grown until the target count is met exactly
  const auto target = static_cast<std::size_t>(std::llround(spec.prevalence * static_cast<double>(N)));
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < N; ++i)
    if (eligible(i)) pool.push_back(i);
  if (pool.size() < target)
    throw SamplingError("shrub prevalence " + format_number(spec.prevalence) + " is unreachable: only " +
                        std::to_string(pool.size()) + " eligible pixels for " + std::to_string(target));
  // Patch centres favour wetter, milder, lower sites: weights exp(k * suitability).
  std::vector<double> cumulative(pool.size());
  {
    const auto zscore = [&](const Raster& r) {
      double mean = 0.0, sq = 0.0;
      for (auto i : pool) mean += r[i];
      mean /= static_cast<double>(pool.size());
      for (auto i : pool) sq += (r[i] - mean) * (r[i] - mean);
      const double sd = std::sqrt(sq / static_cast<double>(pool.size()));
      return std::pair{mean, sd > 0.0 ? sd : 1.0};
    };
    const auto [pm, ps] = zscore(land.precip);
    const auto [tm, ts] = zscore(land.tmin);
    const auto [em, es] = zscore(land.dem);
    double total = 0.0;
    for (std::size_t k = 0; k < pool.size(); ++k) {
      const auto i = pool[k];
      const double suit = kSuitPrecip * (land.precip[i] - pm) / ps + kSuitTmin * (land.tmin[i] - tm) / ts -
                          kSuitElevation * (land.dem[i] - em) / es;
      total += std::exp(kSuitStrength * suit);
      cumulative[k] = total;
    }
  }
  Rng patches(derive_seed(spec.seed, kPatches));
  const auto draw_centre = [&] {
    const double u = patches.uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return pool[std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), pool.size() - 1)];
  };
  std::vector<std::uint8_t> shrub(N, 0);
  std::vector<Cover> prior(N);
  std::size_t planted = 0;
  for (std::size_t attempt = 0; planted < target; ++attempt) {
    if (attempt > 100000) throw SamplingError("could not plant shrub patches to the requested prevalence");
    for (const auto i : patch_members(W, H, draw_centre(), patches)) {
      if (planted == target) break;
      if (!eligible(i) || shrub[i]) continue;
      shrub[i] = 1;
      prior[i] = land.cover[i];
      land.cover[i] = Cover::Shrub;
      ++planted;
    }
  }
  land.shrub_pixels = planted;

  // --- regrowing clearcuts: shrub-like spectra and history, but trees taller than shrubs
  {
    const auto regrowable = [&](std::size_t i) {
      return land.cover[i] == Cover::Forest && land.dem[i] <= mask.max_elevation_m;
    };
    std::vector<std::size_t> forest;
    for (std::size_t i = 0; i < N; ++i)
      if (regrowable(i)) forest.push_back(i);
    const auto goal = std::min(forest.size() / 2,
                               static_cast<std::size_t>(std::llround(kRegrowthShare * static_cast<double>(target))));
    Rng regrowth(derive_seed(spec.seed, kRegrowth));
    std::size_t done = 0;
    for (std::size_t attempt = 0; done < goal && attempt < 100000; ++attempt)
      for (const auto i : patch_members(W, H, forest[regrowth.below(forest.size())], regrowth)) {
        if (done == goal) break;
        if (!regrowable(i)) continue;
        land.cover[i] = Cover::Regrowth;
        ++done;
      }
  }

  // --- confounders: thinned forest stands and hedgerow-like open land
  Rng thin(derive_seed(spec.seed, kThinning));
  const auto stands = smooth_field(W, H, 6.0, thin);
  const auto hedges = smooth_field(W, H, 5.0, thin);
  {
    std::vector<double> forest_scores;
    for (std::size_t i = 0; i < N; ++i)
      if (land.cover[i] == Cover::Forest && land.dem[i] <= mask.max_elevation_m) forest_scores.push_back(stands[i]);
    if (!forest_scores.empty() && spec.disturbance_rate > 0.0) {
      const auto k = static_cast<std::size_t>(std::llround((1.0 - spec.disturbance_rate) *
                                                           static_cast<double>(forest_scores.size() - 1)));
      std::nth_element(forest_scores.begin(), forest_scores.begin() + static_cast<std::ptrdiff_t>(k),
                       forest_scores.end());
      const double cut = forest_scores[k];
      for (std::size_t i = 0; i < N; ++i)
        if (land.cover[i] == Cover::Forest && land.dem[i] <= mask.max_elevation_m && stands[i] > cut)
          land.cover[i] = Cover::ThinnedForest;
    }
    for (std::size_t i = 0; i < N; ++i)
      if ((land.cover[i] == Cover::Grass || land.cover[i] == Cover::Crop) && hedges[i] > 1.2)
        land.cover[i] = Cover::Hedgerow;
  }

  // --- LCMAP-style primary and secondary codes
  Rng sec(derive_seed(spec.seed, kSecondary));
  land.lcsec = Raster::filled(g, DType::UInt8, kByteNodata, landcover::kGrassShrub);
  for (std::size_t i = 0; i < N; ++i) {
    const double u = sec.uniform();
    std::uint8_t pri = landcover::kGrassShrub, second = landcover::kTreeCover;
    switch (land.cover[i]) {
      case Cover::Water: pri = landcover::kWater; second = landcover::kWetland; break;
      case Cover::Developed: pri = landcover::kDeveloped; second = landcover::kGrassShrub; break;
      case Cover::Barren: pri = landcover::kBarren; second = landcover::kGrassShrub; break;
      case Cover::Wetland: pri = landcover::kWetland; second = u < 0.6 ? landcover::kTreeCover : landcover::kGrassShrub; break;
      case Cover::Crop: pri = landcover::kCropland; second = u < 0.8 ? landcover::kGrassShrub : landcover::kTreeCover; break;
      case Cover::Grass: pri = landcover::kGrassShrub; second = u < 0.5 ? landcover::kCropland : landcover::kTreeCover; break;
      case Cover::Hedgerow: pri = landcover::kGrassShrub; second = u < 0.7 ? landcover::kTreeCover : landcover::kCropland; break;
      case Cover::Forest: pri = landcover::kTreeCover; second = u < 0.7 ? landcover::kGrassShrub : (u < 0.9 ? landcover::kCropland : landcover::kWetland); break;
      case Cover::ThinnedForest: pri = landcover::kTreeCover; second = u < 0.8 ? landcover::kGrassShrub : landcover::kCropland; break;
      case Cover::Regrowth: pri = landcover::kTreeCover; second = landcover::kGrassShrub; break;
      case Cover::Shrub:
        pri = prior[i] == Cover::Forest ? landcover::kTreeCover : landcover::kGrassShrub;
        if (pri == landcover::kTreeCover) second = landcover::kGrassShrub;
        else second = u < 0.65 ? landcover::kTreeCover : landcover::kCropland;
        break;
    }
    land.lcpri[i] = pri;
    land.lcsec[i] = second;
  }

  // --- LiDAR tiles on a coarse lattice, each with its own acquisition year
  Rng tiles(derive_seed(spec.seed, kTiles));
  const std::uint32_t across = W / spec.tile_size, down = H / spec.tile_size;
  const auto slots = tiles.sample_without_replacement(static_cast<std::size_t>(across) * down, spec.lidar_tiles);
  const auto epochs = spec.epochs();
  land.epoch = float_raster(g);
  land.tile = Raster::filled(g, DType::UInt8, kByteNodata, static_cast<float>(kByteNodata));
  for (auto& v : land.epoch.cells()) v = static_cast<float>(kFloatNodata);
  for (std::uint32_t k = 0; k < spec.lidar_tiles; ++k) {
    LidarTile t;
    t.index = k;
    t.col0 = static_cast<std::uint32_t>(slots[k] % across) * spec.tile_size;
    t.row0 = static_cast<std::uint32_t>(slots[k] / across) * spec.tile_size;
    t.size = spec.tile_size;
    t.epoch = epochs[k % epochs.size()];
    t.cloud = "lidar/tile_" + std::to_string(k) + ".spts";
    for (std::uint32_t r = t.row0; r < t.row0 + t.size; ++r)
      for (std::uint32_t c = t.col0; c < t.col0 + t.size; ++c) {
        land.epoch.set(c, r, static_cast<float>(t.epoch));
        land.tile.set(c, r, static_cast<float>(std::min<std::uint32_t>(k, 254)));
      }
    land.tiles.push_back(t);
  }

  // --- annual reflectance
  const int y0 = spec.first_year, y1 = spec.last_year();
  const int oldest_epoch = epochs.back();
  for (int y = y0; y <= y1; ++y) land.years.push_back(y);
  land.truth = Raster::filled(g, DType::Boolean, kByteNodata, 0.0f);
  land.truth_yod = float_raster(g);
  std::vector<Trajectory> traj(N);
  Rng plan(derive_seed(spec.seed, kSeries));
  for (std::size_t i = 0; i < N; ++i) {
    Trajectory t;
    switch (land.cover[i]) {
      case Cover::Water: t.before = kWater; break;
      case Cover::Developed: t.before = kDeveloped; break;
      case Cover::Barren: t.before = kBarren; break;
      case Cover::Wetland: t.before = kWetland; break;
      case Cover::Crop:
      case Cover::Grass:
        // occasional tillage or mowing: a brief drop that heals within a few years
        t.before = land.cover[i] == Cover::Crop ? kCrop : kGrass;
        if (plan.uniform() < kOpenDisturbance) {
          t.after = blend(t.before, kCleared, plan.uniform(0.4, 1.0));
          t.settled = t.before;
          t.yod = y0 + 2 + static_cast<int>(plan.below(static_cast<std::uint64_t>(y1 - y0 - 1)));
          t.recovery = 1 + static_cast<int>(plan.below(3));
        }
        break;
      case Cover::Forest: t.before = kForest; break;
      case Cover::Hedgerow: t.before = blend(kGrass, kShrub, plan.uniform(0.3, 0.8)); break;
      case Cover::ThinnedForest:
        t.before = kForest;
        t.after = blend(kForest, kCleared, plan.uniform(0.3, 0.6));
        t.settled = kForest;
        t.yod = y0 + 2 + static_cast<int>(plan.below(static_cast<std::uint64_t>(y1 - y0 - 2)));
        t.recovery = 3 + static_cast<int>(plan.below(6));
        break;
      case Cover::Regrowth: {
        const int latest = oldest_epoch - 3;
        t.before = kForest;
        t.after = kCleared;
        t.settled = blend(kShrub, kForest, plan.uniform(0.0, 0.4));
        t.yod = y0 + 2 + static_cast<int>(plan.below(static_cast<std::uint64_t>(latest - (y0 + 2) + 1)));
        t.recovery = 4 + static_cast<int>(plan.below(6));
        break;
      }
      case Cover::Shrub: {
        land.truth[i] = 1.0f;
        const bool stable = plan.uniform() < kStableShrub;
        const Spectrum before = prior[i] == Cover::Forest ? kForest : (prior[i] == Cover::Crop ? kCrop : kGrass);
        if (stable) {
          // no disturbance in the record: spectra stay close to the cover it replaced
          t.before = blend(before, kShrub, plan.uniform(0.0, kStableShrubContrast));
        } else {
          t.before = before;
          t.after = kCleared;
          t.settled = kShrub;
          const int latest = oldest_epoch - 3;
          t.yod = y0 + 2 + static_cast<int>(plan.below(static_cast<std::uint64_t>(latest - (y0 + 2) + 1)));
          t.recovery = 4 + static_cast<int>(plan.below(6));
        }
        break;
      }
    }
    traj[i] = t;
    land.truth_yod[i] = static_cast<float>(t.yod);
  }
  // sub-pixel mixing: vegetated pixels blend toward a random vegetation type
  if (spec.spectral_mixing > 0.0) {
    Rng mix(derive_seed(spec.seed, kMixing));
    const std::array<Spectrum, 4> partners{kForest, kShrub, kGrass, kCrop};
    for (std::size_t i = 0; i < N; ++i) {
      const auto cv = land.cover[i];
      if (cv == Cover::Water || cv == Cover::Developed || cv == Cover::Barren) continue;
      const auto& partner = partners[mix.below(partners.size())];
      const double m = mix.uniform(0.0, spec.spectral_mixing);
      auto& t = traj[i];
      t.before = blend(t.before, partner, m);
      t.after = blend(t.after, partner, m);
      t.settled = blend(t.settled, partner, m);
    }
  }
  // per-pixel brightness variation, fixed across years
  Rng factor_rng(derive_seed(spec.seed, kPixelFactor));
  std::vector<Spectrum> factor(N);
  for (auto& f : factor)
    for (auto& v : f) v = 1.0 + kPixelVariation * factor_rng.normal();

  const double band_sd = spec.noise_sigma / 4.0;
  land.reflectance.resize(land.years.size());
  for (std::size_t t = 0; t < land.years.size(); ++t) {
    Rng noise(derive_seed(derive_seed(spec.seed, kSeries + 1000), static_cast<std::uint64_t>(land.years[t])));
    for (std::size_t b = 0; b < 6; ++b) land.reflectance[t][b] = float_raster(g);
    for (std::size_t i = 0; i < N; ++i) {
      const auto s = traj[i].at(land.years[t]);
      for (std::size_t b = 0; b < 6; ++b) {
        const double v = s[b] * factor[i][b] + band_sd * noise.normal();
        land.reflectance[t][b][i] = static_cast<float>(std::max(0.001, v));
      }
    }
  }
  return land;
}

float canopy_height(const Landscape& land, std::uint64_t gx, std::uint64_t gy) {
  const auto res = static_cast<std::uint64_t>(LandscapeSpec::kResolution);
  const auto col = static_cast<std::uint32_t>(gx / res), row = static_cast<std::uint32_t>(gy / res);
  const auto cover = land.cover[land.grid.index(col, row)];
  const std::uint64_t seed = derive_seed(land.spec.seed, kHeights);
  const double u = hash_uniform(seed, gx, gy, 1), v = hash_uniform(seed, gx, gy, 2);
  switch (cover) {
    case Cover::Water:
    case Cover::Barren: return 0.0f;
    case Cover::Developed: return static_cast<float>(u < 0.3 ? 6.0 + 9.0 * v : 0.2 * v);
    case Cover::Wetland: return static_cast<float>(1.5 * v);
    case Cover::Crop:
    case Cover::Grass: return static_cast<float>(0.6 * v);
    case Cover::Hedgerow: return static_cast<float>(u < 0.25 ? 1.3 + 3.4 * v : 0.6 * v);
    case Cover::Forest: return static_cast<float>(u < 0.03 ? 1.0 + 4.0 * v : 8.0 + 17.0 * v);
    case Cover::ThinnedForest: return static_cast<float>(u < 0.4 ? 1.3 + 3.4 * v : 8.0 + 17.0 * v);
    case Cover::Regrowth: return static_cast<float>(u < 0.15 ? 2.0 + 3.0 * v : 5.6 + 4.0 * v);
    case Cover::Shrub: return static_cast<float>(u < 0.05 ? 0.8 * v : 1.3 + 3.4 * v);
  }
  return 0.0f;
}

PointCloud generate_tile_cloud(const Landscape& land, const LidarTile& tile) {
  const double res = LandscapeSpec::kResolution;
  const double side = tile.size * res;
  const double x0 = land.grid.origin_x + tile.col0 * res;
  const double ytop = land.grid.origin_y - tile.row0 * res;
  const auto n = static_cast<std::size_t>(std::llround(land.spec.lidar_density * side * side));
  Rng rng(derive_seed(derive_seed(land.spec.seed, kCloud), tile.index));
  std::vector<Return> returns;
  returns.reserve(n);
  const double gx0 = tile.col0 * res, gy0 = tile.row0 * res;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = rng.uniform() * side, dy = rng.uniform() * side;
    const auto gx = static_cast<std::uint64_t>(gx0 + dx), gy = static_cast<std::uint64_t>(gy0 + dy);
    returns.push_back({x0 + dx, ytop - dy, canopy_height(land, gx, gy)});
  }
  return PointCloud(std::move(returns));
}

void write_landscape(const Landscape& land, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "series");
  fs::create_directories(fs::path(dir) / "lidar");
  const auto path = [&](const std::string& rel) { return (fs::path(dir) / rel).string(); };
  Manifest m;
  const auto put = [&](const std::string& key, const Raster& r, const std::string& rel) {
    write_raster(r, path(rel));
    if (!key.empty()) m.add(key, rel);
  };
  put("DEM", land.dem, "dem.sras");
  put("LCPRI", land.lcpri, "lcpri.sras");
  put("LCSEC", land.lcsec, "lcsec.sras");
  put("PRECIP", land.precip, "precip.sras");
  put("TMAX", land.tmax, "tmax.sras");
  put("TMIN", land.tmin, "tmin.sras");
  put("EPOCH", land.epoch, "epoch.sras");
  put("", land.truth, "truth_labels.sras");
  put("", land.truth_yod, "truth_yod.sras");
  put("", land.tile, "tile.sras");
  for (std::size_t t = 0; t < land.years.size(); ++t)
    for (std::size_t b = 0; b < 6; ++b) {
      const auto key = reflectance_band_names()[b] + "_" + std::to_string(land.years[t]);
      put(key, land.reflectance[t][b], "series/" + key + ".sras");
    }
  m.write(path("manifest.txt"));

  std::ofstream tiles(path("tiles.txt"), std::ios::trunc);
  if (!tiles) throw IoError("cannot write " + path("tiles.txt"));
  tiles << "# index col0 row0 size epoch cloud\n";
  for (const auto& t : land.tiles) {
    write_cloud(generate_tile_cloud(land, t), path(t.cloud));
    tiles << t.index << ' ' << t.col0 << ' ' << t.row0 << ' ' << t.size << ' ' << t.epoch << ' ' << t.cloud << '\n';
  }
  if (!tiles) throw IoError("failed writing " + path("tiles.txt"));

  std::ofstream report(path("landscape.txt"), std::ios::trunc);
  report << land.spec.to_text() << "# achieved\nshrub_pixels=" << land.shrub_pixels
         << "\nachieved_prevalence=" << format_number(land.prevalence()) << "\n";
  if (!report) throw IoError("failed writing " + path("landscape.txt"));
}

std::vector<LidarTile> read_tiles(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<LidarTile> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    LidarTile t;
    if (!(ls >> t.index >> t.col0 >> t.row0 >> t.size >> t.epoch >> t.cloud))
      throw FormatError(path + ": malformed tile line '" + line + "'");
    out.push_back(t);
  }
  return out;
}

}  // namespace shrubmap
