#include "shrubmap/stack.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "shrubmap/error.hpp"
#include "shrubmap/parallel.hpp"
#include "shrubmap/segmentation.hpp"
#include "shrubmap/terrain.hpp"

namespace fs = std::filesystem;

namespace shrubmap {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Manifest Manifest::parse_text(const std::string& text, const std::string& base_dir) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ManifestError("manifest line " + std::to_string(lineno) + ": expected name=path");
    const auto name = trim(line.substr(0, eq));
    auto path = trim(line.substr(eq + 1));
    if (name.empty() || path.empty()) throw ManifestError("manifest line " + std::to_string(lineno) + ": empty name or path");
    if (m.has(name)) throw ManifestError("manifest lists band " + name + " twice");
    if (fs::path(path).is_relative()) path = (fs::path(base_dir) / path).lexically_normal().string();
    m.add(name, path);
  }
  return m;
}

Manifest Manifest::parse(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  auto dir = fs::path(path).parent_path().string();
  return parse_text(ss.str(), dir.empty() ? "." : dir);
}

void Manifest::add(const std::string& name, const std::string& path) {
  if (!entries_.count(name)) order_.push_back(name);
  entries_[name] = path;
}

const std::string& Manifest::path(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw ManifestError("manifest is missing band " + name);
  return it->second;
}

std::string Manifest::to_text() const {
  std::string out;
  for (const auto& name : order_) out += name + "=" + entries_.at(name) + "\n";
  return out;
}

void Manifest::write(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path);
  out << to_text();
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& stack_band_names() {
  static const std::vector<std::string> names = {"TCB",    "TCW",  "TCG",  "NBR",       "dTCB",   "dTCW",
                                                 "dTCG",   "dNBR", "MAG",  "YOD",       "PRECIP", "TMAX",
                                                 "TMIN",   "ELEVATION", "ASPECT", "SLOPE", "TWI", "LCSEC"};
  return names;
}

const std::vector<std::string>& default_feature_names() {
  static const std::vector<std::string> names = {"TCB",  "TCW",    "TCG",   "NBR",       "MAG",
                                                 "YOD",  "PRECIP", "TMAX",  "TMIN",      "ASPECT",
                                                 "ELEVATION", "SLOPE", "TWI", "LCSEC"};
  return names;
}

const std::array<std::string, 6>& reflectance_band_names() {
  static const std::array<std::string, 6> names = {"BLUE", "GREEN", "RED", "NIR", "SWIR1", "SWIR2"};
  return names;
}

void PredictorStack::set(const std::string& name, Raster band) {
  if (!(band.transform() == transform_)) throw AlignmentError("stack band " + name + " is not on the stack grid");
  bands_.insert_or_assign(name, std::move(band));
}

const Raster& PredictorStack::band(const std::string& name) const {
  const auto it = bands_.find(name);
  if (it == bands_.end()) throw ManifestError("stack is missing band " + name);
  return it->second;
}

void PredictorStack::write(const std::string& dir) const {
  fs::create_directories(dir);
  Manifest m;
  for (const auto& name : stack_band_names()) {
    if (!has(name)) continue;
    write_raster(band(name), (fs::path(dir) / (name + ".sras")).string());
    m.add(name, name + ".sras");
  }
  m.write((fs::path(dir) / "manifest.txt").string());
}

PredictorStack PredictorStack::read(const std::string& dir) {
  const auto m = Manifest::parse((fs::path(dir) / "manifest.txt").string());
  std::optional<PredictorStack> stack;
  for (const auto& [name, path] : m.entries()) {
    auto r = read_raster(path);
    if (!stack) stack.emplace(r.transform());
    stack->set(name, std::move(r));
  }
  if (!stack) throw ManifestError("stack directory " + dir + " lists no bands");
  return std::move(*stack);
}

// ---------------------------------------------------------------------------

StackInputs StackInputs::from_manifest(const Manifest& m) {
  StackInputs in;
  in.dem = read_raster(m.path("DEM"));
  in.landcover = read_raster(m.path("LCPRI"));
  in.lcsec = read_raster(m.path("LCSEC"));
  in.precip = read_raster(m.path("PRECIP"));
  in.tmax = read_raster(m.path("TMAX"));
  in.tmin = read_raster(m.path("TMIN"));
  if (m.has("EPOCH")) in.epoch = read_raster(m.path("EPOCH"));
  std::map<int, std::array<std::optional<std::string>, 6>> by_year;
  const auto& bands = reflectance_band_names();
  for (const auto& [name, path] : m.entries()) {
    const auto us = name.rfind('_');
    if (us == std::string::npos) continue;
    const auto prefix = name.substr(0, us);
    for (std::size_t b = 0; b < bands.size(); ++b) {
      if (prefix != bands[b]) continue;
      int year = 0;
      try {
        year = std::stoi(name.substr(us + 1));
      } catch (const std::exception&) {
        throw ManifestError("bad reflectance band name " + name);
      }
      by_year[year][b] = path;
    }
  }
  if (by_year.size() < 2) throw ManifestError("manifest needs reflectance bands for at least two years");
  for (const auto& [year, paths] : by_year) {
    std::array<std::optional<Raster>, 6> rasters;
    for (std::size_t b = 0; b < 6; ++b) {
      if (!paths[b]) throw ManifestError("manifest is missing band " + bands[b] + "_" + std::to_string(year));
      rasters[b] = read_raster(*paths[b]);
    }
    in.years.push_back(year);
    in.reflectance.push_back(std::move(rasters));
  }
  return in;
}

std::optional<PixelPredictors> pixel_predictors(const std::vector<int>& years,
                                                const std::vector<Reflectance>& reflectance, int epoch,
                                                const StackOptions& options) {
  std::vector<int> obs_years;
  std::vector<double> nbr_v, tcb_v, tcg_v, tcw_v;
  for (std::size_t t = 0; t < years.size(); ++t) {
    const auto& r = reflectance[t];
    const auto n = nbr(r[kNir], r[kSwir2]);
    if (!n) continue;
    const auto tc = tasseled_cap(r, options.tasseled_cap);
    obs_years.push_back(years[t]);
    nbr_v.push_back(*n);
    tcb_v.push_back(tc.brightness);
    tcg_v.push_back(tc.greenness);
    tcw_v.push_back(tc.wetness);
  }
  if (obs_years.size() < 2 || epoch < obs_years.front() || epoch > obs_years.back()) return std::nullopt;

  const AnnualSeries nbr_series(obs_years, nbr_v);
  const auto nbr_fit = segment_series(nbr_series, options.max_segments);
  const auto tcb_fit = fit_to_vertices(AnnualSeries(obs_years, tcb_v), nbr_fit.vertex_years);
  const auto tcg_fit = fit_to_vertices(AnnualSeries(obs_years, tcg_v), nbr_fit.vertex_years);
  const auto tcw_fit = fit_to_vertices(AnnualSeries(obs_years, tcw_v), nbr_fit.vertex_years);
  const auto dist_fit = options.disturbance_max_segments == options.max_segments
                            ? nbr_fit
                            : segment_series(nbr_series, options.disturbance_max_segments);
  const auto dist = disturbance_from_fit(dist_fit, options.disturbance_threshold, epoch);

  const auto delta = [&](const SegmentedFit& f) -> std::optional<double> {
    if (epoch - 1 < f.first_year) return std::nullopt;
    return f.at(epoch) - f.at(epoch - 1);
  };
  PixelPredictors p;
  p.tcb = tcb_fit.at(epoch);
  p.tcg = tcg_fit.at(epoch);
  p.tcw = tcw_fit.at(epoch);
  p.nbr = nbr_fit.at(epoch);
  p.dtcb = delta(tcb_fit);
  p.dtcg = delta(tcg_fit);
  p.dtcw = delta(tcw_fit);
  p.dnbr = delta(nbr_fit);
  p.mag = dist.mag;
  p.yod = dist.yod.value_or(0);
  return p;
}

PredictorStack assemble_stack(const StackInputs& in, const StackOptions& options) {
  for (const auto* r : {&in.dem, &in.landcover, &in.lcsec, &in.precip, &in.tmax, &in.tmin})
    if (!r->has_value()) throw ManifestError("stack inputs are missing a steady-state band");
  if (in.years.size() < 2 || in.years.size() != in.reflectance.size())
    throw ManifestError("stack inputs need reflectance for at least two years");
  const Raster& dem = *in.dem;
  const GridTransform grid = dem.transform();
  const auto check = [&](const Raster& r, const std::string& what) {
    if (!(r.transform() == grid)) throw AlignmentError("stack input " + what + " is not aligned with the DEM");
  };
  check(*in.landcover, "LCPRI");
  check(*in.lcsec, "LCSEC");
  check(*in.precip, "PRECIP");
  check(*in.tmax, "TMAX");
  check(*in.tmin, "TMIN");
  if (in.epoch) check(*in.epoch, "EPOCH");
  for (std::size_t t = 0; t < in.years.size(); ++t)
    for (std::size_t b = 0; b < 6; ++b) {
      if (!in.reflectance[t][b]) throw ManifestError("missing reflectance band " + reflectance_band_names()[b]);
      check(*in.reflectance[t][b], reflectance_band_names()[b] + "_" + std::to_string(in.years[t]));
    }
  if (!in.epoch && (options.epoch < in.years.front() || options.epoch > in.years.back()))
    throw ParameterError("epoch " + std::to_string(options.epoch) + " outside series range " +
                         std::to_string(in.years.front()) + "-" + std::to_string(in.years.back()));

  const auto terrain = slope_aspect(dem);
  const auto wetness = twi(dem);

  const std::vector<std::string> float_bands = {"TCB", "TCW", "TCG", "NBR", "dTCB", "dTCW", "dTCG", "dNBR",
                                                "MAG", "YOD", "PRECIP", "TMAX", "TMIN", "ELEVATION",
                                                "ASPECT", "SLOPE", "TWI"};
  std::map<std::string, Raster> out;
  for (const auto& name : float_bands) out.emplace(name, Raster(grid, DType::Float32, kFloatNodata));
  out.emplace("LCSEC", Raster(grid, DType::UInt8, kByteNodata));

  const std::size_t n = grid.cell_count();
  parallel_for(n, [&](std::size_t i) {
    if (options.mask.masks((*in.landcover)[i], !in.landcover->is_nodata_at(i), dem[i], !dem.is_nodata_at(i))) return;
    int epoch = options.epoch;
    if (in.epoch) {
      if (in.epoch->is_nodata_at(i)) return;
      epoch = static_cast<int>(std::lround((*in.epoch)[i]));
    }
    const float steady[] = {(*in.precip)[i], (*in.tmax)[i], (*in.tmin)[i], dem[i],
                            terrain.aspect_deg[i], terrain.slope_deg[i], wetness[i]};
    const bool steady_ok = !in.precip->is_nodata_at(i) && !in.tmax->is_nodata_at(i) && !in.tmin->is_nodata_at(i) &&
                           !dem.is_nodata_at(i) && !terrain.aspect_deg.is_nodata_at(i) &&
                           !terrain.slope_deg.is_nodata_at(i) && !wetness.is_nodata_at(i) &&
                           !in.lcsec->is_nodata_at(i);
    if (!steady_ok) return;

    std::vector<int> years;
    std::vector<Reflectance> refl;
    years.reserve(in.years.size());
    refl.reserve(in.years.size());
    for (std::size_t t = 0; t < in.years.size(); ++t) {
      Reflectance r{};
      bool ok = true;
      for (std::size_t b = 0; b < 6 && ok; ++b) {
        const Raster& band = *in.reflectance[t][b];
        if (band.is_nodata_at(i)) ok = false;
        else r[b] = band[i];
      }
      if (!ok) continue;
      years.push_back(in.years[t]);
      refl.push_back(r);
    }
    const auto p = pixel_predictors(years, refl, epoch, options);
    if (!p) return;
    const auto put = [&](const char* name, double v) { out.at(name)[i] = static_cast<float>(v); };
    put("TCB", p->tcb);
    put("TCG", p->tcg);
    put("TCW", p->tcw);
    put("NBR", p->nbr);
    if (p->dtcb) put("dTCB", *p->dtcb);
    if (p->dtcg) put("dTCG", *p->dtcg);
    if (p->dtcw) put("dTCW", *p->dtcw);
    if (p->dnbr) put("dNBR", *p->dnbr);
    put("MAG", p->mag);
    put("YOD", p->yod);
    const char* steady_names[] = {"PRECIP", "TMAX", "TMIN", "ELEVATION", "ASPECT", "SLOPE", "TWI"};
    for (std::size_t k = 0; k < 7; ++k) out.at(steady_names[k])[i] = steady[k];
    out.at("LCSEC")[i] = (*in.lcsec)[i];
  });

  PredictorStack stack(grid);
  for (auto& [name, r] : out) stack.set(name, std::move(r));
  return stack;
}

}  // namespace shrubmap
