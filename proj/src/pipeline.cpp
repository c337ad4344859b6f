#include "shrubmap/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "shrubmap/binary_io.hpp"
#include "shrubmap/chm.hpp"
#include "shrubmap/error.hpp"
#include "shrubmap/log.hpp"
#include "shrubmap/parallel.hpp"
#include "shrubmap/random.hpp"
#include "shrubmap/validation_plan.hpp"

namespace fs = std::filesystem;

namespace shrubmap {

namespace {

template <typename T>
void parse_value(const std::string& key, const std::string& text, T& out) {
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ConfigError("config: bad value for " + key + ": '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) {
    T v{};
    parse_value(key, item, v);
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("config: " + key + " needs at least one value");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, std::string>) out += items[i];
    else if constexpr (std::is_floating_point_v<T>) out += format_number(items[i]);
    else out += std::to_string(items[i]);
  }
  return out;
}

std::string number_text(double v) { return format_number(v); }
template <typename T>
std::string number_text(T v) requires std::is_integral_v<T> { return std::to_string(v); }

struct Key {
  std::string name;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

template <typename T>
Key number_key(std::string name, T PipelineConfig::*member) {
  return {name, [member](const PipelineConfig& c) { return number_text(c.*member); },
          [name, member](PipelineConfig& c, const std::string& v) { parse_value(name, v, c.*member); }};
}

template <typename S, typename T>
Key nested_key(std::string name, S PipelineConfig::*outer, T S::*member) {
  return {name, [outer, member](const PipelineConfig& c) { return number_text(c.*outer.*member); },
          [name, outer, member](PipelineConfig& c, const std::string& v) { parse_value(name, v, c.*outer.*member); }};
}

const std::vector<Key>& config_keys() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    k.push_back({"output_dir", [](const PipelineConfig& c) { return c.output_dir; },
                 [](PipelineConfig& c, const std::string& v) { c.output_dir = v; }});
    k.push_back({"from_stage", [](const PipelineConfig& c) { return c.from_stage; },
                 [](PipelineConfig& c, const std::string& v) { c.from_stage = v; }});
    k.push_back(number_key("seed", &PipelineConfig::seed));
    k.push_back(number_key("workers", &PipelineConfig::workers));
    k.push_back({"landscape_seed",
                 [](const PipelineConfig& c) { return std::to_string(c.resolved_landscape().seed); },
                 [](PipelineConfig& c, const std::string& v) {
                   std::uint64_t s = 0;
                   parse_value("landscape_seed", v, s);
                   c.landscape_seed = s;
                 }});
    using L = LandscapeSpec;
    const auto land = &PipelineConfig::landscape;
    k.push_back(nested_key("width", land, &L::width));
    k.push_back(nested_key("height", land, &L::height));
    k.push_back(nested_key("origin_x", land, &L::origin_x));
    k.push_back(nested_key("origin_y", land, &L::origin_y));
    k.push_back(nested_key("prevalence", land, &L::prevalence));
    k.push_back(nested_key("first_year", land, &L::first_year));
    k.push_back(nested_key("n_years", land, &L::n_years));
    k.push_back(nested_key("n_epochs", land, &L::n_epochs));
    k.push_back(nested_key("disturbance_rate", land, &L::disturbance_rate));
    k.push_back(nested_key("noise_sigma", land, &L::noise_sigma));
    k.push_back(nested_key("lidar_tiles", land, &L::lidar_tiles));
    k.push_back(nested_key("tile_size", land, &L::tile_size));
    k.push_back(nested_key("lidar_density", land, &L::lidar_density));
    k.push_back(nested_key("spectral_mixing", land, &L::spectral_mixing));
    k.push_back(number_key("pulse_width", &PipelineConfig::pulse_width_m));
    k.push_back(number_key("points_per_circle", &PipelineConfig::points_per_circle));
    k.push_back(number_key("shrub_min", &PipelineConfig::shrub_min_m));
    k.push_back(number_key("shrub_max", &PipelineConfig::shrub_max_m));
    k.push_back(number_key("max_segments", &PipelineConfig::max_segments));
    k.push_back(number_key("disturbance_threshold", &PipelineConfig::disturbance_threshold));
    k.push_back(number_key("statewide_epoch", &PipelineConfig::statewide_epoch));
    k.push_back(number_key("sample_size", &PipelineConfig::sample_size));
    const char* split_keys[3] = {"train_fraction", "validation_fraction", "test_fraction"};
    for (std::size_t s = 0; s < 3; ++s) {
      const std::string name = split_keys[s];
      k.push_back({name, [s](const PipelineConfig& c) { return format_number(c.split_fractions[s]); },
                   [s, name](PipelineConfig& c, const std::string& v) { parse_value(name, v, c.split_fractions[s]); }});
    }
    k.push_back({"features", [](const PipelineConfig& c) { return join(c.features); },
                 [](PipelineConfig& c, const std::string& v) {
                   c.features = split_list(v);
                   if (c.features.empty()) throw ConfigError("config: features needs at least one name");
                 }});
    const auto rf = &PipelineConfig::rf;
    k.push_back(nested_key("rf_trees", rf, &ForestParams::n_trees));
    k.push_back(nested_key("rf_bootstrap_fraction", rf, &ForestParams::bootstrap_fraction));
    k.push_back(nested_key("rf_min_node", rf, &ForestParams::min_node));
    k.push_back(nested_key("rf_features_per_split", rf, &ForestParams::features_per_split));
    const auto gbm = &PipelineConfig::gbm;
    k.push_back(nested_key("gbm_trees", gbm, &GbmParams::n_trees));
    k.push_back(nested_key("gbm_max_leaves", gbm, &GbmParams::max_leaves));
    k.push_back(nested_key("gbm_learning_rate", gbm, &GbmParams::learning_rate));
    k.push_back(nested_key("gbm_min_leaf", gbm, &GbmParams::min_leaf));
    k.push_back(nested_key("gbm_min_per_bin", gbm, &GbmParams::min_per_bin));
    k.push_back(nested_key("gbm_max_bins", gbm, &GbmParams::max_bins));
    k.push_back(nested_key("gbm_l1", gbm, &GbmParams::l1));
    k.push_back(nested_key("gbm_l2", gbm, &GbmParams::l2));
    k.push_back(nested_key("gbm_min_child_hessian", gbm, &GbmParams::min_child_hessian));
    k.push_back(nested_key("gbm_bagging_fraction", gbm, &GbmParams::bagging_fraction));
    k.push_back(nested_key("gbm_feature_fraction", gbm, &GbmParams::feature_fraction));
    k.push_back({"mlp_hidden", [](const PipelineConfig& c) { return join(c.mlp.hidden); },
                 [](PipelineConfig& c, const std::string& v) { c.mlp.hidden = parse_list<std::size_t>("mlp_hidden", v); }});
    const auto mlp = &PipelineConfig::mlp;
    k.push_back(nested_key("mlp_dropout", mlp, &MlpParams::dropout));
    k.push_back(nested_key("mlp_epochs", mlp, &MlpParams::epochs));
    k.push_back(nested_key("mlp_batch_size", mlp, &MlpParams::batch_size));
    k.push_back(nested_key("mlp_learning_rate", mlp, &MlpParams::learning_rate));
    k.push_back(nested_key("mlp_momentum", mlp, &MlpParams::momentum));
    k.push_back({"stacker_link", [](const PipelineConfig& c) { return probability_link_name(c.stacker_link); },
                 [](PipelineConfig& c, const std::string& v) { c.stacker_link = parse_probability_link(v); }});
    k.push_back({"threshold_targets", [](const PipelineConfig& c) { return join(c.threshold_targets); },
                 [](PipelineConfig& c, const std::string& v) {
                   c.threshold_targets = parse_list<double>("threshold_targets", v);
                 }});
    k.push_back(number_key("patchwork_auc_sample", &PipelineConfig::patchwork_auc_sample));
    k.push_back(number_key("hex_apothem_km", &PipelineConfig::hex_apothem_km));
    k.push_back(number_key("hex_per_bin", &PipelineConfig::hex_per_bin));
    return k;
  }();
  return keys;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

std::string metric_text(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

const MetricsReport& find_metrics(const std::vector<std::pair<std::string, MetricsReport>>& list,
                                  const std::string& name, const char* what) {
  for (const auto& [n, m] : list)
    if (n == name) return m;
  throw ParameterError(std::string("no ") + what + " metrics for threshold " + name);
}

}  // namespace

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages{"synth",   "chm",       "label",   "predictors",
                                               "sample",  "train",     "stack",   "calibrate",
                                               "predict", "evaluate",  "validate-plan"};
  return stages;
}

PipelineConfig::PipelineConfig() {
  // Desk-scale learner sizes; see README for the rationale.
  rf.n_trees = 300;
  gbm.n_trees = 300;
  gbm.learning_rate = 0.05;
  mlp.epochs = 100;
  mlp.batch_size = 64;
}

PipelineConfig PipelineConfig::parse_text(const std::string& text) {
  PipelineConfig c;
  std::map<std::string, const Key*> by_name;
  for (const auto& k : config_keys()) by_name[k.name] = &k;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    line = line.substr(first, line.find_last_not_of(" \t\r") - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key=value, got '" + line + "'");
    auto key = line.substr(0, eq);
    auto value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    const auto it = by_name.find(key);
    if (it == by_name.end()) throw ConfigError("config: unknown key " + key);
    if (!seen.insert(key).second) throw ConfigError("config: duplicate key " + key);
    it->second->set(c, value);
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::read(const std::string& path) {
  try {
    return parse_text(read_text(path));
  } catch (const IoError&) {
    throw ConfigError("cannot open config " + path);
  }
}

std::string PipelineConfig::to_text() const {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + "=" + k.get(*this) + "\n";
  return out;
}

LandscapeSpec PipelineConfig::resolved_landscape() const {
  LandscapeSpec s = landscape;
  s.seed = landscape_seed.value_or(seed);
  return s;
}

void PipelineConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("config: output_dir must not be empty");
  const auto& st = pipeline_stages();
  if (std::find(st.begin(), st.end(), from_stage) == st.end())
    throw ConfigError("config: unknown stage '" + from_stage + "'");
  landscape.validate();
  if (!(pulse_width_m >= 0.0)) throw ConfigError("config: pulse_width must be nonnegative");
  if (!(shrub_min_m < shrub_max_m)) throw ConfigError("config: shrub_min must be below shrub_max");
  if (max_segments < 1) throw ConfigError("config: max_segments must be at least 1");
  if (statewide_epoch != 0 &&
      (statewide_epoch < landscape.first_year || statewide_epoch > landscape.last_year()))
    throw ConfigError("config: statewide_epoch outside the series years");
  if (sample_size % 2 != 0) throw ConfigError("config: sample_size must be even");
  double total = 0.0;
  for (double f : split_fractions) {
    if (!(f >= 0.0)) throw ConfigError("config: split fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("config: split fractions must sum to 1");
  if (split_fractions[0] <= 0.0 || split_fractions[1] <= 0.0 || split_fractions[2] <= 0.0)
    throw ConfigError("config: every split needs a positive fraction");
  std::set<std::string> unique(features.begin(), features.end());
  if (unique.size() != features.size()) throw ConfigError("config: duplicate feature name");
  const auto& bands = stack_band_names();
  for (const auto& f : features)
    if (std::find(bands.begin(), bands.end(), f) == bands.end())
      throw ConfigError("config: unknown feature " + f);
  if (rf.n_trees == 0 || !(rf.bootstrap_fraction > 0.0) || rf.min_node == 0 || rf.features_per_split == 0 ||
      rf.features_per_split > features.size())
    throw ConfigError("config: invalid random forest parameters");
  if (gbm.max_leaves < 2 || !(gbm.learning_rate > 0.0) || gbm.max_bins < 2 || gbm.max_bins > 255 ||
      !(gbm.bagging_fraction > 0.0 && gbm.bagging_fraction <= 1.0) ||
      !(gbm.feature_fraction > 0.0 && gbm.feature_fraction <= 1.0) || gbm.l1 < 0.0 || gbm.l2 < 0.0)
    throw ConfigError("config: invalid gradient boosting parameters");
  if (mlp.hidden.empty() || mlp.epochs == 0 || mlp.batch_size == 0 || !(mlp.learning_rate > 0.0) ||
      !(mlp.dropout >= 0.0 && mlp.dropout < 1.0) || !(mlp.momentum >= 0.0 && mlp.momentum < 1.0))
    throw ConfigError("config: invalid neural network parameters");
  for (auto h : mlp.hidden)
    if (h == 0) throw ConfigError("config: hidden layer sizes must be positive");
  for (double t : threshold_targets)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("config: threshold targets must lie in (0,1)");
  if (patchwork_auc_sample == 0) throw ConfigError("config: patchwork_auc_sample must be positive");
  if (!(hex_apothem_km > 0.0)) throw ConfigError("config: hex_apothem_km must be positive");
  if (hex_per_bin == 0) throw ConfigError("config: hex_per_bin must be positive");
}

double PipelineResult::auc(const std::string& model) const {
  for (const auto& [n, v] : test_auc)
    if (n == model) return v;
  throw ParameterError("no test AUC for model " + model);
}

const MetricsReport& PipelineResult::test_at(const std::string& threshold) const {
  return find_metrics(test_metrics, threshold, "test");
}

const MetricsReport& PipelineResult::patchwork_at(const std::string& threshold) const {
  return find_metrics(patchwork_metrics, threshold, "patchwork");
}

Raster predict_raster(const ProbabilityModel& model, const PredictorStack& stack) {
  const auto& names = model.feature_names();
  std::vector<const Raster*> bands;
  for (const auto& n : names) bands.push_back(&stack.band(n));
  Raster out(stack.transform(), DType::Float32, kFloatNodata);
  const std::size_t n = out.size();
  parallel_chunks(n, [&](std::size_t begin, std::size_t end) {
    std::vector<double> x(names.size());
    for (std::size_t i = begin; i < end; ++i) {
      bool complete = true;
      for (std::size_t f = 0; f < bands.size() && complete; ++f) {
        if (bands[f]->is_nodata_at(i)) complete = false;
        else x[f] = (*bands[f])[i];
      }
      if (complete) out[i] = static_cast<float>(model.predict_proba(x));
    }
  });
  return out;
}

Raster classify_raster(const Raster& prob, double threshold) {
  Raster out(prob.transform(), DType::Boolean, kByteNodata);
  for (std::size_t i = 0; i < prob.size(); ++i)
    if (!prob.is_nodata_at(i)) out[i] = static_cast<double>(prob[i]) >= threshold ? 1.0f : 0.0f;
  return out;
}

EnsembleModel build_ensemble(ForestModel rf, GbmModel gbm, MlpModel mlp, const SampleSet& sample,
                             ProbabilityLink link) {
  const auto validation = labeled_data(sample, Split::Validation);
  if (validation.y.empty()) throw SamplingError("sample has no validation records");
  const auto base = base_probability_matrix(rf, gbm, mlp, validation.x);
  StackerParams params;
  params.link = link;
  auto stacker = train_stacker(validation, base, params);
  return EnsembleModel(std::move(rf), std::move(gbm), std::move(mlp), std::move(stacker), link);
}

ThresholdSet calibrate_on_sample(const ProbabilityModel& model, const SampleSet& sample,
                                 const std::vector<double>& targets) {
  const auto validation = labeled_data(sample, Split::Validation);
  if (validation.y.empty()) throw SamplingError("sample has no validation records");
  const auto probs = model.predict_batch(validation.x);
  return calibrate_thresholds(validation.y, probs, targets);
}

void evaluate_on_sample(const ProbabilityModel& model, const SampleSet& sample, const ThresholdSet& thresholds,
                        PipelineResult& result) {
  const auto test = labeled_data(sample, Split::Test);
  if (test.y.empty()) throw SamplingError("sample has no test records");
  result.test_records = test.y.size();
  result.thresholds = thresholds;
  const auto probs = model.predict_batch(test.x);
  result.test_auc.clear();
  result.test_auc.emplace_back(model.type() == ModelType::Ensemble ? "ensemble" : model_type_name(model.type()),
                               roc_auc(test.y, probs));
  if (const auto* ens = dynamic_cast<const EnsembleModel*>(&model)) {
    const ProbabilityModel* bases[3] = {&ens->forest(), &ens->gbm(), &ens->mlp()};
    for (const auto* b : bases) result.test_auc.emplace_back(model_type_name(b->type()), roc_auc(test.y, b->predict_batch(test.x)));
  }
  result.test_metrics.clear();
  for (const auto& [name, thr] : thresholds.named()) {
    auto m = metrics(confusion(test.y, probs, thr));
    m.threshold = thr;
    result.test_metrics.emplace_back(name, m);
  }
}

void evaluate_on_patchwork(const Raster& labels, const Raster& prob, const ThresholdSet& thresholds,
                           std::size_t auc_sample, std::uint64_t seed, PipelineResult& result) {
  require_aligned(labels, prob, "patchwork evaluation");
  std::vector<std::uint8_t> y;
  std::vector<double> p;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels.is_nodata_at(i) || prob.is_nodata_at(i)) continue;
    y.push_back(labels[i] == 1.0f ? 1 : 0);
    p.push_back(prob[i]);
  }
  result.patchwork_pixels = y.size();
  result.patchwork_auc = auc_on_patchwork_sample(labels, prob, auc_sample, seed);
  result.patchwork_metrics.clear();
  for (const auto& [name, thr] : thresholds.named()) {
    auto m = metrics(confusion(y, p, thr));
    m.threshold = thr;
    result.patchwork_metrics.emplace_back(name, m);
  }
}

namespace {

void append_metrics(std::string& out, const std::string& prefix, const MetricsReport& m) {
  out += prefix + ".threshold=" + format_number(m.threshold) + "\n";
  out += prefix + ".sensitivity=" + metric_text(m.sensitivity) + "\n";
  out += prefix + ".specificity=" + metric_text(m.specificity) + "\n";
  out += prefix + ".precision=" + metric_text(m.precision) + "\n";
  out += prefix + ".f1=" + metric_text(m.f1) + "\n";
  out += prefix + ".tp=" + std::to_string(m.counts.tp) + "\n";
  out += prefix + ".fp=" + std::to_string(m.counts.fp) + "\n";
  out += prefix + ".tn=" + std::to_string(m.counts.tn) + "\n";
  out += prefix + ".fn=" + std::to_string(m.counts.fn) + "\n";
}

}  // namespace

std::string format_report(const PipelineResult& r) {
  std::string out;
  if (!r.test_auc.empty() || r.test_records > 0) {
    out += "test.records=" + std::to_string(r.test_records) + "\n";
    for (const auto& [name, auc] : r.test_auc) out += "test.auc." + name + "=" + format_number(auc) + "\n";
    for (const auto& [name, m] : r.test_metrics) append_metrics(out, "test." + name, m);
  }
  if (r.patchwork_auc || r.patchwork_pixels > 0) {
    out += "patchwork.pixels=" + std::to_string(r.patchwork_pixels) + "\n";
    out += "patchwork.auc=" + metric_text(r.patchwork_auc) + "\n";
    for (const auto& [name, m] : r.patchwork_metrics) append_metrics(out, "patchwork." + name, m);
  }
  return out;
}

PipelineResult PipelineResult::parse_report(const std::string& text) {
  PipelineResult r;
  std::string threshold_text;
  std::istringstream in(text);
  std::string line;
  const auto number = [](const std::string& key, const std::string& v) {
    double d = 0.0;
    if (v == "inf") return HUGE_VAL;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), d);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
      throw FormatError("report: bad value for " + key + ": '" + v + "'");
    return d;
  };
  const auto entry = [](std::vector<std::pair<std::string, MetricsReport>>& list, const std::string& name)
      -> MetricsReport& {
    for (auto& [n, m] : list)
      if (n == name) return m;
    list.emplace_back(name, MetricsReport{});
    return list.back().second;
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("report: expected key=value, got '" + line + "'");
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    const auto opt = [&]() -> std::optional<double> {
      if (value == "NA") return std::nullopt;
      return number(key, value);
    };
    const auto count = [&]() {
      std::uint64_t c = 0;
      parse_value(key, value, c);
      return c;
    };
    if (key == "test.records") {
      r.test_records = count();
    } else if (key == "patchwork.pixels") {
      r.patchwork_pixels = count();
    } else if (key == "patchwork.auc") {
      r.patchwork_auc = opt();
    } else if (key.rfind("test.auc.", 0) == 0) {
      r.test_auc.emplace_back(key.substr(9), number(key, value));
    } else {
      const auto d1 = key.find('.');
      const auto d2 = key.rfind('.');
      if (d1 == std::string::npos || d1 == d2) throw FormatError("report: unknown key " + key);
      const auto scope = key.substr(0, d1);
      const auto name = key.substr(d1 + 1, d2 - d1 - 1);
      const auto field = key.substr(d2 + 1);
      if (scope != "test" && scope != "patchwork") throw FormatError("report: unknown key " + key);
      auto& m = entry(scope == "test" ? r.test_metrics : r.patchwork_metrics, name);
      if (field == "threshold") {
        m.threshold = number(key, value);
        if (scope == "test") threshold_text += name + "=" + value + "\n";
      } else if (field == "sensitivity") m.sensitivity = opt();
      else if (field == "specificity") m.specificity = opt();
      else if (field == "precision") m.precision = opt();
      else if (field == "f1") m.f1 = opt();
      else if (field == "tp") m.counts.tp = count();
      else if (field == "fp") m.counts.fp = count();
      else if (field == "tn") m.counts.tn = count();
      else if (field == "fn") m.counts.fn = count();
      else throw FormatError("report: unknown key " + key);
    }
  }
  if (!threshold_text.empty()) r.thresholds = ThresholdSet::from_text(threshold_text);
  return r;
}

Raster mosaic_labels(const GridTransform& grid, const std::vector<std::pair<LidarTile, Raster>>& tile_labels,
                     const Raster& lcpri, const Raster& dem) {
  Raster mosaic(grid, DType::Boolean, kByteNodata);
  for (const auto& [tile, labels] : tile_labels) {
    if (!(labels.transform() == tile_window(grid, tile)))
      throw AlignmentError("labels of tile " + std::to_string(tile.index) + " do not match the tile footprint");
    paste(mosaic, labels, tile.col0, tile.row0);
  }
  return apply_mask(mosaic, lcpri, dem);
}

namespace {

struct Paths {
  fs::path root;
  std::string operator()(const std::string& rel) const { return (root / rel).string(); }
};

template <typename F>
void run_stage(const std::string& name, F&& body) {
  log_notice("stage " + name);
  try {
    body();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage " + name + " failed: " + e.what());
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorKind::Data, "stage " + name + " failed: " + e.what());
  }
}

SampleSet read_sample_checked(const std::string& path, const std::vector<std::string>& features) {
  auto sample = SampleSet::read(path);
  if (sample.feature_names != features)
    throw DimensionError(path + ": sample features do not match the configured feature list");
  return sample;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
  config.validate();
  set_worker_count(config.workers);
  const Paths at{fs::path(config.output_dir)};
  fs::create_directories(at.root);
  const auto resolved = config.to_text();
  log_notice("resolved configuration:\n" + resolved);
  write_text(at("config.resolved.txt"), resolved);

  const auto& stages = pipeline_stages();
  const auto first = static_cast<std::size_t>(
      std::find(stages.begin(), stages.end(), config.from_stage) - stages.begin());
  const auto enabled = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(stages.begin(), stages.end(), name) - stages.begin()) >= first;
  };

  const auto spec = config.resolved_landscape();
  const std::string landscape_dir = at("landscape");
  PipelineResult result;

  if (enabled("synth")) run_stage("synth", [&] { write_landscape(generate_landscape(spec), landscape_dir); });

  if (enabled("chm"))
    run_stage("chm", [&] {
      const auto grid = read_raster(landscape_dir + "/dem.sras").transform();
      fs::create_directories(at("chm"));
      for (const auto& tile : read_tiles(landscape_dir + "/tiles.txt")) {
        const auto cloud = read_cloud(landscape_dir + "/" + tile.cloud);
        const auto chm = build_chm_splatted(cloud, tile_fine_grid(grid, tile), config.pulse_width_m,
                                            config.points_per_circle);
        write_raster(chm, at("chm/tile_" + std::to_string(tile.index) + ".sras"));
      }
    });

  if (enabled("label"))
    run_stage("label", [&] {
      const auto lcpri = read_raster(landscape_dir + "/lcpri.sras");
      const auto dem = read_raster(landscape_dir + "/dem.sras");
      const ShrubRule rule(config.shrub_min_m, config.shrub_max_m);
      std::vector<std::pair<LidarTile, Raster>> tiles;
      for (const auto& tile : read_tiles(landscape_dir + "/tiles.txt")) {
        const auto chm = read_raster(at("chm/tile_" + std::to_string(tile.index) + ".sras"));
        tiles.emplace_back(tile, label_shrub_coarse(label_shrub_fine(chm, rule)));
      }
      fs::create_directories(at("labels"));
      write_raster(mosaic_labels(dem.transform(), tiles, lcpri, dem), at("labels/labels30.sras"));
    });

  if (enabled("predictors"))
    run_stage("predictors", [&] {
      const auto manifest = Manifest::parse(landscape_dir + "/manifest.txt");
      StackOptions options;
      options.max_segments = config.max_segments;
      options.disturbance_max_segments = config.max_segments;
      options.disturbance_threshold = config.disturbance_threshold;
      auto inputs = StackInputs::from_manifest(manifest);
      if (!inputs.epoch) throw ManifestError("landscape manifest lacks the EPOCH band");
      options.epoch = inputs.years.back();
      assemble_stack(inputs, options).write(at("stack_patchwork"));
      inputs.epoch.reset();
      options.epoch = config.statewide_epoch != 0 ? config.statewide_epoch : inputs.years.back();
      assemble_stack(inputs, options).write(at("stack_statewide"));
    });

  if (enabled("sample"))
    run_stage("sample", [&] {
      const auto labels = read_raster(at("labels/labels30.sras"));
      const auto stack = PredictorStack::read(at("stack_patchwork"));
      const auto tiles = read_raster(landscape_dir + "/tile.sras");
      const auto epochs = read_raster(landscape_dir + "/epoch.sras");
      SampleOptions options;
      options.feature_names = config.features;
      options.tiles = &tiles;
      options.epochs = &epochs;
      const auto available = max_balanced_sample(labels, stack, config.features);
      std::size_t n = config.sample_size == 0 ? available : config.sample_size;
      if (n > available)
        throw SamplingError("sample_size " + std::to_string(n) + " exceeds the " + std::to_string(available) +
                            " balanced records available");
      auto records = stratified_balanced_sample(labels, stack, n, derive_seed(config.seed, kSampleStream), options);
      split_records(std::move(records), config.split_fractions, derive_seed(config.seed, kSplitStream),
                    config.features)
          .write(at("sample.tsv"));
    });

  if (enabled("train"))
    run_stage("train", [&] {
      const auto sample = read_sample_checked(at("sample.tsv"), config.features);
      const auto train = labeled_data(sample, Split::Train);
      const auto validation = labeled_data(sample, Split::Validation);
      fs::create_directories(at("models"));
      write_model(train_forest(train, config.rf, derive_seed(config.seed, kForestStream)), at("models/rf.smdl"));
      write_model(train_gbm(train, config.gbm, derive_seed(config.seed, kGbmStream)), at("models/gbm.smdl"));
      write_model(train_mlp(train, validation, config.mlp, derive_seed(config.seed, kMlpStream)),
                  at("models/mlp.smdl"));
    });

  if (enabled("stack"))
    run_stage("stack", [&] {
      const auto sample = read_sample_checked(at("sample.tsv"), config.features);
      auto rf = read_model(at("models/rf.smdl"));
      auto gbm = read_model(at("models/gbm.smdl"));
      auto mlp = read_model(at("models/mlp.smdl"));
      auto* f = dynamic_cast<ForestModel*>(rf.get());
      auto* g = dynamic_cast<GbmModel*>(gbm.get());
      auto* m = dynamic_cast<MlpModel*>(mlp.get());
      if (!f || !g || !m) throw FormatError("base model files hold unexpected model types");
      write_model(build_ensemble(std::move(*f), std::move(*g), std::move(*m), sample, config.stacker_link),
                  at("models/ensemble.smdl"));
    });

  if (enabled("calibrate"))
    run_stage("calibrate", [&] {
      const auto sample = read_sample_checked(at("sample.tsv"), config.features);
      const auto model = read_model(at("models/ensemble.smdl"));
      calibrate_on_sample(*model, sample, config.threshold_targets).write(at("thresholds.txt"));
    });

  if (enabled("predict"))
    run_stage("predict", [&] {
      const auto model = read_model(at("models/ensemble.smdl"));
      const auto thresholds = ThresholdSet::read(at("thresholds.txt"));
      fs::create_directories(at("maps"));
      const auto statewide = predict_raster(*model, PredictorStack::read(at("stack_statewide")));
      write_raster(statewide, at("maps/prob_statewide.sras"));
      write_raster(predict_raster(*model, PredictorStack::read(at("stack_patchwork"))),
                   at("maps/prob_patchwork.sras"));
      for (const auto& [name, thr] : thresholds.named())
        write_raster(classify_raster(statewide, thr), at("maps/class_" + name + ".sras"));
    });

  if (enabled("evaluate"))
    run_stage("evaluate", [&] {
      const auto sample = read_sample_checked(at("sample.tsv"), config.features);
      const auto model = read_model(at("models/ensemble.smdl"));
      const auto thresholds = ThresholdSet::read(at("thresholds.txt"));
      evaluate_on_sample(*model, sample, thresholds, result);
      evaluate_on_patchwork(read_raster(at("labels/labels30.sras")), read_raster(at("maps/prob_patchwork.sras")),
                            thresholds, config.patchwork_auc_sample,
                            derive_seed(config.seed, kPatchworkAucStream), result);
      write_text(at("report.txt"), format_report(result));
    });

  if (enabled("validate-plan"))
    run_stage("validate-plan", [&] {
      const auto prob = read_raster(at("maps/prob_statewide.sras"));
      const auto plan = build_validation_plan(prob, config.hex_apothem_km, config.hex_per_bin,
                                              derive_seed(config.seed, kPlanStream));
      write_text(at("plan.tsv"), plan.to_tsv());
      write_text(at("plan_shortfall.tsv"), plan.shortfall_tsv());
    });

  if (result.test_auc.empty() && fs::exists(at("report.txt")))
    result = PipelineResult::parse_report(read_text(at("report.txt")));
  return result;
}

}  // namespace shrubmap
