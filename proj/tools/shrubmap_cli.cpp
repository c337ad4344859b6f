// Command-line entry point: one subcommand per pipeline stage plus
// `pipeline`, which runs them all from a flat key=value configuration.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "shrubmap/chm.hpp"
#include "shrubmap/error.hpp"
#include "shrubmap/forest.hpp"
#include "shrubmap/gbm.hpp"
#include "shrubmap/log.hpp"
#include "shrubmap/metrics.hpp"
#include "shrubmap/mlp.hpp"
#include "shrubmap/model.hpp"
#include "shrubmap/parallel.hpp"
#include "shrubmap/pipeline.hpp"
#include "shrubmap/random.hpp"
#include "shrubmap/sampling.hpp"
#include "shrubmap/stack.hpp"
#include "shrubmap/stacker.hpp"
#include "shrubmap/synth.hpp"
#include "shrubmap/validation_plan.hpp"

namespace fs = std::filesystem;
using namespace shrubmap;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return kExitUsage;
    case ErrorKind::Data: return kExitData;
    case ErrorKind::Numeric: return kExitNumeric;
  }
  return kExitData;
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

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

template <typename T>
T& require_type(std::unique_ptr<ProbabilityModel>& m, const std::string& path, ModelType want) {
  auto* p = dynamic_cast<T*>(m.get());
  if (!p) throw FormatError(path + ": expected a " + model_type_name(want) + " model, found " +
                            model_type_name(m->type()));
  return *p;
}

/// Window of `big` covering grid `g`; both must share resolution and cell edges.
Raster window_of(const Raster& big, const GridTransform& g, const std::string& what) {
  const auto& b = big.transform();
  const double dc = (g.origin_x - b.origin_x) / b.resolution;
  const double dr = (b.origin_y - g.origin_y) / b.resolution;
  if (g.resolution != b.resolution || std::abs(dc - std::round(dc)) > 1e-6 || std::abs(dr - std::round(dr)) > 1e-6 ||
      dc < 0 || dr < 0 || std::round(dc) + g.width > b.width || std::round(dr) + g.height > b.height)
    throw AlignmentError(what + " does not cover the label grid on matching cells");
  return crop(big, static_cast<std::uint32_t>(std::lround(dc)), static_cast<std::uint32_t>(std::lround(dr)), g.width,
              g.height);
}

std::vector<double> parse_doubles(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ParameterError(std::string("bad ") + what + " value '" + item + "'");
    }
  }
  if (out.empty()) throw ParameterError(std::string(what) + " needs at least one value");
  return out;
}

// Desk-scale learner defaults shared with the pipeline.
const PipelineConfig& defaults() {
  static const PipelineConfig c;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shrubland mapping from LiDAR-derived labels and multi-year spectral predictors"};
  app.require_subcommand(1);
  std::size_t workers = 0;
  bool quiet = false;
  app.add_option("--workers", workers, "Worker threads (0: hardware concurrency)")->capture_default_str();
  app.add_flag("--quiet", quiet, "Suppress notices on stderr");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic landscape");
  std::string synth_spec, synth_out;
  synth->add_option("--spec", synth_spec, "key=value landscape spec (defaults when omitted)")->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output directory")->required();

  // chm build / label
  auto* chm = app.add_subcommand("chm", "Canopy height models and shrub labels");
  chm->require_subcommand(1);
  auto* chm_build = chm->add_subcommand("build", "Rasterize a point cloud to a canopy height model");
  std::string cloud_path, chm_out, grid_text;
  double chm_res = 1.0, pulse_width = kDefaultPulseWidthM;
  std::uint32_t points_per_circle = kDefaultPointsPerCircle;
  chm_build->add_option("--cloud", cloud_path, "SPTS point cloud")->required()->check(CLI::ExistingFile);
  chm_build->add_option("--res", chm_res, "Cell size in meters")->capture_default_str();
  chm_build->add_option("--pulse-width", pulse_width, "Splat circle diameter in meters (0 disables)")
      ->capture_default_str();
  chm_build->add_option("--points-per-circle", points_per_circle, "Points on each splat circle")
      ->capture_default_str();
  chm_build->add_option("--grid", grid_text,
                        "origin_x,origin_y,width,height of the output grid (default: snapped cloud extent)");
  chm_build->add_option("--out", chm_out, "Output SRAS raster")->required();

  auto* chm_label = chm->add_subcommand("label", "Shrub labels by height rule and block majority");
  std::string label_chm, label_out, mask_landcover, mask_dem;
  double shrub_min = 1.0, shrub_max = 5.0;
  std::uint32_t aggregate = kLabelAggregationFactor;
  chm_label->add_option("--chm", label_chm, "Canopy height model")->required()->check(CLI::ExistingFile);
  chm_label->add_option("--min", shrub_min, "Minimum shrub height (m, inclusive)")->capture_default_str();
  chm_label->add_option("--max", shrub_max, "Maximum shrub height (m, inclusive)")->capture_default_str();
  chm_label->add_option("--aggregate", aggregate, "Block size of the majority rule (1 keeps fine labels)")
      ->capture_default_str();
  chm_label->add_option("--mask-landcover", mask_landcover, "Primary land-cover raster for masking")
      ->check(CLI::ExistingFile);
  chm_label->add_option("--mask-dem", mask_dem, "Elevation raster for masking")->check(CLI::ExistingFile);
  chm_label->add_option("--out", label_out, "Output boolean raster")->required();

  // predictors assemble
  auto* predictors = app.add_subcommand("predictors", "Predictor stacks");
  predictors->require_subcommand(1);
  auto* assemble = predictors->add_subcommand("assemble", "Assemble the predictor stack from a manifest");
  std::string manifest_path, stack_out;
  int epoch = 0;
  int max_segments = 4;
  double disturbance_threshold = 0.05;
  assemble->add_option("--manifest", manifest_path, "name=path band manifest")->required()->check(CLI::ExistingFile);
  assemble->add_option("--epoch", epoch,
                       "Prediction year (default: per-pixel EPOCH band when present, else the last year)");
  assemble->add_option("--max-segments", max_segments, "Maximum temporal segments")->capture_default_str();
  assemble->add_option("--disturbance-threshold", disturbance_threshold, "Minimum NBR drop of a disturbance")
      ->capture_default_str();
  assemble->add_option("--out", stack_out, "Output stack directory")->required();

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "Balanced sample with train/validation/test split");
  std::string sample_labels, sample_stack, sample_out, sample_tiles, sample_epochs, sample_features,
      fractions_text = "0.6,0.2,0.2";
  std::size_t sample_n = 0;
  std::uint64_t sample_seed = 42;
  sample_cmd->add_option("--labels", sample_labels, "Boolean label raster")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--stack", sample_stack, "Predictor stack directory")->required()->check(CLI::ExistingDirectory);
  sample_cmd->add_option("--n", sample_n, "Total records, even (0: largest balanced sample)")->capture_default_str();
  sample_cmd->add_option("--seed", sample_seed, "Seed")->capture_default_str();
  sample_cmd->add_option("--tiles", sample_tiles, "Optional tile-index raster for record ids")->check(CLI::ExistingFile);
  sample_cmd->add_option("--epochs", sample_epochs, "Optional per-pixel epoch raster")->check(CLI::ExistingFile);
  sample_cmd->add_option("--features", sample_features, "Comma-separated feature names (default: all fourteen)");
  sample_cmd->add_option("--fractions", fractions_text, "train,validation,test fractions")->capture_default_str();
  sample_cmd->add_option("--out", sample_out, "Output TSV")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one base learner on the training split");
  std::string train_sample, train_kind, train_out, hidden_text;
  std::uint64_t train_seed = 7;
  std::size_t trees = 0, epochs = 0;
  double learning_rate = 0.0;
  train_cmd->add_option("--sample", train_sample, "Sample TSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--model", train_kind, "Learner")->required()->check(CLI::IsMember({"rf", "gbm", "mlp"}));
  train_cmd->add_option("--seed", train_seed, "Seed")->capture_default_str();
  train_cmd->add_option("--trees", trees, "Trees (rf: 300, gbm: 300)");
  train_cmd->add_option("--learning-rate", learning_rate, "Learning rate (gbm: 0.05, mlp: 0.001)");
  train_cmd->add_option("--epochs", epochs, "Neural network epochs (100)");
  train_cmd->add_option("--hidden", hidden_text, "Neural network hidden sizes")->default_str("256,128,64,32,16");
  train_cmd->add_option("--out", train_out, "Output SMDL model")->required();

  // stack
  auto* stack_cmd = app.add_subcommand("stack", "Fit the logistic stacker on the validation split");
  std::string stack_sample, ens_out;
  std::vector<std::string> base_models;
  stack_cmd->add_option("--val-sample", stack_sample, "Sample TSV")->required()->check(CLI::ExistingFile);
  stack_cmd->add_option("--models", base_models, "rf, gbm and mlp model files in that order")
      ->required()
      ->expected(3)
      ->check(CLI::ExistingFile);
  std::string stack_link = "logit";
  stack_cmd->add_option("--link", stack_link, "Base probability input scale")
      ->check(CLI::IsMember({"identity", "logit"}))
      ->capture_default_str();
  stack_cmd->add_option("--out", ens_out, "Output ensemble model")->required();

  // calibrate
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Youden and target-specificity thresholds");
  std::string cal_sample, cal_model, cal_out, targets_text = "0.90,0.95,0.99";
  calibrate_cmd->add_option("--val-sample", cal_sample, "Sample TSV")->required()->check(CLI::ExistingFile);
  calibrate_cmd->add_option("--model", cal_model, "Model file")->required()->check(CLI::ExistingFile);
  calibrate_cmd->add_option("--targets", targets_text, "Specificity targets")->capture_default_str();
  calibrate_cmd->add_option("--out", cal_out, "Output thresholds file")->required();

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Probability map (and optional class maps)");
  std::string pred_model, pred_stack, pred_out, pred_thresholds, class_prefix;
  predict_cmd->add_option("--model", pred_model, "Model file")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--stack", pred_stack, "Predictor stack directory")->required()->check(CLI::ExistingDirectory);
  predict_cmd->add_option("--out", pred_out, "Output probability raster")->required();
  predict_cmd->add_option("--thresholds", pred_thresholds, "Thresholds file for class maps")->check(CLI::ExistingFile);
  predict_cmd->add_option("--class-prefix", class_prefix,
                          "Class maps are written to <prefix><name>.sras (default: next to --out as class_<name>)");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Test-split and patchwork accuracy report");
  std::string eval_sample, eval_model, eval_thresholds, eval_report, eval_labels, eval_prob;
  std::size_t auc_sample = 1000000;
  std::uint64_t eval_seed = 42;
  evaluate_cmd->add_option("--sample", eval_sample, "Sample TSV")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--model", eval_model, "Model file")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--thresholds", eval_thresholds, "Thresholds file")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--labels", eval_labels, "Patchwork label raster")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--prob", eval_prob, "Patchwork probability raster")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--auc-sample", auc_sample, "Pixels sampled for the patchwork AUC")->capture_default_str();
  evaluate_cmd->add_option("--seed", eval_seed, "Seed of the patchwork AUC sample")->capture_default_str();
  evaluate_cmd->add_option("--report", eval_report, "Output report (stdout when omitted)");

  // validate-plan
  auto* plan_cmd = app.add_subcommand("validate-plan", "Hexagon-stratified validation sample");
  std::string plan_prob, plan_out, plan_shortfall;
  double apothem_km = 70.0;
  std::size_t per_bin = 5;
  std::uint64_t plan_seed = 9;
  plan_cmd->add_option("--prob", plan_prob, "Probability raster")->required()->check(CLI::ExistingFile);
  plan_cmd->add_option("--apothem-km", apothem_km, "Hexagon apothem in km")->capture_default_str();
  plan_cmd->add_option("--per-bin", per_bin, "Pixels per bin in a fully mapped hexagon")->capture_default_str();
  plan_cmd->add_option("--seed", plan_seed, "Seed")->capture_default_str();
  plan_cmd->add_option("--out", plan_out, "Output plan TSV")->required();
  plan_cmd->add_option("--shortfall", plan_shortfall, "Optional shortfall TSV");

  // pipeline
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Run every stage from a key=value configuration");
  std::string config_path, output_dir, from_stage;
  std::vector<std::string> overrides;
  pipeline_cmd->add_option("--config", config_path, "Configuration file (defaults when omitted)")
      ->check(CLI::ExistingFile);
  pipeline_cmd->add_option("--set", overrides, "key=value override (repeatable)");
  pipeline_cmd->add_option("--output-dir", output_dir, "Overrides output_dir");
  pipeline_cmd->add_option("--from-stage", from_stage, "Overrides from_stage");
  pipeline_cmd->add_flag("--print-config", "Print the resolved configuration and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (quiet) set_log_stream(nullptr);
  set_worker_count(workers);

  try {
    if (synth->parsed()) {
      const auto spec = synth_spec.empty() ? LandscapeSpec{} : LandscapeSpec::read(synth_spec);
      spec.validate();
      const auto land = generate_landscape(spec);
      write_landscape(land, synth_out);
      log_notice("landscape: " + std::to_string(land.shrub_pixels) + " shrub pixels, prevalence " +
                 format_number(land.prevalence()));
    } else if (chm_build->parsed()) {
      const auto cloud = read_cloud(cloud_path);
      GridTransform grid;
      if (grid_text.empty()) {
        grid = cloud_grid(cloud, chm_res);
      } else {
        const auto g = parse_doubles(grid_text, "--grid");
        if (g.size() != 4 || g[2] < 1 || g[3] < 1 || g[2] != std::floor(g[2]) || g[3] != std::floor(g[3]))
          throw ParameterError("--grid expects origin_x,origin_y,width,height");
        grid = GridTransform(g[0], g[1], chm_res, static_cast<std::uint32_t>(g[2]), static_cast<std::uint32_t>(g[3]));
      }
      ensure_parent(chm_out);
      write_raster(build_chm_splatted(cloud, grid, pulse_width, points_per_circle), chm_out);
    } else if (chm_label->parsed()) {
      if (mask_landcover.empty() != mask_dem.empty())
        throw ParameterError("--mask-landcover and --mask-dem must be given together");
      const auto fine = label_shrub_fine(read_raster(label_chm), ShrubRule(shrub_min, shrub_max));
      auto labels = aggregate == 1 ? fine : label_shrub_coarse(fine, aggregate);
      if (!mask_landcover.empty()) {
        const auto lc = read_raster(mask_landcover);
        const auto dem = read_raster(mask_dem);
        labels = apply_mask(labels, window_of(lc, labels.transform(), "--mask-landcover"),
                            window_of(dem, labels.transform(), "--mask-dem"));
      }
      ensure_parent(label_out);
      write_raster(labels, label_out);
    } else if (assemble->parsed()) {
      auto inputs = StackInputs::from_manifest(Manifest::parse(manifest_path));
      StackOptions options;
      options.max_segments = max_segments;
      options.disturbance_max_segments = max_segments;
      options.disturbance_threshold = disturbance_threshold;
      if (assemble->count("--epoch") > 0) {
        inputs.epoch.reset();
        options.epoch = epoch;
      } else {
        options.epoch = inputs.years.empty() ? 0 : inputs.years.back();
      }
      assemble_stack(inputs, options).write(stack_out);
    } else if (sample_cmd->parsed()) {
      const auto labels = read_raster(sample_labels);
      const auto stack = PredictorStack::read(sample_stack);
      SampleOptions options;
      if (!sample_features.empty()) {
        options.feature_names.clear();
        std::stringstream ss(sample_features);
        std::string f;
        while (std::getline(ss, f, ',')) options.feature_names.push_back(f);
      }
      std::optional<Raster> tiles, epochs_raster;
      if (!sample_tiles.empty()) options.tiles = &tiles.emplace(read_raster(sample_tiles));
      if (!sample_epochs.empty()) options.epochs = &epochs_raster.emplace(read_raster(sample_epochs));
      const auto fr = parse_doubles(fractions_text, "--fractions");
      if (fr.size() != 3) throw ParameterError("--fractions expects three values");
      const std::size_t n = sample_n == 0 ? max_balanced_sample(labels, stack, options.feature_names) : sample_n;
      auto records = stratified_balanced_sample(labels, stack, n, derive_seed(sample_seed, kSampleStream), options);
      ensure_parent(sample_out);
      split_records(std::move(records), {fr[0], fr[1], fr[2]}, derive_seed(sample_seed, kSplitStream),
                    options.feature_names)
          .write(sample_out);
    } else if (train_cmd->parsed()) {
      const auto sample = SampleSet::read(train_sample);
      const auto train = labeled_data(sample, Split::Train);
      ensure_parent(train_out);
      if (train_kind == "rf") {
        auto p = defaults().rf;
        if (trees) p.n_trees = trees;
        write_model(train_forest(train, p, train_seed), train_out);
      } else if (train_kind == "gbm") {
        auto p = defaults().gbm;
        if (trees) p.n_trees = trees;
        if (learning_rate > 0.0) p.learning_rate = learning_rate;
        write_model(train_gbm(train, p, train_seed), train_out);
      } else {
        auto p = defaults().mlp;
        if (epochs) p.epochs = epochs;
        if (learning_rate > 0.0) p.learning_rate = learning_rate;
        if (!hidden_text.empty()) {
          p.hidden.clear();
          for (double h : parse_doubles(hidden_text, "--hidden")) {
            if (h < 1 || h != std::floor(h)) throw ParameterError("--hidden sizes must be positive integers");
            p.hidden.push_back(static_cast<std::size_t>(h));
          }
        }
        write_model(train_mlp(train, labeled_data(sample, Split::Validation), p, train_seed), train_out);
      }
    } else if (stack_cmd->parsed()) {
      const auto sample = SampleSet::read(stack_sample);
      auto rf = read_model(base_models[0]);
      auto gbm = read_model(base_models[1]);
      auto mlp = read_model(base_models[2]);
      auto ens = build_ensemble(std::move(require_type<ForestModel>(rf, base_models[0], ModelType::Forest)),
                                std::move(require_type<GbmModel>(gbm, base_models[1], ModelType::Gbm)),
                                std::move(require_type<MlpModel>(mlp, base_models[2], ModelType::Mlp)), sample,
                                parse_probability_link(stack_link));
      ensure_parent(ens_out);
      write_model(ens, ens_out);
    } else if (calibrate_cmd->parsed()) {
      const auto model = read_model(cal_model);
      const auto targets = parse_doubles(targets_text, "--targets");
      for (double t : targets)
        if (!(t > 0.0 && t < 1.0)) throw ParameterError("specificity targets must lie in (0,1)");
      ensure_parent(cal_out);
      calibrate_on_sample(*model, SampleSet::read(cal_sample), targets).write(cal_out);
    } else if (predict_cmd->parsed()) {
      const auto model = read_model(pred_model);
      const auto prob = predict_raster(*model, PredictorStack::read(pred_stack));
      ensure_parent(pred_out);
      write_raster(prob, pred_out);
      if (!pred_thresholds.empty()) {
        const auto prefix =
            class_prefix.empty() ? (fs::path(pred_out).parent_path() / "class_").string() : class_prefix;
        for (const auto& [name, thr] : ThresholdSet::read(pred_thresholds).named())
          write_raster(classify_raster(prob, thr), prefix + name + ".sras");
      }
    } else if (evaluate_cmd->parsed()) {
      if (eval_labels.empty() != eval_prob.empty())
        throw ParameterError("--labels and --prob must be given together");
      const auto model = read_model(eval_model);
      const auto thresholds = ThresholdSet::read(eval_thresholds);
      PipelineResult result;
      evaluate_on_sample(*model, SampleSet::read(eval_sample), thresholds, result);
      if (!eval_labels.empty())
        evaluate_on_patchwork(read_raster(eval_labels), read_raster(eval_prob), thresholds, auc_sample, eval_seed,
                              result);
      const auto text = format_report(result);
      if (eval_report.empty()) {
        std::cout << text;
      } else {
        ensure_parent(eval_report);
        write_text(eval_report, text);
      }
    } else if (plan_cmd->parsed()) {
      const auto plan = build_validation_plan(read_raster(plan_prob), apothem_km, per_bin, plan_seed);
      ensure_parent(plan_out);
      write_text(plan_out, plan.to_tsv());
      if (!plan_shortfall.empty()) write_text(plan_shortfall, plan.shortfall_tsv());
      log_notice(std::to_string(plan.hexagons.size()) + " hexagons, " + std::to_string(plan.pixel_count()) +
                 " pixels");
    } else if (pipeline_cmd->parsed()) {
      std::string text = config_path.empty() ? std::string() : read_text(config_path);
      std::vector<std::string> extra = overrides;
      if (!output_dir.empty()) extra.push_back("output_dir=" + output_dir);
      if (!from_stage.empty()) extra.push_back("from_stage=" + from_stage);
      if (app.count("--workers") > 0) extra.push_back("workers=" + std::to_string(workers));
      // Overrides replace same-named lines of the file.
      std::set<std::string> replaced;
      for (const auto& o : extra) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
        auto key = o.substr(0, eq);
        key.erase(key.find_last_not_of(" \t") + 1);
        if (!replaced.insert(key).second) throw ConfigError("key " + key + " overridden twice");
      }
      std::string merged;
      std::istringstream in(text);
      std::string line;
      while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) {
          auto key = line.substr(0, eq);
          key.erase(0, key.find_first_not_of(" \t"));
          key.erase(key.find_last_not_of(" \t") + 1);
          if (replaced.count(key)) continue;
        }
        merged += line + "\n";
      }
      for (const auto& o : extra) merged += o + "\n";
      const auto config = PipelineConfig::parse_text(merged);
      if (pipeline_cmd->count("--print-config") > 0) {
        std::cout << config.to_text();
        return 0;
      }
      const auto result = run_pipeline(config);
      std::cout << format_report(result);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return kExitData;
  }
  return 0;
}
