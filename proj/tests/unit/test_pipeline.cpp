#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "doctest.h"
#include "shrubmap/binary_io.hpp"
#include "shrubmap/error.hpp"
#include "shrubmap/log.hpp"
#include "shrubmap/pipeline.hpp"
#include "support/oracles.hpp"

using namespace shrubmap;
namespace fs = std::filesystem;

namespace {

/// A landscape and learners small enough for a unit test.
std::string tiny_config(const fs::path& out) {
  return "output_dir=" + out.string() +
         "\n"
         "width=120\nheight=120\nlidar_tiles=6\ntile_size=30\nn_years=12\nprevalence=0.05\n"
         "rf_trees=20\ngbm_trees=20\nmlp_epochs=3\nmlp_hidden=16,8\n"
         "patchwork_auc_sample=5000\nhex_apothem_km=0.5\n";
}

std::string slurp(const fs::path& p) {
  const auto bytes = bin::read_file(p.string());
  return {bytes.begin(), bytes.end()};
}

/// Runs with notices silenced.
PipelineResult quiet_run(const PipelineConfig& c) {
  set_log_stream(nullptr);
  try {
    auto r = run_pipeline(c);
    set_log_stream(&std::cerr);
    return r;
  } catch (...) {
    set_log_stream(&std::cerr);
    throw;
  }
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("configuration defaults, overrides and the resolved text") {
    const auto c = PipelineConfig::parse_text("# comment\nseed = 7\nrf_trees=50  # trailing\nstacker_link=identity\n");
    CHECK(c.seed == 7);
    CHECK(c.rf.n_trees == 50);
    CHECK(c.stacker_link == ProbabilityLink::Identity);
    CHECK(c.resolved_landscape().seed == 7);
    CHECK(PipelineConfig{}.stacker_link == ProbabilityLink::Logit);
    CHECK(PipelineConfig{}.rf.n_trees == 300);
    const auto text = c.to_text();
    CHECK(PipelineConfig::parse_text(text).to_text() == text);
    CHECK(text.find("stacker_link=identity\n") != std::string::npos);
    const auto d = PipelineConfig::parse_text("seed=7\nlandscape_seed=99\n");
    CHECK(d.resolved_landscape().seed == 99);
  }

  TEST_CASE("bad configurations are usage errors") {
    CHECK_THROWS_AS(PipelineConfig::parse_text("colour=blue\n"), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::parse_text("seed=1\nseed=2\n"), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::parse_text("seed\n"), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::parse_text("rf_trees=many\n"), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::parse_text("stacker_link=probit\n"), ParameterError);
    CHECK_THROWS_AS(PipelineConfig::parse_text("from_stage=nowhere\n").validate(), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::read("/nonexistent/config.txt"), ConfigError);
  }

  TEST_CASE("report text round trip") {
    PipelineResult r;
    r.test_records = 120;
    r.test_auc = {{"ensemble", 0.93}, {"rf", 0.91}, {"gbm", 0.925}, {"mlp", 0.9}};
    r.thresholds.youden = 0.41;
    r.thresholds.by_specificity = {{0.9, 0.5}, {0.95, 0.6}, {0.99, 0.8}};
    MetricsReport m;
    m.counts = {10, 2, 30, 5};
    m = metrics(m.counts);
    m.threshold = 0.41;
    r.test_metrics = {{"youden", m}};
    MetricsReport empty;
    empty.counts = {0, 0, 20, 0};
    empty = metrics(empty.counts);
    r.patchwork_metrics = {{"youden", empty}};
    r.patchwork_pixels = 20;
    r.patchwork_auc = 0.8;
    const auto text = format_report(r);
    CHECK(text.find("=NA\n") != std::string::npos);  // undefined precision
    const auto back = PipelineResult::parse_report(text);
    CHECK(format_report(back) == text);
    CHECK(back.auc("gbm") == 0.925);
    CHECK(back.test_at("youden").counts == m.counts);
    CHECK_FALSE(back.patchwork_at("youden").precision);
    CHECK_THROWS_AS(back.auc("svm"), ParameterError);
    CHECK_THROWS_AS(PipelineResult::parse_report("test.auc.rf=high\n"), FormatError);
  }

  TEST_CASE("a failing stage is named in the error and keeps its kind") {
    const auto dir = oracle::fresh_dir("pipeline_fail");
    fs::create_directories(dir / "landscape");
    std::ofstream(dir / "landscape" / "dem.sras") << "not a raster";
    auto c = PipelineConfig::parse_text(tiny_config(dir));
    c.from_stage = "chm";
    try {
      quiet_run(c);
      FAIL("expected a stage error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).rfind("stage chm", 0) == 0);
      CHECK(e.kind() == ErrorKind::Data);
    }
  }

  TEST_CASE("a tiny end-to-end run writes every artifact and resumes from a stage") {
    const auto dir = oracle::fresh_dir("pipeline_tiny");
    auto c = PipelineConfig::parse_text(tiny_config(dir));
    const auto result = quiet_run(c);
    for (const char* p : {"config.resolved.txt", "landscape/manifest.txt", "labels/labels30.sras", "sample.tsv",
                          "models/rf.smdl", "models/gbm.smdl", "models/mlp.smdl", "models/ensemble.smdl",
                          "thresholds.txt", "maps/prob_statewide.sras", "maps/prob_patchwork.sras",
                          "maps/class_youden.sras", "maps/class_spec95.sras", "report.txt", "plan.tsv",
                          "plan_shortfall.tsv"})
      CHECK_MESSAGE(fs::exists(dir / p), p);
    CHECK(result.auc("ensemble") > 0.5);
    CHECK(result.test_auc.size() == 4);
    CHECK(PipelineResult::parse_report(slurp(dir / "report.txt")).auc("ensemble") == result.auc("ensemble"));

    const auto report = slurp(dir / "report.txt");
    const auto ensemble = slurp(dir / "models" / "ensemble.smdl");
    c.from_stage = "stack";
    const auto again = quiet_run(c);
    CHECK(slurp(dir / "report.txt") == report);
    CHECK(slurp(dir / "models" / "ensemble.smdl") == ensemble);
    CHECK(again.auc("ensemble") == result.auc("ensemble"));

    // a different link changes the stacker but not the base learners
    const auto rf = slurp(dir / "models" / "rf.smdl");
    c.stacker_link = ProbabilityLink::Identity;
    quiet_run(c);
    CHECK(slurp(dir / "models" / "rf.smdl") == rf);
    CHECK(slurp(dir / "models" / "ensemble.smdl") != ensemble);
  }

  TEST_CASE("classification maps keep nodata") {
    Raster prob(GridTransform(0, 2, 1, 2, 1), DType::Float32, kFloatNodata, {0.7f, -9999.0f});
    const auto cls = classify_raster(prob, 0.5);
    CHECK(cls.dtype() == DType::Boolean);
    CHECK(cls[0] == 1.0f);
    CHECK(cls.is_nodata_at(1));
    CHECK(classify_raster(prob, static_cast<double>(0.7f))[0] == 1.0f);
    CHECK(classify_raster(prob, 0.71)[0] == 0.0f);
  }
}
