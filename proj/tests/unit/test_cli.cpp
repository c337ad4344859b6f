#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "shrubmap/binary_io.hpp"
#include "shrubmap/random.hpp"
#include "shrubmap/raster.hpp"
#include "shrubmap/sampling.hpp"
#include "support/oracles.hpp"

using namespace shrubmap;
namespace fs = std::filesystem;

namespace {

const std::string kCli = SHRUBMAP_CLI_PATH;
const std::string kData = SHRUBMAP_TEST_DATA;

struct Outcome {
  int code = -1;
  std::string out;
};

/// Runs the CLI with stdout captured to a file and stderr discarded.
Outcome run(const std::string& args, const fs::path& dir) {
  const auto out = dir / "stdout.txt";
  const std::string cmd = "\"" + kCli + "\" " + args + " >\"" + out.string() + "\" 2>/dev/null";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  const auto bytes = bin::read_file(out.string());
  o.out.assign(bytes.begin(), bytes.end());
  return o;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help succeeds and lists the subcommands") {
    const auto dir = oracle::fresh_dir("cli_help");
    const auto o = run("--help", dir);
    CHECK(o.code == 0);
    for (const char* sub : {"synth", "chm", "predictors", "sample", "train", "stack", "calibrate", "predict",
                            "evaluate", "validate-plan", "pipeline"})
      CHECK_MESSAGE(o.out.find(sub) != std::string::npos, sub);
  }

  TEST_CASE("usage errors exit with 1") {
    const auto dir = oracle::fresh_dir("cli_usage");
    CHECK(run("--no-such-flag", dir).code == 1);
    CHECK(run("chm label --out x.sras", dir).code == 1);  // missing --chm
    CHECK(run("pipeline --print-config --set colour=blue", dir).code == 1);
    CHECK(run("pipeline --print-config --set stacker_link=probit", dir).code == 1);
  }

  TEST_CASE("bad input data exits with 2") {
    const auto dir = oracle::fresh_dir("cli_data");
    std::ofstream(dir / "broken.sras") << "SRAS but not really";
    CHECK(run("chm label --chm \"" + (dir / "broken.sras").string() + "\" --out \"" + (dir / "x.sras").string() + "\"",
              dir)
              .code == 2);
  }

  TEST_CASE("numeric divergence exits with 3") {
    const auto dir = oracle::fresh_dir("cli_numeric");
    SampleSet set;
    set.feature_names = {"A", "B"};
    Rng rng(1);
    for (std::uint32_t i = 0; i < 60; ++i) {
      PixelRecord r;
      r.id = {0, i, 0};
      r.label = i % 2;
      r.features = {rng.normal() + r.label, rng.normal()};
      set.records.push_back(r);
      set.split.push_back(i < 40 ? Split::Train : Split::Validation);
    }
    set.write((dir / "s.tsv").string());
    const auto o = run("train --sample \"" + (dir / "s.tsv").string() +
                           "\" --model mlp --epochs 5 --hidden 8 --learning-rate 1e300 --out \"" +
                           (dir / "m.smdl").string() + "\"",
                       dir);
    CHECK(o.code == 3);
  }

  TEST_CASE("a working command exits with 0 and writes its output") {
    const auto dir = oracle::fresh_dir("cli_ok");
    const auto out = dir / "labels.sras";
    const auto o = run("--quiet chm label --chm \"" + kData + "/golden_3x3.sras\" --aggregate 1 --out \"" +
                           out.string() + "\"",
                       dir);
    REQUIRE(o.code == 0);
    const Raster labels = read_raster(out.string());
    CHECK(labels.dtype() == DType::Boolean);
    CHECK(labels.at(0, 0) == 1.0f);  // 1.5 m
    CHECK(labels.at(0, 1) == 0.0f);  // 0 m
    CHECK(labels.at(2, 2) == 0.0f);  // 7 m
  }

  TEST_CASE("the stage subcommands chain with their default options") {
    const auto dir = oracle::fresh_dir("cli_chain");
    auto at = [&](const char* name) { return "\"" + (dir / name).string() + "\""; };
    std::ofstream(dir / "spec.txt") << "width=120\nheight=120\nlidar_tiles=4\ntile_size=30\nn_years=12\n";
    REQUIRE(run("--quiet synth --spec " + at("spec.txt") + " --out " + at("land"), dir).code == 0);
    REQUIRE(run("--quiet predictors assemble --manifest " + at("land/manifest.txt") + " --out " + at("stack"), dir)
                .code == 0);
    REQUIRE(run("--quiet sample --labels " + at("land/truth_labels.sras") + " --stack " + at("stack") + " --out " +
                    at("sample.tsv"),
                dir)
                .code == 0);
    const auto sample = SampleSet::read((dir / "sample.tsv").string());
    std::size_t train = 0;
    for (auto s : sample.split) train += s == Split::Train;
    CHECK(train == split_sizes(sample.records.size(), kDefaultSplitFractions)[0]);
    for (const char* m : {"rf", "gbm", "mlp"})
      REQUIRE(run(std::string("--quiet train --sample ") + at("sample.tsv") + " --model " + m +
                      " --trees 10 --epochs 2 --hidden 8 --out " + at((std::string(m) + ".smdl").c_str()),
                  dir)
                  .code == 0);
    REQUIRE(run("--quiet stack --val-sample " + at("sample.tsv") + " --models " + at("rf.smdl") + " " +
                    at("gbm.smdl") + " " + at("mlp.smdl") + " --out " + at("ensemble.smdl"),
                dir)
                .code == 0);
    REQUIRE(run("--quiet calibrate --val-sample " + at("sample.tsv") + " --model " + at("ensemble.smdl") + " --out " +
                    at("thresholds.txt"),
                dir)
                .code == 0);
    REQUIRE(run("--quiet predict --model " + at("ensemble.smdl") + " --stack " + at("stack") + " --thresholds " +
                    at("thresholds.txt") + " --out " + at("prob.sras"),
                dir)
                .code == 0);
    const auto report = run("--quiet evaluate --sample " + at("sample.tsv") + " --model " + at("ensemble.smdl") +
                                " --thresholds " + at("thresholds.txt"),
                            dir);
    CHECK(report.code == 0);
    CHECK(report.out.find("test.auc.ensemble=") != std::string::npos);
    CHECK(run("--quiet validate-plan --prob " + at("prob.sras") + " --apothem-km 0.5 --out " + at("plan.tsv"), dir)
              .code == 0);
    CHECK(fs::exists(dir / "class_spec95.sras"));
  }

  TEST_CASE("print-config shows overrides") {
    const auto dir = oracle::fresh_dir("cli_config");
    const auto o = run("pipeline --print-config --set stacker_link=identity --set rf_trees=12", dir);
    CHECK(o.code == 0);
    CHECK(o.out.find("stacker_link=identity\n") != std::string::npos);
    CHECK(o.out.find("rf_trees=12\n") != std::string::npos);
  }
}
