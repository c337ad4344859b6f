#include <algorithm>
#include <set>

#include "doctest.h"
#include "shrubmap/error.hpp"
#include "shrubmap/random.hpp"
#include "shrubmap/sampling.hpp"
#include "support/oracles.hpp"

using namespace shrubmap;

namespace {

const std::vector<std::string> kNames{"A", "B"};

struct Scene {
  Raster labels;
  PredictorStack stack;
};

/// Labels with the given shrub share; band A is the flat pixel index, band B
/// its parity. Every `hole`-th pixel has a nodata feature.
Scene scene(std::uint32_t w, std::uint32_t h, double shrub_share, std::uint64_t seed, std::size_t hole = 0) {
  const GridTransform g(0, h * 30.0, 30.0, w, h);
  Rng rng(seed);
  Raster labels(g, DType::Boolean, kByteNodata);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = rng.bernoulli(shrub_share) ? 1.0f : 0.0f;
  Raster a(g, DType::Float32, kFloatNodata), b(g, DType::Float32, kFloatNodata);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = static_cast<float>(i);
    b[i] = static_cast<float>(i % 2);
    if (hole && i % hole == 0) a[i] = a.nodata_value();
  }
  PredictorStack stack(g);
  stack.set("A", a);
  stack.set("B", b);
  return {labels, stack};
}

SampleOptions options() {
  SampleOptions o;
  o.feature_names = kNames;
  o.default_epoch = 2008;
  return o;
}

}  // namespace

TEST_SUITE("sampling") {
  TEST_CASE("a full-size draw is exactly balanced and unique") {
    const auto s = scene(1000, 1000, 0.45, 1);
    const auto records = stratified_balanced_sample(s.labels, s.stack, 416668, 42, options());
    REQUIRE(records.size() == 416668);
    std::size_t pos = 0;
    std::set<PixelId> ids;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      pos += r.label;
      if (i < 208334) CHECK(r.label);  // positives first
      ids.insert(r.id);
      const auto idx = s.labels.transform().index(r.id.col, r.id.row);
      REQUIRE(r.features.size() == 2);
      CHECK(r.features[0] == static_cast<double>(idx));
      CHECK(r.label == (s.labels[idx] == 1.0f));
      CHECK(r.epoch == 2008);
    }
    CHECK(pos == 208334);
    CHECK(ids.size() == records.size());

    const auto set = split_records(records, kDefaultSplitFractions, 42, kNames);
    const auto sizes = split_sizes(416668, kDefaultSplitFractions);
    CHECK(sizes[0] + sizes[1] + sizes[2] == 416668);
    CHECK(std::abs(static_cast<long>(sizes[0]) - 250000) <= 1);
    CHECK(std::abs(static_cast<long>(sizes[1]) - 83334) <= 1);
    CHECK(std::abs(static_cast<long>(sizes[2]) - 83334) <= 1);
    CHECK(set.count(Split::Train) == sizes[0]);
    CHECK(set.count(Split::Validation) == sizes[1]);
    CHECK(set.count(Split::Test) == sizes[2]);
  }

  TEST_CASE("split sizes use largest remainders, earlier split first") {
    CHECK(split_sizes(10, kDefaultSplitFractions) == std::array<std::size_t, 3>{6, 2, 2});
    CHECK(split_sizes(11, kDefaultSplitFractions) == std::array<std::size_t, 3>{7, 2, 2});
    CHECK(split_sizes(12, kDefaultSplitFractions) == std::array<std::size_t, 3>{7, 3, 2});
    CHECK(split_sizes(13, kDefaultSplitFractions) == std::array<std::size_t, 3>{8, 3, 2});
    CHECK(split_sizes(3, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == std::array<std::size_t, 3>{1, 1, 1});
    CHECK_THROWS_AS(split_sizes(10, {0.5, 0.5, 0.0}), ParameterError);
    CHECK_THROWS_AS(split_sizes(10, {0.5, 0.3, 0.3}), ParameterError);
  }

  TEST_CASE("pixels with incomplete features or no label are never drawn") {
    auto s = scene(40, 40, 0.5, 2, 3);
    for (std::size_t i = 0; i < s.labels.size(); i += 5) s.labels[i] = s.labels.nodata_value();
    const auto max_n = max_balanced_sample(s.labels, s.stack, kNames);
    const auto records = stratified_balanced_sample(s.labels, s.stack, max_n, 9, options());
    for (const auto& r : records) {
      const auto idx = s.labels.transform().index(r.id.col, r.id.row);
      CHECK(idx % 3 != 0);
      CHECK(idx % 5 != 0);
    }
    // the smaller class is exhausted exactly
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < s.labels.size(); ++i)
      if (i % 3 != 0 && i % 5 != 0) (s.labels[i] == 1.0f ? pos : neg)++;
    CHECK(max_n == 2 * std::min(pos, neg));
  }

  TEST_CASE("too few pixels of a class names that class") {
    const auto s = scene(20, 20, 0.1, 3);
    try {
      stratified_balanced_sample(s.labels, s.stack, 200, 1, options());
      FAIL("expected SamplingError");
    } catch (const SamplingError& e) {
      CHECK(std::string(e.what()).find("shrub (positive)") != std::string::npos);
    }
    CHECK_THROWS_AS(stratified_balanced_sample(s.labels, s.stack, 7, 1, options()), ParameterError);
  }

  TEST_CASE("draws are seed-deterministic") {
    const auto s = scene(50, 50, 0.4, 4);
    const auto a = stratified_balanced_sample(s.labels, s.stack, 400, 5, options());
    const auto b = stratified_balanced_sample(s.labels, s.stack, 400, 5, options());
    const auto c = stratified_balanced_sample(s.labels, s.stack, 400, 6, options());
    CHECK(a == b);
    CHECK(a != c);
  }

  TEST_CASE("sample table round trips through tsv") {
    const auto s = scene(30, 30, 0.5, 5);
    const auto set = split_records(stratified_balanced_sample(s.labels, s.stack, 100, 7, options()),
                                   kDefaultSplitFractions, 8, kNames);
    const auto text = set.to_tsv();
    const auto back = SampleSet::from_tsv(text);
    CHECK(back.feature_names == set.feature_names);
    CHECK(back.records == set.records);
    CHECK(back.split == set.split);
    CHECK(back.to_tsv() == text);

    const auto dir = oracle::fresh_dir("sample_tsv");
    set.write((dir / "s.tsv").string());
    CHECK(SampleSet::read((dir / "s.tsv").string()).records == set.records);

    CHECK_THROWS_AS(SampleSet::from_tsv(""), FormatError);
    CHECK_THROWS_AS(SampleSet::from_tsv("a\tb\n"), FormatError);
    auto broken = text;
    broken.replace(broken.find("train"), 5, "trian");
    CHECK_THROWS_AS(SampleSet::from_tsv(broken), FormatError);
  }

  TEST_CASE("subsets keep their split") {
    const auto s = scene(30, 30, 0.5, 6);
    const auto set = split_records(stratified_balanced_sample(s.labels, s.stack, 100, 7, options()),
                                   kDefaultSplitFractions, 8, kNames);
    const auto test = set.subset(Split::Test);
    CHECK(test.records.size() == 20);
    for (auto sp : test.split) CHECK(sp == Split::Test);
  }
}
