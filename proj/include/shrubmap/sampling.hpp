#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shrubmap/raster.hpp"
#include "shrubmap/stack.hpp"

namespace shrubmap {

struct PixelId {
  std::uint32_t tile = 0;
  std::uint32_t col = 0;
  std::uint32_t row = 0;
  auto operator<=>(const PixelId&) const = default;
};

struct PixelRecord {
  PixelId id;
  int epoch = 0;
  bool label = false;  // shrub = positive
  std::vector<double> features;
  bool operator==(const PixelRecord&) const = default;
};

enum class Split : std::uint8_t { Train = 0, Validation = 1, Test = 2 };
const char* split_name(Split s);

struct SampleSet {
  std::vector<std::string> feature_names;
  std::vector<PixelRecord> records;
  std::vector<Split> split;  // one per record
  std::uint64_t seed = 0;

  std::vector<std::size_t> indices(Split s) const;
  /// Records of one split as a new set (split tags preserved).
  SampleSet subset(Split s) const;
  std::size_t count(Split s) const;

  std::string to_tsv() const;
  static SampleSet from_tsv(const std::string& text);
  void write(const std::string& path) const;
  static SampleSet read(const std::string& path);
};

struct SampleOptions {
  std::vector<std::string> feature_names = default_feature_names();
  const Raster* tiles = nullptr;   // optional tile index per pixel
  const Raster* epochs = nullptr;  // optional per-pixel epoch
  int default_epoch = 0;
};

/// Exactly n_total/2 shrub and n_total/2 non-shrub records, each class drawn
/// uniformly without replacement from pixels with a label and complete
/// features. Positives come first, in draw order.
std::vector<PixelRecord> stratified_balanced_sample(const Raster& labels, const PredictorStack& stack,
                                                    std::size_t n_total, std::uint64_t seed,
                                                    const SampleOptions& options = {});

/// Largest valid even n_total for the landscape (twice the smaller class).
std::size_t max_balanced_sample(const Raster& labels, const PredictorStack& stack,
                                const std::vector<std::string>& feature_names);

using SplitFractions = std::array<double, 3>;
inline constexpr SplitFractions kDefaultSplitFractions{0.6, 0.2, 0.2};

/// Largest-remainder sizes; remainders tie toward the earlier split.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& fractions);

/// Random (unstratified) partition into train/validation/test.
SampleSet split_records(std::vector<PixelRecord> records, const SplitFractions& fractions, std::uint64_t seed,
                        std::vector<std::string> feature_names = default_feature_names());

}  // namespace shrubmap
