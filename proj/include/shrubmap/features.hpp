#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shrubmap/binary_io.hpp"
#include "shrubmap/sampling.hpp"

namespace shrubmap {

/// Dense row-major feature matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

struct LabeledData {
  FeatureMatrix x;
  std::vector<std::uint8_t> y;
  std::vector<std::string> feature_names;
};

LabeledData labeled_data(const SampleSet& set, Split split);
LabeledData labeled_data(const std::vector<PixelRecord>& records, const std::vector<std::string>& feature_names);

/// Name of the categorical land-cover predictor.
inline constexpr const char* kCategoricalFeature = "LCSEC";

/// Standardizes continuous columns with training statistics and one-hot
/// encodes the categorical column (if present). Output layout: continuous
/// columns in input order, then one indicator per retained category.
/// Categories unseen at fit time encode as all zeros.
class FeatureEncoder {
 public:
  enum class OneHot : std::uint8_t { Full = 0, DropFirst = 1 };

  FeatureEncoder() = default;
  static FeatureEncoder fit(const FeatureMatrix& x, const std::vector<std::string>& names, OneHot mode);

  std::size_t input_dim() const { return mean_.size(); }
  std::size_t output_dim() const;
  void transform(std::span<const double> in, std::span<double> out) const;
  FeatureMatrix transform(const FeatureMatrix& x) const;

  void save(bin::Writer& w) const;
  static FeatureEncoder load(bin::Reader& r);

  bool operator==(const FeatureEncoder&) const = default;

 private:
  std::int32_t categorical_ = -1;
  OneHot mode_ = OneHot::Full;
  std::vector<double> categories_;  // retained categories, ascending
  std::vector<double> mean_, scale_;
};

/// Raises DimensionError unless got == want.
void require_dimension(std::size_t got, std::size_t want, const char* what);

}  // namespace shrubmap
