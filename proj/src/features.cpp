#include "shrubmap/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "shrubmap/error.hpp"

namespace shrubmap {

void require_dimension(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw DimensionError(std::string(what) + ": expected " + std::to_string(want) + " features, got " +
                         std::to_string(got));
}

LabeledData labeled_data(const std::vector<PixelRecord>& records, const std::vector<std::string>& feature_names) {
  LabeledData d;
  d.feature_names = feature_names;
  d.x = FeatureMatrix(records.size(), feature_names.size());
  d.y.resize(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    require_dimension(records[i].features.size(), feature_names.size(), "sample record");
    std::copy(records[i].features.begin(), records[i].features.end(), d.x.row(i).begin());
    d.y[i] = records[i].label ? 1 : 0;
  }
  return d;
}

LabeledData labeled_data(const SampleSet& set, Split split) {
  std::vector<PixelRecord> picked;
  for (auto i : set.indices(split)) picked.push_back(set.records[i]);
  return labeled_data(picked, set.feature_names);
}

FeatureEncoder FeatureEncoder::fit(const FeatureMatrix& x, const std::vector<std::string>& names, OneHot mode) {
  require_dimension(names.size(), x.cols, "feature encoder names");
  if (x.rows == 0) throw ParameterError("cannot fit a feature encoder on zero records");
  FeatureEncoder e;
  e.mode_ = mode;
  e.mean_.assign(x.cols, 0.0);
  e.scale_.assign(x.cols, 1.0);
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == kCategoricalFeature) e.categorical_ = static_cast<std::int32_t>(j);

  for (std::size_t j = 0; j < x.cols; ++j) {
    if (static_cast<std::int32_t>(j) == e.categorical_) {
      std::set<double> seen;
      for (std::size_t i = 0; i < x.rows; ++i) seen.insert(x(i, j));
      e.categories_.assign(seen.begin(), seen.end());
      if (mode == OneHot::DropFirst && !e.categories_.empty()) e.categories_.erase(e.categories_.begin());
      continue;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) sum += x(i, j);
    const double mean = sum / static_cast<double>(x.rows);
    double ss = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) ss += (x(i, j) - mean) * (x(i, j) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(x.rows));
    e.mean_[j] = mean;
    e.scale_[j] = sd > 1e-12 ? sd : 1.0;
  }
  return e;
}

std::size_t FeatureEncoder::output_dim() const {
  return mean_.size() - (categorical_ >= 0 ? 1 : 0) + categories_.size();
}

void FeatureEncoder::transform(std::span<const double> in, std::span<double> out) const {
  require_dimension(in.size(), input_dim(), "feature encoder input");
  require_dimension(out.size(), output_dim(), "feature encoder output");
  std::size_t k = 0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    if (static_cast<std::int32_t>(j) == categorical_) continue;
    out[k++] = (in[j] - mean_[j]) / scale_[j];
  }
  for (double c : categories_) out[k++] = (in[static_cast<std::size_t>(categorical_)] == c) ? 1.0 : 0.0;
}

FeatureMatrix FeatureEncoder::transform(const FeatureMatrix& x) const {
  FeatureMatrix out(x.rows, output_dim());
  for (std::size_t i = 0; i < x.rows; ++i) transform(x.row(i), out.row(i));
  return out;
}

void FeatureEncoder::save(bin::Writer& w) const {
  w.put<std::int32_t>(categorical_);
  w.u8(static_cast<std::uint8_t>(mode_));
  w.u32(static_cast<std::uint32_t>(mean_.size()));
  for (std::size_t j = 0; j < mean_.size(); ++j) {
    w.f64(mean_[j]);
    w.f64(scale_[j]);
  }
  w.u32(static_cast<std::uint32_t>(categories_.size()));
  for (double c : categories_) w.f64(c);
}

FeatureEncoder FeatureEncoder::load(bin::Reader& r) {
  FeatureEncoder e;
  e.categorical_ = r.get<std::int32_t>();
  const auto mode = r.u8();
  if (mode > 1) throw FormatError("feature encoder: bad one-hot mode");
  e.mode_ = static_cast<OneHot>(mode);
  const auto n = r.u32();
  r.need(static_cast<std::size_t>(n) * 16);
  for (std::uint32_t j = 0; j < n; ++j) {
    e.mean_.push_back(r.f64());
    e.scale_.push_back(r.f64());
  }
  if (e.categorical_ >= static_cast<std::int32_t>(n)) throw FormatError("feature encoder: bad categorical column");
  const auto nc = r.u32();
  r.need(static_cast<std::size_t>(nc) * 8);
  for (std::uint32_t j = 0; j < nc; ++j) e.categories_.push_back(r.f64());
  return e;
}

}  // namespace shrubmap
