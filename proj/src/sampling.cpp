#include "shrubmap/sampling.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "shrubmap/error.hpp"
#include "shrubmap/random.hpp"

namespace shrubmap {

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<std::size_t> SampleSet::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

std::size_t SampleSet::count(Split s) const { return static_cast<std::size_t>(std::count(split.begin(), split.end(), s)); }

SampleSet SampleSet::subset(Split s) const {
  SampleSet out;
  out.feature_names = feature_names;
  out.seed = seed;
  for (const auto i : indices(s)) {
    out.records.push_back(records[i]);
    out.split.push_back(s);
  }
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& field, const std::string& what) {
  T v{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw FormatError("sample file: bad " + what + " value '" + field + "'");
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

const std::vector<std::string> kFixedColumns = {"tile", "col", "row", "epoch", "label", "split"};

}  // namespace

std::string SampleSet::to_tsv() const {
  std::ostringstream out;
  for (std::size_t c = 0; c < kFixedColumns.size(); ++c) out << (c ? "\t" : "") << kFixedColumns[c];
  for (const auto& f : feature_names) out << '\t' << f;
  out << '\n';
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    out << r.id.tile << '\t' << r.id.col << '\t' << r.id.row << '\t' << r.epoch << '\t' << (r.label ? 1 : 0) << '\t'
        << split_name(split[i]);
    for (double v : r.features) out << '\t' << format_double(v);
    out << '\n';
  }
  return out.str();
}

SampleSet SampleSet::from_tsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("sample file is empty");
  const auto header = split_tabs(line);
  if (header.size() < kFixedColumns.size() || !std::equal(kFixedColumns.begin(), kFixedColumns.end(), header.begin()))
    throw FormatError("sample file header must start with tile, col, row, epoch, label, split");
  SampleSet s;
  s.feature_names.assign(header.begin() + static_cast<long>(kFixedColumns.size()), header.end());
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != header.size()) throw FormatError("sample file line " + std::to_string(lineno) + ": wrong column count");
    PixelRecord r;
    r.id.tile = parse_number<std::uint32_t>(f[0], "tile");
    r.id.col = parse_number<std::uint32_t>(f[1], "col");
    r.id.row = parse_number<std::uint32_t>(f[2], "row");
    r.epoch = parse_number<int>(f[3], "epoch");
    const int label = parse_number<int>(f[4], "label");
    if (label != 0 && label != 1) throw FormatError("sample file: label must be 0 or 1");
    r.label = label == 1;
    Split sp;
    if (f[5] == "train") sp = Split::Train;
    else if (f[5] == "validation") sp = Split::Validation;
    else if (f[5] == "test") sp = Split::Test;
    else throw FormatError("sample file: unknown split '" + f[5] + "'");
    for (std::size_t c = kFixedColumns.size(); c < f.size(); ++c) r.features.push_back(parse_number<double>(f[c], "feature"));
    s.records.push_back(std::move(r));
    s.split.push_back(sp);
  }
  return s;
}

void SampleSet::write(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write sample file " + path);
  out << to_tsv();
}

SampleSet SampleSet::read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open sample file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_tsv(ss.str());
}

// ---------------------------------------------------------------------------

namespace {

struct ClassPools {
  std::vector<std::size_t> positive, negative;
};

ClassPools class_pools(const Raster& labels, const PredictorStack& stack, const std::vector<std::string>& names) {
  require_aligned(labels, stack.band(names.empty() ? std::string("TCB") : names.front()), "sample(labels/stack)");
  std::vector<const Raster*> bands;
  for (const auto& n : names) bands.push_back(&stack.band(n));
  ClassPools pools;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels.is_nodata_at(i)) continue;
    bool ok = true;
    for (const auto* b : bands) ok = ok && !b->is_nodata_at(i);
    if (!ok) continue;
    (labels[i] == 1.0f ? pools.positive : pools.negative).push_back(i);
  }
  return pools;
}

}  // namespace

std::size_t max_balanced_sample(const Raster& labels, const PredictorStack& stack,
                                const std::vector<std::string>& feature_names) {
  const auto pools = class_pools(labels, stack, feature_names);
  return 2 * std::min(pools.positive.size(), pools.negative.size());
}

std::vector<PixelRecord> stratified_balanced_sample(const Raster& labels, const PredictorStack& stack,
                                                    std::size_t n_total, std::uint64_t seed,
                                                    const SampleOptions& options) {
  if (n_total == 0 || n_total % 2 != 0) throw ParameterError("n_total must be a positive even number");
  if (labels.dtype() != DType::Boolean) throw ParameterError("labels must be a boolean raster");
  const auto pools = class_pools(labels, stack, options.feature_names);
  const std::size_t half = n_total / 2;
  if (pools.positive.size() < half)
    throw SamplingError("insufficient shrub (positive) pixels: need " + std::to_string(half) + ", have " +
                        std::to_string(pools.positive.size()));
  if (pools.negative.size() < half)
    throw SamplingError("insufficient non-shrub (negative) pixels: need " + std::to_string(half) + ", have " +
                        std::to_string(pools.negative.size()));

  std::vector<const Raster*> bands;
  for (const auto& n : options.feature_names) bands.push_back(&stack.band(n));
  const auto& grid = labels.transform();
  Rng rng(derive_seed(seed, 0x5a3d));
  std::vector<PixelRecord> out;
  out.reserve(n_total);
  for (const auto* pool : {&pools.positive, &pools.negative}) {
    for (const auto pick : rng.sample_without_replacement(pool->size(), half)) {
      const std::size_t i = (*pool)[pick];
      PixelRecord r;
      r.id.col = static_cast<std::uint32_t>(i % grid.width);
      r.id.row = static_cast<std::uint32_t>(i / grid.width);
      if (options.tiles && !options.tiles->is_nodata_at(i)) r.id.tile = static_cast<std::uint32_t>((*options.tiles)[i]);
      r.epoch = options.default_epoch;
      if (options.epochs && !options.epochs->is_nodata_at(i)) r.epoch = static_cast<int>(std::lround((*options.epochs)[i]));
      r.label = pool == &pools.positive;
      r.features.reserve(bands.size());
      for (const auto* b : bands) r.features.push_back((*b)[i]);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0) || !std::isfinite(f)) throw ParameterError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ParameterError("split fractions must sum to 1");
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = fractions[k] * static_cast<double>(n);
    sizes[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = exact - std::floor(exact);
    assigned += sizes[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++sizes[order[k]];
  return sizes;
}

SampleSet split_records(std::vector<PixelRecord> records, const SplitFractions& fractions, std::uint64_t seed,
                        std::vector<std::string> feature_names) {
  const auto sizes = split_sizes(records.size(), fractions);
  {
    std::set<std::pair<PixelId, int>> seen;
    for (const auto& r : records)
      if (!seen.insert({r.id, r.epoch}).second) throw SamplingError("duplicate pixel record in sample");
  }
  Rng rng(derive_seed(seed, 0x5b17));
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  SampleSet s;
  s.feature_names = std::move(feature_names);
  s.seed = seed;
  s.records.reserve(records.size());
  s.split.reserve(records.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    s.records.push_back(std::move(records[order[k]]));
    s.split.push_back(k < sizes[0] ? Split::Train : (k < sizes[0] + sizes[1] ? Split::Validation : Split::Test));
  }
  return s;
}

}  // namespace shrubmap
