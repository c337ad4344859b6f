#include "shrubmap/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "shrubmap/error.hpp"
#include "shrubmap/random.hpp"

namespace shrubmap {

namespace {

void check_lengths(std::span<const std::uint8_t> labels, std::span<const double> probs) {
  if (labels.size() != probs.size())
    throw ParameterError("labels and probabilities differ in length (" + std::to_string(labels.size()) + " vs " +
                         std::to_string(probs.size()) + ")");
}

struct ClassTotals {
  std::uint64_t pos = 0, neg = 0;
};

ClassTotals totals(std::span<const std::uint8_t> labels) {
  ClassTotals t;
  for (auto l : labels) (l ? t.pos : t.neg) += 1;
  return t;
}

/// Indices sorted by descending score.
std::vector<std::size_t> descending(std::span<const double> probs) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  return order;
}

/// Walks distinct thresholds from high to low; visit(threshold, tp, fp)
/// sees the counts with every score >= threshold classified positive.
template <typename Visit>
void sweep(std::span<const std::uint8_t> labels, std::span<const double> probs, Visit visit) {
  const auto order = descending(probs);
  std::uint64_t tp = 0, fp = 0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double s = probs[order[k]];
    while (k < order.size() && probs[order[k]] == s) {
      (labels[order[k]] ? tp : fp) += 1;
      ++k;
    }
    visit(s, tp, fp);
  }
}

void require_both_classes(const ClassTotals& t, const char* what) {
  if (t.pos == 0 || t.neg == 0) throw ParameterError(std::string(what) + " requires both classes to be present");
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

ConfusionCounts confusion(std::span<const std::uint8_t> labels, std::span<const double> probs, double threshold) {
  check_lengths(labels, probs);
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = probs[i] >= threshold;
    if (labels[i]) (pred ? c.tp : c.fn) += 1;
    else (pred ? c.fp : c.tn) += 1;
  }
  return c;
}

MetricsReport metrics(const ConfusionCounts& c) {
  MetricsReport m;
  m.counts = c;
  const auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.fp + c.tn);
  m.precision = ratio(c.tp, c.tp + c.fp);
  if (m.sensitivity && m.precision && (*m.sensitivity + *m.precision) > 0.0)
    m.f1 = 2.0 * *m.precision * *m.sensitivity / (*m.precision + *m.sensitivity);
  return m;
}

double roc_auc(std::span<const std::uint8_t> labels, std::span<const double> probs) {
  check_lengths(labels, probs);
  const auto t = totals(labels);
  require_both_classes(t, "roc_auc");
  // ascending walk; twice the Mann-Whitney count stays integral
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });
  std::uint64_t neg_below = 0;
  unsigned __int128 twice = 0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double s = probs[order[k]];
    std::uint64_t pos_here = 0, neg_here = 0;
    while (k < order.size() && probs[order[k]] == s) {
      (labels[order[k]] ? pos_here : neg_here) += 1;
      ++k;
    }
    twice += static_cast<unsigned __int128>(pos_here) * (2 * neg_below + neg_here);
    neg_below += neg_here;
  }
  return static_cast<double>(static_cast<long double>(twice) /
                             (2.0L * static_cast<long double>(t.pos) * static_cast<long double>(t.neg)));
}

double pr_auc(std::span<const std::uint8_t> labels, std::span<const double> probs) {
  check_lengths(labels, probs);
  const auto t = totals(labels);
  if (t.pos == 0) throw ParameterError("pr_auc requires at least one positive");
  double area = 0.0;
  std::uint64_t prev_tp = 0;
  sweep(labels, probs, [&](double, std::uint64_t tp, std::uint64_t fp) {
    if (tp != prev_tp) {
      const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
      area += static_cast<double>(tp - prev_tp) / static_cast<double>(t.pos) * precision;
      prev_tp = tp;
    }
  });
  return area;
}

double youden_threshold(std::span<const std::uint8_t> labels, std::span<const double> probs) {
  check_lengths(labels, probs);
  const auto t = totals(labels);
  require_both_classes(t, "youden_threshold");
  // J * pos * neg + pos * neg = tp * neg + tn * pos, compared exactly
  double best_threshold = kInf;
  unsigned __int128 best = static_cast<unsigned __int128>(t.neg) * t.pos;  // +inf: tp = 0, tn = neg
  sweep(labels, probs, [&](double s, std::uint64_t tp, std::uint64_t fp) {
    const unsigned __int128 score =
        static_cast<unsigned __int128>(tp) * t.neg + static_cast<unsigned __int128>(t.neg - fp) * t.pos;
    if (score > best) {
      best = score;
      best_threshold = s;
    }
  });
  return best_threshold;
}

double specificity_threshold(std::span<const std::uint8_t> labels, std::span<const double> probs, double target) {
  check_lengths(labels, probs);
  if (!(target > 0.0 && target < 1.0)) throw ParameterError("specificity target must lie in (0,1)");
  const auto t = totals(labels);
  require_both_classes(t, "specificity_threshold");
  double chosen = kInf;
  bool open = true;
  sweep(labels, probs, [&](double s, std::uint64_t, std::uint64_t fp) {
    if (!open) return;
    const double spec = static_cast<double>(t.neg - fp) / static_cast<double>(t.neg);
    if (spec >= target) chosen = s;
    else open = false;  // specificity only falls as the threshold drops
  });
  return chosen;
}

// ---------------------------------------------------------------------------

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {
std::string spec_name(double target) {
  const double pct = target * 100.0;
  if (std::abs(pct - std::round(pct)) < 1e-9) return "spec" + std::to_string(static_cast<long>(std::lround(pct)));
  return "spec" + format_number(pct);
}
}  // namespace

std::vector<std::pair<std::string, double>> ThresholdSet::named() const {
  std::vector<std::pair<std::string, double>> out{{"youden", youden}};
  for (const auto& [target, thr] : by_specificity) out.emplace_back(spec_name(target), thr);
  return out;
}

std::string ThresholdSet::to_text() const {
  std::string out;
  out += "youden=" + format_number(youden) + "\n";
  for (const auto& [target, thr] : by_specificity)
    out += spec_name(target) + "=" + format_number(thr) + "\n";
  return out;
}

ThresholdSet ThresholdSet::from_text(const std::string& text) {
  ThresholdSet ts;
  bool have_youden = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("threshold file: expected name=value");
    const auto name = line.substr(0, eq);
    const auto value_text = line.substr(eq + 1);
    double value;
    if (value_text == "inf") value = kInf;
    else {
      const auto res = std::from_chars(value_text.data(), value_text.data() + value_text.size(), value);
      if (res.ec != std::errc() || res.ptr != value_text.data() + value_text.size())
        throw FormatError("threshold file: bad value for " + name);
    }
    if (name == "youden") {
      ts.youden = value;
      have_youden = true;
    } else if (name.rfind("spec", 0) == 0) {
      double pct;
      const auto digits = name.substr(4);
      const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), pct);
      if (res.ec != std::errc()) throw FormatError("threshold file: bad name " + name);
      ts.by_specificity.emplace_back(pct / 100.0, value);
    } else {
      throw FormatError("threshold file: unknown entry " + name);
    }
  }
  if (!have_youden) throw FormatError("threshold file lacks a youden entry");
  std::sort(ts.by_specificity.begin(), ts.by_specificity.end());
  return ts;
}

void ThresholdSet::write(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << to_text();
}

ThresholdSet ThresholdSet::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

ThresholdSet calibrate_thresholds(std::span<const std::uint8_t> labels, std::span<const double> probs,
                                  const std::vector<double>& targets) {
  ThresholdSet ts;
  ts.youden = youden_threshold(labels, probs);
  auto sorted = targets;
  std::sort(sorted.begin(), sorted.end());
  for (double t : sorted) ts.by_specificity.emplace_back(t, specificity_threshold(labels, probs, t));
  return ts;
}

double auc_on_patchwork_sample(const Raster& labels, const Raster& probs, std::size_t n, std::uint64_t seed) {
  require_aligned(labels, probs, "auc_on_patchwork_sample");
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!labels.is_nodata_at(i) && !probs.is_nodata_at(i)) valid.push_back(i);
  if (valid.empty()) throw SamplingError("no pixels are valid in both label and probability rasters");
  Rng rng(derive_seed(seed, 0xa0c));
  for (int attempt = 0; attempt < 2; ++attempt, n *= 2) {
    std::vector<std::size_t> picks;
    if (n >= valid.size()) {
      picks = valid;
    } else {
      for (auto k : rng.sample_without_replacement(valid.size(), n)) picks.push_back(valid[k]);
    }
    std::vector<std::uint8_t> l;
    std::vector<double> p;
    for (auto i : picks) {
      l.push_back(labels.cells()[i] == 1.0f ? 1 : 0);
      p.push_back(probs.cells()[i]);
    }
    const auto t = totals(l);
    if (t.pos > 0 && t.neg > 0) return roc_auc(l, p);
    if (n >= valid.size()) break;
  }
  throw SamplingError("patchwork AUC sample contains a single class");
}

}  // namespace shrubmap
