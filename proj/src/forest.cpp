#include "shrubmap/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shrubmap/error.hpp"
#include "shrubmap/parallel.hpp"
#include "shrubmap/random.hpp"

namespace shrubmap {

namespace {

using u128 = unsigned __int128;

/// Split quality (pos_l^2 + neg_l^2)/n_l + (pos_r^2 + neg_r^2)/n_r held as an
/// exact fraction so comparisons never depend on rounding.
struct SplitScore {
  u128 num = 0;
  u128 den = 1;

  static SplitScore of(std::uint64_t pl, std::uint64_t nl, std::uint64_t pr, std::uint64_t nr) {
    const u128 a = static_cast<u128>(pl) * pl + static_cast<u128>(nl) * nl;
    const u128 b = static_cast<u128>(pr) * pr + static_cast<u128>(nr) * nr;
    const u128 sl = pl + nl, sr = pr + nr;
    return {a * sr + b * sl, sl * sr};
  }
  bool better_than(const SplitScore& o) const {
    // num/den > o.num/o.den; both products stay far below 2^128 for any
    // realistic node size
    return num * o.den > o.num * den;
  }
};

struct Grower {
  const LabeledData& data;
  const ForestParams& params;
  Rng& rng;
  std::vector<TreeNode>& nodes;
  std::vector<std::uint32_t> scratch;

  double x(std::uint32_t row, std::size_t f) const { return data.x(row, f); }

  void grow(std::vector<std::uint32_t>& idx, std::size_t lo, std::size_t hi) {
    const std::size_t here = nodes.size();
    nodes.emplace_back();
    const std::size_t n = hi - lo;
    std::uint64_t pos = 0;
    for (std::size_t i = lo; i < hi; ++i) pos += data.y[idx[i]];
    const double fraction = static_cast<double>(pos) / static_cast<double>(n);
    if (n < 2 * params.min_node || pos == 0 || pos == n) {
      nodes[here].value = fraction;
      return;
    }

    const std::size_t d = data.x.cols;
    std::vector<std::size_t> features;
    const std::size_t k = std::min(params.features_per_split, d);
    if (k == 1) features.push_back(static_cast<std::size_t>(rng.below(d)));
    else features = rng.sample_without_replacement(d, k);

    bool found = false;
    SplitScore best;
    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    for (auto f : features) {
      std::sort(idx.begin() + lo, idx.begin() + hi, [&](std::uint32_t a, std::uint32_t b) {
        const double va = x(a, f), vb = x(b, f);
        return va < vb || (va == vb && a < b);
      });
      std::uint64_t pl = 0, nl = 0;
      for (std::size_t i = lo; i + 1 < hi; ++i) {
        (data.y[idx[i]] ? pl : nl) += 1;
        const double v = x(idx[i], f), next = x(idx[i + 1], f);
        if (v == next) continue;
        const auto score = SplitScore::of(pl, nl, pos - pl, (n - pos) - nl);
        if (!found || score.better_than(best)) {
          found = true;
          best = score;
          best_feature = f;
          double mid = v + (next - v) / 2.0;
          if (!(mid < next)) mid = v;
          best_threshold = mid;
        }
      }
    }
    if (!found) {
      nodes[here].value = fraction;
      return;
    }

    // partition: records with x <= threshold first, preserving relative order
    scratch.clear();
    std::size_t write = lo;
    for (std::size_t i = lo; i < hi; ++i) {
      if (x(idx[i], best_feature) <= best_threshold) idx[write++] = idx[i];
      else scratch.push_back(idx[i]);
    }
    const std::size_t mid = write;
    std::copy(scratch.begin(), scratch.end(), idx.begin() + mid);

    nodes[here].feature = static_cast<std::int32_t>(best_feature);
    nodes[here].threshold = best_threshold;
    nodes[here].value = fraction;
    nodes[here].left = static_cast<std::uint32_t>(nodes.size());
    grow(idx, lo, mid);
    nodes[here].right = static_cast<std::uint32_t>(nodes.size());
    grow(idx, mid, hi);
  }
};

}  // namespace

ForestModel::ForestModel(std::vector<std::string> names, ForestParams params, std::vector<DecisionTree> trees)
    : names_(std::move(names)), params_(params), trees_(std::move(trees)) {}

double ForestModel::predict_proba(std::span<const double> x) const {
  require_dimension(x.size(), names_.size(), "forest prediction");
  if (trees_.empty()) throw ParameterError("forest has no trees");
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(x);
  return sum / static_cast<double>(trees_.size());
}

ParamBlock ForestModel::parameters() const {
  return {{"n_trees", static_cast<double>(params_.n_trees)},
          {"bootstrap_fraction", params_.bootstrap_fraction},
          {"min_node", static_cast<double>(params_.min_node)},
          {"features_per_split", static_cast<double>(params_.features_per_split)}};
}

void ForestModel::save_payload(bin::Writer& w) const {
  w.u32(static_cast<std::uint32_t>(trees_.size()));
  for (const auto& t : trees_) t.save(w);
}

ForestModel ForestModel::load(const std::map<std::string, double>& params, std::vector<std::string> names,
                              bin::Reader& r) {
  ForestParams p;
  p.n_trees = static_cast<std::size_t>(param_value(params, "n_trees"));
  p.bootstrap_fraction = param_value(params, "bootstrap_fraction");
  p.min_node = static_cast<std::size_t>(param_value(params, "min_node"));
  p.features_per_split = static_cast<std::size_t>(param_value(params, "features_per_split"));
  const auto n = r.u32();
  std::vector<DecisionTree> trees;
  trees.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) trees.push_back(DecisionTree::load(r, names.size()));
  return ForestModel(std::move(names), p, std::move(trees));
}

ForestModel train_forest(const LabeledData& train, const ForestParams& params, std::uint64_t seed) {
  const std::size_t n = train.x.rows;
  if (n == 0) throw ParameterError("cannot train a forest on an empty training set");
  if (n < params.min_node)
    throw ParameterError("forest needs at least min_node=" + std::to_string(params.min_node) + " records");
  if (params.n_trees == 0) throw ParameterError("forest n_trees must be positive");
  if (params.min_node == 0) throw ParameterError("forest min_node must be positive");
  if (params.features_per_split == 0) throw ParameterError("forest features_per_split must be positive");
  if (!(params.bootstrap_fraction > 0.0)) throw ParameterError("forest bootstrap_fraction must be positive");
  if (train.x.cols == 0) throw ParameterError("forest needs at least one feature");

  const auto m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(params.bootstrap_fraction * static_cast<double>(n))));
  std::vector<DecisionTree> trees(params.n_trees);
  parallel_for(params.n_trees, [&](std::size_t t) {
    Rng rng(derive_seed(seed, t));
    std::vector<std::uint32_t> idx(m);
    for (auto& i : idx) i = static_cast<std::uint32_t>(rng.below(n));
    Grower g{train, params, rng, trees[t].nodes, {}};
    g.grow(idx, 0, m);
  });
  return ForestModel(train.feature_names, params, std::move(trees));
}

}  // namespace shrubmap
