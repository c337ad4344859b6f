#include "shrubmap/gbm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "shrubmap/error.hpp"
#include "shrubmap/log.hpp"
#include "shrubmap/random.hpp"

namespace shrubmap {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double soft_threshold(double g, double l1) {
  if (l1 <= 0.0) return g;
  if (g > l1) return g - l1;
  if (g < -l1) return g + l1;
  return 0.0;
}

struct BinStats {
  double g = 0.0;
  double h = 0.0;
  std::uint32_t n = 0;
};

struct Candidate {
  bool valid = false;
  double gain = 0.0;
  std::size_t feature = 0;
  std::uint8_t bin = 0;  // left holds bins <= this
};

struct Leaf {
  std::uint32_t node = 0;
  std::vector<std::uint32_t> rows;
  double g = 0.0;
  double h = 0.0;
  Candidate best;
};

class TreeBuilder {
 public:
  TreeBuilder(const GbmParams& p, const std::vector<FeatureBins>& bins, const std::vector<std::uint8_t>& binned,
              std::size_t n_rows, const std::vector<double>& grad, const std::vector<double>& hess)
      : p_(p), bins_(bins), binned_(binned), n_(n_rows), grad_(grad), hess_(hess) {}

  /// Returns the tree (thresholds in feature units) and each node's split bin.
  DecisionTree build(std::vector<std::uint32_t> rows, const std::vector<std::size_t>& features,
                     std::vector<std::uint8_t>& split_bins) {
    features_ = &features;
    DecisionTree tree;
    tree.nodes.emplace_back();
    split_bins.assign(1, 0);
    std::vector<Leaf> leaves;
    leaves.push_back(make_leaf(0, std::move(rows)));

    while (leaves.size() < p_.max_leaves) {
      std::size_t pick = leaves.size();
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (!leaves[i].best.valid) continue;
        if (pick == leaves.size() || leaves[i].best.gain > leaves[pick].best.gain) pick = i;
      }
      if (pick == leaves.size()) break;

      Leaf parent = std::move(leaves[pick]);
      const auto f = parent.best.feature;
      const auto b = parent.best.bin;
      std::vector<std::uint32_t> left_rows, right_rows;
      for (auto r : parent.rows) (binned_[f * n_ + r] <= b ? left_rows : right_rows).push_back(r);

      const auto left = static_cast<std::uint32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      split_bins.resize(tree.nodes.size(), 0);
      auto& node = tree.nodes[parent.node];
      node.feature = static_cast<std::int32_t>(f);
      node.threshold = bins_[f].upper[b];
      node.left = left;
      node.right = left + 1;
      split_bins[parent.node] = b;

      leaves[pick] = make_leaf(left, std::move(left_rows));
      leaves.push_back(make_leaf(left + 1, std::move(right_rows)));
    }

    for (const auto& leaf : leaves)
      tree.nodes[leaf.node].value = -p_.learning_rate * soft_threshold(leaf.g, p_.l1) / (leaf.h + p_.l2);
    return tree;
  }

 private:
  double score(double g, double h) const {
    const double t = soft_threshold(g, p_.l1);
    return t * t / (h + p_.l2);
  }

  Leaf make_leaf(std::uint32_t node, std::vector<std::uint32_t> rows) {
    Leaf leaf;
    leaf.node = node;
    leaf.rows = std::move(rows);
    for (auto r : leaf.rows) {
      leaf.g += grad_[r];
      leaf.h += hess_[r];
    }
    if (leaf.rows.size() >= 2 * p_.min_leaf) find_split(leaf);
    return leaf;
  }

  void find_split(Leaf& leaf) {
    const double parent = score(leaf.g, leaf.h);
    const std::uint32_t total = static_cast<std::uint32_t>(leaf.rows.size());
    for (auto f : *features_) {
      const std::size_t nb = bins_[f].upper.size();
      if (nb < 2) continue;
      hist_.assign(nb, BinStats{});
      const std::uint8_t* col = binned_.data() + f * n_;
      for (auto r : leaf.rows) {
        auto& s = hist_[col[r]];
        s.g += grad_[r];
        s.h += hess_[r];
        s.n += 1;
      }
      double gl = 0.0, hl = 0.0;
      std::uint32_t nl = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        gl += hist_[b].g;
        hl += hist_[b].h;
        nl += hist_[b].n;
        const std::uint32_t nr = total - nl;
        if (nl < p_.min_leaf) continue;
        if (nr < p_.min_leaf) break;
        const double gr = leaf.g - gl, hr = leaf.h - hl;
        if (hl < p_.min_child_hessian || hr < p_.min_child_hessian) continue;
        const double gain = score(gl, hl) + score(gr, hr) - parent;
        if (gain > 0.0 && (!leaf.best.valid || gain > leaf.best.gain)) {
          leaf.best = {true, gain, f, static_cast<std::uint8_t>(b)};
        }
      }
    }
  }

  const GbmParams& p_;
  const std::vector<FeatureBins>& bins_;
  const std::vector<std::uint8_t>& binned_;
  std::size_t n_;
  const std::vector<double>& grad_;
  const std::vector<double>& hess_;
  const std::vector<std::size_t>* features_ = nullptr;
  std::vector<BinStats> hist_;
};

void validate(const GbmParams& p) {
  if (p.max_leaves < 2) throw ParameterError("gbm max_leaves must be at least 2");
  if (!(p.learning_rate > 0.0)) throw ParameterError("gbm learning_rate must be positive");
  if (p.min_leaf == 0) throw ParameterError("gbm min_leaf must be positive");
  if (p.min_per_bin == 0) throw ParameterError("gbm min_per_bin must be positive");
  if (p.max_bins < 2 || p.max_bins > 255) throw ParameterError("gbm max_bins must lie in [2, 255]");
  if (p.l1 < 0.0 || p.l2 < 0.0) throw ParameterError("gbm regularization constants must be nonnegative");
  if (!(p.bagging_fraction > 0.0 && p.bagging_fraction <= 1.0))
    throw ParameterError("gbm bagging_fraction must lie in (0, 1]");
  if (!(p.feature_fraction > 0.0 && p.feature_fraction <= 1.0))
    throw ParameterError("gbm feature_fraction must lie in (0, 1]");
}

}  // namespace

std::uint8_t FeatureBins::bin_of(double v) const {
  const auto it = std::lower_bound(upper.begin(), upper.end(), v);
  const auto b = it == upper.end() ? upper.size() - 1 : static_cast<std::size_t>(it - upper.begin());
  return static_cast<std::uint8_t>(b);
}

FeatureBins make_bins(std::vector<double> values, std::size_t min_per_bin, std::size_t max_bins) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  FeatureBins fb;
  if (values.empty()) {
    fb.upper.push_back(kInf);
    return fb;
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const std::size_t target = std::max(min_per_bin, (n + max_bins - 1) / max_bins);
  std::size_t count = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && values[j] == values[i]) ++j;
    count += j - i;
    if (count >= target && j < n && fb.upper.size() + 1 < max_bins) {
      double mid = values[i] + (values[j] - values[i]) / 2.0;
      if (!(mid < values[j])) mid = values[i];
      fb.upper.push_back(mid);
      count = 0;
    }
    i = j;
  }
  if (count > 0 && count < min_per_bin && !fb.upper.empty()) fb.upper.pop_back();  // fold short tail
  fb.upper.push_back(kInf);
  return fb;
}

double log_loss(std::span<const std::uint8_t> labels, std::span<const double> raw) {
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double z = raw[i];
    const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    sum += softplus - (labels[i] ? z : 0.0);
  }
  return sum / static_cast<double>(labels.size());
}

GbmModel::GbmModel(std::vector<std::string> names, GbmParams params, double base_score,
                   std::vector<DecisionTree> trees)
    : names_(std::move(names)), params_(params), base_score_(base_score), trees_(std::move(trees)) {}

double GbmModel::raw_score(std::span<const double> x) const {
  require_dimension(x.size(), names_.size(), "gbm prediction");
  double z = base_score_;
  for (const auto& t : trees_) z += t.predict(x);
  return z;
}

double GbmModel::predict_proba(std::span<const double> x) const { return sigmoid(raw_score(x)); }

ParamBlock GbmModel::parameters() const {
  return {{"n_trees", static_cast<double>(params_.n_trees)},
          {"max_leaves", static_cast<double>(params_.max_leaves)},
          {"learning_rate", params_.learning_rate},
          {"min_leaf", static_cast<double>(params_.min_leaf)},
          {"min_per_bin", static_cast<double>(params_.min_per_bin)},
          {"max_bins", static_cast<double>(params_.max_bins)},
          {"l1", params_.l1},
          {"l2", params_.l2},
          {"min_child_hessian", params_.min_child_hessian},
          {"bagging_fraction", params_.bagging_fraction},
          {"feature_fraction", params_.feature_fraction},
          {"base_score", base_score_}};
}

void GbmModel::save_payload(bin::Writer& w) const {
  w.u32(static_cast<std::uint32_t>(trees_.size()));
  for (const auto& t : trees_) t.save(w);
}

GbmModel GbmModel::load(const std::map<std::string, double>& params, std::vector<std::string> names,
                        bin::Reader& r) {
  GbmParams p;
  p.n_trees = static_cast<std::size_t>(param_value(params, "n_trees"));
  p.max_leaves = static_cast<std::size_t>(param_value(params, "max_leaves"));
  p.learning_rate = param_value(params, "learning_rate");
  p.min_leaf = static_cast<std::size_t>(param_value(params, "min_leaf"));
  p.min_per_bin = static_cast<std::size_t>(param_value(params, "min_per_bin"));
  p.max_bins = static_cast<std::size_t>(param_value(params, "max_bins"));
  p.l1 = param_value(params, "l1");
  p.l2 = param_value(params, "l2");
  p.min_child_hessian = param_value(params, "min_child_hessian");
  p.bagging_fraction = param_value(params, "bagging_fraction");
  p.feature_fraction = param_value(params, "feature_fraction");
  const double base = param_value(params, "base_score");
  const auto n = r.u32();
  std::vector<DecisionTree> trees;
  trees.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) trees.push_back(DecisionTree::load(r, names.size()));
  return GbmModel(std::move(names), p, base, std::move(trees));
}

GbmModel train_gbm(const LabeledData& train, const GbmParams& params, std::uint64_t seed,
                   std::vector<double>* loss_trace) {
  validate(params);
  const std::size_t n = train.x.rows, d = train.x.cols;
  if (n == 0) throw ParameterError("cannot train a gbm on an empty training set");
  if (n < params.min_leaf)
    throw ParameterError("gbm needs at least min_leaf=" + std::to_string(params.min_leaf) + " records");
  if (d == 0) throw ParameterError("gbm needs at least one feature");

  const std::size_t pos = static_cast<std::size_t>(std::count(train.y.begin(), train.y.end(), 1));
  constexpr double kClamp = 1e-12;
  const double prevalence = std::clamp(static_cast<double>(pos) / static_cast<double>(n), kClamp, 1.0 - kClamp);
  const double base = std::log(prevalence / (1.0 - prevalence));

  std::vector<double> raw(n, base);
  if (loss_trace) loss_trace->assign(1, log_loss(train.y, raw));
  if (pos == 0 || pos == n) {
    log_notice("warning: gbm training labels are all one class; model is the constant base score");
    return GbmModel(train.feature_names, params, base, {});
  }

  std::vector<FeatureBins> bins(d);
  std::vector<std::uint8_t> binned(d * n);
  for (std::size_t f = 0; f < d; ++f) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = train.x(i, f);
    bins[f] = make_bins(col, params.min_per_bin, params.max_bins);
    for (std::size_t i = 0; i < n; ++i) binned[f * n + i] = bins[f].bin_of(col[i]);
  }

  const auto bag = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(params.bagging_fraction * static_cast<double>(n))));
  const auto n_feat = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(params.feature_fraction * static_cast<double>(d))));

  std::vector<double> grad(n), hess(n);
  std::vector<DecisionTree> trees;
  trees.reserve(params.n_trees);
  std::vector<std::uint8_t> split_bins;
  for (std::size_t k = 0; k < params.n_trees; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(raw[i]);
      grad[i] = p - train.y[i];
      hess[i] = p * (1.0 - p);
    }
    Rng rng(derive_seed(seed, k));
    std::vector<std::uint32_t> rows;
    if (bag >= n) {
      rows.resize(n);
      std::iota(rows.begin(), rows.end(), 0u);
    } else {
      for (auto r : rng.sample_without_replacement(n, bag)) rows.push_back(static_cast<std::uint32_t>(r));
      std::sort(rows.begin(), rows.end());
    }
    std::vector<std::size_t> features;
    if (n_feat >= d) {
      features.resize(d);
      std::iota(features.begin(), features.end(), std::size_t{0});
    } else {
      features = rng.sample_without_replacement(d, n_feat);
      std::sort(features.begin(), features.end());
    }

    TreeBuilder builder(params, bins, binned, n, grad, hess);
    auto tree = builder.build(std::move(rows), features, split_bins);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t node = 0;
      while (!tree.nodes[node].is_leaf()) {
        const auto f = static_cast<std::size_t>(tree.nodes[node].feature);
        node = binned[f * n + i] <= split_bins[node] ? tree.nodes[node].left : tree.nodes[node].right;
      }
      raw[i] += tree.nodes[node].value;
    }
    trees.push_back(std::move(tree));
    if (loss_trace) loss_trace->push_back(log_loss(train.y, raw));
  }
  return GbmModel(train.feature_names, params, base, std::move(trees));
}

}  // namespace shrubmap
