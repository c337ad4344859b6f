#include <map>

#include "shrubmap/error.hpp"
#include "shrubmap/forest.hpp"
#include "shrubmap/gbm.hpp"
#include "shrubmap/mlp.hpp"
#include "shrubmap/model.hpp"
#include "shrubmap/parallel.hpp"
#include "shrubmap/stacker.hpp"

namespace shrubmap {

namespace {
constexpr std::uint8_t kModelVersion = 1;
}

const char* model_type_name(ModelType t) {
  switch (t) {
    case ModelType::Forest: return "rf";
    case ModelType::Gbm: return "gbm";
    case ModelType::Mlp: return "mlp";
    case ModelType::Stacker: return "stacker";
    case ModelType::Ensemble: return "ensemble";
  }
  return "unknown";
}

std::vector<double> ProbabilityModel::predict_batch(const FeatureMatrix& x) const {
  require_dimension(x.cols, feature_names().size(), "batch prediction");
  std::vector<double> out(x.rows);
  parallel_for(x.rows, [&](std::size_t i) { out[i] = predict_proba(x.row(i)); });
  return out;
}

double DecisionTree::predict(std::span<const double> x) const {
  std::uint32_t node = 0;
  while (!nodes[node].is_leaf())
    node = x[static_cast<std::size_t>(nodes[node].feature)] <= nodes[node].threshold ? nodes[node].left
                                                                                      : nodes[node].right;
  return nodes[node].value;
}

std::size_t DecisionTree::leaf_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes) n += node.is_leaf() ? 1 : 0;
  return n;
}

void DecisionTree::save(bin::Writer& w) const {
  w.u32(static_cast<std::uint32_t>(nodes.size()));
  for (const auto& node : nodes) {
    w.put<std::int32_t>(node.feature);
    w.f64(node.threshold);
    w.u32(node.left);
    w.u32(node.right);
    w.f64(node.value);
  }
}

DecisionTree DecisionTree::load(bin::Reader& r, std::size_t n_features) {
  DecisionTree t;
  const auto n = r.u32();
  if (n == 0) throw FormatError("decision tree has no nodes");
  r.need(static_cast<std::size_t>(n) * 28);
  t.nodes.resize(n);
  for (auto& node : t.nodes) {
    node.feature = r.get<std::int32_t>();
    node.threshold = r.f64();
    node.left = r.u32();
    node.right = r.u32();
    node.value = r.f64();
  }
  // children must point forward so traversal always terminates
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto& node = t.nodes[i];
    if (node.is_leaf()) continue;
    if (static_cast<std::size_t>(node.feature) >= n_features || node.left <= i || node.right <= i || node.left >= n ||
        node.right >= n)
      throw FormatError("decision tree node " + std::to_string(i) + " is malformed");
  }
  return t;
}

double param_value(const std::map<std::string, double>& params, const std::string& key) {
  const auto it = params.find(key);
  if (it == params.end()) throw FormatError("model file lacks parameter " + key);
  return it->second;
}

void EnsembleModel::save_payload(bin::Writer& w) const {
  for (const ProbabilityModel* m : {static_cast<const ProbabilityModel*>(&rf_), static_cast<const ProbabilityModel*>(&gbm_),
                                    static_cast<const ProbabilityModel*>(&mlp_),
                                    static_cast<const ProbabilityModel*>(&stacker_)}) {
    const auto blob = encode_model(*m);
    w.u64(blob.size());
    w.bytes(blob);
  }
}

namespace {
template <typename T>
T nested(bin::Reader& r) {
  const auto size = r.u64();
  auto model = decode_model(r.bytes(static_cast<std::size_t>(size)));
  auto* typed = dynamic_cast<T*>(model.get());
  if (!typed) throw FormatError("ensemble component has the wrong model type");
  return std::move(*typed);
}
}  // namespace

EnsembleModel EnsembleModel::load(const std::map<std::string, double>& params, const std::vector<std::string>& names,
                                  bin::Reader& r) {
  const double link = param_value(params, "probability_link");
  if (link != static_cast<double>(ProbabilityLink::Identity) && link != static_cast<double>(ProbabilityLink::Logit))
    throw FormatError("ensemble has an unknown probability link");
  auto rf = nested<ForestModel>(r);
  auto gbm = nested<GbmModel>(r);
  auto mlp = nested<MlpModel>(r);
  auto stacker = nested<StackerModel>(r);
  if (rf.feature_names() != names) throw FormatError("ensemble feature names disagree with its components");
  return EnsembleModel(std::move(rf), std::move(gbm), std::move(mlp), std::move(stacker),
                       static_cast<ProbabilityLink>(static_cast<std::uint8_t>(link)));
}

std::vector<std::uint8_t> encode_model(const ProbabilityModel& m) {
  bin::Writer w;
  w.tag("SMDL");
  w.u8(kModelVersion);
  w.u8(static_cast<std::uint8_t>(m.type()));
  const auto params = m.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [key, value] : params) {
    w.str(key);
    w.f64(value);
  }
  w.u32(static_cast<std::uint32_t>(m.feature_names().size()));
  for (const auto& name : m.feature_names()) w.str(name);
  m.save_payload(w);
  return w.take();
}

std::unique_ptr<ProbabilityModel> decode_model(std::span<const std::uint8_t> bytes) {
  bin::Reader r(bytes);
  if (!r.tag("SMDL")) throw FormatError("not an SMDL model file (bad magic)");
  const auto version = r.u8();
  if (version != kModelVersion) throw FormatError("unsupported SMDL version " + std::to_string(version));
  const auto type = r.u8();
  std::map<std::string, double> params;
  const auto np = r.u32();
  for (std::uint32_t i = 0; i < np; ++i) {
    auto key = r.str();
    params[key] = r.f64();
  }
  std::vector<std::string> names(r.u32());
  for (auto& name : names) name = r.str();

  std::unique_ptr<ProbabilityModel> model;
  switch (static_cast<ModelType>(type)) {
    case ModelType::Forest: model = std::make_unique<ForestModel>(ForestModel::load(params, names, r)); break;
    case ModelType::Gbm: model = std::make_unique<GbmModel>(GbmModel::load(params, names, r)); break;
    case ModelType::Mlp: model = std::make_unique<MlpModel>(MlpModel::load(params, names, r)); break;
    case ModelType::Stacker: model = std::make_unique<StackerModel>(StackerModel::load(params, names, r)); break;
    case ModelType::Ensemble: model = std::make_unique<EnsembleModel>(EnsembleModel::load(params, names, r)); break;
    default: throw FormatError("unknown SMDL model type " + std::to_string(type));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after SMDL payload");
  return model;
}

void write_model(const ProbabilityModel& m, const std::string& path) { bin::write_file(path, encode_model(m)); }

std::unique_ptr<ProbabilityModel> read_model(const std::string& path) {
  const auto bytes = bin::read_file(path);
  try {
    return decode_model(bytes);
  } catch (const TruncationError& e) {
    throw TruncationError(path + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace shrubmap
