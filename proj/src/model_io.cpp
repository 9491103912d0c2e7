#include "besov/model_io.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>

namespace besov {
namespace {

using Json = nlohmann::ordered_json;

std::string_view to_string(NormalizationMode mode) {
  return mode == NormalizationMode::per_feature ? "per_feature" : "global";
}

NormalizationMode parse_normalization(const std::string& text) {
  if (text == "per_feature") return NormalizationMode::per_feature;
  if (text == "global") return NormalizationMode::global;
  throw InputError("unknown normalization mode '" + text + "'");
}

Json vector_json(const VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

VectorXd vector_from(const Json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Eigen::Index>(k)) = j.at(k).get<double>();
  return v;
}

Json params_json(const TrainParams& p) {
  Json j;
  j["trees"] = p.trees;
  j["bagging_fraction"] = p.bagging_fraction;
  j["bootstrap"] = p.bootstrap;
  j["feature_subsample"] = p.feature_subsample ? Json(*p.feature_subsample) : Json(nullptr);
  j["min_leaf_size"] = p.min_leaf_size;
  j["max_depth"] = p.max_depth ? Json(*p.max_depth) : Json(nullptr);
  j["seed"] = p.seed;
  j["weights"] = p.tree_weights();
  return j;
}

TrainParams params_from(const Json& j) {
  TrainParams p;
  p.trees = j.at("trees").get<std::size_t>();
  p.bagging_fraction = j.at("bagging_fraction").get<double>();
  p.bootstrap = j.at("bootstrap").get<bool>();
  if (!j.at("feature_subsample").is_null()) {
    p.feature_subsample = j.at("feature_subsample").get<std::size_t>();
  }
  p.min_leaf_size = j.at("min_leaf_size").get<std::size_t>();
  if (!j.at("max_depth").is_null()) p.max_depth = j.at("max_depth").get<std::size_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.weights = j.at("weights").get<std::vector<double>>();
  return p;
}

Json node_json(const TreeNode& node) {
  Json j;
  j["id"] = node.id;
  j["parent"] = node.parent;
  j["feature"] = node.feature;
  j["threshold"] = node.threshold;
  j["left"] = node.left;
  j["right"] = node.right;
  j["depth"] = node.depth;
  j["sample_count"] = node.sample_count;
  Json dims = Json::array();
  Json lo = Json::array();
  Json hi = Json::array();
  for (const Box::Side& s : node.box.sides()) {
    dims.push_back(s.dim);
    lo.push_back(s.lo);
    hi.push_back(s.hi);
  }
  j["box"] = Json{{"dims", dims}, {"lo", lo}, {"hi", hi}};
  j["mean"] = vector_json(node.mean);
  return j;
}

TreeNode node_from(const Json& j, std::size_t n) {
  TreeNode node;
  node.id = j.at("id").get<NodeId>();
  node.parent = j.at("parent").get<NodeId>();
  node.feature = j.at("feature").get<int>();
  node.threshold = j.at("threshold").get<double>();
  node.left = j.at("left").get<NodeId>();
  node.right = j.at("right").get<NodeId>();
  node.depth = j.at("depth").get<std::size_t>();
  node.sample_count = j.at("sample_count").get<std::size_t>();
  const Json& box = j.at("box");
  const auto& dims = box.at("dims");
  const auto& lo = box.at("lo");
  const auto& hi = box.at("hi");
  if (dims.size() != lo.size() || dims.size() != hi.size()) {
    throw InputError("box of node " + std::to_string(node.id) + " has ragged sides");
  }
  std::vector<Box::Side> sides;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    sides.push_back({dims.at(k).get<std::size_t>(), lo.at(k).get<double>(), hi.at(k).get<double>()});
  }
  node.box = Box::from_sides(n, std::move(sides));
  node.mean = vector_from(j.at("mean"));
  return node;
}

Json forest_json(const Forest& forest) {
  Json j;
  j["format"] = "besov-forest";
  j["version"] = kModelFormatVersion;
  j["n"] = forest.n;
  j["label_dim"] = forest.label_dim;
  j["num_classes"] = forest.num_classes;
  j["fingerprint"] = forest.fingerprint;
  j["params"] = params_json(forest.params);
  Json trees = Json::array();
  for (const Tree& tree : forest.trees) {
    Json nodes = Json::array();
    for (const TreeNode& node : tree.nodes) nodes.push_back(node_json(node));
    trees.push_back(Json{{"bag", tree.bag}, {"nodes", std::move(nodes)}});
  }
  j["trees"] = std::move(trees);
  return j;
}

void check_tree(const Tree& tree, const Forest& forest, std::size_t index) {
  const std::string where = "tree " + std::to_string(index);
  if (tree.nodes.empty()) throw InputError(where + " has no nodes");
  const auto count = static_cast<NodeId>(tree.nodes.size());
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    const TreeNode& node = tree.nodes[k];
    if (node.id != static_cast<NodeId>(k)) throw InputError(where + ": node ids out of order");
    if (node.mean.size() != static_cast<Eigen::Index>(forest.label_dim)) {
      throw InputError(where + ": node " + std::to_string(k) + " mean has wrong dimension");
    }
    if (!node.is_leaf()) {
      if (node.feature >= static_cast<int>(forest.n) || node.left <= node.id ||
          node.right <= node.id || node.left >= count || node.right >= count) {
        throw InputError(where + ": node " + std::to_string(k) + " has invalid children");
      }
    }
  }
}

Forest forest_from(const Json& j) {
  if (j.at("format").get<std::string>() != "besov-forest") {
    throw InputError("not a forest document");
  }
  const int version = j.at("version").get<int>();
  if (version != kModelFormatVersion) {
    throw InputError("unsupported forest format version " + std::to_string(version));
  }
  Forest forest;
  forest.n = j.at("n").get<std::size_t>();
  forest.label_dim = j.at("label_dim").get<std::size_t>();
  forest.num_classes = j.at("num_classes").get<int>();
  forest.fingerprint = j.at("fingerprint").get<std::string>();
  forest.params = params_from(j.at("params"));
  for (const Json& t : j.at("trees")) {
    Tree tree;
    tree.bag = t.at("bag").get<std::vector<std::size_t>>();
    for (const Json& node : t.at("nodes")) tree.nodes.push_back(node_from(node, forest.n));
    check_tree(tree, forest, forest.trees.size());
    forest.trees.push_back(std::move(tree));
  }
  if (forest.trees.size() != forest.params.trees) {
    throw InputError("forest lists " + std::to_string(forest.trees.size()) + " trees, params say " +
                     std::to_string(forest.params.trees));
  }
  return forest;
}

template <typename F>
auto parse_or_throw(const std::string& text, F&& build) {
  try {
    return build(Json::parse(text));
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace

std::string serialize_forest(const Forest& forest) { return forest_json(forest).dump() + "\n"; }

Forest deserialize_forest(const std::string& text) {
  return parse_or_throw(text, [](const Json& j) { return forest_from(j); });
}

std::string serialize_model(const Model& model) {
  Json j;
  j["format"] = "besov-model";
  j["version"] = kModelFormatVersion;
  j["label_mode"] = model.label_mode == LabelMode::classification ? "classification" : "regression";
  j["classes"] = model.class_names;
  Json mins = Json::array();
  Json maxs = Json::array();
  for (const FeatureRange& r : model.normalization.ranges) {
    mins.push_back(r.min);
    maxs.push_back(r.max);
  }
  j["normalization"] = Json{{"mode", std::string(to_string(model.normalization.mode))},
                            {"min", std::move(mins)},
                            {"max", std::move(maxs)}};
  j["forest"] = forest_json(model.forest);
  return j.dump() + "\n";
}

Model deserialize_model(const std::string& text) {
  return parse_or_throw(text, [](const Json& j) {
    if (j.at("format").get<std::string>() != "besov-model") {
      throw InputError("not a model document");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw InputError("unsupported model format version " + std::to_string(version));
    }
    Model model;
    const auto mode = j.at("label_mode").get<std::string>();
    if (mode == "classification") {
      model.label_mode = LabelMode::classification;
    } else if (mode == "regression") {
      model.label_mode = LabelMode::regression;
    } else {
      throw InputError("unknown label mode '" + mode + "'");
    }
    model.class_names = j.at("classes").get<std::vector<std::string>>();
    const Json& norm = j.at("normalization");
    model.normalization.mode = parse_normalization(norm.at("mode").get<std::string>());
    const auto mins = norm.at("min").get<std::vector<double>>();
    const auto maxs = norm.at("max").get<std::vector<double>>();
    if (mins.size() != maxs.size()) throw InputError("normalization ranges are ragged");
    for (std::size_t k = 0; k < mins.size(); ++k) {
      model.normalization.ranges.push_back({mins[k], maxs[k]});
    }
    model.forest = forest_from(j.at("forest"));
    if (model.normalization.ranges.size() != model.forest.n) {
      throw InputError("normalization record does not match the forest dimension");
    }
    return model;
  });
}

void save_model(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << serialize_model(model);
  if (!out) throw InputError("failed writing " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_model(buffer.str());
}

}  // namespace besov
