#include "cli.hpp"

#include "besov/dataset.hpp"
#include "besov/forest.hpp"
#include "besov/model_io.hpp"
#include "besov/smoothness.hpp"
#include "besov/wavelet.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace besov::cli {
namespace {

// Shortest text that parses back to the same double.
std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> levels;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      levels.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("invalid mislabel level '" + item + "'");
    }
  }
  if (levels.empty()) throw ConfigError("no mislabel levels given");
  return levels;
}

NormalizationMode parse_normalization(const std::string& text) {
  if (text == "per_feature") return NormalizationMode::per_feature;
  if (text == "global") return NormalizationMode::global;
  throw ConfigError("unknown normalization '" + text + "' (per_feature|global)");
}

// Flags shared by every command that trains a forest.
struct TrainFlags {
  std::size_t trees = 10;
  double bagging = 0.8;
  bool bootstrap = false;
  std::size_t feature_subsample = 0;
  std::size_t min_leaf = 1;
  std::size_t max_depth = 0;
  std::uint64_t seed = 0;
  CLI::Option* feature_subsample_opt = nullptr;
  CLI::Option* max_depth_opt = nullptr;

  void attach(CLI::App& app) {
    app.add_option("--trees", trees, "number of trees J")->capture_default_str();
    app.add_option("--bagging", bagging, "fraction of samples per tree")->capture_default_str();
    app.add_flag("--bootstrap", bootstrap, "draw bags with replacement");
    feature_subsample_opt = app.add_option("--feature-subsample", feature_subsample,
                                           "candidate features per split (default ceil(sqrt(n)))");
    app.add_option("--min-leaf", min_leaf, "minimum samples per leaf")->capture_default_str();
    max_depth_opt = app.add_option("--max-depth", max_depth, "maximum depth (default unlimited)");
    app.add_option("--seed", seed, "random seed")->capture_default_str();
  }

  [[nodiscard]] TrainParams params() const {
    TrainParams p;
    p.trees = trees;
    p.bagging_fraction = bagging;
    p.bootstrap = bootstrap;
    if (feature_subsample_opt->count() > 0) p.feature_subsample = feature_subsample;
    p.min_leaf_size = min_leaf;
    if (max_depth_opt->count() > 0) p.max_depth = max_depth;
    p.seed = seed;
    return p;
  }
};

struct FitFlags {
  std::string measure = "lebesgue";
  std::size_t m_tilde = kDefaultMTilde;
  std::string checkpoints = "10:10:1000";

  void attach(CLI::App& app) {
    app.add_option("--measure", measure, "cell measure: lebesgue|empirical")->capture_default_str();
    app.add_option("--m-tilde", m_tilde, "largest M used in the fit")->capture_default_str();
    app.add_option("--checkpoints", checkpoints, "start:step:end")->capture_default_str();
  }

  [[nodiscard]] SmoothnessOptions options() const {
    SmoothnessOptions o;
    o.measure = parse_measure(measure);
    o.m_tilde = m_tilde;
    o.checkpoints = parse_checkpoints(checkpoints);
    return o;
  }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  f << content;
  if (!f) throw InputError("failed writing " + path);
}

// Writes to `path`, or to `out` when path is empty or "-".
void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
  } else {
    write_file(path, content);
  }
}

std::string curve_csv(const SigmaCurve& curve) {
  std::ostringstream s;
  write_sigma_csv(s, curve);
  return s.str();
}

// ---------------------------------------------------------------------------

struct TrainCommand {
  std::string data;
  std::string label = "-1";
  std::string output = "model.json";
  std::string normalization = "per_feature";
  bool regression = false;
  TrainFlags train;

  void attach(CLI::App& app) {
    app.add_option("data", data, "training CSV")->required();
    app.add_option("--label", label, "label column name or 0-based index (default: last)");
    app.add_option("-o,--output", output, "model file")->capture_default_str();
    app.add_option("--normalization", normalization, "per_feature|global")->capture_default_str();
    app.add_flag("--regression", regression, "treat the label column as a real response");
    train.attach(app);
  }

  int run(std::ostream& out, std::ostream& err) const {
    const LabelMode mode = regression ? LabelMode::regression : LabelMode::classification;
    const RawTable table = load_table(data, parse_label_column(label), mode);
    const LabeledDataset dataset = make_dataset(table, parse_normalization(normalization));
    const Forest forest = train_forest(dataset, train.params(), threads_from_env());

    Model model;
    model.forest = forest;
    model.normalization = dataset.normalization;
    model.label_mode = mode;
    model.class_names = table.class_names;
    save_model(output, model);

    const auto rho = empirical_rho(forest);
    out << "atoms " << forest.node_count() - forest.trees.size() << "\n";
    out << "rho " << (rho ? format_real(*rho) : std::string("none")) << "\n";
    err << "wrote " << output << "\n";
    return kOk;
  }
};

struct SmoothnessCommand {
  std::string model_path;
  std::string data;
  std::string label = "-1";
  std::string report = "-";
  std::string curve;
  FitFlags fit;

  void attach(CLI::App& app) {
    app.add_option("model", model_path, "model JSON from `train`")->required();
    app.add_option("data", data, "CSV evaluated against the model")->required();
    app.add_option("--label", label, "label column name or 0-based index (default: last)");
    app.add_option("--report", report, "report JSON path ('-' for stdout)")->capture_default_str();
    app.add_option("--curve", curve, "sigma curve CSV path");
    fit.attach(app);
  }

  int run(std::ostream& out, std::ostream& err) const {
    const SmoothnessOptions options = fit.options();
    const Model model = load_model(model_path);
    RawTable table = load_table(data, parse_label_column(label), model.label_mode);
    if (table.columns() != model.forest.n) {
      throw InputError(data + " has " + std::to_string(table.columns()) +
                       " features, model expects " + std::to_string(model.forest.n));
    }
    table = align_classes(table, model.class_names);
    const LabeledDataset dataset = make_dataset(table, model.normalization);
    const SmoothnessResult result = estimate_smoothness(model.forest, dataset, options);

    emit(report, report_to_json(result.report), out);
    if (!curve.empty()) emit(curve, curve_csv(result.curve), out);
    err << "alpha " << format_real(result.report.alpha) << " from "
        << result.report.fit_points_used << " checkpoints\n";
    return kOk;
  }
};

struct LayersCommand {
  std::string manifest;
  std::string output = "-";

  void attach(CLI::App& app) {
    app.add_option("manifest", manifest, "layer manifest JSON")->required();
    app.add_option("-o,--output", output, "report CSV path ('-' for stdout)")->capture_default_str();
  }

  int run(std::ostream& out, std::ostream& err) const {
    using Json = nlohmann::json;
    std::ifstream in(manifest);
    if (!in) throw InputError("cannot open " + manifest);
    Json doc;
    try {
      doc = Json::parse(in);
    } catch (const Json::exception& e) {
      throw InputError(manifest + ": " + e.what());
    }
    const std::filesystem::path base = std::filesystem::path(manifest).parent_path();
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path path(p);
      return path.is_absolute() ? path : base / path;
    };

    TrainParams params;
    SmoothnessOptions options;
    NormalizationMode normalization = NormalizationMode::per_feature;
    std::string label_column = "-1";
    std::vector<std::pair<std::string, std::filesystem::path>> layers;
    std::filesystem::path labels_path;
    try {
      const Json config = doc.value("config", Json::object());
      params.trees = config.value("trees", params.trees);
      params.bagging_fraction = config.value("bagging", params.bagging_fraction);
      params.bootstrap = config.value("bootstrap", params.bootstrap);
      if (config.contains("feature_subsample") && !config["feature_subsample"].is_null()) {
        params.feature_subsample = config["feature_subsample"].get<std::size_t>();
      }
      params.min_leaf_size = config.value("min_leaf", params.min_leaf_size);
      if (config.contains("max_depth") && !config["max_depth"].is_null()) {
        params.max_depth = config["max_depth"].get<std::size_t>();
      }
      params.seed = config.value("seed", params.seed);
      options.measure = parse_measure(config.value("measure", std::string("lebesgue")));
      options.m_tilde = config.value("m_tilde", options.m_tilde);
      options.checkpoints = parse_checkpoints(config.value("checkpoints", std::string("10:10:1000")));
      normalization = parse_normalization(config.value("normalization", std::string("per_feature")));

      labels_path = resolve(doc.at("labels").get<std::string>());
      if (doc.contains("label_column")) {
        const Json& lc = doc["label_column"];
        label_column = lc.is_number() ? std::to_string(lc.get<long>()) : lc.get<std::string>();
      }
      std::set<std::string> names;
      for (const Json& layer : doc.at("layers")) {
        const auto name = layer.at("name").get<std::string>();
        if (!names.insert(name).second) throw InputError("duplicate layer name '" + name + "'");
        layers.emplace_back(name, resolve(layer.at("features").get<std::string>()));
      }
    } catch (const Json::exception& e) {
      throw InputError(manifest + ": " + e.what());
    }
    if (layers.empty()) throw InputError(manifest + ": no layers listed");

    const RawTable labels =
        load_table(labels_path, parse_label_column(label_column), LabelMode::classification);

    std::ostringstream csv;
    csv << "layer,alpha,c,r_squared,atoms,rho\n";
    for (const auto& [name, path] : layers) {
      RawTable table = labels;
      table.values = read_feature_matrix(path, &table.feature_names);
      if (table.rows() != labels.class_ids.size()) {
        throw InputError("layer '" + name + "' has " + std::to_string(table.rows()) +
                         " rows, labels have " + std::to_string(labels.class_ids.size()));
      }
      const LabeledDataset dataset = make_dataset(table, normalization);
      const Forest forest = train_forest(dataset, params, threads_from_env());
      const SmoothnessResult result = estimate_smoothness(forest, dataset, options);
      const auto rho = result.report.empirical_rho;
      csv << name << ',' << format_real(result.report.alpha) << ',' << format_real(result.report.c)
          << ',' << format_real(result.report.r_squared) << ',' << result.atoms << ','
          << (rho ? format_real(*rho) : std::string("nan")) << '\n';
      err << "layer " << name << ": n=" << dataset.dim()
          << " alpha=" << format_real(result.report.alpha) << "\n";
    }
    emit(output, csv.str(), out);
    return kOk;
  }
};

struct MislabelCommand {
  std::string data;
  std::string label = "-1";
  std::string levels = "0,0.1,0.2,0.3,0.4";
  std::string output = "-";
  std::string normalization = "per_feature";
  TrainFlags train;
  FitFlags fit;

  void attach(CLI::App& app) {
    app.add_option("data", data, "classification CSV")->required();
    app.add_option("--label", label, "label column name or 0-based index (default: last)");
    app.add_option("--levels", levels, "comma-separated mislabel fractions")->capture_default_str();
    app.add_option("-o,--output", output, "report CSV path ('-' for stdout)")->capture_default_str();
    app.add_option("--normalization", normalization, "per_feature|global")->capture_default_str();
    train.attach(app);
    fit.attach(app);
  }

  int run(std::ostream& out, std::ostream& err) const {
    const std::vector<double> qs = parse_levels(levels);
    const SmoothnessOptions options = fit.options();
    const TrainParams params = train.params();
    const RawTable table = load_table(data, parse_label_column(label), LabelMode::classification);
    const NormalizationMode mode = parse_normalization(normalization);

    std::ostringstream csv;
    csv << "q,alpha\n";
    for (const double q : qs) {
      const RawTable corrupted = mislabel(table, q, params.seed);
      const LabeledDataset dataset = make_dataset(corrupted, mode);
      const Forest forest = train_forest(dataset, params, threads_from_env());
      const SmoothnessResult result = estimate_smoothness(forest, dataset, options);
      csv << format_real(q) << ',' << format_real(result.report.alpha) << '\n';
      err << "q=" << q << " alpha=" << format_real(result.report.alpha) << "\n";
    }
    emit(output, csv.str(), out);
    return kOk;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Besov smoothness of labeled datasets via wavelet decompositions of random forests",
               "besov"};
  app.require_subcommand(1);

  TrainCommand train;
  SmoothnessCommand smoothness;
  LayersCommand layers;
  MislabelCommand mislabel_cmd;
  train.attach(*app.add_subcommand("train", "train a forest and write a model file"));
  smoothness.attach(*app.add_subcommand("smoothness", "estimate alpha for a model on a dataset"));
  layers.attach(*app.add_subcommand("layers", "alpha per representation layer from a manifest"));
  mislabel_cmd.attach(*app.add_subcommand("mislabel", "alpha under increasing label corruption"));

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  if (args.empty()) argv.push_back("besov");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (app.got_subcommand("train")) return train.run(out, err);
    if (app.got_subcommand("smoothness")) return smoothness.run(out, err);
    if (app.got_subcommand("layers")) return layers.run(out, err);
    if (app.got_subcommand("mislabel")) return mislabel_cmd.run(out, err);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DomainError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace besov::cli
