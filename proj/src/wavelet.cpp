#include "besov/wavelet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

namespace besov {
namespace {

constexpr double kUnderflowLog = -700.0;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_compatible(const Forest& forest, const LabeledDataset& data) {
  if (data.dim() != forest.n) {
    throw InputError("dataset has " + std::to_string(data.dim()) + " features, forest expects " +
                     std::to_string(forest.n));
  }
  if (data.label_dim() != forest.label_dim) {
    throw InputError("dataset labels have dimension " + std::to_string(data.label_dim()) +
                     ", forest expects " + std::to_string(forest.label_dim));
  }
}

std::size_t parse_size(std::string_view text, std::string_view what) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("invalid " + std::string(what) + " '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

std::string_view to_string(MeasureMode mode) {
  return mode == MeasureMode::lebesgue ? "lebesgue" : "empirical";
}

MeasureMode parse_measure(std::string_view text) {
  if (text == "lebesgue") return MeasureMode::lebesgue;
  if (text == "empirical") return MeasureMode::empirical;
  throw ConfigError("unknown measure '" + std::string(text) + "' (lebesgue|empirical)");
}

double log_measure(const Tree& tree, const TreeNode& node, MeasureMode mode) {
  if (mode == MeasureMode::lebesgue) return node.box.log_volume();
  return std::log(static_cast<double>(node.sample_count)) -
         std::log(static_cast<double>(tree.root().sample_count));
}

double log_wavelet_norm(const VectorXd& delta, double log_measure, double p) {
  const double l2 = delta.norm();
  if (l2 == 0.0) return kNegInf;
  return std::log(l2) + log_measure / p;
}

double wavelet_norm(const VectorXd& delta, double log_measure, double p) {
  const double lg = log_wavelet_norm(delta, log_measure, p);
  return lg < kUnderflowLog ? 0.0 : std::exp(lg);
}

std::vector<WaveletAtom> decompose(const Forest& forest, MeasureMode measure, double p) {
  if (!(p > 0.0)) throw DomainError("norm exponent p must be positive");
  const std::vector<double> w = forest.weights();
  std::vector<WaveletAtom> atoms;
  atoms.reserve(forest.node_count());
  for (std::size_t j = 0; j < forest.trees.size(); ++j) {
    const Tree& tree = forest.trees[j];
    const double log_w = w[j] > 0.0 ? std::log(w[j]) : kNegInf;
    for (const TreeNode& node : tree.nodes) {
      WaveletAtom atom;
      atom.tree_index = j;
      atom.node_id = node.id;
      atom.is_root = node.parent == kNoNode;
      atom.delta = atom.is_root ? node.mean
                                : VectorXd(node.mean - tree.nodes[static_cast<std::size_t>(
                                                           node.parent)].mean);
      atom.log_measure = log_measure(tree, node, measure);
      atom.log_norm = log_wavelet_norm(atom.delta, atom.log_measure, p);
      atom.norm_p = atom.log_norm < kUnderflowLog ? 0.0 : std::exp(atom.log_norm);
      atom.log_weighted_norm = atom.log_norm + log_w;
      atom.weighted_norm =
          atom.log_weighted_norm < kUnderflowLog ? 0.0 : std::exp(atom.log_weighted_norm);
      atoms.push_back(std::move(atom));
    }
  }
  return atoms;
}

std::vector<std::size_t> order_atoms(std::span<const WaveletAtom> atoms) {
  std::vector<std::size_t> order;
  order.reserve(atoms.size());
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    if (!atoms[k].is_root) order.push_back(k);
  }
  std::ranges::sort(order, [&](std::size_t a, std::size_t b) {
    const WaveletAtom& x = atoms[a];
    const WaveletAtom& y = atoms[b];
    if (x.log_weighted_norm != y.log_weighted_norm) {
      return x.log_weighted_norm > y.log_weighted_norm;
    }
    if (x.tree_index != y.tree_index) return x.tree_index < y.tree_index;
    return x.node_id < y.node_id;
  });
  return order;
}

VectorXd m_term_predict(const Forest& forest, std::span<const WaveletAtom> atoms,
                        std::span<const std::size_t> order, std::size_t M, const VectorXd& x) {
  if (M > order.size()) {
    throw DomainError("M = " + std::to_string(M) + " exceeds the " +
                      std::to_string(order.size()) + " available atoms");
  }
  const VectorXd clamped = x.cwiseMax(0.0).cwiseMin(1.0);
  const std::vector<double> w = forest.weights();

  std::vector<std::vector<bool>> on_path(forest.trees.size());
  VectorXd out = VectorXd::Zero(static_cast<Eigen::Index>(forest.label_dim));
  for (std::size_t j = 0; j < forest.trees.size(); ++j) {
    const Tree& tree = forest.trees[j];
    on_path[j].assign(tree.nodes.size(), false);
    for (const NodeId id : tree.path_for(clamped)) on_path[j][static_cast<std::size_t>(id)] = true;
    out += w[j] * tree.root().mean;
  }
  for (std::size_t m = 0; m < M; ++m) {
    const WaveletAtom& atom = atoms[order[m]];
    if (on_path[atom.tree_index][static_cast<std::size_t>(atom.node_id)]) {
      out += w[atom.tree_index] * atom.delta;
    }
  }
  return out;
}

CellIndex::CellIndex(const Tree& tree, const MatrixXd& X) : ranges_(tree.nodes.size(), {0, 0}) {
  const auto rows = static_cast<std::size_t>(X.rows());
  std::vector<NodeId> leaf(rows);
  std::vector<std::size_t> leaf_count(tree.nodes.size(), 0);
  for (std::size_t i = 0; i < rows; ++i) {
    leaf[i] = tree.leaf_for(X.row(static_cast<Eigen::Index>(i)).transpose());
    ++leaf_count[static_cast<std::size_t>(leaf[i])];
  }

  // preorder; leaves get consecutive ranges, internal nodes span their subtree
  std::vector<NodeId> preorder;
  preorder.reserve(tree.nodes.size());
  std::vector<NodeId> stack{0};
  std::size_t cursor = 0;
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    preorder.push_back(id);
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) {
      const std::size_t c = leaf_count[static_cast<std::size_t>(id)];
      ranges_[static_cast<std::size_t>(id)] = {cursor, cursor + c};
      cursor += c;
    } else {
      stack.push_back(node.right);
      stack.push_back(node.left);
    }
  }
  for (auto it = preorder.rbegin(); it != preorder.rend(); ++it) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(*it)];
    if (node.is_leaf()) continue;
    ranges_[static_cast<std::size_t>(*it)] = {ranges_[static_cast<std::size_t>(node.left)].first,
                                              ranges_[static_cast<std::size_t>(node.right)].second};
  }

  order_.resize(rows);
  std::vector<std::size_t> fill(tree.nodes.size(), 0);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto l = static_cast<std::size_t>(leaf[i]);
    order_[ranges_[l].first + fill[l]++] = i;
  }
}

std::vector<std::size_t> make_checkpoints(std::size_t start, std::size_t step, std::size_t end) {
  if (step == 0) throw ConfigError("checkpoint step must be positive");
  std::vector<std::size_t> out;
  for (std::size_t m = start; m <= end; m += step) out.push_back(m);
  return out;
}

std::vector<std::size_t> parse_checkpoints(std::string_view spec) {
  const auto first = spec.find(':');
  const auto second = first == std::string_view::npos ? first : spec.find(':', first + 1);
  if (second == std::string_view::npos) {
    throw ConfigError("checkpoints must look like start:step:end, got '" + std::string(spec) +
                      "'");
  }
  return make_checkpoints(parse_size(spec.substr(0, first), "checkpoint start"),
                          parse_size(spec.substr(first + 1, second - first - 1), "checkpoint step"),
                          parse_size(spec.substr(second + 1), "checkpoint end"));
}

std::vector<std::size_t> default_checkpoints() { return make_checkpoints(10, 10, 1000); }

SigmaCurve sigma_curve(const Forest& forest, std::span<const WaveletAtom> atoms,
                       std::span<const std::size_t> order, const LabeledDataset& data,
                       std::span<const std::size_t> checkpoints) {
  if (data.size() == 0) throw DomainError("sigma curve needs a nonempty dataset");
  check_compatible(forest, data);
  for (std::size_t k = 1; k < checkpoints.size(); ++k) {
    if (checkpoints[k] <= checkpoints[k - 1]) {
      throw DomainError("checkpoints must be strictly increasing");
    }
  }

  SigmaCurve curve;
  curve.total_atoms = order.size();
  for (const std::size_t m : checkpoints) {
    if (m <= order.size()) curve.checkpoints.push_back(m);
  }

  const std::vector<double> w = forest.weights();
  const auto rows = static_cast<Eigen::Index>(data.size());
  MatrixXd approx(rows, data.Y.cols());
  VectorXd root_terms = VectorXd::Zero(data.Y.cols());
  std::vector<CellIndex> cells;
  cells.reserve(forest.trees.size());
  for (std::size_t j = 0; j < forest.trees.size(); ++j) {
    root_terms += w[j] * forest.trees[j].root().mean;
    cells.emplace_back(forest.trees[j], data.X);
  }
  approx.rowwise() = root_terms.transpose();

  const double inv_rows = 1.0 / static_cast<double>(rows);
  auto rms = [&] { return std::sqrt((approx - data.Y).squaredNorm() * inv_rows); };
  curve.sigma0 = rms();

  std::size_t applied = 0;
  for (const std::size_t target : curve.checkpoints) {
    for (; applied < target; ++applied) {
      const WaveletAtom& atom = atoms[order[applied]];
      const VectorXd step = w[atom.tree_index] * atom.delta;
      for (const std::size_t i : cells[atom.tree_index].samples(atom.node_id)) {
        approx.row(static_cast<Eigen::Index>(i)) += step.transpose();
      }
    }
    curve.sigma.push_back(rms());
  }
  return curve;
}

void write_sigma_csv(std::ostream& out, const SigmaCurve& curve) {
  const auto old_precision = out.precision(17);
  out << "M,sigma\n";
  for (std::size_t k = 0; k < curve.checkpoints.size(); ++k) {
    out << curve.checkpoints[k] << ',' << curve.sigma[k] << '\n';
  }
  out.precision(old_precision);
}

}  // namespace besov
