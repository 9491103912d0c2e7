#include "besov/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace besov {
namespace {

constexpr double kPureSse = 1e-15;
constexpr double kMinRelativeGain = 1e-12;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    tag};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint32_t tag) {
  return std::mt19937_64(derive_seed(seed, stream, tag));
}

constexpr std::uint32_t kBagTag = 0x62616700U;
constexpr std::uint32_t kTreeTag = 0x74726565U;
constexpr std::uint32_t kNodeTag = 0x6e6f6465U;

// Accumulated relative to the first sample so a pure cell reproduces its value exactly.
VectorXd mean_of(std::span<const std::size_t> ids, const MatrixXd& Y) {
  if (ids.empty()) return VectorXd::Zero(Y.cols());
  const VectorXd base = Y.row(static_cast<Eigen::Index>(ids.front())).transpose();
  VectorXd sum = VectorXd::Zero(Y.cols());
  for (const std::size_t i : ids) sum += Y.row(static_cast<Eigen::Index>(i)).transpose() - base;
  return base + sum / static_cast<double>(ids.size());
}

std::size_t count_from_fraction(double fraction, std::size_t rows) {
  return std::min(rows, static_cast<std::size_t>(
                            std::floor(fraction * static_cast<double>(rows) * (1.0 + 1e-12))));
}

// Scans every admissible cut in (feature, threshold) order. `visit` receives the
// feature, threshold, left count, centred left sum and cost.
template <typename Visit>
void scan_splits(std::span<const std::size_t> ids, const MatrixXd& X, const MatrixXd& Y,
                 std::span<const std::size_t> features, std::size_t min_leaf,
                 const VectorXd& parent_mean, Visit&& visit) {
  const std::size_t count = ids.size();
  const Eigen::Index d = Y.cols();
  MatrixXd centred(static_cast<Eigen::Index>(count), d);
  for (std::size_t k = 0; k < count; ++k) {
    centred.row(static_cast<Eigen::Index>(k)) =
        Y.row(static_cast<Eigen::Index>(ids[k])) - parent_mean.transpose();
  }
  const double total_sq = centred.squaredNorm();
  const VectorXd total_sum = centred.colwise().sum().transpose();

  std::vector<std::size_t> order(count);
  VectorXd left_sum(d);
  for (const std::size_t f : features) {
    const auto feat = static_cast<Eigen::Index>(f);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) {
      return X(static_cast<Eigen::Index>(ids[a]), feat) < X(static_cast<Eigen::Index>(ids[b]), feat);
    });
    left_sum.setZero();
    double left_sq = 0.0;
    for (std::size_t k = 1; k < count; ++k) {
      const auto prev = static_cast<Eigen::Index>(order[k - 1]);
      left_sum += centred.row(prev).transpose();
      left_sq += centred.row(prev).squaredNorm();
      const double a = X(static_cast<Eigen::Index>(ids[order[k - 1]]), feat);
      const double b = X(static_cast<Eigen::Index>(ids[order[k]]), feat);
      if (!(a < b)) continue;
      if (k < min_leaf || count - k < min_leaf) continue;
      double threshold = 0.5 * (a + b);
      if (threshold >= b) threshold = a;
      const auto nl = static_cast<double>(k);
      const auto nr = static_cast<double>(count - k);
      const VectorXd right_sum = total_sum - left_sum;
      const double sse_left = std::max(0.0, left_sq - left_sum.squaredNorm() / nl);
      const double sse_right =
          std::max(0.0, (total_sq - left_sq) - right_sum.squaredNorm() / nr);
      visit(f, threshold, k, left_sum, sse_left + sse_right);
    }
  }
}

Split make_split(std::size_t feature, double threshold, std::size_t left_count,
                 const VectorXd& left_sum, double cost, double parent_sse,
                 const VectorXd& parent_mean, std::size_t count, const VectorXd& total_sum) {
  Split s;
  s.feature = feature;
  s.threshold = threshold;
  s.cost = cost;
  s.parent_sse = parent_sse;
  s.left_count = left_count;
  s.right_count = count - left_count;
  s.left_mean = parent_mean + left_sum / static_cast<double>(s.left_count);
  s.right_mean = parent_mean + (total_sum - left_sum) / static_cast<double>(s.right_count);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// TrainParams

std::size_t TrainParams::features_per_split(std::size_t n) const {
  if (feature_subsample) return *feature_subsample;
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
}

std::vector<double> TrainParams::tree_weights() const {
  if (!weights.empty()) return weights;
  return std::vector<double>(trees, 1.0 / static_cast<double>(trees));
}

void TrainParams::validate(std::size_t n) const {
  if (trees == 0) throw ConfigError("tree count must be positive");
  if (!(bagging_fraction > 0.0 && bagging_fraction <= 1.0)) {
    throw ConfigError("bagging fraction must lie in (0,1]");
  }
  if (min_leaf_size == 0) throw ConfigError("min leaf size must be at least 1");
  const std::size_t k = features_per_split(n);
  if (k == 0 || k > n) {
    throw ConfigError("feature subsample " + std::to_string(k) + " must lie in [1, " +
                      std::to_string(n) + "]");
  }
  if (!weights.empty()) {
    if (weights.size() != trees) throw ConfigError("need one weight per tree");
    double sum = 0.0;
    for (const double w : weights) {
      if (!(w >= 0.0)) throw ConfigError("tree weights must be non-negative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("tree weights must sum to 1");
  }
}

// ---------------------------------------------------------------------------
// Box

double Box::lo(std::size_t d) const {
  for (const Side& s : sides_) {
    if (s.dim == d) return s.lo;
  }
  return 0.0;
}

double Box::hi(std::size_t d) const {
  for (const Side& s : sides_) {
    if (s.dim == d) return s.hi;
  }
  return 1.0;
}

bool Box::contains(const VectorXd& x) const {
  for (const Side& s : sides_) {
    const double v = std::clamp(x(static_cast<Eigen::Index>(s.dim)), 0.0, 1.0);
    // cells are (lo, hi], closed at the cube's lower face
    if (v > s.hi || (v <= s.lo && s.lo > 0.0)) return false;
  }
  return true;
}

void Box::set_side(std::size_t d, double lo, double hi) {
  auto it = std::ranges::lower_bound(sides_, d, {}, &Side::dim);
  if (it != sides_.end() && it->dim == d) {
    it->lo = lo;
    it->hi = hi;
  } else {
    sides_.insert(it, Side{d, lo, hi});
  }
}

void Box::recompute_log_volume() {
  log_volume_ = 0.0;
  for (const Side& s : sides_) log_volume_ += std::log(s.hi - s.lo);
}

std::pair<Box, Box> Box::split(std::size_t d, double threshold) const {
  Box lower = *this;
  Box upper = *this;
  lower.set_side(d, lo(d), threshold);
  upper.set_side(d, threshold, hi(d));
  lower.recompute_log_volume();
  upper.recompute_log_volume();
  return {std::move(lower), std::move(upper)};
}

Box Box::with_dim(std::size_t n) const {
  return from_sides(n, sides_);
}

Box Box::from_sides(std::size_t n, std::vector<Side> sides) {
  Box b(n);
  for (const Side& s : sides) {
    if (s.dim >= n || !(s.lo < s.hi)) throw InputError("invalid box side");
    b.set_side(s.dim, s.lo, s.hi);
  }
  b.recompute_log_volume();
  return b;
}

// ---------------------------------------------------------------------------
// Tree / Forest

NodeId Tree::leaf_for(const VectorXd& x) const {
  NodeId id = 0;
  while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& node = nodes[static_cast<std::size_t>(id)];
    id = x(node.feature) <= node.threshold ? node.left : node.right;
  }
  return id;
}

std::vector<NodeId> Tree::path_for(const VectorXd& x) const {
  std::vector<NodeId> path{0};
  NodeId id = 0;
  while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& node = nodes[static_cast<std::size_t>(id)];
    id = x(node.feature) <= node.threshold ? node.left : node.right;
    path.push_back(id);
  }
  return path;
}

std::size_t Forest::node_count() const {
  std::size_t total = 0;
  for (const Tree& t : trees) total += t.nodes.size();
  return total;
}

// ---------------------------------------------------------------------------
// Splitting

double sum_squared_error(std::span<const std::size_t> ids, const MatrixXd& Y) {
  const VectorXd mean = mean_of(ids, Y);
  double sse = 0.0;
  for (const std::size_t i : ids) {
    sse += (Y.row(static_cast<Eigen::Index>(i)).transpose() - mean).squaredNorm();
  }
  return sse;
}

std::vector<Split> enumerate_splits(std::span<const std::size_t> sample_ids, const MatrixXd& X,
                                    const MatrixXd& Y, std::span<const std::size_t> features,
                                    std::size_t min_leaf_size) {
  std::vector<Split> out;
  if (sample_ids.size() < 2 || features.empty()) return out;
  const VectorXd parent_mean = mean_of(sample_ids, Y);
  const double parent_sse = sum_squared_error(sample_ids, Y);
  VectorXd total_sum = VectorXd::Zero(Y.cols());
  for (const std::size_t i : sample_ids) {
    total_sum += Y.row(static_cast<Eigen::Index>(i)).transpose() - parent_mean;
  }
  scan_splits(sample_ids, X, Y, features, min_leaf_size, parent_mean,
              [&](std::size_t f, double thr, std::size_t nl, const VectorXd& left_sum,
                  double cost) {
                out.push_back(make_split(f, thr, nl, left_sum, cost, parent_sse, parent_mean,
                                         sample_ids.size(), total_sum));
              });
  return out;
}

std::optional<Split> best_split(std::span<const std::size_t> sample_ids, const MatrixXd& X,
                                const MatrixXd& Y, std::span<const std::size_t> features,
                                std::size_t min_leaf_size) {
  if (sample_ids.size() < 2 || features.empty()) return std::nullopt;
  const VectorXd parent_mean = mean_of(sample_ids, Y);
  const double parent_sse = sum_squared_error(sample_ids, Y);
  if (parent_sse <= kPureSse) return std::nullopt;

  std::vector<std::size_t> sorted(features.begin(), features.end());
  std::ranges::sort(sorted);

  VectorXd total_sum = VectorXd::Zero(Y.cols());
  for (const std::size_t i : sample_ids) {
    total_sum += Y.row(static_cast<Eigen::Index>(i)).transpose() - parent_mean;
  }

  bool found = false;
  std::size_t best_feature = 0;
  std::size_t best_left = 0;
  double best_threshold = 0.0;
  double best_cost = parent_sse;
  VectorXd best_left_sum;
  // strict improvement keeps the lowest feature, then lowest threshold, on ties
  scan_splits(sample_ids, X, Y, sorted, min_leaf_size, parent_mean,
              [&](std::size_t f, double thr, std::size_t nl, const VectorXd& left_sum,
                  double cost) {
                if (cost < best_cost) {
                  found = true;
                  best_cost = cost;
                  best_feature = f;
                  best_threshold = thr;
                  best_left = nl;
                  best_left_sum = left_sum;
                }
              });
  if (!found || parent_sse - best_cost <= kMinRelativeGain * parent_sse) return std::nullopt;
  return make_split(best_feature, best_threshold, best_left, best_left_sum, best_cost, parent_sse,
                    parent_mean, sample_ids.size(), total_sum);
}

// ---------------------------------------------------------------------------
// Growth

Tree grow_tree(const LabeledDataset& data, std::vector<std::size_t> bag, const TrainParams& params,
               std::uint64_t tree_seed) {
  if (bag.empty()) throw ConfigError("cannot grow a tree on an empty bag");
  const std::size_t n = data.dim();
  const std::size_t per_split = std::min(params.features_per_split(n), n);

  Tree tree;
  tree.bag = bag;
  {
    TreeNode root;
    root.box = Box(n);
    root.mean = mean_of(bag, data.Y);
    root.sample_count = bag.size();
    root.sample_ids = std::move(bag);
    tree.nodes.push_back(std::move(root));
  }

  std::vector<std::size_t> all_features(n);
  std::iota(all_features.begin(), all_features.end(), std::size_t{0});
  std::vector<std::size_t> candidates;
  std::vector<NodeId> open{0};
  while (!open.empty()) {
    const NodeId id = open.back();
    open.pop_back();
    const auto idx = static_cast<std::size_t>(id);
    {
      const TreeNode& node = tree.nodes[idx];
      if (params.max_depth && node.depth >= *params.max_depth) continue;
      if (node.sample_count < 2 * params.min_leaf_size) continue;
    }

    candidates.clear();
    if (per_split >= n) {
      candidates = all_features;
    } else {
      auto rng = make_rng(tree_seed, static_cast<std::uint64_t>(id), kNodeTag);
      std::ranges::sample(all_features, std::back_inserter(candidates),
                          static_cast<std::ptrdiff_t>(per_split), rng);
    }

    const auto split = best_split(tree.nodes[idx].sample_ids, data.X, data.Y, candidates,
                                  params.min_leaf_size);
    if (!split) continue;

    std::vector<std::size_t> left_ids;
    std::vector<std::size_t> right_ids;
    left_ids.reserve(split->left_count);
    right_ids.reserve(split->right_count);
    const auto feat = static_cast<Eigen::Index>(split->feature);
    for (const std::size_t i : tree.nodes[idx].sample_ids) {
      (data.X(static_cast<Eigen::Index>(i), feat) <= split->threshold ? left_ids : right_ids)
          .push_back(i);
    }
    auto [left_box, right_box] = tree.nodes[idx].box.split(split->feature, split->threshold);

    const auto left_id = static_cast<NodeId>(tree.nodes.size());
    const NodeId right_id = left_id + 1;
    const std::size_t depth = tree.nodes[idx].depth + 1;

    TreeNode left;
    left.id = left_id;
    left.parent = id;
    left.depth = depth;
    left.box = std::move(left_box);
    left.mean = mean_of(left_ids, data.Y);
    left.sample_count = left_ids.size();
    left.sample_ids = std::move(left_ids);

    TreeNode right;
    right.id = right_id;
    right.parent = id;
    right.depth = depth;
    right.box = std::move(right_box);
    right.mean = mean_of(right_ids, data.Y);
    right.sample_count = right_ids.size();
    right.sample_ids = std::move(right_ids);

    TreeNode& parent = tree.nodes[idx];
    parent.feature = static_cast<int>(split->feature);
    parent.threshold = split->threshold;
    parent.left = left_id;
    parent.right = right_id;

    tree.nodes.push_back(std::move(left));
    tree.nodes.push_back(std::move(right));
    open.push_back(right_id);
    open.push_back(left_id);
  }
  return tree;
}

std::vector<std::size_t> draw_bag(std::size_t rows, const TrainParams& params,
                                  std::size_t tree_index) {
  const std::size_t size = count_from_fraction(params.bagging_fraction, rows);
  if (size == 0) {
    throw ConfigError("bagging fraction " + std::to_string(params.bagging_fraction) +
                      " leaves an empty bag for " + std::to_string(rows) + " samples");
  }
  auto rng = make_rng(params.seed, tree_index, kBagTag);
  std::vector<std::size_t> bag;
  bag.reserve(size);
  if (params.bootstrap) {
    std::uniform_int_distribution<std::size_t> draw(0, rows - 1);
    for (std::size_t k = 0; k < size; ++k) bag.push_back(draw(rng));
    std::ranges::sort(bag);
  } else if (size == rows) {
    bag.resize(rows);
    std::iota(bag.begin(), bag.end(), std::size_t{0});
  } else {
    std::vector<std::size_t> all(rows);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::ranges::sample(all, std::back_inserter(bag), static_cast<std::ptrdiff_t>(size), rng);
  }
  return bag;
}

Forest train_forest(const LabeledDataset& data, const TrainParams& params, std::size_t threads) {
  if (data.size() == 0) throw DomainError("cannot train on an empty dataset");
  params.validate(data.dim());

  Forest forest;
  forest.params = params;
  forest.n = data.dim();
  forest.label_dim = data.label_dim();
  forest.num_classes = data.num_classes;
  forest.fingerprint = fingerprint(data);
  forest.trees.resize(params.trees);

  // bags are drawn up front so configuration errors surface on the calling thread
  std::vector<std::vector<std::size_t>> bags(params.trees);
  for (std::size_t j = 0; j < params.trees; ++j) bags[j] = draw_bag(data.size(), params, j);

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, params.trees);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t j = next++; j < params.trees; j = next++) {
      try {
        forest.trees[j] =
            grow_tree(data, std::move(bags[j]), params, derive_seed(params.seed, j, kTreeTag));
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return forest;
}

VectorXd predict(const Forest& forest, const VectorXd& x) {
  const VectorXd clamped = x.cwiseMax(0.0).cwiseMin(1.0);
  const std::vector<double> w = forest.weights();
  VectorXd out = VectorXd::Zero(static_cast<Eigen::Index>(forest.label_dim));
  for (std::size_t j = 0; j < forest.trees.size(); ++j) {
    const Tree& tree = forest.trees[j];
    out += w[j] * tree.nodes[static_cast<std::size_t>(tree.leaf_for(clamped))].mean;
  }
  return out;
}

MatrixXd predict(const Forest& forest, const MatrixXd& X) {
  MatrixXd out(X.rows(), static_cast<Eigen::Index>(forest.label_dim));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    out.row(i) = predict(forest, VectorXd(X.row(i).transpose())).transpose();
  }
  return out;
}

std::optional<double> empirical_rho(const Forest& forest) {
  std::optional<double> rho;
  for (const Tree& tree : forest.trees) {
    for (const TreeNode& node : tree.nodes) {
      if (node.parent == kNoNode) continue;
      const double parent_log = tree.nodes[static_cast<std::size_t>(node.parent)].box.log_volume();
      const double ratio = std::exp(node.box.log_volume() - parent_log);
      rho = rho ? std::max(*rho, ratio) : ratio;
    }
  }
  return rho;
}

Forest pad_forest(const Forest& forest, std::size_t m) {
  Forest out = forest;
  out.n = forest.n + m;
  for (Tree& tree : out.trees) {
    for (TreeNode& node : tree.nodes) node.box = node.box.with_dim(out.n);
  }
  // pin the trained per-split count, the default would follow the new dimension
  out.params.feature_subsample = forest.params.features_per_split(forest.n);
  return out;
}

LabeledDataset pad_dataset(const LabeledDataset& data, std::size_t m) {
  LabeledDataset out = data;
  out.X = MatrixXd::Zero(data.X.rows(), data.X.cols() + static_cast<Eigen::Index>(m));
  out.X.leftCols(data.X.cols()) = data.X;
  out.normalization.ranges.resize(data.normalization.ranges.size() + m, FeatureRange{0.0, 0.0});
  return out;
}

std::size_t threads_from_env() {
  const char* value = std::getenv("THREADS");
  if (!value || !*value) return 0;
  char* end = nullptr;
  const unsigned long parsed = std::strtoul(value, &end, 10);
  if (end == value || *end != '\0') return 0;
  return static_cast<std::size_t>(parsed);
}

}  // namespace besov
