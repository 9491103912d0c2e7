#pragma once

#include "besov/dataset.hpp"
#include "besov/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace besov {

struct TrainParams {
  std::size_t trees = 10;
  double bagging_fraction = 0.8;
  bool bootstrap = false;                        // with replacement
  std::optional<std::size_t> feature_subsample;  // default ceil(sqrt(n))
  std::size_t min_leaf_size = 1;
  std::optional<std::size_t> max_depth;  // unlimited when empty
  std::uint64_t seed = 0;
  std::vector<double> weights;  // empty: uniform 1/J

  [[nodiscard]] std::size_t features_per_split(std::size_t n) const;
  [[nodiscard]] std::vector<double> tree_weights() const;
  /// Throws ConfigError on inconsistent settings for ambient dimension n.
  void validate(std::size_t n) const;
};

/// Axis-aligned cell of the unit cube. Only the coordinates restricted by some
/// ancestor split are stored; every other coordinate spans [0,1].
class Box {
 public:
  struct Side {
    std::size_t dim;
    double lo;
    double hi;
  };

  Box() = default;
  explicit Box(std::size_t n) : n_(n) {}

  [[nodiscard]] std::size_t dim() const { return n_; }
  [[nodiscard]] double lo(std::size_t d) const;
  [[nodiscard]] double hi(std::size_t d) const;
  [[nodiscard]] const std::vector<Side>& sides() const { return sides_; }
  [[nodiscard]] double log_volume() const { return log_volume_; }
  [[nodiscard]] bool contains(const VectorXd& x) const;

  /// Cuts along `d` at `threshold`: lower half gets hi=threshold, upper half lo=threshold.
  [[nodiscard]] std::pair<Box, Box> split(std::size_t d, double threshold) const;
  /// Same restricted sides embedded in a cube of dimension `n`.
  [[nodiscard]] Box with_dim(std::size_t n) const;

  static Box from_sides(std::size_t n, std::vector<Side> sides);

 private:
  void set_side(std::size_t d, double lo, double hi);
  void recompute_log_volume();

  std::size_t n_ = 0;
  std::vector<Side> sides_;  // sorted by dim
  double log_volume_ = 0.0;
};

struct TreeNode {
  NodeId id = 0;
  NodeId parent = kNoNode;
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  NodeId left = kNoNode;
  NodeId right = kNoNode;
  std::size_t depth = 0;
  Box box;
  VectorXd mean;  // E_Omega over the node's training samples
  std::size_t sample_count = 0;
  std::vector<std::size_t> sample_ids;  // training time only, not serialized

  [[nodiscard]] bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;       // nodes[0] is the root
  std::vector<std::size_t> bag;      // sorted training ids, repeated under bootstrap

  [[nodiscard]] const TreeNode& root() const { return nodes.front(); }
  [[nodiscard]] NodeId leaf_for(const VectorXd& x) const;
  /// Root-to-leaf node ids visited by x.
  [[nodiscard]] std::vector<NodeId> path_for(const VectorXd& x) const;
};

struct Forest {
  std::vector<Tree> trees;
  TrainParams params;
  std::size_t n = 0;          // ambient dimension
  std::size_t label_dim = 0;  // L-1, or 1 for regression
  int num_classes = 1;
  std::string fingerprint;

  [[nodiscard]] std::vector<double> weights() const { return params.tree_weights(); }
  [[nodiscard]] std::size_t node_count() const;
};

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  double cost = 0.0;         // SSE(left) + SSE(right)
  double parent_sse = 0.0;
  std::size_t left_count = 0;
  std::size_t right_count = 0;
  VectorXd left_mean;
  VectorXd right_mean;
};

double sum_squared_error(std::span<const std::size_t> ids, const MatrixXd& Y);

/// Every admissible (feature, midpoint) cut of the sample, in feature then threshold order.
std::vector<Split> enumerate_splits(std::span<const std::size_t> sample_ids, const MatrixXd& X,
                                    const MatrixXd& Y, std::span<const std::size_t> features,
                                    std::size_t min_leaf_size = 1);

/// Variance-minimizing axis-aligned cut; none if the node is pure or no cut lowers the cost.
std::optional<Split> best_split(std::span<const std::size_t> sample_ids, const MatrixXd& X,
                                const MatrixXd& Y, std::span<const std::size_t> features,
                                std::size_t min_leaf_size = 1);

Tree grow_tree(const LabeledDataset& data, std::vector<std::size_t> bag, const TrainParams& params,
               std::uint64_t tree_seed);

/// Bag of tree `tree_index` under `params`.
std::vector<std::size_t> draw_bag(std::size_t rows, const TrainParams& params,
                                  std::size_t tree_index);

/// Grows params.trees trees in parallel. `threads` = 0 uses the hardware concurrency.
Forest train_forest(const LabeledDataset& data, const TrainParams& params,
                    std::size_t threads = 0);

VectorXd predict(const Forest& forest, const VectorXd& x);
MatrixXd predict(const Forest& forest, const MatrixXd& X);

/// Largest child/parent volume ratio over all splits; none for a forest of stumps.
std::optional<double> empirical_rho(const Forest& forest);

/// Embeds the forest in [0,1]^{n+m}: identical splits, padded root boxes.
Forest pad_forest(const Forest& forest, std::size_t m);
/// Appends m zero coordinates to every sample.
LabeledDataset pad_dataset(const LabeledDataset& data, std::size_t m);

/// Thread count from the THREADS environment variable, 0 when unset.
std::size_t threads_from_env();

}  // namespace besov
