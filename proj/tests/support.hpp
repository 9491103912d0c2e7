#pragma once

// Synthetic data generators and straightforward reference implementations
// used across the test binaries.

#include "besov/dataset.hpp"
#include "besov/forest.hpp"
#include "besov/smoothness.hpp"
#include "besov/wavelet.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace besov::testing {

inline RawTable classification_table(const MatrixXd& X, const std::vector<int>& ids, int L) {
  RawTable t;
  t.values = X;
  for (Eigen::Index c = 0; c < X.cols(); ++c) t.feature_names.push_back("x" + std::to_string(c));
  t.label_mode = LabelMode::classification;
  t.class_ids = ids;
  for (int l = 0; l < L; ++l) t.class_names.push_back("c" + std::to_string(l));
  return t;
}

inline RawTable regression_table(const MatrixXd& X, const VectorXd& y) {
  RawTable t;
  t.values = X;
  for (Eigen::Index c = 0; c < X.cols(); ++c) t.feature_names.push_back("x" + std::to_string(c));
  t.label_mode = LabelMode::regression;
  t.responses = y;
  return t;
}

/// Uniform features in [0,1]^n with labels drawn from a random axis-aligned rule plus noise.
inline LabeledDataset random_classification(std::size_t rows, std::size_t n, int L,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> any(0, L - 1);
  MatrixXd X(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
  std::vector<int> ids(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t d = 0; d < n; ++d) X(Eigen::Index(i), Eigen::Index(d)) = u(rng);
    const double s = X.row(Eigen::Index(i)).sum() / double(n);
    ids[i] = u(rng) < 0.2 ? any(rng) : std::min(L - 1, int(s * L * 1.5) % L);
  }
  // every class present so L is as requested
  for (int l = 0; l < L && std::size_t(l) < rows; ++l) ids[std::size_t(l)] = l;
  return make_dataset(classification_table(X, ids, L));
}

/// K = 4 disjoint constant boxes tiling [0,1]^2 by the cuts x0 = 0.5 and x1 = 0.5
/// (x1 cut only in the left half, x0 split again on the right).
inline std::vector<int> four_box_label(const MatrixXd& X) {
  std::vector<int> ids(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double a = X(i, 0), b = X(i, 1);
    int id;
    if (a <= 0.5) {
      id = b <= 0.5 ? 0 : 1;
    } else {
      id = a <= 0.75 ? 2 : 3;
    }
    ids[std::size_t(i)] = id;
  }
  return ids;
}

inline MatrixXd uniform_points(std::size_t rows, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd X(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index d = 0; d < X.cols(); ++d) X(i, d) = u(rng);
  return X;
}

/// Points kept away from the 4-box cut lines so min-max normalization and midpoint
/// thresholds cannot blur them. Corners pin the per-feature range to [0,1].
inline MatrixXd four_box_points(std::size_t rows, std::uint64_t seed) {
  MatrixXd X = uniform_points(rows, 2, seed);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index d = 0; d < 2; ++d) {
      double& v = X(i, d);
      v = 0.02 + 0.96 * v;
      for (double cut : {0.5, 0.75}) {
        if (std::abs(v - cut) < 0.02) v = cut + (v < cut ? -0.02 : 0.02);
      }
    }
  }
  X.row(0) << 0.0, 0.0;
  X.row(1) << 1.0, 1.0;
  return X;
}

// ---------------------------------------------------------------------------
// reference implementations

inline double brute_sse(const std::vector<std::size_t>& ids, const MatrixXd& Y) {
  if (ids.empty()) return 0.0;
  VectorXd mean = VectorXd::Zero(Y.cols());
  for (auto i : ids) mean += Y.row(Eigen::Index(i)).transpose();
  mean /= double(ids.size());
  double s = 0.0;
  for (auto i : ids) s += (Y.row(Eigen::Index(i)).transpose() - mean).squaredNorm();
  return s;
}

/// Sample ids of the dataset whose points fall in the node's box, by direct containment.
inline std::vector<std::size_t> brute_cell(const TreeNode& node, const MatrixXd& X) {
  std::vector<std::size_t> out;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (node.box.contains(X.row(i).transpose())) out.push_back(std::size_t(i));
  }
  return out;
}

inline double brute_volume(const Box& b) {
  double v = 1.0;
  for (std::size_t d = 0; d < b.dim(); ++d) v *= b.hi(d) - b.lo(d);
  return v;
}

/// Direct real-arithmetic semi-norm: weighted l_tau over every node with samples.
inline double brute_seminorm(const Forest& forest, const LabeledDataset& data, double alpha,
                             double tau, MeasureMode measure) {
  const auto w = forest.weights();
  double total = 0.0;
  for (std::size_t j = 0; j < forest.trees.size(); ++j) {
    const Tree& tree = forest.trees[j];
    double tree_sum = 0.0;
    for (const TreeNode& node : tree.nodes) {
      const auto cell = brute_cell(node, data.X);
      if (cell.empty()) continue;
      VectorXd mean = VectorXd::Zero(data.Y.cols());
      for (auto i : cell) mean += data.Y.row(Eigen::Index(i)).transpose();
      mean /= double(cell.size());
      double acc = 0.0;
      for (auto i : cell) acc += std::pow((data.Y.row(Eigen::Index(i)).transpose() - mean).norm(), tau);
      const double measure_value =
          measure == MeasureMode::lebesgue
              ? brute_volume(node.box)
              : double(node.sample_count) / double(tree.root().sample_count);
      const double w1 = std::pow(measure_value * acc / double(cell.size()), 1.0 / tau);
      tree_sum += std::pow(std::pow(measure_value, -alpha) * w1, tau);
    }
    total += std::pow(w[j], tau) * tree_sum;
  }
  return std::pow(total, 1.0 / tau);
}

/// Direct N_tau: (sum_j w_j^tau sum_nodes ||psi||^tau)^{1/tau}.
inline double brute_tau_sparsity(const std::vector<WaveletAtom>& atoms,
                                 const std::vector<double>& w, double tau) {
  double s = 0.0;
  for (const auto& a : atoms) {
    if (a.is_root) continue;
    s += std::pow(w[a.tree_index] * a.norm_p, tau);
  }
  return std::pow(s, 1.0 / tau);
}

inline bool rel_close(double a, double b, double tol) {
  if (a == b) return true;
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

/// Scratch directory under the build tree, removed and recreated per call.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("besov_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

/// Writes X and string class labels as a CSV with a trailing "y" column.
inline void write_csv(const std::filesystem::path& p, const MatrixXd& X,
                      const std::vector<int>& ids) {
  std::ofstream f(p, std::ios::binary);
  for (Eigen::Index c = 0; c < X.cols(); ++c) f << "x" << c << ",";
  f << "y\n";
  f.precision(17);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) f << X(i, c) << ",";
    f << "k" << ids[std::size_t(i)] << "\n";
  }
}

}  // namespace besov::testing
