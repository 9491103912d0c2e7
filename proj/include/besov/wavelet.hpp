#pragma once

#include "besov/dataset.hpp"
#include "besov/forest.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace besov {

/// Measure |Omega| of a cell entering the wavelet norms. Both give the root measure 1.
enum class MeasureMode {
  lebesgue,   // box volume
  empirical,  // fraction of the tree's training samples in the cell
};

std::string_view to_string(MeasureMode mode);
MeasureMode parse_measure(std::string_view text);

/// log |Omega| of `node` in `tree` under `mode`.
double log_measure(const Tree& tree, const TreeNode& node, MeasureMode mode);

/// One geometric wavelet psi = 1_cell (E_cell - E_parent). Root atoms carry E_root.
struct WaveletAtom {
  std::size_t tree_index = 0;
  NodeId node_id = 0;
  VectorXd delta;
  double log_measure = 0.0;
  double log_norm = 0.0;  // log ||psi||_p, -inf for delta = 0
  double norm_p = 0.0;
  double weighted_norm = 0.0;
  double log_weighted_norm = 0.0;  // ordering key, free of underflow
  bool is_root = false;
};

/// log ||psi||_p = log ||delta||_2 + log|Omega| / p.
double log_wavelet_norm(const VectorXd& delta, double log_measure, double p);

/// ||psi||_p as a real, 0 when the log norm falls below -700.
double wavelet_norm(const VectorXd& delta, double log_measure, double p);

/// One atom per node, trees in order and nodes by id within each tree.
std::vector<WaveletAtom> decompose(const Forest& forest, MeasureMode measure, double p = 2.0);

/// Non-root atom indices by weighted norm, descending; ties by (tree, node) ascending.
std::vector<std::size_t> order_atoms(std::span<const WaveletAtom> atoms);

/// Prediction using the root terms plus the first M atoms of `order`.
VectorXd m_term_predict(const Forest& forest, std::span<const WaveletAtom> atoms,
                        std::span<const std::size_t> order, std::size_t M, const VectorXd& x);

/// Samples of a dataset grouped by the cells of one tree.
///
/// Samples are permuted so that every node's cell is a contiguous range.
class CellIndex {
 public:
  CellIndex(const Tree& tree, const MatrixXd& X);

  [[nodiscard]] std::span<const std::size_t> samples(NodeId node) const {
    const auto& r = ranges_[static_cast<std::size_t>(node)];
    return std::span<const std::size_t>(order_).subspan(r.first, r.second - r.first);
  }
  [[nodiscard]] std::size_t count(NodeId node) const {
    const auto& r = ranges_[static_cast<std::size_t>(node)];
    return r.second - r.first;
  }

 private:
  std::vector<std::size_t> order_;
  std::vector<std::pair<std::size_t, std::size_t>> ranges_;
};

struct SigmaCurve {
  std::vector<std::size_t> checkpoints;
  std::vector<double> sigma;
  double sigma0 = 0.0;  // root terms only
  std::size_t total_atoms = 0;
  double p = 2.0;
};

/// {start, start+step, ..., <= end}.
std::vector<std::size_t> make_checkpoints(std::size_t start, std::size_t step, std::size_t end);
/// Parses "start:step:end".
std::vector<std::size_t> parse_checkpoints(std::string_view spec);
/// The default {10, 20, ..., 1000}.
std::vector<std::size_t> default_checkpoints();

/// RMS l2 error of S_M on `data` at each checkpoint, dropping checkpoints above the atom count.
SigmaCurve sigma_curve(const Forest& forest, std::span<const WaveletAtom> atoms,
                       std::span<const std::size_t> order, const LabeledDataset& data,
                       std::span<const std::size_t> checkpoints);

/// "M,sigma" CSV, 17 significant digits.
void write_sigma_csv(std::ostream& out, const SigmaCurve& curve);

}  // namespace besov
