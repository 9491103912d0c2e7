#pragma once

#include "besov/dataset.hpp"
#include "besov/forest.hpp"
#include "besov/wavelet.hpp"

#include <cmath>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace besov {

inline constexpr std::size_t kDefaultMTilde = 1000;

struct SmoothnessReport {
  double alpha = std::numeric_limits<double>::infinity();
  double c = std::numeric_limits<double>::quiet_NaN();
  std::size_t fit_points_used = 0;
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  std::size_t checkpoints_dropped = 0;
  MeasureMode measure = MeasureMode::lebesgue;
  std::size_t m_tilde = kDefaultMTilde;
  std::optional<double> empirical_rho;
  std::string forest_fingerprint;

  [[nodiscard]] bool alpha_is_infinite() const { return std::isinf(alpha); }
};

/// Smoothness alpha with outer exponent p; tau follows from 1/tau = alpha + 1/p.
class BesovQuery {
 public:
  explicit BesovQuery(double alpha, double p = 2.0) : alpha_(alpha), p_(p) {}

  [[nodiscard]] double alpha() const { return alpha_; }
  [[nodiscard]] double p() const { return p_; }
  [[nodiscard]] double tau() const { return 1.0 / (alpha_ + 1.0 / p_); }

 private:
  double alpha_;
  double p_;
};

/// Least-squares fit of log sigma = log c - alpha log M over checkpoints 1 <= M <= m_tilde
/// with sigma > 1e-15. Fewer than two usable points give alpha = +inf.
SmoothnessReport fit_alpha(const SigmaCurve& curve, std::size_t m_tilde = kDefaultMTilde);

/// l_tau norm of the weighted non-root wavelet norms. With uniform weights this is
/// (1/J) (sum_j N_tau(T_j)^tau)^{1/tau}.
double tau_sparsity(std::span<const WaveletAtom> atoms, std::span<const double> weights,
                    const BesovQuery& q);

/// (|Omega| * mean_{x_i in Omega} ||f(x_i) - E_Omega||^tau)^{1/tau}, where E_Omega is the
/// mean of f over the dataset samples in the cell.
double averaged_modulus(const Tree& tree, NodeId node, const LabeledDataset& data, double tau,
                        MeasureMode measure);

/// Same, for a precomputed list of samples inside the cell.
double averaged_modulus(const Tree& tree, NodeId node, std::span<const std::size_t> samples,
                        const MatrixXd& Y, double tau, MeasureMode measure);

/// Forest semi-norm built on the averaged modulus, summed over every node of every tree.
/// Cells holding no dataset sample contribute nothing.
double besov_seminorm(const Forest& forest, const LabeledDataset& data, const BesovQuery& q,
                      MeasureMode measure);

struct ZeroPadResult {
  double original = 0.0;
  double padded = 0.0;
  bool predictions_match = false;  // padded forest on padded samples vs original
};

/// N_tau under Lebesgue measure before and after embedding into [0,1]^{n+m}.
ZeroPadResult zero_pad_check(const Forest& forest, const LabeledDataset& data, std::size_t m,
                             const BesovQuery& q);

/// N_tau / |f|_B; none when the semi-norm vanishes or either side is not finite.
std::optional<double> equivalence_probe(const Forest& forest, const LabeledDataset& data,
                                        const BesovQuery& q, MeasureMode measure);

/// sigma_M * M^alpha / N_tau at every checkpoint with M >= 1.
std::vector<double> jackson_ratios(const SigmaCurve& curve, double alpha, double n_tau);

struct SmoothnessOptions {
  MeasureMode measure = MeasureMode::lebesgue;
  std::size_t m_tilde = kDefaultMTilde;
  std::vector<std::size_t> checkpoints = default_checkpoints();
};

struct SmoothnessResult {
  SmoothnessReport report;
  SigmaCurve curve;
  std::size_t atoms = 0;  // non-root
};

/// Decompose, order, evaluate sigma on `data` and fit alpha.
SmoothnessResult estimate_smoothness(const Forest& forest, const LabeledDataset& data,
                                     const SmoothnessOptions& options = {});

/// JSON object with alpha, c, r_squared, fit_points_used, checkpoints_dropped, measure,
/// m_tilde, empirical_rho, forest_fingerprint. Infinite alpha is written as "inf".
std::string report_to_json(const SmoothnessReport& report);

}  // namespace besov
