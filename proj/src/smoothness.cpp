#include "besov/smoothness.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace besov {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kSigmaFloor = 1e-15;

// Running log(sum exp(x_k)) that accepts -inf terms.
class LogSum {
 public:
  void add(double x) {
    if (x == kNegInf) return;
    if (x <= max_) {
      acc_ += std::exp(x - max_);
    } else {
      acc_ = acc_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    }
  }
  [[nodiscard]] double value() const { return acc_ == 0.0 ? kNegInf : max_ + std::log(acc_); }

 private:
  double max_ = kNegInf;
  double acc_ = 0.0;
};

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw DomainError("tau must be positive and finite, got " + std::to_string(tau));
  }
}

double safe_exp(double x) { return x == kNegInf ? 0.0 : std::exp(x); }

// log of the averaged modulus; -inf when f is constant on the cell
double log_averaged_modulus(const Tree& tree, const TreeNode& node,
                            std::span<const std::size_t> samples, const MatrixXd& Y, double tau,
                            MeasureMode measure) {
  VectorXd mean = VectorXd::Zero(Y.cols());
  for (const std::size_t i : samples) mean += Y.row(static_cast<Eigen::Index>(i)).transpose();
  mean /= static_cast<double>(samples.size());
  LogSum deviations;
  for (const std::size_t i : samples) {
    const double dev = (Y.row(static_cast<Eigen::Index>(i)).transpose() - mean).norm();
    deviations.add(dev > 0.0 ? tau * std::log(dev) : kNegInf);
  }
  const double log_mean = deviations.value() - std::log(static_cast<double>(samples.size()));
  if (log_mean == kNegInf) return kNegInf;
  return (log_measure(tree, node, measure) + log_mean) / tau;
}

double log_besov_seminorm(const Forest& forest, const LabeledDataset& data, const BesovQuery& q,
                          MeasureMode measure) {
  const double tau = q.tau();
  check_tau(tau);
  const std::vector<double> w = forest.weights();
  LogSum total;
  for (std::size_t j = 0; j < forest.trees.size(); ++j) {
    const Tree& tree = forest.trees[j];
    const CellIndex cells(tree, data.X);
    LogSum per_tree;
    for (const TreeNode& node : tree.nodes) {
      const auto samples = cells.samples(node.id);
      if (samples.empty()) continue;
      const double lw = log_averaged_modulus(tree, node, samples, data.Y, tau, measure);
      if (lw == kNegInf) continue;
      per_tree.add(tau * (-q.alpha() * log_measure(tree, node, measure) + lw));
    }
    if (w[j] > 0.0) total.add(tau * std::log(w[j]) + per_tree.value());
  }
  return total.value() / tau;
}

}  // namespace

SmoothnessReport fit_alpha(const SigmaCurve& curve, std::size_t m_tilde) {
  SmoothnessReport report;
  report.m_tilde = m_tilde;
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t k = 0; k < curve.checkpoints.size(); ++k) {
    const std::size_t m = curve.checkpoints[k];
    if (m > m_tilde) continue;
    if (m == 0 || !(curve.sigma[k] > kSigmaFloor)) {
      ++report.checkpoints_dropped;
      continue;
    }
    xs.push_back(std::log(static_cast<double>(m)));
    ys.push_back(std::log(curve.sigma[k]));
  }
  report.fit_points_used = xs.size();
  if (xs.size() < 2) return report;

  const auto count = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= count;
  my /= count;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss_res = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double r = ys[k] - (intercept + slope * xs[k]);
    ss_res += r * r;
  }
  report.alpha = -slope;
  report.c = std::exp(intercept);
  report.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return report;
}

double tau_sparsity(std::span<const WaveletAtom> atoms, std::span<const double> weights,
                    const BesovQuery& q) {
  const double tau = q.tau();
  check_tau(tau);
  LogSum sum;
  for (const WaveletAtom& atom : atoms) {
    if (atom.is_root) continue;
    const double w = weights[atom.tree_index];
    if (!(w > 0.0) || atom.log_norm == kNegInf) continue;
    sum.add(tau * (std::log(w) + atom.log_norm));
  }
  return safe_exp(sum.value() / tau);
}

double averaged_modulus(const Tree& tree, NodeId node, std::span<const std::size_t> samples,
                        const MatrixXd& Y, double tau, MeasureMode measure) {
  check_tau(tau);
  if (samples.empty()) {
    throw DomainError("averaged modulus of node " + std::to_string(node) +
                      " needs at least one sample");
  }
  return safe_exp(log_averaged_modulus(tree, tree.nodes[static_cast<std::size_t>(node)], samples,
                                       Y, tau, measure));
}

double averaged_modulus(const Tree& tree, NodeId node, const LabeledDataset& data, double tau,
                        MeasureMode measure) {
  const CellIndex cells(tree, data.X);
  return averaged_modulus(tree, node, cells.samples(node), data.Y, tau, measure);
}

double besov_seminorm(const Forest& forest, const LabeledDataset& data, const BesovQuery& q,
                      MeasureMode measure) {
  return safe_exp(log_besov_seminorm(forest, data, q, measure));
}

ZeroPadResult zero_pad_check(const Forest& forest, const LabeledDataset& data, std::size_t m,
                             const BesovQuery& q) {
  const Forest padded = pad_forest(forest, m);
  const LabeledDataset padded_data = pad_dataset(data, m);
  const std::vector<double> w = forest.weights();

  ZeroPadResult out;
  out.original = tau_sparsity(decompose(forest, MeasureMode::lebesgue), w, q);
  out.padded = tau_sparsity(decompose(padded, MeasureMode::lebesgue), w, q);
  out.predictions_match = predict(forest, data.X) == predict(padded, padded_data.X);
  return out;
}

std::optional<double> equivalence_probe(const Forest& forest, const LabeledDataset& data,
                                        const BesovQuery& q, MeasureMode measure) {
  const double log_seminorm = log_besov_seminorm(forest, data, q, measure);
  const double n_tau = tau_sparsity(decompose(forest, measure), forest.weights(), q);
  if (log_seminorm == kNegInf || !std::isfinite(log_seminorm) || !(n_tau > 0.0) ||
      !std::isfinite(n_tau)) {
    return std::nullopt;
  }
  // ratio taken in the log domain so tiny cells do not underflow the semi-norm
  const double ratio = std::exp(std::log(n_tau) - log_seminorm);
  if (!std::isfinite(ratio)) return std::nullopt;
  return ratio;
}

std::vector<double> jackson_ratios(const SigmaCurve& curve, double alpha, double n_tau) {
  std::vector<double> out;
  for (std::size_t k = 0; k < curve.checkpoints.size(); ++k) {
    const std::size_t m = curve.checkpoints[k];
    if (m == 0) continue;
    out.push_back(curve.sigma[k] * std::pow(static_cast<double>(m), alpha) / n_tau);
  }
  return out;
}

SmoothnessResult estimate_smoothness(const Forest& forest, const LabeledDataset& data,
                                     const SmoothnessOptions& options) {
  const std::vector<WaveletAtom> atoms = decompose(forest, options.measure);
  const std::vector<std::size_t> order = order_atoms(atoms);
  SmoothnessResult result;
  result.atoms = order.size();
  result.curve = sigma_curve(forest, atoms, order, data, options.checkpoints);
  result.report = fit_alpha(result.curve, options.m_tilde);
  result.report.measure = options.measure;
  result.report.empirical_rho = empirical_rho(forest);
  result.report.forest_fingerprint = forest.fingerprint;
  return result;
}

std::string report_to_json(const SmoothnessReport& report) {
  auto real_or_null = [](double v) -> nlohmann::ordered_json {
    if (std::isnan(v)) return nullptr;
    return v;
  };
  nlohmann::ordered_json j;
  j["alpha"] = report.alpha_is_infinite() ? nlohmann::ordered_json("inf")
                                          : nlohmann::ordered_json(report.alpha);
  j["c"] = real_or_null(report.c);
  j["r_squared"] = real_or_null(report.r_squared);
  j["fit_points_used"] = report.fit_points_used;
  j["checkpoints_dropped"] = report.checkpoints_dropped;
  j["measure"] = std::string(to_string(report.measure));
  j["m_tilde"] = report.m_tilde;
  j["empirical_rho"] =
      report.empirical_rho ? nlohmann::ordered_json(*report.empirical_rho) : nullptr;
  j["forest_fingerprint"] = report.forest_fingerprint;
  return j.dump(2) + "\n";
}

}  // namespace besov
