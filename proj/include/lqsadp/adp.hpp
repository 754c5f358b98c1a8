#ifndef LQSADP_ADP_HPP
#define LQSADP_ADP_HPP

// Data-driven policy iteration. For the current gain K_i the unknowns
// z = [vech(P_i); vec(M_i); vech(H_i)] satisfy Psi_i z = Theta_i with
//
//   Psi_i   = [eta_xbar, 2 eta_xx (I_n (x) K_i^T) - 2 eta_xu, eta_Kx(K_i) - eta_ubar]
//   Theta_i = -eta_xx vec(Q + K_i^T R K_i)
//
// The data blocks are collected once under u = K0 x + e and reused for every
// iterate; only eta_Kx changes and it is an exact linear image of eta_xx.

#include <Eigen/Dense>

#include <chrono>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lqsadp/datagen.hpp"
#include "lqsadp/errors.hpp"
#include "lqsadp/matstack.hpp"
#include "lqsadp/model_pi.hpp"
#include "lqsadp/report.hpp"
#include "lqsadp/stability.hpp"

namespace lqsadp {

inline constexpr double kDefaultExactEps = 1e-8;
inline constexpr double kDefaultMcEps = 1e-4;

/// n(n+1)/2 + mn + m(m+1)/2
constexpr Index regression_columns(Index n, Index m) noexcept {
  return tri_size(n) + m * n + tri_size(m);
}

class RankDeficiencyError : public Error {
 public:
  RankDeficiencyError(const std::string& what, RankReport report)
      : Error(what), report_(std::move(report)) {}
  const RankReport& report() const noexcept { return report_; }

 private:
  RankReport report_;
};

/// Singular values counted nonzero iff sigma > threshold * sigma_max.
inline RankReport numerical_rank(const Mat& x, std::size_t required,
                                 double threshold = kRankThreshold) {
  RankReport rep;
  rep.required = required;
  rep.threshold = threshold;
  if (x.size() == 0) return rep;
  Eigen::BDCSVD<Mat> svd(x);
  const Vec& s = svd.singularValues();
  rep.singular_values.assign(s.data(), s.data() + s.size());
  const double smax = s.size() > 0 ? s(0) : 0.0;
  for (Index i = 0; i < s.size(); ++i)
    if (smax > 0.0 && s(i) > threshold * smax) ++rep.rank;
  rep.passed = rep.rank == required;
  return rep;
}

/// Rank of [eta_xx, eta_xu, eta_ubar] against n(n+1)/2 + mn + m(m+1)/2.
inline RankReport check_rank(const DataMatrices& data) {
  data.validate();
  Mat stacked(data.rows(), data.eta_xx.cols() + data.eta_xu.cols() + data.eta_ubar.cols());
  stacked << data.eta_xx, data.eta_xu, data.eta_ubar;
  return numerical_rank(stacked, static_cast<std::size_t>(regression_columns(data.n, data.m)));
}

struct RegressionSystem {
  Mat Psi;
  Vec Theta;
  std::size_t iteration = 0;
  double cond = 0.0;  // sigma_max / sigma_min of Psi
};

inline double condition_number(const Mat& x) {
  if (x.size() == 0) return 0.0;
  Eigen::BDCSVD<Mat> svd(x);
  const Vec& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

inline RegressionSystem assemble(const DataMatrices& data, const CostWeights& w, const Mat& k,
                                 std::size_t iteration = 0) {
  data.validate();
  const Index n = data.n;
  const Index m = data.m;
  require_shape(k, m, n, "assemble: K");
  require_shape(w.Q.mat(), n, n, "assemble: Q");
  require_shape(w.R.mat(), m, m, "assemble: R");

  RegressionSystem rs;
  rs.iteration = iteration;
  rs.Psi.resize(data.rows(), regression_columns(n, m));
  rs.Psi << data.eta_xbar,
      2.0 * data.eta_xx * kron(Mat::Identity(n, n), k.transpose()) - 2.0 * data.eta_xu,
      eta_Kx(data, k) - data.eta_ubar;
  rs.Theta = -data.eta_xx * vec(w.Q.mat() + k.transpose() * w.R.mat() * k);
  rs.cond = condition_number(rs.Psi);
  return rs;
}

struct LsSolution {
  EvaluationTriple triple;
  double residual = 0.0;  // |Psi z - Theta|
  RankReport rank;
};

/// Least-squares solve of Psi z = Theta by column-pivoted QR, after an SVD
/// rank check; z is unpacked into (P, M, H).
inline LsSolution solve_ls(const RegressionSystem& rs, Index n, Index m) {
  const Index cols = regression_columns(n, m);
  if (rs.Psi.cols() != cols) {
    throw DimensionError("solve_ls: Psi has " + std::to_string(rs.Psi.cols()) +
                         " columns, expected " + std::to_string(cols));
  }
  if (rs.Theta.size() != rs.Psi.rows()) throw DimensionError("solve_ls: Theta length mismatch");

  LsSolution out;
  out.rank = numerical_rank(rs.Psi, static_cast<std::size_t>(cols));
  if (rs.Psi.rows() < cols || !out.rank.passed) {
    throw RankDeficiencyError("solve_ls: Psi is rank deficient (rank " +
                                  std::to_string(out.rank.rank) + " of " +
                                  std::to_string(cols) + ")",
                              out.rank);
  }
  const Vec z = rs.Psi.colPivHouseholderQr().solve(rs.Theta);
  if (!all_finite(z)) throw NumericalError("solve_ls: non-finite least-squares solution");
  out.residual = (rs.Psi * z - rs.Theta).norm();

  const Index np = tri_size(n);
  out.triple.P = unvech(z.head(np), n);
  out.triple.M = unvec(z.segment(np, m * n), m, n);
  out.triple.H = unvech(z.tail(tri_size(m)), m);
  return out;
}

/// Iterates assemble / solve_ls / gain update on one data batch.
/// With `model` set, residuals and stability abscissas are appended as
/// model-assisted diagnostics; the iteration itself never reads the model.
inline RunReport run_adp(const DataMatrices& data, const CostWeights& w, const Mat& k0, double eps,
                         std::size_t max_iter, const SystemModel* model = nullptr) {
  const auto t_start = std::chrono::steady_clock::now();
  data.validate();
  require_shape(k0, data.m, data.n, "run_adp: K0");
  if (!(eps > 0.0)) throw ConfigError("run_adp: eps must be positive");
  if (max_iter < 1) throw ConfigError("run_adp: max_iter must be at least 1");

  const RankReport rank = check_rank(data);
  if (!rank.passed) {
    throw RankDeficiencyError("run_adp: rank condition failed (rank " + std::to_string(rank.rank) +
                                  " of " + std::to_string(rank.required) +
                                  "); the exploration signal is not exciting enough",
                              rank);
  }

  RunReport report;
  report.mode = data.mode == DataMode::monte_carlo ? "adp_mc"
                : data.mode == DataMode::exact     ? "adp_exact"
                                                   : "adp_imported";
  report.model_assisted = model != nullptr;
  report.rank = rank;
  report.data_mode = to_string(data.mode);
  report.data_paths = data.paths;
  report.data_seed = data.seed;

  Mat k = k0;
  for (std::size_t i = 0; i < max_iter; ++i) {
    const RegressionSystem rs = assemble(data, w, k, i);
    LsSolution sol = solve_ls(rs, data.n, data.m);

    IterationRecord rec;
    rec.index = i;
    rec.K = k;
    rec.triple = std::move(sol.triple);
    rec.cond_psi = rs.cond;
    rec.rank = sol.rank.rank;
    rec.ls_residual = sol.residual;
    try {
      rec.K_next = policy_improve(w, rec.triple);
    } catch (const IndefiniteCurvature&) {
      throw IndefiniteCurvature("run_adp: R + H_" + std::to_string(i) +
                                " is not positive definite; the learned H is dominated by "
                                "sampling noise (collect more paths or lengthen the horizon)");
    }
    if (!report.records.empty()) {
      rec.delta_P = (rec.triple.P.mat() - report.records.back().triple.P.mat()).norm();
    }
    if (model != nullptr) {
      rec.sare_residual = sare_residual_R1(*model, w, rec.triple.P);
      rec.lyap_residual = lyap_residual_R2(*model, w, rec.triple.P, k);
      rec.ms_abscissa = ms_abscissa(close_loop(*model, k));
    }
    k = rec.K_next;
    const bool done = rec.delta_P && *rec.delta_P < eps;
    report.records.push_back(std::move(rec));
    if (done) {
      report.status = RunStatus::converged;
      break;
    }
  }

  const IterationRecord& last = report.records.back();
  report.final_triple = last.triple;
  report.final_K = last.K_next;
  report.residual_R1 = last.sare_residual;
  report.residual_R2 = last.lyap_residual;
  report.elapsed_seconds = detail::seconds_since(t_start);
  return report;
}

}  // namespace lqsadp

#endif  // LQSADP_ADP_HPP
