#ifndef LQSADP_MODEL_PI_HPP
#define LQSADP_MODEL_PI_HPP

// Model-based policy iteration on the stochastic algebraic Riccati equation
//
//   P A + A^T P + C^T P C + Q - (P B + C^T P D)(R + D^T P D)^{-1}(B^T P + D^T P C) = 0
//
// alternating policy evaluation (a generalized Lyapunov solve) with the gain
// update K <- -(R + D^T P D)^{-1}(B^T P + D^T P C).

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lqsadp/errors.hpp"
#include "lqsadp/matstack.hpp"
#include "lqsadp/report.hpp"
#include "lqsadp/stability.hpp"

namespace lqsadp {

struct CostWeights {
  SymMat Q;  // PSD
  SymMat R;  // PD

  static constexpr double kPsdTol = 1e-10;

  void validate() const {
    if (Q.dim() < 1 || R.dim() < 1) throw DimensionError("CostWeights: empty Q or R");
    if (!(R.min_eigenvalue() > 0.0)) throw ConfigError("R must be positive definite");
    if (!(Q.min_eigenvalue() >= -kPsdTol)) throw ConfigError("Q must be positive semidefinite");
  }
};

namespace detail {

inline void require_dims(const SystemModel& sys, const CostWeights& w) {
  sys.validate();
  require_shape(w.Q.mat(), sys.n(), sys.n(), "CostWeights.Q");
  require_shape(w.R.mat(), sys.m(), sys.m(), "CostWeights.R");
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Solves the policy-evaluation equation for a stabilizing K.
inline EvaluationTriple policy_eval(const SystemModel& sys, const CostWeights& w, const Mat& k) {
  detail::require_dims(sys, w);
  const ClosedLoop cl = close_loop(sys, k);
  const double a = ms_abscissa(cl);
  if (!(a < -kStabilityMargin)) {
    throw NonStabilizingGain("policy_eval: gain is not mean-square stabilizing (abscissa " +
                                 std::to_string(a) + ")",
                             0, a);
  }
  const SymMat p = glyap_solve(cl, SymMat::symmetrize(w.Q.mat() + k.transpose() * w.R.mat() * k));
  const Mat& pm = p.mat();
  return {p, sys.B.transpose() * pm + sys.D.transpose() * pm * sys.C,
          SymMat::symmetrize(sys.D.transpose() * pm * sys.D)};
}

/// K_next = -(R + H)^{-1} M via a Cholesky solve.
inline Mat policy_improve(const CostWeights& w, const EvaluationTriple& t) {
  const Index m = w.R.dim();
  require_shape(t.H.mat(), m, m, "policy_improve: H");
  if (t.M.rows() != m) throw DimensionError("policy_improve: M must have m rows");
  Eigen::LLT<Mat> llt(w.R.mat() + t.H.mat());
  if (llt.info() != Eigen::Success) {
    throw IndefiniteCurvature("policy_improve: R + H is not positive definite");
  }
  Mat k = -llt.solve(t.M);
  require_finite(k, "policy_improve");
  return k;
}

/// Frobenius norm of the Riccati left side at P.
inline double sare_residual_R1(const SystemModel& sys, const CostWeights& w, const SymMat& p) {
  detail::require_dims(sys, w);
  require_shape(p.mat(), sys.n(), sys.n(), "sare_residual_R1: P");
  const Mat& pm = p.mat();
  const Mat& a = sys.A;
  const Mat& b = sys.B;
  const Mat& c = sys.C;
  const Mat& d = sys.D;
  const Mat cross = b.transpose() * pm + d.transpose() * pm * c;  // m x n
  Eigen::FullPivLU<Mat> lu(w.R.mat() + d.transpose() * pm * d);
  if (!lu.isInvertible()) throw IndefiniteCurvature("sare_residual_R1: R + D^T P D is singular");
  const Mat lhs = pm * a + a.transpose() * pm + c.transpose() * pm * c + w.Q.mat() -
                  cross.transpose() * lu.solve(cross);
  return lhs.norm();
}

/// Frobenius norm of the policy-evaluation left side at (P, K).
inline double lyap_residual_R2(const SystemModel& sys, const CostWeights& w, const SymMat& p,
                               const Mat& k) {
  detail::require_dims(sys, w);
  require_shape(p.mat(), sys.n(), sys.n(), "lyap_residual_R2: P");
  const ClosedLoop cl = close_loop(sys, k);
  const Mat& pm = p.mat();
  const Mat lhs = pm * cl.Acl + cl.Acl.transpose() * pm + w.Q.mat() +
                  cl.Ccl.transpose() * pm * cl.Ccl + k.transpose() * w.R.mat() * k;
  return lhs.norm();
}

inline constexpr double kDefaultModelEps = 1e-10;
inline constexpr std::size_t kDefaultMaxIter = 200;

inline RunReport run_model_pi(const SystemModel& sys, const CostWeights& w, const Mat& k0,
                              double eps = kDefaultModelEps,
                              std::size_t max_iter = kDefaultMaxIter) {
  const auto t_start = std::chrono::steady_clock::now();
  detail::require_dims(sys, w);
  require_shape(k0, sys.m(), sys.n(), "run_model_pi: K0");
  if (!(eps > 0.0)) throw ConfigError("run_model_pi: eps must be positive");
  if (max_iter < 1) throw ConfigError("run_model_pi: max_iter must be at least 1");

  RunReport report;
  report.mode = "model_pi";
  report.model_assisted = true;

  Mat k = k0;
  for (std::size_t i = 0; i < max_iter; ++i) {
    const StabilityResult st = is_ms_stabilizing(sys, k);
    if (!st.stable) {
      throw NonStabilizingGain("run_model_pi: iterate " + std::to_string(i) +
                                   " is not mean-square stabilizing (abscissa " +
                                   std::to_string(st.abscissa) + ")",
                               i, st.abscissa);
    }
    IterationRecord rec;
    rec.index = i;
    rec.K = k;
    rec.triple = policy_eval(sys, w, k);
    rec.K_next = policy_improve(w, rec.triple);
    rec.ms_abscissa = st.abscissa;
    rec.sare_residual = sare_residual_R1(sys, w, rec.triple.P);
    rec.lyap_residual = lyap_residual_R2(sys, w, rec.triple.P, k);
    if (!report.records.empty()) {
      rec.delta_P = (rec.triple.P.mat() - report.records.back().triple.P.mat()).norm();
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

#endif  // LQSADP_MODEL_PI_HPP
