#ifndef LQSADP_STABILITY_HPP
#define LQSADP_STABILITY_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "lqsadp/errors.hpp"
#include "lqsadp/matstack.hpp"

namespace lqsadp {

/// dx = (A x + B u) ds + (C x + D u) dw with scalar Brownian motion w.
struct SystemModel {
  Mat A;  // n x n
  Mat B;  // n x m
  Mat C;  // n x n
  Mat D;  // n x m

  Index n() const noexcept { return A.rows(); }
  Index m() const noexcept { return B.cols(); }

  void validate() const {
    const Index nn = A.rows();
    const Index mm = B.cols();
    if (nn < 1 || mm < 1) throw DimensionError("SystemModel: n and m must be at least 1");
    require_shape(A, nn, nn, "SystemModel.A");
    require_shape(B, nn, mm, "SystemModel.B");
    require_shape(C, nn, nn, "SystemModel.C");
    require_shape(D, nn, mm, "SystemModel.D");
    require_finite(A, "SystemModel.A");
    require_finite(B, "SystemModel.B");
    require_finite(C, "SystemModel.C");
    require_finite(D, "SystemModel.D");
  }
};

/// Closed loop under u = K x.
struct ClosedLoop {
  Mat Acl;  // A + B K
  Mat Ccl;  // C + D K
  Mat K;
};

inline ClosedLoop close_loop(const SystemModel& sys, const Mat& k) {
  sys.validate();
  require_shape(k, sys.m(), sys.n(), "close_loop: K");
  return ClosedLoop{sys.A + sys.B * k, sys.C + sys.D * k, k};
}

/// Generator of d vec(E[x x^T]) / ds for the closed loop:
/// I (x) Acl + Acl (x) I + Ccl (x) Ccl.
inline Mat ms_generator(const ClosedLoop& cl) {
  const Index n = cl.Acl.rows();
  const Mat eye = Mat::Identity(n, n);
  return kron(eye, cl.Acl) + kron(cl.Acl, eye) + kron(cl.Ccl, cl.Ccl);
}

inline constexpr double kStabilityMargin = 1e-9;

struct StabilityResult {
  bool stable = false;
  double abscissa = 0.0;  // max Re(eig(L))
};

/// Spectral abscissa of the second-moment generator.
inline double ms_abscissa(const ClosedLoop& cl) {
  const Mat l = ms_generator(cl);
  Eigen::EigenSolver<Mat> es(l, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw NumericalError("ms_abscissa: eigen-solver failed on the second-moment generator");
  }
  return es.eigenvalues().real().maxCoeff();
}

inline StabilityResult is_ms_stabilizing(const SystemModel& sys, const Mat& k,
                                         double margin = kStabilityMargin) {
  const double a = ms_abscissa(close_loop(sys, k));
  return {a < -margin, a};
}

inline constexpr double kMaxLyapunovCondition = 1e12;

/// Unique symmetric P with Acl^T P + P Acl + Ccl^T P Ccl + W = 0.
inline SymMat glyap_solve(const ClosedLoop& cl, const SymMat& w) {
  const Index n = cl.Acl.rows();
  require_shape(cl.Ccl, n, n, "glyap_solve: Ccl");
  require_shape(w.mat(), n, n, "glyap_solve: W");
  const Mat eye = Mat::Identity(n, n);
  const Mat at = cl.Acl.transpose();
  const Mat ct = cl.Ccl.transpose();
  const Mat op = kron(eye, at) + kron(at, eye) + kron(ct, ct);

  Eigen::PartialPivLU<Mat> lu(op);
  const double rcond = lu.rcond();
  if (!(rcond * kMaxLyapunovCondition > 1.0)) {
    throw NonStabilizingGain("glyap_solve: generalized Lyapunov operator is singular or "
                             "ill-conditioned (cond ~ " +
                             std::to_string(rcond > 0 ? 1.0 / rcond : INFINITY) +
                             "); the gain is not mean-square stabilizing");
  }
  const Vec p = lu.solve(-vec(w.mat()));
  require_finite(p, "glyap_solve");
  return SymMat::symmetrize(unvec(p, n, n));
}

}  // namespace lqsadp

#endif  // LQSADP_STABILITY_HPP
