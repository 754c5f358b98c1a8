#ifndef LQSADP_MATSTACK_HPP
#define LQSADP_MATSTACK_HPP

// Dense matrix helpers and the vectorization maps used by the regression:
//
//   vec(B)   column stacking, vec([[a,b],[c,d]]) = [a,c,b,d]
//   vecs(x)  upper-triangular monomials [x1^2, x1x2, .., x1xn, x2^2, .., xn^2]
//   vech(F)  matching half-vectorization [f11, 2f12, .., 2f1n, f22, .., fnn]
//
// so that vech(F)^T vecs(x) = x^T F x. Kronecker products of vectors are
// x-major: kron(x, u) = [x1*u; x2*u; ..; xn*u], hence vec(M)^T kron(x, u) = u^T M x
// for M of shape m x n.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "lqsadp/errors.hpp"

namespace lqsadp {

using Index = Eigen::Index;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// n(n+1)/2
constexpr Index tri_size(Index n) noexcept { return n * (n + 1) / 2; }

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.derived().array().isFinite().all();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& x, const std::string& what) {
  if (!all_finite(x)) throw NumericalError(what + ": non-finite entry");
}

inline void require_shape(const Mat& x, Index rows, Index cols, const std::string& what) {
  if (x.rows() != rows || x.cols() != cols) {
    throw DimensionError(what + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + std::to_string(x.rows()) + "x" +
                         std::to_string(x.cols()));
  }
}

inline double max_abs(const Mat& x) { return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff(); }

/// Symmetric matrix stored in full, symmetrized on construction.
class SymMat {
 public:
  static constexpr double kSymmetryTol = 1e-10;

  SymMat() = default;

  explicit SymMat(const Mat& s) {
    if (s.rows() != s.cols()) {
      throw DimensionError("SymMat: matrix is " + std::to_string(s.rows()) + "x" +
                           std::to_string(s.cols()) + ", not square");
    }
    require_finite(s, "SymMat");
    const double asym = max_abs(s - s.transpose());
    if (asym > kSymmetryTol * std::max(1.0, max_abs(s))) {
      throw Error("SymMat: matrix is not symmetric (max |S - S^T| = " +
                  std::to_string(asym) + ")");
    }
    m_ = 0.5 * (s + s.transpose());
  }

  static SymMat zero(Index n) { return SymMat(Mat::Zero(n, n)); }
  static SymMat identity(Index n) { return SymMat(Mat::Identity(n, n)); }
  /// Symmetrizes without the tolerance check.
  static SymMat symmetrize(const Mat& s) {
    SymMat out;
    out.m_ = 0.5 * (s + s.transpose());
    return out;
  }

  Index dim() const noexcept { return m_.rows(); }
  const Mat& mat() const noexcept { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

  double min_eigenvalue() const {
    if (m_.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(m_, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("SymMat: eigen-solver failure");
    return es.eigenvalues()(0);
  }

  friend bool operator==(const SymMat& a, const SymMat& b) { return a.m_ == b.m_; }

 private:
  Mat m_;
};

/// Kronecker product; block (i, j) of the result is a(i, j) * b.
template <typename DerivedA, typename DerivedB>
Mat kron(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  const Index p = a.rows(), q = a.cols(), r = b.rows(), s = b.cols();
  Mat out(p * r, q * s);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < q; ++j) out.block(i * r, j * s, r, s) = a(i, j) * b;
  return out;
}

/// Column-stacking vectorization.
template <typename Derived>
Vec vec(const Eigen::MatrixBase<Derived>& b) {
  Mat tmp = b;
  return Eigen::Map<const Vec>(tmp.data(), tmp.size());
}

/// Inverse of vec for a rows x cols matrix.
inline Mat unvec(const Vec& v, Index rows, Index cols) {
  if (v.size() != rows * cols) {
    throw DimensionError("unvec: length " + std::to_string(v.size()) + " != " +
                         std::to_string(rows) + "*" + std::to_string(cols));
  }
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

inline Vec vecs(const Vec& xi) {
  const Index n = xi.size();
  Vec out(tri_size(n));
  Index k = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) out(k++) = xi(i) * xi(j);
  return out;
}

/// vecs of a symmetric second-moment matrix: upper triangle in vecs order.
/// Equals E[vecs(x)] when s = E[x x^T].
inline Vec upper_triangle(const Mat& s) {
  const Index n = s.rows();
  Vec out(tri_size(n));
  Index k = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) out(k++) = s(i, j);
  return out;
}

inline Vec vech(const SymMat& f) {
  const Index n = f.dim();
  Vec out(tri_size(n));
  Index k = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) out(k++) = (i == j ? 1.0 : 2.0) * f(i, j);
  return out;
}

inline SymMat unvech(const Vec& v, Index n) {
  if (n < 0 || v.size() != tri_size(n)) {
    throw DimensionError("unvech: length " + std::to_string(v.size()) +
                         " does not match n(n+1)/2 for n = " + std::to_string(n));
  }
  Mat f(n, n);
  Index k = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      const double val = (i == j) ? v(k) : 0.5 * v(k);
      f(i, j) = val;
      f(j, i) = val;
      ++k;
    }
  }
  return SymMat::symmetrize(f);
}

/// Gamma(K) with vecs(K x) = Gamma(K) kron(x, x) for every x.
/// Row (a,b), a <= b, column p*n + l holds K(a,p) * K(b,l).
inline Mat gamma_of_K(const Mat& k) {
  const Index m = k.rows(), n = k.cols();
  Mat g(tri_size(m), n * n);
  Index row = 0;
  for (Index a = 0; a < m; ++a) {
    for (Index b = a; b < m; ++b) {
      for (Index p = 0; p < n; ++p)
        for (Index l = 0; l < n; ++l) g(row, p * n + l) = k(a, p) * k(b, l);
      ++row;
    }
  }
  return g;
}

}  // namespace lqsadp

#endif  // LQSADP_MATSTACK_HPP
