#ifndef LQSADP_TESTS_COMMON_HPP
#define LQSADP_TESTS_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "lqsadp/lqsadp.hpp"

namespace lqsadp::test {

inline const std::string kFixtureDir = LQSADP_FIXTURE_DIR;

/// The bundled two-state, single-input benchmark.
inline SystemModel two_state_system() {
  SystemModel s;
  s.A = Mat{{0.0, -0.6}, {0.6, -0.3}};
  s.B = Mat{{0.05}, {0.01}};
  s.C = Mat{{-0.02, 0.03}, {-0.05, 0.02}};
  s.D = Mat{{0.001}, {0.03}};
  return s;
}

inline CostWeights two_state_cost() {
  return {SymMat(Mat{{1.0, 0.0}, {0.0, 0.5}}), SymMat(Mat{{1.0}})};
}

inline ExplorationSignal three_sines() {
  ExplorationSignal sig;
  sig.channels = {{{0.8, 1.3, 0.0}, {0.6, 4.1, 0.5}, {0.5, 9.7, 1.0}}};
  return sig;
}

inline RolloutConfig two_state_rollout(std::size_t paths = 10000, std::uint64_t seed = 42) {
  RolloutConfig cfg;
  cfg.paths = paths;
  cfg.seed = seed;
  cfg.x0_list = {Vec{{0.5, -0.1}}};
  return cfg;
}

/// Published near-optimal value matrix and gain for the benchmark.
inline Mat published_P() { return Mat{{2.9072352, -0.8296538}, {-0.8296538, 2.4975686}}; }
inline Mat published_K() { return Mat{{-0.0669434, 0.0064058}}; }

inline SystemModel scalar_system(double a, double b, double c, double d) {
  return {Mat::Constant(1, 1, a), Mat::Constant(1, 1, b), Mat::Constant(1, 1, c),
          Mat::Constant(1, 1, d)};
}

inline CostWeights scalar_cost(double q, double r) {
  return {SymMat(Mat::Constant(1, 1, q)), SymMat(Mat::Constant(1, 1, r))};
}

/// Positive root of alpha p^2 + beta p + gamma = 0, cancellation-free form.
inline double positive_root(double alpha, double beta, double gamma) {
  const double disc = std::sqrt(beta * beta - 4.0 * alpha * gamma);
  const double q = -0.5 * (beta + (beta >= 0.0 ? disc : -disc));
  const double r1 = q / alpha;
  const double r2 = gamma / q;
  return r1 > 0.0 ? r1 : r2;
}

// Seeded generators for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  Index size(Index lo, Index hi) {
    return std::uniform_int_distribution<Index>(lo, hi)(rng_);
  }
  Mat matrix(Index r, Index c, double scale = 1.0) {
    Mat x(r, c);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = uniform(-scale, scale);
    return x;
  }
  Vec vector(Index n, double scale = 1.0) { return matrix(n, 1, scale); }
  SymMat symmetric(Index n) {
    const Mat x = matrix(n, n);
    return SymMat::symmetrize(x + x.transpose());
  }
  SymMat psd(Index n) {
    const Mat x = matrix(n, n);
    return SymMat::symmetrize(x * x.transpose());
  }
  /// Mean-square stable closed loop: shift a random drift left of its noise.
  ClosedLoop stable_closed_loop(Index n) {
    ClosedLoop cl;
    cl.Ccl = matrix(n, n, 0.5);
    const Mat a = matrix(n, n);
    const double noise = (cl.Ccl.transpose() * cl.Ccl).eigenvalues().real().maxCoeff();
    const double drift = (0.5 * (a + a.transpose())).eigenvalues().real().maxCoeff();
    cl.Acl = a - (drift + 0.5 * noise + uniform(0.1, 1.0)) * Mat::Identity(n, n);
    cl.K = Mat::Zero(1, n);
    return cl;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Relative difference against the larger of the two magnitudes.
inline double rel_diff(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

}  // namespace lqsadp::test

#endif  // LQSADP_TESTS_COMMON_HPP
