#ifndef LQSADP_DATAGEN_HPP
#define LQSADP_DATAGEN_HPP

// Expectation data for the data-driven iteration. Over a grid
// t_0 < t_1 < ... < t_q the rows of the five blocks are
//
//   eta_xbar  E[vecs(x(t_{k+1})) - vecs(x(t_k))]
//   eta_ubar  E[int vecs(u) ds]
//   eta_xx    E[int x (x) x ds]
//   eta_xu    E[int x (x) u ds]
//   eta_Kx    E[int vecs(K x) ds]  (derived from eta_xx, see eta_Kx)
//
// with the behaviour input u = K0 x + e(t). Two producers: Monte Carlo means of
// Euler-Maruyama paths, and an exact propagation of E[x] and E[x x^T].

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "lqsadp/errors.hpp"
#include "lqsadp/format.hpp"
#include "lqsadp/matstack.hpp"
#include "lqsadp/parallel.hpp"
#include "lqsadp/stability.hpp"

namespace lqsadp {

struct Sinusoid {
  double amplitude = 0.0;
  double frequency = 0.0;  // rad per unit time
  double phase = 0.0;
};

/// Sum-of-sinusoids exploration, one list of sinusoids per input channel.
struct ExplorationSignal {
  std::vector<std::vector<Sinusoid>> channels;
  // Standard deviation of an additional white input perturbation, held over
  // each integrator substep. Experimental, Monte Carlo only.
  double white_std = 0.0;

  static ExplorationSignal none(Index m) {
    ExplorationSignal s;
    s.channels.resize(static_cast<std::size_t>(m));
    return s;
  }

  Index dim() const noexcept { return static_cast<Index>(channels.size()); }

  bool enabled() const {
    for (const auto& ch : channels)
      for (const auto& s : ch)
        if (s.amplitude != 0.0) return true;
    return white_std > 0.0;
  }

  bool deterministic() const noexcept { return white_std == 0.0; }

  void validate(Index m) const {
    if (dim() != m) {
      throw DimensionError("ExplorationSignal: " + std::to_string(dim()) +
                           " channels for an input of dimension " + std::to_string(m));
    }
    if (!(white_std >= 0.0) || !std::isfinite(white_std)) {
      throw ConfigError("ExplorationSignal: white_std must be finite and non-negative");
    }
    bool any_sine = false;
    for (const auto& ch : channels) {
      for (const auto& s : ch) {
        if (!std::isfinite(s.amplitude) || !std::isfinite(s.frequency) ||
            !std::isfinite(s.phase)) {
          throw ConfigError("ExplorationSignal: non-finite sinusoid parameter");
        }
        any_sine = any_sine || s.amplitude != 0.0;
      }
    }
    if (!any_sine) return;
    for (std::size_t c = 0; c < channels.size(); ++c) {
      bool excited = false;
      for (const auto& s : channels[c]) excited = excited || s.amplitude != 0.0;
      if (!excited) {
        throw ConfigError("ExplorationSignal: channel " + std::to_string(c) +
                          " has no sinusoid with nonzero amplitude");
      }
    }
  }
};

/// e(t) = sum_j a_j sin(w_j t + phi_j), per channel.
inline Vec eval_exploration(const ExplorationSignal& sig, double t) {
  Vec e = Vec::Zero(sig.dim());
  for (Index c = 0; c < sig.dim(); ++c)
    for (const auto& s : sig.channels[static_cast<std::size_t>(c)])
      e(c) += s.amplitude * std::sin(s.frequency * t + s.phase);
  return e;
}

struct RolloutConfig {
  double t0 = 0.0;
  std::size_t q = 60;
  double interval_len = 0.05;
  double sde_step = 1e-3;
  std::size_t paths = 10000;
  std::uint64_t seed = 42;
  std::vector<Vec> x0_list;

  static constexpr double kDivisibilityTol = 1e-12;

  std::size_t steps_per_interval() const {
    return static_cast<std::size_t>(std::llround(interval_len / sde_step));
  }
  /// Substep index of t_0; simulation always starts from x0 at time 0.
  std::size_t first_step() const {
    return static_cast<std::size_t>(std::llround(t0 / sde_step));
  }
  std::size_t total_steps() const { return first_step() + q * steps_per_interval(); }
  double node_time(std::size_t j) const { return static_cast<double>(j) * sde_step; }

  std::vector<double> grid() const {
    std::vector<double> g(q + 1);
    for (std::size_t k = 0; k <= q; ++k) g[k] = node_time(first_step() + k * steps_per_interval());
    return g;
  }

  void validate(Index n) const {
    if (!(sde_step > 0.0) || !std::isfinite(sde_step))
      throw ConfigError("RolloutConfig: sde_step must be positive");
    if (!(interval_len > 0.0) || !std::isfinite(interval_len))
      throw ConfigError("RolloutConfig: interval_len must be positive");
    if (!(t0 >= 0.0) || !std::isfinite(t0))
      throw ConfigError("RolloutConfig: t0 must be non-negative");
    if (q < 1) throw ConfigError("RolloutConfig: q must be at least 1");
    if (paths < 1) throw ConfigError("RolloutConfig: paths must be at least 1");
    auto divides = [&](double span) {
      const double r = span / sde_step;
      return std::abs(r - std::round(r)) <= kDivisibilityTol * std::max(1.0, r);
    };
    if (!divides(interval_len) || steps_per_interval() < 1)
      throw ConfigError("RolloutConfig: sde_step must divide interval_len");
    if (!divides(t0)) throw ConfigError("RolloutConfig: sde_step must divide t0");
    if (x0_list.empty()) throw ConfigError("RolloutConfig: x0_list is empty");
    for (std::size_t r = 0; r < x0_list.size(); ++r) {
      if (x0_list[r].size() != n) {
        throw DimensionError("RolloutConfig: x0_list[" + std::to_string(r) + "] has length " +
                             std::to_string(x0_list[r].size()) + ", expected " +
                             std::to_string(n));
      }
      require_finite(x0_list[r], "RolloutConfig.x0_list");
    }
  }
};

enum class DataMode { monte_carlo, exact, imported };

inline const char* to_string(DataMode m) {
  switch (m) {
    case DataMode::monte_carlo: return "monte_carlo";
    case DataMode::exact: return "exact";
    case DataMode::imported: return "imported";
  }
  return "unknown";
}

/// Rows are stacked rollout-major: row r*q + k is interval k of initial state r.
struct DataMatrices {
  Index n = 0;
  Index m = 0;
  Mat eta_xbar;  // rows x n(n+1)/2
  Mat eta_ubar;  // rows x m(m+1)/2
  Mat eta_xx;    // rows x n^2
  Mat eta_xu;    // rows x mn
  std::vector<double> grid;  // q + 1 times
  DataMode mode = DataMode::exact;
  std::size_t rollouts = 1;
  std::size_t paths = 0;      // Monte Carlo only
  std::uint64_t seed = 0;     // Monte Carlo only
  double step = 0.0;          // integrator substep

  Index rows() const noexcept { return eta_xx.rows(); }

  void validate() const {
    if (n < 1 || m < 1) throw DimensionError("DataMatrices: n and m must be at least 1");
    if (grid.size() < 2) throw DimensionError("DataMatrices: grid needs at least two points");
    const Index q = static_cast<Index>(grid.size()) - 1;
    const Index r = q * static_cast<Index>(rollouts);
    require_shape(eta_xbar, r, tri_size(n), "DataMatrices.eta_xbar");
    require_shape(eta_ubar, r, tri_size(m), "DataMatrices.eta_ubar");
    require_shape(eta_xx, r, n * n, "DataMatrices.eta_xx");
    require_shape(eta_xu, r, m * n, "DataMatrices.eta_xu");
    require_finite(eta_xbar, "DataMatrices.eta_xbar");
    require_finite(eta_ubar, "DataMatrices.eta_ubar");
    require_finite(eta_xx, "DataMatrices.eta_xx");
    require_finite(eta_xu, "DataMatrices.eta_xu");
    for (std::size_t k = 1; k < grid.size(); ++k)
      if (!(grid[k] > grid[k - 1])) throw DimensionError("DataMatrices: grid is not increasing");
  }
};

/// eta_Kx = eta_xx Gamma(K)^T, i.e. E[int vecs(K x) ds] without new data.
inline Mat eta_Kx(const DataMatrices& data, const Mat& k) {
  require_shape(k, data.m, data.n, "eta_Kx: K");
  return data.eta_xx * gamma_of_K(k).transpose();
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct SamplePath {
  std::size_t rollout = 0;
  std::size_t path = 0;  // global index r * paths + p, also the RNG substream id
  Mat x;                 // n x (steps + 1)
  Mat u;                 // m x (steps + 1)
};

struct TrajectoryBatch {
  Index n = 0;
  Index m = 0;
  std::size_t paths_per_rollout = 0;
  std::size_t steps = 0;
  double step = 0.0;
  std::vector<SamplePath> paths;  // ordered by global path index
};

namespace detail {

inline constexpr double kBlowUp = 1e12;
inline constexpr std::size_t kBlockPaths = 64;

inline std::mt19937_64 path_engine(std::uint64_t seed, std::uint64_t path) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
  return std::mt19937_64(seq);
}

/// Euler-Maruyama under u = K0 x + e(t) (+ white perturbation).
class PathSimulator {
 public:
  PathSimulator(const SystemModel& sys, const Mat& k0, const ExplorationSignal& sig,
                const RolloutConfig& cfg)
      : sys_(sys), k0_(k0), sig_(sig), cfg_(cfg), steps_(cfg.total_steps()) {
    sys.validate();
    require_shape(k0, sys.m(), sys.n(), "K0");
    sig.validate(sys.m());
    cfg.validate(sys.n());
    e_.resize(sys.m(), static_cast<Index>(steps_ + 1));
    for (std::size_t j = 0; j <= steps_; ++j)
      e_.col(static_cast<Index>(j)) = eval_exploration(sig, cfg.node_time(j));
  }

  std::size_t steps() const noexcept { return steps_; }

  /// Calls visit(j, x_j, u_j) for j = 0..steps.
  template <typename Visitor>
  void run(std::size_t rollout, std::size_t global_path, Visitor&& visit) const {
    const Index n = sys_.n();
    const Index m = sys_.m();
    const double h = cfg_.sde_step;
    const double sqrt_h = std::sqrt(h);
    std::mt19937_64 rng = path_engine(cfg_.seed, global_path);
    std::normal_distribution<double> normal(0.0, 1.0);

    Vec x = cfg_.x0_list[rollout];
    Vec u(m), drift(n), diffusion(n);
    const Mat& a = sys_.A;
    const Mat& b = sys_.B;
    const Mat& c = sys_.C;
    const Mat& d = sys_.D;
    for (std::size_t j = 0;; ++j) {
      const double* e = e_.col(static_cast<Index>(j)).data();
      for (Index r = 0; r < m; ++r) {
        double acc = e[r];
        for (Index k = 0; k < n; ++k) acc += k0_(r, k) * x(k);
        u(r) = acc;
      }
      if (sig_.white_std > 0.0)
        for (Index r = 0; r < m; ++r) u(r) += sig_.white_std * normal(rng);
      visit(j, static_cast<const Vec&>(x), static_cast<const Vec&>(u));
      if (j == steps_) break;

      for (Index i = 0; i < n; ++i) {
        double fa = 0.0, fc = 0.0;
        for (Index k = 0; k < n; ++k) {
          fa += a(i, k) * x(k);
          fc += c(i, k) * x(k);
        }
        for (Index k = 0; k < m; ++k) {
          fa += b(i, k) * u(k);
          fc += d(i, k) * u(k);
        }
        drift(i) = fa;
        diffusion(i) = fc;
      }
      const double dw = sqrt_h * normal(rng);
      for (Index i = 0; i < n; ++i) x(i) += h * drift(i) + dw * diffusion(i);

      const double norm2 = x.squaredNorm();
      if (!(norm2 <= kBlowUp * kBlowUp)) {
        const double t = cfg_.node_time(j + 1);
        throw InstabilityError("simulate: state blew up on path " + std::to_string(global_path) +
                                   " at t = " + format_double(t),
                               global_path, t);
      }
    }
  }

 private:
  const SystemModel& sys_;
  const Mat& k0_;
  const ExplorationSignal& sig_;
  const RolloutConfig& cfg_;
  std::size_t steps_;
  Mat e_;  // e(t_j), m x (steps + 1)
};

/// Per-path eta contributions, one column per interval, rows laid out as
/// [xbar | ubar | xx | xu]. Trapezoidal quadrature on substeps.
class EtaAccumulator {
 public:
  EtaAccumulator(Index n, Index m, const RolloutConfig& cfg)
      : n_(n),
        m_(m),
        first_(cfg.first_step()),
        per_(cfg.steps_per_interval()),
        q_(cfg.q),
        half_h_(0.5 * cfg.sde_step),
        out_(tri_size(n) + tri_size(m) + n * n + m * n, static_cast<Index>(cfg.q)),
        prev_(tri_size(m) + n * n + m * n),
        cur_(prev_.size()) {
    out_.setZero();
  }

  void reset() { out_.setZero(); }
  const Mat& contributions() const noexcept { return out_; }

  void operator()(std::size_t j, const Vec& x, const Vec& u) {
    // Integrand at node j: [vecs(u), x (x) x, x (x) u].
    Index c = 0;
    for (Index a = 0; a < m_; ++a)
      for (Index b = a; b < m_; ++b) cur_(c++) = u(a) * u(b);
    for (Index p = 0; p < n_; ++p)
      for (Index l = 0; l < n_; ++l) cur_(c++) = x(p) * x(l);
    for (Index p = 0; p < n_; ++p)
      for (Index a = 0; a < m_; ++a) cur_(c++) = x(p) * u(a);

    if (j > first_ && j <= first_ + q_ * per_) {
      const Index k = static_cast<Index>((j - 1 - first_) / per_);
      out_.col(k).tail(cur_.size()) += half_h_ * (prev_ + cur_);
    }
    if (j >= first_ && (j - first_) % per_ == 0) {
      const std::size_t g = (j - first_) / per_;
      if (g <= q_) {
        Index col = 0;
        for (Index a = 0; a < n_; ++a) {
          for (Index b = a; b < n_; ++b, ++col) {
            const double v = x(a) * x(b);
            if (g < q_) out_(col, static_cast<Index>(g)) -= v;
            if (g > 0) out_(col, static_cast<Index>(g - 1)) += v;
          }
        }
      }
    }
    prev_.swap(cur_);
  }

 private:
  Index n_, m_;
  std::size_t first_, per_, q_;
  double half_h_;
  Mat out_;
  Vec prev_, cur_;
};

inline DataMatrices split_blocks(const std::vector<Mat>& per_rollout, Index n, Index m,
                                 const RolloutConfig& cfg, DataMode mode) {
  const Index q = static_cast<Index>(cfg.q);
  const Index rows = q * static_cast<Index>(per_rollout.size());
  DataMatrices d;
  d.n = n;
  d.m = m;
  d.eta_xbar.resize(rows, tri_size(n));
  d.eta_ubar.resize(rows, tri_size(m));
  d.eta_xx.resize(rows, n * n);
  d.eta_xu.resize(rows, m * n);
  for (std::size_t r = 0; r < per_rollout.size(); ++r) {
    const Mat t = per_rollout[r].transpose();
    const Index r0 = static_cast<Index>(r) * q;
    Index c = 0;
    d.eta_xbar.middleRows(r0, q) = t.middleCols(c, tri_size(n));
    c += tri_size(n);
    d.eta_ubar.middleRows(r0, q) = t.middleCols(c, tri_size(m));
    c += tri_size(m);
    d.eta_xx.middleRows(r0, q) = t.middleCols(c, n * n);
    c += n * n;
    d.eta_xu.middleRows(r0, q) = t.middleCols(c, m * n);
  }
  d.grid = cfg.grid();
  d.mode = mode;
  d.rollouts = per_rollout.size();
  d.step = cfg.sde_step;
  return d;
}

/// Blocks of kBlockPaths consecutive paths per rollout; fixed regardless of
/// worker count so the reduction order never changes.
struct BlockPlan {
  std::size_t rollouts;
  std::size_t paths;
  std::size_t blocks_per_rollout;

  BlockPlan(std::size_t r, std::size_t p)
      : rollouts(r), paths(p), blocks_per_rollout((p + kBlockPaths - 1) / kBlockPaths) {}

  std::size_t tasks() const { return rollouts * blocks_per_rollout; }
  std::size_t rollout(std::size_t task) const { return task / blocks_per_rollout; }
  std::size_t begin(std::size_t task) const { return (task % blocks_per_rollout) * kBlockPaths; }
  std::size_t end(std::size_t task) const { return std::min(paths, begin(task) + kBlockPaths); }
};

/// Sums block partials in task order and scales to sample means.
inline std::vector<Mat> reduce_blocks(const BlockPlan& plan, const std::vector<Mat>& partial) {
  std::vector<Mat> out;
  for (std::size_t r = 0; r < plan.rollouts; ++r) {
    Mat total = partial[r * plan.blocks_per_rollout];
    for (std::size_t b = 1; b < plan.blocks_per_rollout; ++b)
      total += partial[r * plan.blocks_per_rollout + b];
    out.push_back(total / static_cast<double>(plan.paths));
  }
  return out;
}

}  // namespace detail

/// Simulates and stores every path. Memory is paths * steps * (n + m); use the
/// streaming collect_data_mc overload for large batches.
inline TrajectoryBatch simulate_paths(const SystemModel& sys, const Mat& k0,
                                      const ExplorationSignal& sig, const RolloutConfig& cfg) {
  const detail::PathSimulator sim(sys, k0, sig, cfg);
  TrajectoryBatch batch;
  batch.n = sys.n();
  batch.m = sys.m();
  batch.paths_per_rollout = cfg.paths;
  batch.steps = sim.steps();
  batch.step = cfg.sde_step;
  const std::size_t total = cfg.x0_list.size() * cfg.paths;
  batch.paths.resize(total);
  const Index cols = static_cast<Index>(sim.steps() + 1);
  parallel_tasks(total, default_workers(), [&](std::size_t g) {
    SamplePath& sp = batch.paths[g];
    sp.rollout = g / cfg.paths;
    sp.path = g;
    sp.x.resize(sys.n(), cols);
    sp.u.resize(sys.m(), cols);
    sim.run(sp.rollout, g, [&](std::size_t j, const Vec& x, const Vec& u) {
      sp.x.col(static_cast<Index>(j)) = x;
      sp.u.col(static_cast<Index>(j)) = u;
    });
  });
  return batch;
}

/// Sample-mean eta matrices from a stored batch.
inline DataMatrices collect_data_mc(const TrajectoryBatch& batch, const RolloutConfig& cfg) {
  cfg.validate(batch.n);
  if (batch.paths.size() != cfg.x0_list.size() * cfg.paths || batch.paths_per_rollout != cfg.paths)
    throw DimensionError("collect_data_mc: batch does not match the rollout configuration");
  if (batch.steps < cfg.total_steps())
    throw DimensionError("collect_data_mc: batch does not cover [t_0, t_q]");

  const detail::BlockPlan plan(cfg.x0_list.size(), cfg.paths);
  std::vector<Mat> partial(plan.tasks());
  parallel_tasks(plan.tasks(), default_workers(), [&](std::size_t task) {
    detail::EtaAccumulator acc(batch.n, batch.m, cfg);
    Mat sum = Mat::Zero(acc.contributions().rows(), acc.contributions().cols());
    const std::size_t r = plan.rollout(task);
    for (std::size_t p = plan.begin(task); p < plan.end(task); ++p) {
      const SamplePath& sp = batch.paths[r * cfg.paths + p];
      acc.reset();
      for (std::size_t j = 0; j <= cfg.total_steps(); ++j) {
        const Vec x = sp.x.col(static_cast<Index>(j));
        const Vec u = sp.u.col(static_cast<Index>(j));
        acc(j, x, u);
      }
      sum += acc.contributions();
    }
    partial[task] = std::move(sum);
  });

  DataMatrices d = detail::split_blocks(detail::reduce_blocks(plan, partial), batch.n, batch.m,
                                        cfg, DataMode::monte_carlo);
  d.paths = cfg.paths;
  d.seed = cfg.seed;
  return d;
}

/// Streaming variant: simulates and reduces block by block without storing
/// paths. Bit-identical to collect_data_mc(simulate_paths(...), cfg).
inline DataMatrices collect_data_mc(const SystemModel& sys, const Mat& k0,
                                    const ExplorationSignal& sig, const RolloutConfig& cfg,
                                    std::size_t workers = default_workers()) {
  const detail::PathSimulator sim(sys, k0, sig, cfg);
  const detail::BlockPlan plan(cfg.x0_list.size(), cfg.paths);
  std::vector<Mat> partial(plan.tasks());
  parallel_tasks(plan.tasks(), workers, [&](std::size_t task) {
    detail::EtaAccumulator acc(sys.n(), sys.m(), cfg);
    Mat sum = Mat::Zero(acc.contributions().rows(), acc.contributions().cols());
    const std::size_t r = plan.rollout(task);
    for (std::size_t p = plan.begin(task); p < plan.end(task); ++p) {
      acc.reset();
      sim.run(r, r * cfg.paths + p, acc);
      sum += acc.contributions();
    }
    partial[task] = std::move(sum);
  });

  DataMatrices d = detail::split_blocks(detail::reduce_blocks(plan, partial), sys.n(), sys.m(),
                                        cfg, DataMode::monte_carlo);
  d.paths = cfg.paths;
  d.seed = cfg.seed;
  return d;
}

/// CSV dump, columns t,path_id,x_1..x_n,u_1..u_m, one row per substep.
inline void dump_paths_csv(const SystemModel& sys, const Mat& k0, const ExplorationSignal& sig,
                           const RolloutConfig& cfg, std::ostream& os) {
  const detail::PathSimulator sim(sys, k0, sig, cfg);
  os << "t,path_id";
  for (Index i = 0; i < sys.n(); ++i) os << ",x_" << (i + 1);
  for (Index i = 0; i < sys.m(); ++i) os << ",u_" << (i + 1);
  os << '\n';
  for (std::size_t r = 0; r < cfg.x0_list.size(); ++r) {
    for (std::size_t p = 0; p < cfg.paths; ++p) {
      const std::size_t g = r * cfg.paths + p;
      sim.run(r, g, [&](std::size_t j, const Vec& x, const Vec& u) {
        os << format_double(cfg.node_time(j)) << ',' << g;
        for (Index i = 0; i < x.size(); ++i) os << ',' << format_double(x(i));
        for (Index i = 0; i < u.size(); ++i) os << ',' << format_double(u(i));
        os << '\n';
      });
    }
  }
}

// ---------------------------------------------------------------------------
// Exact moments
//
// With deterministic e and u = K0 x + e, m = E[x] and S = E[x x^T] satisfy
//   dm/ds = Acl m + B e
//   dS/ds = Acl S + S Acl^T + Ccl S Ccl^T + B e m^T + m e^T B^T
//           + Ccl m e^T D^T + D e m^T Ccl^T + D e e^T D^T
// and every eta integrand is an affine function of (m, S) at fixed e.

struct MomentTrace {
  struct Rollout {
    std::vector<Vec> mean;    // E[x(t_k)], k = 0..q
    std::vector<Mat> second;  // E[x(t_k) x(t_k)^T]
    Mat integrals;            // q x (m(m+1)/2 + n^2 + mn): [ubar | xx | xu]
  };
  Index n = 0;
  Index m = 0;
  std::vector<double> grid;
  double step = 0.0;
  std::vector<Rollout> rollouts;
};

namespace detail {

struct MomentODE {
  const Mat& acl;
  const Mat& ccl;
  const Mat& b;
  const Mat& d;
  const Mat& k0;

  void derivative(const Vec& e, const Vec& mean, const Mat& s, Vec& dm, Mat& ds) const {
    const Vec be = b * e;
    const Vec de = d * e;
    const Vec cm = ccl * mean;
    dm = acl * mean + be;
    const Mat as = acl * s;
    ds = as + as.transpose() + ccl * s * ccl.transpose() + be * mean.transpose() +
         mean * be.transpose() + cm * de.transpose() + de * cm.transpose() + de * de.transpose();
  }

  /// [vecs-moment of u | vec(S) | vec(K0 S + e m^T)]
  Vec integrand(const Vec& e, const Vec& mean, const Mat& s) const {
    const Index n = s.rows();
    const Index m = k0.rows();
    const Mat ks = k0 * s;
    const Vec km = k0 * mean;
    const Mat uu = ks * k0.transpose() + km * e.transpose() + e * km.transpose() + e * e.transpose();
    const Mat ux = ks + e * mean.transpose();  // E[u x^T]
    Vec g(tri_size(m) + n * n + m * n);
    g << upper_triangle(uu), vec(s), vec(ux);
    return g;
  }
};

}  // namespace detail

inline constexpr double kMomentPsdTol = 1e-8;

/// Classical RK4 on (m, S) with the eta integrals carried as extra states.
inline MomentTrace propagate_moments(const SystemModel& sys, const Mat& k0,
                                     const ExplorationSignal& sig, const RolloutConfig& cfg) {
  sys.validate();
  require_shape(k0, sys.m(), sys.n(), "propagate_moments: K0");
  sig.validate(sys.m());
  cfg.validate(sys.n());
  if (!sig.deterministic()) {
    throw ConfigError("propagate_moments: exact moments need a deterministic exploration signal "
                      "(white_std must be 0)");
  }

  const ClosedLoop cl = close_loop(sys, k0);
  const detail::MomentODE ode{cl.Acl, cl.Ccl, sys.B, sys.D, k0};
  const Index n = sys.n();
  const Index m = sys.m();
  const double h = cfg.sde_step;
  const std::size_t first = cfg.first_step();
  const std::size_t per = cfg.steps_per_interval();
  const std::size_t steps = cfg.total_steps();
  const Index width = tri_size(m) + n * n + m * n;

  MomentTrace trace;
  trace.n = n;
  trace.m = m;
  trace.grid = cfg.grid();
  trace.step = h;

  for (const Vec& x0 : cfg.x0_list) {
    MomentTrace::Rollout ro;
    ro.integrals = Mat::Zero(static_cast<Index>(cfg.q), width);
    Vec mean = x0;
    Mat s = x0 * x0.transpose();
    Vec dm1, dm2, dm3, dm4;
    Mat ds1, ds2, ds3, ds4;
    for (std::size_t j = 0;; ++j) {
      if (j >= first && (j - first) % per == 0) {
        ro.mean.push_back(mean);
        ro.second.push_back(s);
      }
      if (j == steps) break;

      const double t = cfg.node_time(j);
      const Vec e1 = eval_exploration(sig, t);
      const Vec e2 = eval_exploration(sig, t + 0.5 * h);
      const Vec e4 = eval_exploration(sig, t + h);

      ode.derivative(e1, mean, s, dm1, ds1);
      const Vec m2 = mean + 0.5 * h * dm1;
      const Mat s2 = s + 0.5 * h * ds1;
      ode.derivative(e2, m2, s2, dm2, ds2);
      const Vec m3 = mean + 0.5 * h * dm2;
      const Mat s3 = s + 0.5 * h * ds2;
      ode.derivative(e2, m3, s3, dm3, ds3);
      const Vec m4 = mean + h * dm3;
      const Mat s4 = s + h * ds3;
      ode.derivative(e4, m4, s4, dm4, ds4);

      if (j >= first) {
        const Index k = static_cast<Index>((j - first) / per);
        const Vec inc = (h / 6.0) * (ode.integrand(e1, mean, s) + 2.0 * ode.integrand(e2, m2, s2) +
                                     2.0 * ode.integrand(e2, m3, s3) + ode.integrand(e4, m4, s4));
        ro.integrals.row(k) += inc.transpose();
      }

      mean += (h / 6.0) * (dm1 + 2.0 * dm2 + 2.0 * dm3 + dm4);
      s += (h / 6.0) * (ds1 + 2.0 * ds2 + 2.0 * ds3 + ds4);
      s = (0.5 * (s + s.transpose())).eval();

      require_finite(s, "propagate_moments");
      const double scale = s.norm();
      if (scale > 0.0) {
        Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
        if (es.eigenvalues()(0) < -kMomentPsdTol * scale) {
          throw IntegrationAccuracyError(
              "propagate_moments: E[x x^T] lost positive semidefiniteness at t = " +
              format_double(cfg.node_time(j + 1)) + "; use a smaller sde_step");
        }
      }
    }
    trace.rollouts.push_back(std::move(ro));
  }
  return trace;
}

inline DataMatrices collect_data_exact(const MomentTrace& trace) {
  const Index n = trace.n;
  const Index m = trace.m;
  if (trace.grid.size() < 2) throw DimensionError("collect_data_exact: empty grid");
  const Index q = static_cast<Index>(trace.grid.size()) - 1;
  const Index rows = q * static_cast<Index>(trace.rollouts.size());

  DataMatrices d;
  d.n = n;
  d.m = m;
  d.eta_xbar.resize(rows, tri_size(n));
  d.eta_ubar.resize(rows, tri_size(m));
  d.eta_xx.resize(rows, n * n);
  d.eta_xu.resize(rows, m * n);
  for (std::size_t r = 0; r < trace.rollouts.size(); ++r) {
    const auto& ro = trace.rollouts[r];
    if (static_cast<Index>(ro.second.size()) != q + 1 || ro.integrals.rows() != q)
      throw DimensionError("collect_data_exact: trace does not cover the grid");
    const Index r0 = static_cast<Index>(r) * q;
    for (Index k = 0; k < q; ++k) {
      d.eta_xbar.row(r0 + k) = (upper_triangle(ro.second[static_cast<std::size_t>(k + 1)]) -
                                upper_triangle(ro.second[static_cast<std::size_t>(k)]))
                                   .transpose();
    }
    d.eta_ubar.middleRows(r0, q) = ro.integrals.leftCols(tri_size(m));
    d.eta_xx.middleRows(r0, q) = ro.integrals.middleCols(tri_size(m), n * n);
    d.eta_xu.middleRows(r0, q) = ro.integrals.rightCols(m * n);
  }
  d.grid = trace.grid;
  d.mode = DataMode::exact;
  d.rollouts = trace.rollouts.size();
  d.step = trace.step;
  return d;
}

}  // namespace lqsadp

#endif  // LQSADP_DATAGEN_HPP
