#ifndef LQSADP_REPORT_HPP
#define LQSADP_REPORT_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lqsadp/matstack.hpp"

namespace lqsadp {

inline constexpr double kRankThreshold = 1e-8;

/// Unknowns of one policy-evaluation step.
struct EvaluationTriple {
  SymMat P;  // value matrix
  Mat M;     // B^T P + D^T P C
  SymMat H;  // D^T P D
};

struct RankReport {
  std::size_t rank = 0;
  std::size_t required = 0;
  std::vector<double> singular_values;  // descending
  double threshold = kRankThreshold;
  bool passed = false;
};

struct IterationRecord {
  std::size_t index = 0;
  Mat K;  // gain that was evaluated
  EvaluationTriple triple;
  Mat K_next;
  std::optional<double> delta_P;        // |P_i - P_{i-1}|_F, absent at i = 0
  std::optional<double> sare_residual;  // |R1(P_i)|_F, needs the model
  std::optional<double> lyap_residual;  // |R2(P_i, K_i)|_F, needs the model
  std::optional<double> ms_abscissa;    // of K_i, needs the model
  std::optional<double> cond_psi;       // data-driven runs only
  std::optional<std::size_t> rank;      // numerical rank of Psi_i
  std::optional<double> ls_residual;    // |Psi z - Theta|
};

enum class RunStatus { converged, max_iterations };

inline const char* to_string(RunStatus s) {
  return s == RunStatus::converged ? "converged" : "max_iterations";
}

struct RunReport {
  std::string mode;
  RunStatus status = RunStatus::max_iterations;
  std::vector<IterationRecord> records;
  EvaluationTriple final_triple;
  Mat final_K;
  std::optional<double> residual_R1;
  std::optional<double> residual_R2;
  bool model_assisted = false;  // residual/abscissa fields used the true model
  std::optional<RankReport> rank;  // data-driven runs
  std::string data_mode;           // "exact", "monte_carlo", "imported" or empty
  std::size_t data_paths = 0;
  std::uint64_t data_seed = 0;
  double elapsed_seconds = 0.0;

  bool converged() const noexcept { return status == RunStatus::converged; }
};

}  // namespace lqsadp

#endif  // LQSADP_REPORT_HPP
