#ifndef LQSADP_IO_HPP
#define LQSADP_IO_HPP

// File formats: problem configuration (JSON), run report (JSON), convergence
// trace (CSV) and the eta data bundle (CSV). Layouts are documented in
// docs/formats.md.

#include <json.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lqsadp/adp.hpp"
#include "lqsadp/datagen.hpp"
#include "lqsadp/errors.hpp"
#include "lqsadp/format.hpp"
#include "lqsadp/matstack.hpp"
#include "lqsadp/model_pi.hpp"
#include "lqsadp/report.hpp"
#include "lqsadp/stability.hpp"

namespace lqsadp {

using json = nlohmann::json;

enum class RunMode { model_pi, adp_exact, adp_mc, rank_check };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::model_pi: return "model_pi";
    case RunMode::adp_exact: return "adp_exact";
    case RunMode::adp_mc: return "adp_mc";
    case RunMode::rank_check: return "rank_check";
  }
  return "unknown";
}

struct StopRule {
  std::optional<double> eps;  // per-mode default when absent
  std::size_t max_iter = kDefaultMaxIter;

  double eps_for(RunMode mode) const {
    if (eps) return *eps;
    switch (mode) {
      case RunMode::model_pi: return kDefaultModelEps;
      case RunMode::adp_mc: return kDefaultMcEps;
      default: return kDefaultExactEps;
    }
  }
};

struct ProblemConfig {
  std::optional<SystemModel> system;  // required except for imported data
  CostWeights cost;
  Mat K0;
  ExplorationSignal exploration;
  RolloutConfig rollout;
  StopRule stop;
  std::optional<RunMode> mode;
  json source;  // echoed into reports

  Index n() const { return cost.Q.dim(); }
  Index m() const { return cost.R.dim(); }
};

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

/// Collects every problem found while parsing so one message reports them all.
class Diagnostics {
 public:
  void add(const std::string& path, const std::string& msg) { issues_.push_back(path + ": " + msg); }
  bool empty() const noexcept { return issues_.empty(); }
  void throw_if_any() const {
    if (issues_.empty()) return;
    std::string all = "invalid configuration:";
    for (const auto& s : issues_) all += "\n  " + s;
    throw ConfigError(all);
  }

 private:
  std::vector<std::string> issues_;
};

inline std::optional<Mat> parse_matrix(const json& j, const std::string& path, Diagnostics& diag) {
  if (j.is_number()) {
    Mat out(1, 1);
    out(0, 0) = j.get<double>();
    return out;
  }
  if (!j.is_array() || j.empty()) {
    diag.add(path, "expected a number or a non-empty array of rows");
    return std::nullopt;
  }
  const std::size_t rows = j.size();
  std::size_t cols = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].empty()) {
      diag.add(path + "[" + std::to_string(r) + "]", "expected a non-empty array of numbers");
      return std::nullopt;
    }
    if (r == 0) cols = j[r].size();
    if (j[r].size() != cols) {
      diag.add(path, "ragged rows (row 0 has " + std::to_string(cols) + " entries, row " +
                         std::to_string(r) + " has " + std::to_string(j[r].size()) + ")");
      return std::nullopt;
    }
  }
  Mat out(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const json& v = j[r][c];
      if (!v.is_number()) {
        diag.add(path + "[" + std::to_string(r) + "][" + std::to_string(c) + "]",
                 "expected a number");
        return std::nullopt;
      }
      out(static_cast<Index>(r), static_cast<Index>(c)) = v.get<double>();
    }
  }
  if (!all_finite(out)) {
    diag.add(path, "entries must be finite");
    return std::nullopt;
  }
  return out;
}

inline std::optional<Vec> parse_vector(const json& j, const std::string& path, Diagnostics& diag) {
  if (!j.is_array() || j.empty()) {
    diag.add(path, "expected a non-empty array of numbers");
    return std::nullopt;
  }
  Vec out(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      diag.add(path + "[" + std::to_string(i) + "]", "expected a number");
      return std::nullopt;
    }
    out(static_cast<Index>(i)) = j[i].get<double>();
  }
  if (!all_finite(out)) {
    diag.add(path, "entries must be finite");
    return std::nullopt;
  }
  return out;
}

inline void expect_shape(const std::optional<Mat>& x, Index rows, Index cols,
                         const std::string& path, const std::string& why, Diagnostics& diag) {
  if (!x) return;
  if (x->rows() != rows || x->cols() != cols) {
    diag.add(path, "expected " + std::to_string(rows) + "x" + std::to_string(cols) + " (" + why +
                       "), got " + std::to_string(x->rows()) + "x" + std::to_string(x->cols()));
  }
}

template <typename T>
std::optional<T> get_number(const json& obj, const char* key, const std::string& path,
                            Diagnostics& diag) {
  if (!obj.contains(key)) return std::nullopt;
  const json& v = obj.at(key);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_unsigned()) {
      diag.add(path + "." + key, "expected a non-negative integer");
      return std::nullopt;
    }
    return v.get<T>();
  } else {
    if (!v.is_number()) {
      diag.add(path + "." + key, "expected a number");
      return std::nullopt;
    }
    return v.get<T>();
  }
}

inline std::optional<RunMode> parse_mode(const std::string& s) {
  if (s == "model_pi") return RunMode::model_pi;
  if (s == "adp_exact") return RunMode::adp_exact;
  if (s == "adp_mc") return RunMode::adp_mc;
  if (s == "rank_check") return RunMode::rank_check;
  return std::nullopt;
}

}  // namespace detail

/// Validates a parsed JSON document. With require_system = false the
/// "system" block may be omitted (imported-data runs).
inline ProblemConfig parse_config(const json& j, bool require_system = true) {
  detail::Diagnostics diag;
  if (!j.is_object()) {
    diag.add("<root>", "expected a JSON object");
    diag.throw_if_any();
  }
  ProblemConfig cfg;
  cfg.source = j;

  // system
  std::optional<Mat> a, b, c, d;
  if (j.contains("system")) {
    const json& s = j.at("system");
    if (!s.is_object()) {
      diag.add("system", "expected an object with A, B, C, D");
    } else {
      for (const char* key : {"A", "B", "C", "D"})
        if (!s.contains(key)) diag.add(std::string("system.") + key, "missing");
      if (s.contains("A")) a = detail::parse_matrix(s.at("A"), "system.A", diag);
      if (s.contains("B")) b = detail::parse_matrix(s.at("B"), "system.B", diag);
      if (s.contains("C")) c = detail::parse_matrix(s.at("C"), "system.C", diag);
      if (s.contains("D")) d = detail::parse_matrix(s.at("D"), "system.D", diag);
    }
  } else if (require_system) {
    diag.add("system", "missing");
  }

  // cost
  std::optional<Mat> q, r;
  if (!j.contains("cost") || !j.at("cost").is_object()) {
    diag.add("cost", "missing or not an object with Q and R");
  } else {
    const json& cj = j.at("cost");
    if (!cj.contains("Q")) diag.add("cost.Q", "missing");
    if (!cj.contains("R")) diag.add("cost.R", "missing");
    if (cj.contains("Q")) q = detail::parse_matrix(cj.at("Q"), "cost.Q", diag);
    if (cj.contains("R")) r = detail::parse_matrix(cj.at("R"), "cost.R", diag);
  }

  // Dimensions come from A when present, otherwise from Q and R.
  Index n = a ? a->rows() : (q ? q->rows() : 0);
  Index m = b ? b->cols() : (r ? r->rows() : 0);
  if (a) {
    detail::expect_shape(a, n, n, "system.A", "A must be square", diag);
    detail::expect_shape(b, n, b ? b->cols() : 0, "system.B", "rows must match n = " +
                                                                 std::to_string(n) + " from system.A",
                         diag);
    detail::expect_shape(c, n, n, "system.C", "n = " + std::to_string(n) + " from system.A", diag);
    detail::expect_shape(d, n, m, "system.D",
                         "n x m with n from system.A and m from system.B", diag);
  }
  detail::expect_shape(q, n, n, "cost.Q", "n x n", diag);
  detail::expect_shape(r, m, m, "cost.R", "m x m", diag);

  if (q && q->rows() == q->cols()) {
    if (max_abs(*q - q->transpose()) > SymMat::kSymmetryTol * std::max(1.0, max_abs(*q))) {
      diag.add("cost.Q", "must be symmetric");
      q.reset();
    } else {
      cfg.cost.Q = SymMat::symmetrize(*q);
      if (!(cfg.cost.Q.min_eigenvalue() >= -CostWeights::kPsdTol))
        diag.add("cost.Q", "Q must be positive semidefinite");
    }
  }
  if (r && r->rows() == r->cols()) {
    if (max_abs(*r - r->transpose()) > SymMat::kSymmetryTol * std::max(1.0, max_abs(*r))) {
      diag.add("cost.R", "must be symmetric");
      r.reset();
    } else {
      cfg.cost.R = SymMat::symmetrize(*r);
      if (!(cfg.cost.R.min_eigenvalue() > 0.0)) diag.add("cost.R", "R must be positive definite");
    }
  }

  // K0
  std::optional<Mat> k0;
  if (j.contains("K0")) {
    k0 = detail::parse_matrix(j.at("K0"), "K0", diag);
    detail::expect_shape(k0, m, n, "K0", "m x n", diag);
  }

  // x0: one vector or a list of vectors
  std::vector<Vec> x0s;
  if (j.contains("x0")) {
    const json& xj = j.at("x0");
    if (xj.is_array() && !xj.empty() && xj[0].is_number()) {
      if (auto v = detail::parse_vector(xj, "x0", diag)) x0s.push_back(*v);
    } else if (xj.is_array() && !xj.empty()) {
      for (std::size_t i = 0; i < xj.size(); ++i)
        if (auto v = detail::parse_vector(xj[i], "x0[" + std::to_string(i) + "]", diag))
          x0s.push_back(*v);
    } else {
      diag.add("x0", "expected a vector or a list of vectors");
    }
    for (std::size_t i = 0; i < x0s.size(); ++i)
      if (x0s[i].size() != n)
        diag.add("x0[" + std::to_string(i) + "]", "length " + std::to_string(x0s[i].size()) +
                                                    " does not match n = " + std::to_string(n));
  }
  cfg.rollout.x0_list = x0s;

  // exploration
  cfg.exploration = ExplorationSignal::none(m);
  if (j.contains("exploration")) {
    const json& ej = j.at("exploration");
    if (!ej.is_object()) {
      diag.add("exploration", "expected an object");
    } else {
      if (ej.contains("channels")) {
        const json& ch = ej.at("channels");
        if (!ch.is_array()) {
          diag.add("exploration.channels", "expected an array (one entry per input channel)");
        } else {
          if (static_cast<Index>(ch.size()) != m)
            diag.add("exploration.channels", std::to_string(ch.size()) +
                                                 " channels for m = " + std::to_string(m));
          cfg.exploration.channels.assign(ch.size(), {});
          for (std::size_t c = 0; c < ch.size(); ++c) {
            const std::string cp = "exploration.channels[" + std::to_string(c) + "]";
            if (!ch[c].is_array()) {
              diag.add(cp, "expected an array of sinusoids");
              continue;
            }
            for (std::size_t k = 0; k < ch[c].size(); ++k) {
              const std::string sp = cp + "[" + std::to_string(k) + "]";
              const json& sj = ch[c][k];
              if (!sj.is_object()) {
                diag.add(sp, "expected {amplitude, frequency, phase}");
                continue;
              }
              Sinusoid s;
              s.amplitude = detail::get_number<double>(sj, "amplitude", sp, diag).value_or(0.0);
              s.frequency = detail::get_number<double>(sj, "frequency", sp, diag).value_or(0.0);
              s.phase = detail::get_number<double>(sj, "phase", sp, diag).value_or(0.0);
              cfg.exploration.channels[c].push_back(s);
            }
          }
        }
      }
      cfg.exploration.white_std =
          detail::get_number<double>(ej, "white_std", "exploration", diag).value_or(0.0);
    }
  }

  // rollout
  if (j.contains("rollout")) {
    const json& rj = j.at("rollout");
    if (!rj.is_object()) {
      diag.add("rollout", "expected an object");
    } else {
      auto& ro = cfg.rollout;
      ro.t0 = detail::get_number<double>(rj, "t0", "rollout", diag).value_or(ro.t0);
      ro.q = detail::get_number<std::size_t>(rj, "q", "rollout", diag).value_or(ro.q);
      ro.interval_len =
          detail::get_number<double>(rj, "interval_len", "rollout", diag).value_or(ro.interval_len);
      ro.sde_step = detail::get_number<double>(rj, "sde_step", "rollout", diag).value_or(ro.sde_step);
      ro.paths = detail::get_number<std::size_t>(rj, "paths", "rollout", diag).value_or(ro.paths);
      ro.seed = detail::get_number<std::uint64_t>(rj, "seed", "rollout", diag).value_or(ro.seed);
    }
  }

  // stop
  if (j.contains("stop")) {
    const json& sj = j.at("stop");
    if (!sj.is_object()) {
      diag.add("stop", "expected an object");
    } else {
      cfg.stop.eps = detail::get_number<double>(sj, "eps", "stop", diag);
      if (cfg.stop.eps && !(*cfg.stop.eps > 0.0)) diag.add("stop.eps", "must be positive");
      cfg.stop.max_iter =
          detail::get_number<std::size_t>(sj, "max_iter", "stop", diag).value_or(cfg.stop.max_iter);
      if (cfg.stop.max_iter < 1) diag.add("stop.max_iter", "must be at least 1");
    }
  }

  if (j.contains("mode")) {
    if (!j.at("mode").is_string() || !detail::parse_mode(j.at("mode").get<std::string>()))
      diag.add("mode", "expected one of model_pi, adp_exact, adp_mc, rank_check");
    else
      cfg.mode = detail::parse_mode(j.at("mode").get<std::string>());
  }

  diag.throw_if_any();

  if (a) cfg.system = SystemModel{*a, *b, *c, *d};
  cfg.K0 = k0 ? *k0 : Mat::Zero(m, n);
  return cfg;
}

inline ProblemConfig load_config(const std::string& path, bool require_system = true) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open configuration file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": parse error: " + e.what());
  }
  try {
    return parse_config(j, require_system);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Run report (JSON)

inline json matrix_to_json(const Mat& x) {
  json rows = json::array();
  for (Index r = 0; r < x.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < x.cols(); ++c) row.push_back(x(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat matrix_from_json(const json& j, const std::string& path) {
  detail::Diagnostics diag;
  auto m = detail::parse_matrix(j, path, diag);
  diag.throw_if_any();
  return *m;
}

namespace detail {

template <typename T>
json opt_to_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> opt_from_json(const json& obj, const char* key) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return obj.at(key).get<T>();
}

inline json triple_to_json(const EvaluationTriple& t) {
  return {{"P", matrix_to_json(t.P.mat())},
          {"M", matrix_to_json(t.M)},
          {"H", matrix_to_json(t.H.mat())}};
}

inline EvaluationTriple triple_from_json(const json& j) {
  return {SymMat(matrix_from_json(j.at("P"), "P")), matrix_from_json(j.at("M"), "M"),
          SymMat(matrix_from_json(j.at("H"), "H"))};
}

}  // namespace detail

inline json rank_to_json(const RankReport& r) {
  return {{"rank", r.rank},
          {"required", r.required},
          {"singular_values", r.singular_values},
          {"threshold", r.threshold},
          {"passed", r.passed}};
}

inline RankReport rank_from_json(const json& j) {
  RankReport r;
  r.rank = j.at("rank").get<std::size_t>();
  r.required = j.at("required").get<std::size_t>();
  r.singular_values = j.at("singular_values").get<std::vector<double>>();
  r.threshold = j.at("threshold").get<double>();
  r.passed = j.at("passed").get<bool>();
  return r;
}

inline json report_to_json(const RunReport& rep, const json& config_echo = nullptr) {
  json records = json::array();
  for (const auto& rec : rep.records) {
    json t = detail::triple_to_json(rec.triple);
    records.push_back({{"index", rec.index},
                       {"K", matrix_to_json(rec.K)},
                       {"P", t["P"]},
                       {"M", t["M"]},
                       {"H", t["H"]},
                       {"K_next", matrix_to_json(rec.K_next)},
                       {"delta_P", detail::opt_to_json(rec.delta_P)},
                       {"residual_R1", detail::opt_to_json(rec.sare_residual)},
                       {"residual_R2", detail::opt_to_json(rec.lyap_residual)},
                       {"ms_abscissa", detail::opt_to_json(rec.ms_abscissa)},
                       {"cond_psi", detail::opt_to_json(rec.cond_psi)},
                       {"rank", detail::opt_to_json(rec.rank)},
                       {"ls_residual", detail::opt_to_json(rec.ls_residual)}});
  }
  json fin = detail::triple_to_json(rep.final_triple);
  fin["K"] = matrix_to_json(rep.final_K);
  return {{"mode", rep.mode},
          {"status", to_string(rep.status)},
          {"iterations", rep.records.size()},
          {"model_assisted", rep.model_assisted},
          {"final", fin},
          {"residual_R1", detail::opt_to_json(rep.residual_R1)},
          {"residual_R2", detail::opt_to_json(rep.residual_R2)},
          {"rank", rep.rank ? rank_to_json(*rep.rank) : json(nullptr)},
          {"data", rep.data_mode.empty()
                       ? json(nullptr)
                       : json{{"mode", rep.data_mode},
                              {"paths", rep.data_paths},
                              {"seed", rep.data_seed}}},
          {"elapsed_seconds", rep.elapsed_seconds},
          {"records", records},
          {"config", config_echo}};
}

inline RunReport report_from_json(const json& j) {
  RunReport rep;
  rep.mode = j.at("mode").get<std::string>();
  const std::string status = j.at("status").get<std::string>();
  rep.status = status == "converged" ? RunStatus::converged : RunStatus::max_iterations;
  rep.model_assisted = j.at("model_assisted").get<bool>();
  const json& fin = j.at("final");
  rep.final_triple = detail::triple_from_json(fin);
  rep.final_K = matrix_from_json(fin.at("K"), "final.K");
  rep.residual_R1 = detail::opt_from_json<double>(j, "residual_R1");
  rep.residual_R2 = detail::opt_from_json<double>(j, "residual_R2");
  if (j.contains("rank") && !j.at("rank").is_null()) rep.rank = rank_from_json(j.at("rank"));
  if (j.contains("data") && !j.at("data").is_null()) {
    rep.data_mode = j.at("data").at("mode").get<std::string>();
    rep.data_paths = j.at("data").at("paths").get<std::size_t>();
    rep.data_seed = j.at("data").at("seed").get<std::uint64_t>();
  }
  rep.elapsed_seconds = j.at("elapsed_seconds").get<double>();
  for (const json& r : j.at("records")) {
    IterationRecord rec;
    rec.index = r.at("index").get<std::size_t>();
    rec.K = matrix_from_json(r.at("K"), "records.K");
    rec.triple = detail::triple_from_json(r);
    rec.K_next = matrix_from_json(r.at("K_next"), "records.K_next");
    rec.delta_P = detail::opt_from_json<double>(r, "delta_P");
    rec.sare_residual = detail::opt_from_json<double>(r, "residual_R1");
    rec.lyap_residual = detail::opt_from_json<double>(r, "residual_R2");
    rec.ms_abscissa = detail::opt_from_json<double>(r, "ms_abscissa");
    rec.cond_psi = detail::opt_from_json<double>(r, "cond_psi");
    rec.rank = detail::opt_from_json<std::size_t>(r, "rank");
    rec.ls_residual = detail::opt_from_json<double>(r, "ls_residual");
    rep.records.push_back(std::move(rec));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Convergence trace (CSV)

inline constexpr const char* kTraceHeader = "iter,delta_P_fro,residual_R1,residual_R2,cond_psi,rank";

inline void write_trace_csv(const RunReport& rep, std::ostream& os) {
  auto cell = [&](const std::optional<double>& v) {
    if (v) os << format_double(*v);
  };
  os << kTraceHeader << '\n';
  for (const auto& rec : rep.records) {
    os << rec.index << ',';
    cell(rec.delta_P);
    os << ',';
    cell(rec.sare_residual);
    os << ',';
    cell(rec.lyap_residual);
    os << ',';
    cell(rec.cond_psi);
    os << ',';
    if (rec.rank) os << *rec.rank;
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Eta bundle (CSV)
//
//   lqsadp-eta,1
//   n,<n>
//   m,<m>
//   q,<q>
//   rollouts,<r>
//   grid,<t_0>,...,<t_q>
//   eta_xbar,<rows>,<cols>   followed by <rows> lines of <cols> values
//   eta_ubar,<rows>,<cols>
//   eta_xx,<rows>,<cols>
//   eta_xu,<rows>,<cols>

inline constexpr const char* kEtaMagic = "lqsadp-eta";

inline void write_eta_csv(const DataMatrices& d, std::ostream& os) {
  const std::size_t q = d.grid.size() - 1;
  os << kEtaMagic << ",1\n";
  os << "n," << d.n << "\nm," << d.m << "\nq," << q << "\nrollouts," << d.rollouts << '\n';
  os << "grid";
  for (double t : d.grid) os << ',' << format_double(t);
  os << '\n';
  auto block = [&](const char* name, const Mat& x) {
    os << name << ',' << x.rows() << ',' << x.cols() << '\n';
    for (Index r = 0; r < x.rows(); ++r) {
      for (Index c = 0; c < x.cols(); ++c) os << (c ? "," : "") << format_double(x(r, c));
      os << '\n';
    }
  };
  block("eta_xbar", d.eta_xbar);
  block("eta_ubar", d.eta_ubar);
  block("eta_xx", d.eta_xx);
  block("eta_xu", d.eta_xu);
}

namespace detail {

class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  std::vector<std::string> next(const std::string& expect) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (!line.empty() && line.back() == ',') cells.emplace_back();
      return cells;
    }
    throw DimensionError("eta bundle: truncated file (expected " + expect + " after line " +
                         std::to_string(line_no_) + ")");
  }

  double number(const std::string& s) const {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &pos);
    } catch (...) {
      pos = 0;
    }
    if (pos == 0 || pos != s.size() || !std::isfinite(v))
      throw DimensionError("eta bundle: line " + std::to_string(line_no_) + ": bad number '" + s +
                           "'");
    return v;
  }

  long integer(const std::string& s) const {
    const double v = number(s);
    if (v != std::floor(v)) {
      throw DimensionError("eta bundle: line " + std::to_string(line_no_) +
                           ": expected an integer, got '" + s + "'");
    }
    return static_cast<long>(v);
  }

  long header_field(const char* name) {
    const auto cells = next(name);
    if (cells.size() != 2 || cells[0] != name) {
      throw DimensionError("eta bundle: line " + std::to_string(line_no_) + ": expected '" +
                           std::string(name) + ",<value>'");
    }
    return integer(cells[1]);
  }

  std::size_t line() const noexcept { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline DataMatrices read_eta_csv(std::istream& in) {
  detail::CsvReader rd(in);
  const auto magic = rd.next("header");
  if (magic.size() != 2 || magic[0] != kEtaMagic || magic[1] != "1")
    throw DimensionError("eta bundle: missing 'lqsadp-eta,1' header");
  const long n = rd.header_field("n");
  const long m = rd.header_field("m");
  const long q = rd.header_field("q");
  const long rollouts = rd.header_field("rollouts");
  if (n < 1 || m < 1) throw DimensionError("eta bundle: n and m must be at least 1");
  if (q < 1) throw DimensionError("eta bundle: q must be at least 1");
  if (rollouts < 1) throw DimensionError("eta bundle: rollouts must be at least 1");

  DataMatrices d;
  d.n = n;
  d.m = m;
  d.rollouts = static_cast<std::size_t>(rollouts);
  d.mode = DataMode::imported;
  const auto grid = rd.next("grid");
  if (grid.empty() || grid[0] != "grid" || static_cast<long>(grid.size()) != q + 2)
    throw DimensionError("eta bundle: grid line must hold q + 1 = " + std::to_string(q + 1) +
                         " times");
  for (std::size_t i = 1; i < grid.size(); ++i) d.grid.push_back(rd.number(grid[i]));

  const Index rows = static_cast<Index>(q * rollouts);
  auto block = [&](const char* name, Index cols) {
    const auto head = rd.next(name);
    if (head.size() != 3 || head[0] != name)
      throw DimensionError("eta bundle: line " + std::to_string(rd.line()) + ": expected block '" +
                           name + "'");
    if (rd.integer(head[1]) != rows || rd.integer(head[2]) != cols) {
      throw DimensionError("eta bundle: block " + std::string(name) + " declared " + head[1] +
                           "x" + head[2] + ", expected " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    }
    Mat x(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      const auto cells = rd.next(std::string(name) + " row");
      if (static_cast<Index>(cells.size()) != cols)
        throw DimensionError("eta bundle: line " + std::to_string(rd.line()) + ": expected " +
                             std::to_string(cols) + " values");
      for (Index c = 0; c < cols; ++c) x(r, c) = rd.number(cells[static_cast<std::size_t>(c)]);
    }
    return x;
  };
  d.eta_xbar = block("eta_xbar", tri_size(n));
  d.eta_ubar = block("eta_ubar", tri_size(m));
  d.eta_xx = block("eta_xx", n * n);
  d.eta_xu = block("eta_xu", m * n);
  d.validate();
  return d;
}

inline DataMatrices import_eta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open eta bundle");
  try {
    return read_eta_csv(in);
  } catch (const DimensionError& e) {
    throw DimensionError(path + ": " + e.what());
  }
}

}  // namespace lqsadp

#endif  // LQSADP_IO_HPP
