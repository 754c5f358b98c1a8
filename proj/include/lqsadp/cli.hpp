#ifndef LQSADP_CLI_HPP
#define LQSADP_CLI_HPP

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lqsadp/adp.hpp"
#include "lqsadp/datagen.hpp"
#include "lqsadp/errors.hpp"
#include "lqsadp/format.hpp"
#include "lqsadp/io.hpp"
#include "lqsadp/model_pi.hpp"
#include "lqsadp/stability.hpp"

namespace lqsadp::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kRankFailure = 2,
  kNotConverged = 3,
  kInstability = 4,
  kNumericalError = 5,
};

struct Options {
  std::string subcommand;
  std::string config;
  std::string out;
  std::string eta;
  std::string export_eta;
  std::string data = "exact";  // rank: exact | mc
  std::optional<std::uint64_t> seed;
  bool dump_paths = false;
};

/// "<stem>.<suffix>" next to the report: report.json -> report.trace.csv.
inline std::string sibling_path(const std::string& out, const std::string& suffix) {
  std::string stem = out;
  const std::string ext = ".json";
  if (stem.size() > ext.size() && stem.compare(stem.size() - ext.size(), ext.size(), ext) == 0)
    stem.resize(stem.size() - ext.size());
  return stem + "." + suffix;
}

namespace detail {

inline std::string row_string(const Mat& k) {
  std::string s = "[";
  for (Index r = 0; r < k.rows(); ++r) {
    if (r) s += "; ";
    for (Index c = 0; c < k.cols(); ++c) s += (c ? ", " : "") + format_double(k(r, c));
  }
  return s + "]";
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError(path + ": cannot open for writing");
  os << text;
  if (!os) throw ConfigError(path + ": write failed");
}

inline void write_outputs(const Options& opt, const RunReport& rep, const json& echo) {
  if (opt.out.empty()) return;
  write_file(opt.out, report_to_json(rep, echo).dump(2) + "\n");
  std::ostringstream trace;
  write_trace_csv(rep, trace);
  write_file(sibling_path(opt.out, "trace.csv"), trace.str());
}

inline void require_stabilizing_k0(const ProblemConfig& cfg) {
  if (!cfg.system) return;
  const StabilityResult st = is_ms_stabilizing(*cfg.system, cfg.K0);
  if (!st.stable) {
    throw ConfigError("K0: not mean-square stabilizing (second-moment abscissa " +
                      format_double(st.abscissa) + " >= -" + format_double(kStabilityMargin) +
                      ")");
  }
}

inline int finish(const RunReport& rep, const Options& opt, const json& echo, std::ostream& out) {
  write_outputs(opt, rep, echo);
  out << rep.mode << ": " << to_string(rep.status) << " after " << rep.records.size()
      << " iterations";
  if (rep.records.back().delta_P) out << "; |dP|_F = " << format_double(*rep.records.back().delta_P);
  if (rep.residual_R1) out << "; |R1|_F = " << format_double(*rep.residual_R1);
  if (rep.residual_R2) out << "; |R2|_F = " << format_double(*rep.residual_R2);
  out << "; K = " << row_string(rep.final_K) << '\n';
  return rep.converged() ? kOk : kNotConverged;
}

inline DataMatrices make_data(const ProblemConfig& cfg, bool monte_carlo) {
  if (monte_carlo) return collect_data_mc(*cfg.system, cfg.K0, cfg.exploration, cfg.rollout);
  return collect_data_exact(propagate_moments(*cfg.system, cfg.K0, cfg.exploration, cfg.rollout));
}

inline void maybe_export(const Options& opt, const DataMatrices& data) {
  if (opt.export_eta.empty()) return;
  std::ostringstream os;
  write_eta_csv(data, os);
  write_file(opt.export_eta, os.str());
}

inline int dispatch(const Options& opt, std::ostream& out) {
  const bool imported = opt.subcommand == "import-eta";
  ProblemConfig cfg = load_config(opt.config, /*require_system=*/!imported);
  if (opt.seed) cfg.rollout.seed = *opt.seed;
  json echo = cfg.source;
  if (opt.seed) echo["rollout"]["seed"] = *opt.seed;

  if (cfg.system) {
    require_stabilizing_k0(cfg);
    cfg.exploration.validate(cfg.m());
  }

  if (opt.subcommand == "model-pi") {
    const RunReport rep = run_model_pi(*cfg.system, cfg.cost, cfg.K0,
                                       cfg.stop.eps_for(RunMode::model_pi), cfg.stop.max_iter);
    return finish(rep, opt, echo, out);
  }

  if (imported) {
    const DataMatrices data = import_eta(opt.eta);
    if (data.n != cfg.n() || data.m != cfg.m()) {
      throw ConfigError("import-eta: bundle has n = " + std::to_string(data.n) +
                        ", m = " + std::to_string(data.m) + " but the configuration has n = " +
                        std::to_string(cfg.n()) + ", m = " + std::to_string(cfg.m()));
    }
    const RunReport rep =
        run_adp(data, cfg.cost, cfg.K0, cfg.stop.eps_for(RunMode::adp_exact), cfg.stop.max_iter,
                cfg.system ? &*cfg.system : nullptr);
    return finish(rep, opt, echo, out);
  }

  cfg.rollout.validate(cfg.n());
  const bool mc = opt.subcommand == "adp-mc" || (opt.subcommand == "rank" && opt.data == "mc");
  if (opt.dump_paths && mc) {
    const std::string path = opt.out.empty() ? std::string("lqsadp.paths.csv")
                                             : sibling_path(opt.out, "paths.csv");
    std::ofstream os(path);
    if (!os) throw ConfigError(path + ": cannot open for writing");
    dump_paths_csv(*cfg.system, cfg.K0, cfg.exploration, cfg.rollout, os);
  }
  const DataMatrices data = make_data(cfg, mc);
  maybe_export(opt, data);

  if (opt.subcommand == "rank") {
    const RankReport rank = check_rank(data);
    if (!opt.out.empty()) {
      json j = rank_to_json(rank);
      j["data"] = to_string(data.mode);
      j["config"] = echo;
      write_file(opt.out, j.dump(2) + "\n");
    }
    out << "rank: " << rank.rank << " of " << rank.required << " required ("
        << (rank.passed ? "passed" : "failed") << ", threshold " << format_double(rank.threshold)
        << " * sigma_max, data " << to_string(data.mode) << ")\n";
    return rank.passed ? kOk : kRankFailure;
  }

  const RunMode mode = mc ? RunMode::adp_mc : RunMode::adp_exact;
  const RunReport rep = run_adp(data, cfg.cost, cfg.K0, cfg.stop.eps_for(mode), cfg.stop.max_iter,
                                &*cfg.system);
  return finish(rep, opt, echo, out);
}

}  // namespace detail

/// Entry point shared by the executable and the tests. Returns the exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Linear-quadratic stochastic optimal control by model-based and data-driven "
               "policy iteration"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Problem configuration (JSON)")->required();
    sub->add_option("--out", opt.out, "Report path; the trace goes to <stem>.trace.csv");
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--export-eta", opt.export_eta, "Write the eta data bundle (CSV)");
  };

  auto* model = app.add_subcommand("model-pi", "Model-based policy iteration");
  add_common(model);
  auto* exact = app.add_subcommand("adp-exact", "Data-driven PI on exact-expectation data");
  add_common(exact);
  add_data(exact);
  auto* mc = app.add_subcommand("adp-mc", "Data-driven PI on Monte Carlo data");
  add_common(mc);
  add_data(mc);
  mc->add_option("--seed", opt.seed, "Override rollout.seed");
  mc->add_flag("--dump-paths", opt.dump_paths, "Write every sample path to <stem>.paths.csv");
  auto* rank = app.add_subcommand("rank", "Check the rank condition on collected data");
  add_common(rank);
  add_data(rank);
  rank->add_option("--data", opt.data, "exact or mc")->check(CLI::IsMember({"exact", "mc"}));
  rank->add_option("--seed", opt.seed, "Override rollout.seed");
  rank->add_flag("--dump-paths", opt.dump_paths, "Write every sample path (mc only)");
  auto* imp = app.add_subcommand("import-eta", "Data-driven PI on an imported eta bundle");
  add_common(imp);
  imp->add_option("--eta", opt.eta, "Eta bundle (CSV)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  opt.subcommand = app.get_subcommands().front()->get_name();

  try {
    return detail::dispatch(opt, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << '\n';
    return kConfigError;
  } catch (const RankDeficiencyError& e) {
    err << "rank condition failed: " << e.what() << '\n';
    return kRankFailure;
  } catch (const InstabilityError& e) {
    err << "instability: " << e.what() << '\n';
    return kInstability;
  } catch (const std::exception& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  }
}

}  // namespace lqsadp::cli

#endif  // LQSADP_CLI_HPP
