#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cgport/backtest.hpp"
#include "cgport/data_io.hpp"
#include "cgport/errors.hpp"
#include "cgport/oracle.hpp"
#include "criteria.hpp"

using namespace cgport;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitNoFeasibleTe = 4;

int exit_code(PeriodStatus s) {
  switch (s) {
    case PeriodStatus::Ok:
      return kExitOk;
    case PeriodStatus::MasterInfeasible:
      return kExitInfeasible;
    case PeriodStatus::TimeLimitNoFeasibleTe:
      return kExitNoFeasibleTe;
  }
  return kExitFailed;
}

// Engine flags shared by solve and backtest.
struct EngineFlags {
  EngineConfig cfg;
  std::string te_band = "0.05:0.1";
  std::string lambda_rule = "toward_band";

  void add(CLI::App& app) {
    app.add_option("--time-limit", cfg.time_limit_s, "wall-clock seconds per review")->capture_default_str();
    app.add_option("--max-iter", cfg.max_iterations, "iteration cap, 0 for none")->capture_default_str();
    app.add_option("--lambda0", cfg.lambda0, "initial risk-aversion multiplier")->capture_default_str();
    app.add_option("--te-band", te_band, "tracking-error band lo:hi")->capture_default_str();
    app.add_option("--card", cfg.card_target, "maximum number of holdings")->capture_default_str();
    app.add_option("--card-min", cfg.card_min, "soft minimum number of holdings")->capture_default_str();
    app.add_option("--as-budget", cfg.as_budget, "benchmark mass allowed in the candidate set")->capture_default_str();
    app.add_option("--seed", cfg.seed, "random seed")->capture_default_str();
    app.add_option("--threads", cfg.pricing_threads, "pricing threads")->capture_default_str();
    app.add_option("--lambda-rule", lambda_rule, "toward_band or algorithm")
        ->check(CLI::IsMember({"toward_band", "algorithm"}))
        ->capture_default_str();
    app.add_option("--dev-bound", cfg.limits.dev_bound)->capture_default_str();
    app.add_option("--sector-bound", cfg.limits.sector_bound)->capture_default_str();
    app.add_option("--mcap-bound", cfg.limits.mcap_bound)->capture_default_str();
    app.add_option("--beta-bound", cfg.limits.beta_bound)->capture_default_str();
  }

  EngineConfig resolve() {
    const auto colon = te_band.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("--te-band must look like lo:hi");
    cfg.te_min = std::stod(te_band.substr(0, colon));
    cfg.te_max = std::stod(te_band.substr(colon + 1));
    cfg.lambda_rule = lambda_rule == "algorithm" ? LambdaRule::Algorithm : LambdaRule::TowardBand;
    cfg.validate();
    return cfg;
  }
};

const AssetUniverse& pick_date(const Dataset& data, const std::string& date) {
  if (date.empty()) return data.universes.back();
  const Date d = parse_iso_date(date);
  for (const auto& u : data.universes) {
    if (u.date == d) return u;
  }
  throw AlignmentError("no review dated " + date);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

template <class Fn>
void write_file(const std::string& path, Fn&& fn) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  fn(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Column-generation portfolio construction against a benchmark"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  // gen
  auto* gen = app.add_subcommand("gen", "write a synthetic dataset");
  SyntheticSpec spec;
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--assets", spec.n_assets)->capture_default_str();
  gen->add_option("--sectors", spec.n_sectors)->capture_default_str();
  gen->add_option("--factors", spec.n_factors)->capture_default_str();
  gen->add_option("--periods", spec.n_periods)->capture_default_str();
  gen->add_option("--seed", spec.seed)->capture_default_str();
  gen->add_option("--concentration", spec.bench_concentration, "gamma shape of the benchmark draw")
      ->capture_default_str();

  // solve
  auto* solve = app.add_subcommand("solve", "construct the portfolio for one review date");
  EngineFlags solve_flags;
  std::string solve_dir, solve_date, solve_out, solve_trace;
  solve->add_option("--data-dir", solve_dir)->required();
  solve->add_option("--date", solve_date, "review date, YYYY-MM-DD (default: last)");
  solve->add_option("--out", solve_out, "weights JSON");
  solve->add_option("--trace", solve_trace, "per-iteration JSON lines");
  solve_flags.add(*solve);

  // backtest
  auto* backtest = app.add_subcommand("backtest", "rebalance through every review date");
  EngineFlags bt_flags;
  BacktestConfig bt_cfg;
  std::string bt_dir, bt_out = "report.json", bt_ledger, bt_ledger_csv, bt_plot;
  bool show_gross = false;
  backtest->add_option("--data-dir", bt_dir)->required();
  backtest->add_option("--turnover-cost", bt_cfg.turnover_cost)->capture_default_str();
  backtest->add_option("--out", bt_out, "performance report JSON")->capture_default_str();
  backtest->add_option("--ledger", bt_ledger, "full ledger JSON");
  backtest->add_option("--ledger-csv", bt_ledger_csv, "per-asset ledger CSV");
  backtest->add_option("--plot-csv", bt_plot, "per-period returns CSV");
  auto* net_flag = backtest->add_flag("--net", "print net-of-cost metrics (default)");
  backtest->add_flag("--gross", show_gross, "print gross metrics")->excludes(net_flag);
  bt_flags.add(*backtest);

  // oracle
  auto* oracle = app.add_subcommand("oracle", "exhaustive cardinality search on a small universe");
  std::string or_dir, or_date, or_out;
  int k_min = 1;
  int k_max = 6;
  double or_lambda = 5.0;
  ExactOptions or_opts;
  or_opts.max_n = 12;
  oracle->add_option("--data-dir", or_dir)->required();
  oracle->add_option("--date", or_date, "review date, YYYY-MM-DD (default: last)");
  oracle->add_option("--max-n", or_opts.max_n, "refuse larger universes")->capture_default_str();
  oracle->add_option("--k-min", k_min)->capture_default_str();
  oracle->add_option("--k-max", k_max)->capture_default_str();
  oracle->add_option("--lambda", or_lambda)->capture_default_str();
  oracle->add_option("--threads", or_opts.threads)->capture_default_str();
  oracle->add_option("--out", or_out, "subset table CSV");
  oracle->add_option("--dev-bound", or_opts.limits.dev_bound)->capture_default_str();
  oracle->add_option("--sector-bound", or_opts.limits.sector_bound)->capture_default_str();
  oracle->add_option("--mcap-bound", or_opts.limits.mcap_bound)->capture_default_str();
  oracle->add_option("--beta-bound", or_opts.limits.beta_bound)->capture_default_str();

  // check
  auto* check = app.add_subcommand("check", "run the acceptance suite");
  std::vector<int> only;
  check->add_option("criteria", only, "criterion ids (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*gen) {
      write_dataset(generate_synthetic(spec), gen_out);
      spdlog::info("wrote {} periods of {} assets to {}", spec.n_periods, spec.n_assets, gen_out);
      return kExitOk;
    }

    if (*solve) {
      const EngineConfig cfg = solve_flags.resolve();
      const Dataset data = parse_universe(solve_dir);
      const AssetUniverse& u = pick_date(data, solve_date);
      std::optional<std::ofstream> trace;
      if (!solve_trace.empty()) trace.emplace(solve_trace);
      const PeriodResult r = run_period(u, {}, cfg, trace ? &*trace : nullptr);
      nlohmann::json weights = nlohmann::json::object();
      for (int i = 0; i < u.size(); ++i) {
        if (r.w_best.size() && r.w_best[i] > cfg.drop_threshold) weights[u.ids[i]] = r.w_best[i];
      }
      const nlohmann::json out = {{"date", format_date(u.date)},
                                  {"status", std::string(to_string(r.status))},
                                  {"message", r.message},
                                  {"iterations", r.iterations},
                                  {"tracking_error", r.te_best},
                                  {"score", r.score_best},
                                  {"lambda_final", r.lambda_final},
                                  {"weights", weights}};
      if (solve_out.empty()) {
        std::cout << out.dump(2) << '\n';
      } else {
        write_json(solve_out, out);
      }
      return exit_code(r.status);
    }

    if (*backtest) {
      bt_cfg.engine = bt_flags.resolve();
      const Dataset data = parse_universe(bt_dir);
      const auto [ledger, report] = run_backtest(data, bt_cfg);
      write_json(bt_out, to_json(report));
      if (!bt_ledger.empty()) write_json(bt_ledger, to_json(ledger));
      if (!bt_ledger_csv.empty()) write_file(bt_ledger_csv, [&](std::ostream& os) { write_ledger_csv(os, ledger); });
      if (!bt_plot.empty()) write_file(bt_plot, [&](std::ostream& os) { write_plot_csv(os, ledger); });
      const MetricSet& m = show_gross ? report.gross : report.net;
      std::cout << (show_gross ? "gross" : "net") << " over " << report.periods << " periods: cumulative "
                << m.cumulative_return << ", annualized " << m.annualized_return << ", excess "
                << m.annualized_excess_return << ", TE " << m.annualized_tracking_error << ", IR "
                << m.information_ratio << '\n';
      int worst = kExitOk;
      for (const auto& p : ledger.periods) worst = std::max(worst, exit_code(p.status));
      return worst;
    }

    if (*oracle) {
      const Dataset data = parse_universe(or_dir);
      const AssetUniverse& u = pick_date(data, or_date);
      or_opts.keep_table = !or_out.empty();
      ExactResult r;
      try {
        r = enumerate_exact(u, k_min, k_max, or_lambda, or_opts);
      } catch (const TooLarge&) {
        throw;
      } catch (const Error& e) {
        // Every subset in the band is infeasible.
        spdlog::error("{}", e.what());
        return kExitInfeasible;
      }
      if (!or_out.empty()) write_file(or_out, [&](std::ostream& os) { write_subset_table_csv(os, u, r); });
      std::cout << "best objective " << r.best_objective << " over " << r.solved_subsets << " of "
                << r.evaluated_subsets << " subsets:";
      for (int i : r.best_subset) std::cout << ' ' << u.ids[i];
      std::cout << '\n';
      return kExitOk;
    }

    if (*check) {
      spdlog::set_level(spdlog::level::err);
      return acceptance::run_criteria(only, std::cout) ? kExitOk : kExitFailed;
    }
  } catch (const InfeasibleByConstruction& e) {
    spdlog::error("{}", e.what());
    return kExitInfeasible;
  } catch (const SchemaError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const AlignmentError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const TooLarge& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailed;
  }
  return kExitOk;
}
