#pragma once

#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cgport/engine.hpp"
#include "cgport/model.hpp"

namespace cgport {

/// Per-asset returns, by id, of the investment made on a review date.
using ReturnsById = std::map<std::string, double>;

/// Review snapshots and the realized returns of the investment made on each
/// of them (realized[t] belongs to universes[t]).
struct Dataset {
  std::vector<AssetUniverse> universes;
  std::vector<ReturnsById> realized;
};

/// w_prev (1 + r_prev), renormalized. Throws DegeneratePortfolio when the
/// drifted portfolio has no value left.
Vector pre_rebalance_weights(const Vector& w_prev, const Vector& r_prev);

/// L1 distance between two weight vectors.
double turnover(std::span<const double> w, std::span<const double> w_pre);

struct BacktestConfig {
  EngineConfig engine;
  double turnover_cost = 0.005;  // per unit of turnover
  int periods_per_year = 13;
};

struct LedgerEntry {
  Date date{};
  std::vector<std::string> ids;
  Vector weights;
  Vector w_pre;
  Vector returns;
  double delisted_weight = 0.0;  // drifted weight in assets that left the market
  double portfolio_return = 0.0;
  double benchmark_return = 0.0;
  double turnover = 0.0;
  double turnover_cost = 0.0;
  double net_return = 0.0;
  PeriodStatus status = PeriodStatus::Ok;
  int iterations = 0;
  double tracking_error = 0.0;
  double lambda_final = 0.0;
  int active_assets = 0;
};

struct BacktestLedger {
  std::vector<LedgerEntry> periods;
  BacktestConfig config;
};

struct MetricSet {
  double cumulative_return = 0.0;
  double annualized_return = 0.0;
  double annualized_excess_return = 0.0;
  double annualized_tracking_error = 0.0;
  double sharpe_ratio = 0.0;
  double information_ratio = 0.0;
};

struct PerformanceReport {
  int periods = 0;
  double benchmark_cumulative_return = 0.0;
  double benchmark_annualized_return = 0.0;
  MetricSet gross;
  MetricSet net;
};

/// Chooses the weights for one review. Defaults to run_period.
using Rebalancer = std::function<PeriodResult(const AssetUniverse&, const Holdings&, const EngineConfig&)>;

std::pair<BacktestLedger, PerformanceReport> run_backtest(const Dataset& data, const BacktestConfig& cfg,
                                                          const Rebalancer& rebalance = {});

/// Ratios with zero dispersion (or fewer than two periods) are NaN.
PerformanceReport performance_metrics(const BacktestLedger& ledger, int periods_per_year);

nlohmann::json to_json(const BacktestLedger& ledger);
nlohmann::json to_json(const PerformanceReport& report);
nlohmann::json to_json(const EngineConfig& cfg);

// Per-period ledger rows (one row per asset held or benchmarked).
void write_ledger_csv(std::ostream& os, const BacktestLedger& ledger);
// date, gross return, net return, benchmark return, turnover cost.
void write_plot_csv(std::ostream& os, const BacktestLedger& ledger);

}  // namespace cgport
