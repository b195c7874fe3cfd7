#include "cgport/backtest.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cgport/errors.hpp"

namespace cgport {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; NaN below two observations.
double stdev(const std::vector<double>& v) {
  if (v.size() < 2) return kNaN;
  const double mu = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double ratio(double num, double den) { return (std::isfinite(den) && den > 0.0) ? num / den : kNaN; }

double cumulative(const std::vector<double>& r) {
  double growth = 1.0;
  for (double x : r) growth *= 1.0 + x;
  return growth - 1.0;
}

double annualize(double cum, int periods, int per_year) {
  return std::pow(1.0 + cum, static_cast<double>(per_year) / static_cast<double>(periods)) - 1.0;
}

MetricSet metrics_for(const std::vector<double>& ret, const std::vector<double>& bench, int per_year) {
  MetricSet m;
  const int t = static_cast<int>(ret.size());
  std::vector<double> active(ret.size());
  for (std::size_t i = 0; i < ret.size(); ++i) active[i] = ret[i] - bench[i];
  m.cumulative_return = cumulative(ret);
  m.annualized_return = annualize(m.cumulative_return, t, per_year);
  m.annualized_excess_return = m.annualized_return - annualize(cumulative(bench), t, per_year);
  const double te = stdev(active);
  m.annualized_tracking_error = te * std::sqrt(static_cast<double>(per_year));
  m.sharpe_ratio = ratio(mean(ret), stdev(ret));
  m.information_ratio = ratio(mean(active), te);
  return m;
}

PeriodResult fallback_weights(const AssetUniverse& u, const Holdings& prev, PeriodStatus status) {
  PeriodResult r;
  r.status = status;
  r.w_best = Vector::Zero(u.size());
  for (const auto& [id, w] : prev) {
    const int i = u.find(id);
    if (i >= 0) r.w_best[i] = w;
  }
  const double total = r.w_best.sum();
  if (total > 0.0) {
    r.w_best /= total;
  } else {
    r.w_best = u.bench;
  }
  r.d_best = r.w_best - u.bench;
  return r;
}

}  // namespace

Vector pre_rebalance_weights(const Vector& w_prev, const Vector& r_prev) {
  if (w_prev.size() != r_prev.size()) throw std::invalid_argument("pre_rebalance_weights: length mismatch");
  const Vector grown = w_prev.cwiseProduct((1.0 + r_prev.array()).matrix());
  const double total = grown.sum();
  if (!(total > 0.0)) throw DegeneratePortfolio("drifted portfolio value is not positive");
  return grown / total;
}

double turnover(std::span<const double> w, std::span<const double> w_pre) {
  if (w.size() != w_pre.size()) throw std::invalid_argument("turnover: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += std::abs(w[i] - w_pre[i]);
  return total;
}

std::pair<BacktestLedger, PerformanceReport> run_backtest(const Dataset& data, const BacktestConfig& cfg,
                                                          const Rebalancer& rebalance) {
  if (data.universes.size() != data.realized.size()) {
    throw AlignmentError("backtest: " + std::to_string(data.universes.size()) + " universes but " +
                         std::to_string(data.realized.size()) + " return periods");
  }
  if (data.universes.empty()) throw AlignmentError("backtest: no review periods");
  for (std::size_t t = 1; t < data.universes.size(); ++t) {
    if (data.universes[t].date <= data.universes[t - 1].date) throw AlignmentError("backtest: review dates not increasing");
  }
  const Rebalancer choose = rebalance ? rebalance : Rebalancer([](const AssetUniverse& u, const Holdings& h,
                                                                  const EngineConfig& e) { return run_period(u, h, e); });

  BacktestLedger ledger;
  ledger.config = cfg;
  Holdings holdings;  // drifted weights going into the next review

  for (std::size_t t = 0; t < data.universes.size(); ++t) {
    const AssetUniverse& u = data.universes[t];
    const ReturnsById& realized = data.realized[t];
    const int n = u.size();

    LedgerEntry e;
    e.date = u.date;
    e.ids = u.ids;
    e.w_pre = Vector::Zero(n);
    for (const auto& [id, w] : holdings) {
      const int i = u.find(id);
      if (i >= 0) {
        e.w_pre[i] = w;
      } else {
        e.delisted_weight += w;
      }
    }

    PeriodResult chosen = choose(u, holdings, cfg.engine);
    if (chosen.status == PeriodStatus::MasterInfeasible) {
      spdlog::warn("{}: master infeasible ({}), keeping previous holdings", format_date(u.date), chosen.message);
      chosen = fallback_weights(u, holdings, chosen.status);
    }
    e.weights = chosen.w_best;
    e.status = chosen.status;
    e.iterations = chosen.iterations;
    e.tracking_error = tracking_error(u, e.weights);
    e.lambda_final = chosen.lambda_final;
    e.active_assets = count_active(e.weights, cfg.engine.drop_threshold);

    e.returns = Vector::Zero(n);
    int missing = 0;
    for (int i = 0; i < n; ++i) {
      const auto it = realized.find(u.ids[i]);
      if (it != realized.end()) {
        e.returns[i] = it->second;
      } else {
        ++missing;
      }
    }
    if (missing > 0) spdlog::warn("{}: {} assets without a realized return, using 0", format_date(u.date), missing);

    e.turnover = turnover(as_span(e.weights), as_span(e.w_pre)) + e.delisted_weight;
    e.turnover_cost = cfg.turnover_cost * e.turnover;
    e.portfolio_return = e.weights.dot(e.returns);
    e.benchmark_return = u.bench.dot(e.returns);
    e.net_return = e.portfolio_return - e.turnover_cost;

    const Vector drifted = pre_rebalance_weights(e.weights, e.returns);
    holdings.clear();
    for (int i = 0; i < n; ++i) {
      if (drifted[i] != 0.0) holdings[u.ids[i]] = drifted[i];
    }
    ledger.periods.push_back(std::move(e));
  }
  PerformanceReport report = performance_metrics(ledger, cfg.periods_per_year);
  return {std::move(ledger), report};
}

PerformanceReport performance_metrics(const BacktestLedger& ledger, int periods_per_year) {
  if (ledger.periods.empty()) throw std::invalid_argument("performance_metrics: empty ledger");
  if (periods_per_year <= 0) throw std::invalid_argument("performance_metrics: periods_per_year must be positive");
  std::vector<double> gross, net, bench;
  for (const auto& p : ledger.periods) {
    gross.push_back(p.portfolio_return);
    net.push_back(p.net_return);
    bench.push_back(p.benchmark_return);
  }
  PerformanceReport r;
  r.periods = static_cast<int>(gross.size());
  r.benchmark_cumulative_return = cumulative(bench);
  r.benchmark_annualized_return = annualize(r.benchmark_cumulative_return, r.periods, periods_per_year);
  r.gross = metrics_for(gross, bench, periods_per_year);
  r.net = metrics_for(net, bench, periods_per_year);
  return r;
}

namespace {

nlohmann::json to_json(const MetricSet& m) {
  return {{"cumulative_return", m.cumulative_return},
          {"annualized_return", m.annualized_return},
          {"annualized_excess_return", m.annualized_excess_return},
          {"annualized_tracking_error", m.annualized_tracking_error},
          {"sharpe_ratio", m.sharpe_ratio},
          {"information_ratio", m.information_ratio}};
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

nlohmann::json to_json(const EngineConfig& c) {
  // pricing_threads is deliberately absent: it must not change any output.
  return {{"time_limit_s", c.time_limit_s},
          {"max_iterations", c.max_iterations},
          {"lambda0", c.lambda0},
          {"lambda_bar", c.lambda_bar},
          {"te_min", c.te_min},
          {"te_max", c.te_max},
          {"card_target", c.card_target},
          {"card_min", c.card_min},
          {"drop_threshold", c.drop_threshold},
          {"turnover_eps", c.turnover_eps},
          {"as_budget", c.as_budget},
          {"seed", c.seed},
          {"lambda_rule", std::string(to_string(c.lambda_rule))},
          {"literal_score", c.literal_score},
          {"limits",
           {{"dev_bound", c.limits.dev_bound},
            {"sector_bound", c.limits.sector_bound},
            {"mcap_bound", c.limits.mcap_bound},
            {"beta_bound", c.limits.beta_bound}}},
          {"qp", {{"tol", c.qp.tol}, {"max_iter", c.qp.max_iter}}}};
}

nlohmann::json to_json(const BacktestLedger& ledger) {
  nlohmann::json periods = nlohmann::json::array();
  for (const auto& p : ledger.periods) {
    periods.push_back({{"date", format_date(p.date)},
                       {"ids", p.ids},
                       {"weights", to_std(p.weights)},
                       {"w_pre", to_std(p.w_pre)},
                       {"returns", to_std(p.returns)},
                       {"delisted_weight", p.delisted_weight},
                       {"portfolio_return", p.portfolio_return},
                       {"benchmark_return", p.benchmark_return},
                       {"turnover", p.turnover},
                       {"turnover_cost", p.turnover_cost},
                       {"net_return", p.net_return},
                       {"status", std::string(to_string(p.status))},
                       {"iterations", p.iterations},
                       {"tracking_error", p.tracking_error},
                       {"lambda_final", p.lambda_final},
                       {"active_assets", p.active_assets}});
  }
  return {{"config",
           {{"engine", to_json(ledger.config.engine)},
            {"turnover_cost", ledger.config.turnover_cost},
            {"periods_per_year", ledger.config.periods_per_year}}},
          {"periods", periods}};
}

nlohmann::json to_json(const PerformanceReport& r) {
  return {{"periods", r.periods},
          {"benchmark_cumulative_return", r.benchmark_cumulative_return},
          {"benchmark_annualized_return", r.benchmark_annualized_return},
          {"gross", to_json(r.gross)},
          {"net", to_json(r.net)}};
}

void write_ledger_csv(std::ostream& os, const BacktestLedger& ledger) {
  os.precision(17);
  os << "date,sedol,weight,w_pre,return\n";
  for (const auto& p : ledger.periods) {
    for (std::size_t i = 0; i < p.ids.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      if (p.weights[k] == 0.0 && p.w_pre[k] == 0.0) continue;
      os << format_date(p.date) << ',' << p.ids[i] << ',' << p.weights[k] << ',' << p.w_pre[k] << ','
         << p.returns[k] << '\n';
    }
  }
}

void write_plot_csv(std::ostream& os, const BacktestLedger& ledger) {
  os.precision(17);
  os << "date,gross_return,net_return,benchmark_return,turnover_cost\n";
  for (const auto& p : ledger.periods) {
    os << format_date(p.date) << ',' << p.portfolio_return << ',' << p.net_return << ',' << p.benchmark_return << ','
       << p.turnover_cost << '\n';
  }
}

}  // namespace cgport
