#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cgport/backtest.hpp"
#include "cgport/data_io.hpp"
#include "cgport/errors.hpp"
#include "fixtures.hpp"

using namespace cgport;

namespace {

Date day(int n) { return std::chrono::sys_days{std::chrono::year{2020} / 1 / 1} + std::chrono::days{n}; }

AssetUniverse flat(int n, Date date) {
  AssetUniverse u = testing::make_universe(Vector::Constant(n, 1.0 / n), Vector::Zero(n), 0.01 * Matrix::Identity(n, n));
  u.date = date;
  return u;
}

ReturnsById constant_returns(const AssetUniverse& u, double r) {
  ReturnsById out;
  for (const auto& id : u.ids) out[id] = r;
  return out;
}

// Rebalancer that always returns fixed weights.
Rebalancer fixed(std::function<Vector(const AssetUniverse&)> pick) {
  return [pick](const AssetUniverse& u, const Holdings&, const EngineConfig&) {
    PeriodResult r;
    r.w_best = pick(u);
    r.d_best = r.w_best - u.bench;
    return r;
  };
}

BacktestLedger ledger_of(std::vector<double> ret, std::vector<double> bench) {
  BacktestLedger l;
  for (std::size_t t = 0; t < ret.size(); ++t) {
    LedgerEntry e;
    e.portfolio_return = ret[t];
    e.net_return = ret[t];
    e.benchmark_return = bench[t];
    l.periods.push_back(e);
  }
  return l;
}

}  // namespace

TEST_CASE("pre-rebalance drift") {
  const Vector w = (Vector(2) << 0.5, 0.5).finished();
  const Vector r = (Vector(2) << 1.0, 0.0).finished();
  const Vector out = pre_rebalance_weights(w, r);
  CHECK(out[0] == doctest::Approx(2.0 / 3.0));
  CHECK(out[1] == doctest::Approx(1.0 / 3.0));
  CHECK(pre_rebalance_weights(w, Vector::Zero(2)) == w);

  std::mt19937_64 gen(4);
  const Vector w10 = testing::random_simplex(10, gen);
  Vector r10(10);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  for (int i = 0; i < 10; ++i) r10[i] = unit(gen);
  const Vector d = pre_rebalance_weights(w10, r10);
  CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-14));
  double total = 0.0;
  for (int i = 0; i < 10; ++i) total += w10[i] * (1.0 + r10[i]);
  for (int i = 0; i < 10; ++i) CHECK(d[i] == doctest::Approx(w10[i] * (1.0 + r10[i]) / total).epsilon(1e-14));

  CHECK_THROWS_AS(pre_rebalance_weights(w, Vector::Constant(2, -1.0)), DegeneratePortfolio);
}

TEST_CASE("turnover") {
  const std::vector<double> a{0.2, 0.3, 0.5};
  CHECK(turnover(a, a) == 0.0);
  const std::vector<double> x{1.0, 0.0};
  const std::vector<double> y{0.0, 1.0};
  CHECK(turnover(x, y) == 2.0);
  CHECK_THROWS_AS(turnover(a, x), std::invalid_argument);
}

TEST_CASE("performance metrics") {
  SUBCASE("thirteen periods of 1% annualize to 1.01^13 - 1") {
    const auto r = performance_metrics(ledger_of(std::vector<double>(13, 0.01), std::vector<double>(13, 0.0)), 13);
    CHECK(r.gross.cumulative_return == doctest::Approx(std::pow(1.01, 13) - 1.0).epsilon(1e-14));
    CHECK(r.gross.annualized_return == doctest::Approx(0.1381).epsilon(1e-3));
  }
  SUBCASE("zero returns have no dispersion") {
    const auto r = performance_metrics(ledger_of(std::vector<double>(5, 0.0), std::vector<double>(5, 0.0)), 13);
    CHECK(r.gross.annualized_return == 0.0);
    CHECK(std::isnan(r.gross.sharpe_ratio));
  }
  SUBCASE("portfolio equal to benchmark") {
    const std::vector<double> b{0.01, -0.02, 0.03};
    const auto r = performance_metrics(ledger_of(b, b), 13);
    CHECK(r.gross.annualized_tracking_error == 0.0);
    CHECK(r.gross.annualized_excess_return == doctest::Approx(0.0));
    CHECK(std::isnan(r.gross.information_ratio));
    CHECK(std::isfinite(r.gross.sharpe_ratio));
  }
  SUBCASE("single period") {
    const auto r = performance_metrics(ledger_of({0.02}, {0.01}), 13);
    CHECK(std::isnan(r.gross.information_ratio));
    CHECK(std::isnan(r.gross.annualized_tracking_error));
  }
  SUBCASE("reordering keeps the cumulative return but not the stdev-based ratios") {
    const std::vector<double> ret{0.05, -0.01, 0.02};
    const std::vector<double> bench{0.01, 0.01, 0.0};
    const std::vector<double> ret2{ret[2], ret[1], ret[0]};
    const auto a = performance_metrics(ledger_of(ret, bench), 13);
    const auto b = performance_metrics(ledger_of(ret2, bench), 13);
    CHECK(a.gross.cumulative_return == doctest::Approx(b.gross.cumulative_return).epsilon(1e-14));
    CHECK(a.gross.information_ratio != doctest::Approx(b.gross.information_ratio));
  }
  CHECK_THROWS_AS(performance_metrics({}, 13), std::invalid_argument);
}

TEST_CASE("backtest bookkeeping with fixed rebalancers") {
  Dataset data;
  for (int t = 0; t < 2; ++t) {
    data.universes.push_back(flat(4, day(28 * t)));
    data.realized.push_back(constant_returns(data.universes.back(), 0.0));
  }
  BacktestConfig cfg;

  SUBCASE("zero returns: net is minus the turnover cost") {
    const auto pick = fixed([](const AssetUniverse&) { return (Vector(4) << 0.7, 0.1, 0.1, 0.1).finished(); });
    const auto [ledger, report] = run_backtest(data, cfg, pick);
    REQUIRE(ledger.periods.size() == 2);
    // First period buys from cash, second holds still.
    CHECK(ledger.periods[0].turnover == doctest::Approx(1.0));
    CHECK(ledger.periods[0].net_return == doctest::Approx(-0.005));
    CHECK(ledger.periods[1].turnover == doctest::Approx(0.0));
    CHECK(report.gross.cumulative_return == 0.0);
    CHECK(report.gross.annualized_return == 0.0);
    CHECK(report.net.cumulative_return == doctest::Approx(-0.005));
  }
  SUBCASE("benchmark portfolio has zero excess and no information ratio") {
    const auto pick = fixed([](const AssetUniverse& u) { return u.bench; });
    Dataset one;
    one.universes = {data.universes[0]};
    one.realized = {{{"A0", 0.1}, {"A1", 0.0}, {"A2", -0.05}, {"A3", 0.02}}};
    const auto [ledger, report] = run_backtest(one, cfg, pick);
    CHECK(report.gross.annualized_excess_return == doctest::Approx(0.0));
    CHECK(std::isnan(report.gross.information_ratio));
  }
  SUBCASE("delisted weight counts as traded") {
    Dataset shrink = data;
    shrink.universes[1] = flat(3, day(28));
    shrink.realized[1] = constant_returns(shrink.universes[1], 0.0);
    const auto pick = fixed([](const AssetUniverse& u) { return u.bench; });
    const auto [ledger, report] = run_backtest(shrink, cfg, pick);
    CHECK(ledger.periods[1].delisted_weight == doctest::Approx(0.25));
    // 0.25 sold from A3 plus 3 * (1/3 - 1/4) bought.
    CHECK(ledger.periods[1].turnover == doctest::Approx(0.5));
  }
  SUBCASE("infeasible periods keep the previous holdings") {
    int calls = 0;
    Rebalancer pick = [&calls](const AssetUniverse& u, const Holdings&, const EngineConfig&) {
      PeriodResult r;
      if (calls++ == 0) {
        r.w_best = (Vector(4) << 0.4, 0.3, 0.2, 0.1).finished();
      } else {
        r.status = PeriodStatus::MasterInfeasible;
      }
      r.d_best = r.w_best.size() ? Vector(r.w_best - u.bench) : Vector();
      return r;
    };
    const auto [ledger, report] = run_backtest(data, cfg, pick);
    CHECK(ledger.periods[1].status == PeriodStatus::MasterInfeasible);
    CHECK(ledger.periods[1].weights == ledger.periods[0].weights);
    CHECK(ledger.periods[1].turnover == doctest::Approx(0.0));
  }
  SUBCASE("misaligned data") {
    Dataset bad = data;
    bad.realized.pop_back();
    CHECK_THROWS_AS(run_backtest(bad, cfg), AlignmentError);
    Dataset backwards = data;
    std::swap(backwards.universes[0], backwards.universes[1]);
    CHECK_THROWS_AS(run_backtest(backwards, cfg), AlignmentError);
  }
}

TEST_CASE("regression: seeded 12-period synthetic backtest") {
  SyntheticSpec spec;
  spec.n_assets = 80;
  spec.n_sectors = 5;
  spec.n_periods = 12;
  spec.seed = 11;
  const Dataset data = generate_synthetic(spec);
  BacktestConfig cfg;
  cfg.engine.seed = 11;
  cfg.engine.max_iterations = 15;
  cfg.engine.card_target = 40;
  cfg.engine.card_min = 20;
  cfg.engine.limits = {0.08, 0.12, 0.12, 0.1};
  const auto [ledger, report] = run_backtest(data, cfg);

  // Frozen from a reference run.
  const double gross[] = {0.025784044927744616,  0.066953705111400752, -0.0090245961172363623, 0.04148621856792048,
                          0.035388633137465181,  0.13345934025145678,  0.089514728207254909,   0.20358918565203066,
                          -0.0071550715304734974, 0.086329784877459251, 0.082302925766668616,   0.089295592621788725};
  const double traded[] = {1.0,                 0.88896425098486742, 0.78489223364529537, 0.78724176543408775,
                           0.82919252110988573, 0.56307985877623645, 0.5690793039001133,  0.85017484464491733,
                           0.31332623102146939, 0.48742629620743039, 0.61064244987625826, 0.50559996374649563};
  REQUIRE(ledger.periods.size() == 12);
  for (int t = 0; t < 12; ++t) {
    CHECK(ledger.periods[t].portfolio_return == doctest::Approx(gross[t]).epsilon(1e-9));
    CHECK(ledger.periods[t].turnover == doctest::Approx(traded[t]).epsilon(1e-9));
    CHECK(ledger.periods[t].net_return == ledger.periods[t].portfolio_return - 0.005 * ledger.periods[t].turnover);
  }
  CHECK(report.net.cumulative_return <= report.gross.cumulative_return);
}

TEST_CASE("serialization") {
  Dataset data;
  data.universes.push_back(flat(3, day(0)));
  data.realized.push_back(constant_returns(data.universes.back(), 0.01));
  const auto [ledger, report] = run_backtest(data, {}, fixed([](const AssetUniverse& u) { return u.bench; }));

  const auto j = to_json(ledger);
  CHECK(j["periods"].size() == 1);
  CHECK(j["periods"][0]["date"] == "2020-01-01");
  CHECK(j["config"]["engine"].contains("time_limit_s"));
  CHECK_FALSE(j["config"]["engine"].contains("pricing_threads"));
  const auto r = to_json(report);
  CHECK(r["gross"]["cumulative_return"].get<double>() == doctest::Approx(0.01));

  std::ostringstream csv;
  write_ledger_csv(csv, ledger);
  CHECK(csv.str().rfind("date,sedol,weight,w_pre,return\n", 0) == 0);
  std::ostringstream plot;
  write_plot_csv(plot, ledger);
  CHECK(plot.str().find("2020-01-01") != std::string::npos);
}
