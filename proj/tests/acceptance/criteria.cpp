#include "criteria.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "cgport/backtest.hpp"
#include "cgport/data_io.hpp"
#include "cgport/engine.hpp"
#include "cgport/errors.hpp"
#include "cgport/oracle.hpp"
#include "cgport/pricing.hpp"

namespace cgport::acceptance {

namespace {

// Tolerances and budgets.
constexpr double kLemmaTol = 1e-12;
constexpr double kLemmaSeconds = 1.0;
constexpr double kKktTol = 1e-6;
constexpr double kKktSeconds = 60.0;
constexpr double kPricingEps = 1e-5;
constexpr double kPricingRel = 0.1;
constexpr double kPricingAbs = 1e-4;
constexpr double kSpearmanMin = 0.9;
constexpr double kPricingSeconds = 300.0;
constexpr double kGapNeverBelow = 1e-8;
constexpr double kMeanGapMax = 0.05;
constexpr double kGapSecondsPerInstance = 60.0;
constexpr double kBandSeconds = 170.0;
constexpr double kTadFloor = 1.2 - 1e-9;
constexpr double kBookkeepingTol = 1e-12;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(3) << x;
  return os.str();
}

ModelLimits loose_limits() { return {0.3, 0.3, 0.3, 0.3}; }

AssetUniverse synthetic(int n, std::uint64_t seed, int sectors, double concentration) {
  SyntheticSpec spec;
  spec.n_assets = n;
  spec.n_sectors = sectors;
  spec.n_factors = std::min(3, n);
  spec.n_periods = 1;
  spec.seed = seed;
  spec.bench_concentration = concentration;
  return generate_synthetic(spec).universes.front();
}

Vector random_simplex(int n, std::mt19937_64& gen) {
  std::exponential_distribution<double> e(1.0);
  Vector w(n);
  for (int i = 0; i < n; ++i) w[i] = e(gen);
  return w / w.sum();
}

// Average ranks, ties sharing the mean position.
std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<int> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(ra.size());
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(rb.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return saa == sbb ? 1.0 : 0.0;
  return sab / std::sqrt(saa * sbb);
}

bool feasible(const QuadraticProgram& qp, const Vector& x, double tol) {
  if (qp.num_ineq() > 0 && (qp.A_ineq * x - qp.b_ineq).maxCoeff() > tol) return false;
  if (qp.num_eq() > 0 && (qp.A_eq * x - qp.b_eq).cwiseAbs().maxCoeff() > tol) return false;
  return true;
}

CriterionResult lemma_identity() {
  CriterionResult r{1, "active-share identity", false, "", 0.0};
  const auto t0 = Clock::now();
  std::mt19937_64 gen(101);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Vector w = random_simplex(50, gen);
    const Vector b = random_simplex(50, gen);
    const double gap = std::abs(total_abs_deviation(as_span(w), as_span(b)) - 2.0 * active_share(as_span(w), as_span(b)));
    worst = std::max(worst, gap);
  }
  r.seconds = since(t0);
  r.pass = worst <= kLemmaTol && r.seconds < kLemmaSeconds;
  r.detail = "1000 pairs n=50, max |tad - 2 AS| = " + fmt(worst) + " (tol " + fmt(kLemmaTol) + ")";
  return r;
}

// Master over a universe of 3..120 assets. Large universes keep the 70
// largest benchmark weights as candidates; the instance is kept only if the
// benchmark with the excluded mass spread pro rata is feasible.
std::optional<MasterProblem> random_master(std::mt19937_64& gen, int k) {
  std::uniform_int_distribution<int> size(3, 120);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = size(gen);
  const double concentration = 0.5 + 19.5 * unit(gen);
  const double lambda = std::exp(std::log(0.1) + unit(gen) * std::log(1000.0));
  const AssetUniverse u = synthetic(n, 5000 + static_cast<std::uint64_t>(k), 1 + k % 6, concentration);
  std::vector<int> c(n);
  std::iota(c.begin(), c.end(), 0);
  if (n > 70) {
    std::stable_sort(c.begin(), c.end(), [&](int a, int b) { return u.bench[a] > u.bench[b]; });
    c.resize(70);
  }
  MasterProblem mp;
  try {
    mp = build_master(u, c, lambda);
  } catch (const InfeasibleByConstruction&) {
    return std::nullopt;
  }
  Vector x(static_cast<Eigen::Index>(mp.candidates.size()));
  for (std::size_t j = 0; j < mp.candidates.size(); ++j) x[static_cast<Eigen::Index>(j)] = u.bench[mp.candidates[j]];
  x /= x.sum();
  if (!feasible(mp.qp, x, 1e-12)) return std::nullopt;
  return mp;
}

CriterionResult kkt_certification() {
  CriterionResult r{2, "KKT certification", false, "", 0.0};
  const auto t0 = Clock::now();
  std::mt19937_64 gen(202);
  int solved = 0, drawn = 0, optimal = 0, largest = 0;
  double worst = 0.0;
  while (solved < 200) {
    const auto mp = random_master(gen, drawn++);
    if (!mp) continue;
    ++solved;
    largest = std::max(largest, static_cast<int>(mp->candidates.size()));
    const QpSolution sol = solve_qp(mp->qp);
    if (sol.status == QpStatus::Optimal) ++optimal;
    worst = std::max(worst, kkt_residuals(mp->qp, sol).max());
  }

  // Brute force on three-asset masters over the feasible part of a grid.
  int grid_ok = 0;
  const int grid_cases = 20;
  double worst_grid = 0.0;
  for (int k = 0; k < grid_cases; ++k) {
    const AssetUniverse u = synthetic(3, 7000 + static_cast<std::uint64_t>(k), 1, 20.0);
    const std::vector<int> all{0, 1, 2};
    const MasterProblem mp = build_master(u, all, 5.0, loose_limits());
    const QpSolution sol = solve_qp(mp.qp);
    const double step = 1e-3;
    double grid = std::numeric_limits<double>::infinity();
    const int steps = static_cast<int>(std::lround(1.0 / step));
    for (int a = 0; a <= steps; ++a) {
      for (int b = 0; a + b <= steps; ++b) {
        const Vector x = (Vector(3) << a * step, b * step, (steps - a - b) * step).finished();
        if (!feasible(mp.qp, x, 1e-12)) continue;
        grid = std::min(grid, mp.qp.objective_at(x));
      }
    }
    const Vector g = 2.0 * mp.qp.Q * sol.x + mp.qp.c;
    const double resolution = g.cwiseAbs().maxCoeff() * 2.0 * step + mp.qp.Q.cwiseAbs().maxCoeff() * 4.0 * step * step;
    const bool ok = sol.status == QpStatus::Optimal && sol.objective <= grid + 1e-9 && sol.objective >= grid - resolution;
    worst_grid = std::max(worst_grid, std::abs(sol.objective - grid) / std::max(resolution, 1e-300));
    if (ok) ++grid_ok;
  }

  r.seconds = since(t0);
  r.pass = optimal == 200 && worst <= kKktTol && grid_ok == grid_cases && r.seconds < kKktSeconds;
  r.detail = std::to_string(optimal) + "/200 optimal (n <= " + std::to_string(largest) + "), max residual " +
             fmt(worst) + "; grid " + std::to_string(grid_ok) + "/" + std::to_string(grid_cases) +
             " within resolution";
  return r;
}

CriterionResult pricing_correctness() {
  CriterionResult r{3, "pricing vs perturbed re-solve", false, "", 0.0};
  const auto t0 = Clock::now();
  QpSettings tight;
  tight.tol = 1e-10;
  tight.max_iter = 400;
  int instances_ok = 0, checked = 0, within = 0, redrawn = 0;
  double min_rho = 1.0;
  std::string first_failure;
  for (int k = 0; k < 50; ++k) {
    const int n = 6 + k % 3;
    const AssetUniverse u = synthetic(n, 300 + static_cast<std::uint64_t>(k), 2, 20.0);
    // Candidate draws whose master is infeasible (e.g. all in one sector, whose
    // upper bound then caps the budget) are redrawn.
    Rng rng(static_cast<std::uint64_t>(k));
    CandidateState state;
    MasterProblem mp;
    QpSolution sol;
    while (true) {
      std::vector<int> pool(n);
      std::iota(pool.begin(), pool.end(), 0);
      std::vector<int> c;
      for (int j = 0; j < 3; ++j) {
        const auto pick = static_cast<std::size_t>(rng.below(pool.size()));
        c.push_back(pool[pick]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
      }
      state = CandidateState::make(n, c, Vector::Zero(n), 5.0, 5.0, 0);
      state = ensure_group_coverage(std::move(state), u, loose_limits(), 1.0);
      mp = build_master(u, state.candidates, 5.0, loose_limits());
      sol = solve_qp(mp.qp, tight);
      if (sol.status == QpStatus::Optimal) break;
      ++redrawn;
    }
    const MarginalReport report = marginal_effects(mp, sol, u, state);

    std::vector<double> delta, fd;
    bool all_close = true;
    for (const auto& rec : report.records) {
      const double quotient = perturbed_resolve(mp, u, rec.asset, kPricingEps, tight) / kPricingEps;
      delta.push_back(rec.delta);
      fd.push_back(quotient);
      ++checked;
      if (std::abs(quotient - rec.delta) <= std::max(kPricingRel * std::abs(rec.delta), kPricingAbs)) {
        ++within;
      } else {
        all_close = false;
        if (first_failure.empty()) {
          first_failure = "; first miss: instance " + std::to_string(k) + " asset " + rec.id + " delta " +
                          fmt(rec.delta) + " vs " + fmt(quotient);
        }
      }
    }
    const double rho = spearman(delta, fd);
    min_rho = std::min(min_rho, rho);
    if (all_close && rho >= kSpearmanMin) ++instances_ok;
  }
  r.seconds = since(t0);
  r.pass = instances_ok == 50 && r.seconds < kPricingSeconds;
  r.detail = std::to_string(within) + "/" + std::to_string(checked) + " assets within tolerance, min Spearman " +
             fmt(min_rho) + ", " + std::to_string(instances_ok) + "/50 instances pass (" + std::to_string(redrawn) +
             " infeasible candidate draws replaced)" + first_failure;
  return r;
}

CriterionResult cg_vs_exact() {
  CriterionResult r{4, "CG vs exact enumeration", false, "", 0.0};
  const auto t0 = Clock::now();
  constexpr double lambda = 5.0;
  int never_below = 0, cardinality_ok = 0;
  double gap_sum = 0.0, worst_gap = 0.0, slowest = 0.0;
  for (int k = 0; k < 30; ++k) {
    const AssetUniverse u = synthetic(12, 400 + static_cast<std::uint64_t>(k), 2, 20.0);
    EngineConfig cfg;
    cfg.lambda0 = lambda;
    cfg.lambda_bar = lambda;
    cfg.te_min = 1e-12;  // no tracking-error band: lambda stays fixed
    cfg.te_max = 1e12;
    cfg.card_target = 5;
    cfg.card_min = 3;
    cfg.as_budget = 1.0;
    cfg.limits = loose_limits();
    cfg.time_limit_s = kGapSecondsPerInstance;
    cfg.max_iterations = 60;
    cfg.seed = static_cast<std::uint64_t>(k);
    const auto ti = Clock::now();
    const PeriodResult cg = run_period(u, {}, cfg);
    slowest = std::max(slowest, since(ti));
    ExactOptions opts;
    opts.limits = loose_limits();
    const ExactResult exact = enumerate_exact(u, 3, 5, lambda, opts);
    const double obj = mv_objective(u, cg.w_best, lambda);
    if (obj >= exact.best_objective - kGapNeverBelow) ++never_below;
    if (count_active(cg.w_best, cfg.drop_threshold) <= 5) ++cardinality_ok;
    const double gap = (obj - exact.best_objective) / std::abs(exact.best_objective);
    gap_sum += gap;
    worst_gap = std::max(worst_gap, gap);
  }
  r.seconds = since(t0);
  const double mean_gap = gap_sum / 30.0;
  r.pass = never_below == 30 && cardinality_ok == 30 && mean_gap <= kMeanGapMax && slowest <= kGapSecondsPerInstance;
  r.detail = "30 instances n=12 band [3,5]: CG >= exact on " + std::to_string(never_below) +
             "/30, mean relative gap " + fmt(mean_gap) + " (max " + fmt(worst_gap) + ", target " + fmt(kMeanGapMax) +
             ")";
  return r;
}

struct BandRun {
  PeriodResult result;
  double seconds = 0.0;
};

// Criterion 5 runs are shared with criterion 6.
const std::vector<BandRun>& band_runs() {
  static const std::vector<BandRun> runs = [] {
    std::vector<BandRun> out;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      SyntheticSpec spec;
      spec.n_periods = 1;
      spec.seed = seed;
      const AssetUniverse u = generate_synthetic(spec).universes.front();
      EngineConfig cfg;
      cfg.seed = seed;
      cfg.time_limit_s = kBandSeconds;
      cfg.max_iterations = 200;
      const auto t0 = Clock::now();
      PeriodResult res = run_period(u, {}, cfg);
      out.push_back({std::move(res), since(t0)});
    }
    return out;
  }();
  return runs;
}

CriterionResult lambda_band() {
  CriterionResult r{5, "tracking-error band", false, "", 0.0};
  const auto t0 = Clock::now();
  const EngineConfig defaults;
  int ok = 0;
  double lo = 1.0, hi = 0.0, slowest = 0.0;
  int most_active = 0;
  for (const auto& run : band_runs()) {
    const PeriodResult& res = run.result;
    const int active = count_active(res.w_best, defaults.drop_threshold);
    lo = std::min(lo, res.te_best);
    hi = std::max(hi, res.te_best);
    most_active = std::max(most_active, active);
    slowest = std::max(slowest, run.seconds);
    if (res.status == PeriodStatus::Ok && res.te_best >= defaults.te_min && res.te_best <= defaults.te_max &&
        active <= defaults.card_target && run.seconds < kBandSeconds) {
      ++ok;
    }
  }
  r.seconds = since(t0);
  r.pass = ok == 10;
  r.detail = std::to_string(ok) + "/10 seeds Ok, te in [" + fmt(lo) + ", " + fmt(hi) + "], at most " +
             std::to_string(most_active) + " active, slowest " + fmt(slowest) + " s";
  return r;
}

CriterionResult active_share_guarantee() {
  CriterionResult r{6, "active-share guarantee", false, "", 0.0};
  const auto t0 = Clock::now();
  int accepted = 0, ok = 0;
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& run : band_runs()) {
    for (const auto& it : run.result.trace) {
      if (!it.accepted) continue;
      ++accepted;
      lowest = std::min(lowest, it.total_abs_deviation);
      if (it.total_abs_deviation >= kTadFloor) ++ok;
    }
  }
  r.seconds = since(t0);
  r.pass = accepted > 0 && ok == accepted;
  r.detail = std::to_string(ok) + "/" + std::to_string(accepted) + " accepted solutions with tad >= 1.2, min " +
             fmt(lowest);
  return r;
}

Dataset frozen_fixture(int periods) {
  SyntheticSpec spec;
  spec.n_assets = 200;
  spec.n_periods = periods;
  spec.seed = 7;
  return generate_synthetic(spec);
}

BacktestConfig fixture_config(int threads) {
  BacktestConfig cfg;
  cfg.engine.seed = 7;
  cfg.engine.max_iterations = 30;
  cfg.engine.pricing_threads = threads;
  return cfg;
}

CriterionResult backtest_bookkeeping() {
  CriterionResult r{7, "backtest bookkeeping", false, "", 0.0};
  const auto t0 = Clock::now();
  const Dataset data = frozen_fixture(12);
  const auto [ledger, report] = run_backtest(data, fixture_config(1));
  const auto [ledger2, report2] = run_backtest(data, fixture_config(1));

  double worst = 0.0;
  double gross_growth = 1.0, net_growth = 1.0;
  for (std::size_t t = 0; t < ledger.periods.size(); ++t) {
    const LedgerEntry& e = ledger.periods[t];
    double ret = 0.0;
    for (int i = 0; i < e.weights.size(); ++i) ret += e.weights[i] * data.realized[t].at(e.ids[i]);
    const double traded = turnover(as_span(e.weights), as_span(e.w_pre)) + e.delisted_weight;
    const double cost = 0.005 * traded;
    worst = std::max({worst, std::abs(ret - e.portfolio_return), std::abs(traded - e.turnover),
                      std::abs((e.portfolio_return - cost) - e.net_return)});
    gross_growth *= 1.0 + ret;
    net_growth *= 1.0 + ret - cost;
  }
  worst = std::max({worst, std::abs((gross_growth - 1.0) - report.gross.cumulative_return),
                    std::abs((net_growth - 1.0) - report.net.cumulative_return)});
  const bool identical = to_json(ledger).dump() == to_json(ledger2).dump() &&
                         to_json(report).dump() == to_json(report2).dump();
  r.seconds = since(t0);
  r.pass = ledger.periods.size() == 12 && worst <= kBookkeepingTol && identical;
  r.detail = "12 periods, gross " + fmt(report.gross.cumulative_return) + " net " +
             fmt(report.net.cumulative_return) + ", max bookkeeping error " + fmt(worst) + ", rerun " +
             (identical ? "bit-identical" : "DIFFERS");
  return r;
}

CriterionResult determinism() {
  CriterionResult r{8, "determinism", false, "", 0.0};
  const auto t0 = Clock::now();
  const Dataset data = frozen_fixture(6);
  const std::string reference = to_json(run_backtest(data, fixture_config(1)).first).dump();
  int identical = 0;
  const std::vector<int> threads{1, 2, 4, 8};
  for (int t : threads) {
    if (to_json(run_backtest(data, fixture_config(t)).first).dump() == reference) ++identical;
  }
  r.seconds = since(t0);
  r.pass = identical == static_cast<int>(threads.size());
  r.detail = std::to_string(identical) + "/" + std::to_string(threads.size()) +
             " reruns (pricing threads 1, 2, 4, 8) byte-identical to the reference ledger (" +
             std::to_string(reference.size()) + " bytes)";
  return r;
}

}  // namespace

std::vector<Criterion> all_criteria() {
  return {{1, "active-share identity", lemma_identity},
          {2, "KKT certification", kkt_certification},
          {3, "pricing vs perturbed re-solve", pricing_correctness},
          {4, "CG vs exact enumeration", cg_vs_exact},
          {5, "tracking-error band", lambda_band},
          {6, "active-share guarantee", active_share_guarantee},
          {7, "backtest bookkeeping", backtest_bookkeeping},
          {8, "determinism", determinism}};
}

bool run_criteria(const std::vector<int>& only, std::ostream& os) {
  bool all = true;
  for (const auto& c : all_criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    CriterionResult res;
    try {
      res = c.run();
    } catch (const std::exception& e) {
      res = {c.id, c.name, false, std::string("threw: ") + e.what(), 0.0};
    }
    all = all && res.pass;
    os << (res.pass ? "PASS" : "FAIL") << "  criterion " << res.id << "  " << res.name << ": " << res.detail << " ["
       << fmt(res.seconds) << " s]" << std::endl;
  }
  return all;
}

}  // namespace cgport::acceptance
