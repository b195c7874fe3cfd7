#include "cgport/engine.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

#include <json.hpp>

#include "cgport/backtest.hpp"
#include "cgport/errors.hpp"

namespace cgport {

void EngineConfig::validate() const {
  auto fail = [](const char* what) { throw std::invalid_argument(std::string("EngineConfig: ") + what); };
  if (!(time_limit_s >= 0.0)) fail("time_limit_s must be >= 0");
  if (max_iterations < 0) fail("max_iterations must be >= 0");
  if (!(lambda0 > 0.0) || !(lambda_bar > 0.0)) fail("lambda0 and lambda_bar must be positive");
  if (!(te_min > 0.0) || !(te_min < te_max)) fail("need 0 < te_min < te_max");
  if (card_target < 1 || card_min < 0 || card_min > card_target) fail("need 0 <= card_min <= card_target, card_target >= 1");
  if (!(drop_threshold > 0.0)) fail("drop_threshold must be positive");
  if (!(turnover_eps >= 0.0)) fail("turnover_eps must be >= 0");
  if (!(as_budget > 0.0)) fail("as_budget must be positive");
  if (!(lambda_lo > 0.0) || !(lambda_lo < lambda_hi)) fail("need 0 < lambda_lo < lambda_hi");
}

std::string_view to_string(PeriodStatus status) {
  switch (status) {
    case PeriodStatus::Ok:
      return "Ok";
    case PeriodStatus::TimeLimitNoFeasibleTe:
      return "TimeLimitNoFeasibleTe";
    case PeriodStatus::MasterInfeasible:
      return "MasterInfeasible";
  }
  return "Unknown";
}

std::string_view to_string(LambdaRule rule) {
  return rule == LambdaRule::TowardBand ? "toward_band" : "algorithm";
}

double adjust_lambda(double lambda, double te, const EngineConfig& cfg) {
  if (!(lambda > 0.0)) throw std::invalid_argument("adjust_lambda: lambda must be positive");
  const bool literal = cfg.lambda_rule == LambdaRule::Algorithm;
  double next = lambda;
  if (te < cfg.te_min) {
    next = (literal ? 0.9 : 1.1) * lambda;
  } else if (te > cfg.te_max) {
    next = (literal ? 1.1 : 0.9) * lambda;
  }
  return std::clamp(next, cfg.lambda_lo, cfg.lambda_hi);
}

double score_solution(const Vector& w, const AssetUniverse& u, const Vector& w_pre, const EngineConfig& cfg) {
  return mv_objective(u, w, cfg.lambda_bar) + cfg.turnover_eps * turnover(as_span(w), as_span(w_pre));
}

int count_active(const Vector& w, double threshold) {
  return static_cast<int>((w.array() > threshold).count());
}

namespace {

using Clock = std::chrono::steady_clock;

// Starting candidates: previous holdings still in the market, a random
// replacement for each one that left, plus every asset that cannot be
// excluded. With no previous holdings, the largest benchmark weights.
std::vector<int> initial_candidates(const AssetUniverse& u, const Holdings& prev, const EngineConfig& cfg, Rng& rng) {
  const int n = u.size();
  std::vector<int> c;
  int departed = 0;
  for (const auto& [id, weight] : prev) {
    if (weight <= cfg.drop_threshold) continue;
    const int i = u.find(id);
    if (i >= 0) {
      c.push_back(i);
    } else {
      ++departed;
    }
  }
  if (c.empty() && departed == 0) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (u.bench[a] != u.bench[b]) return u.bench[a] > u.bench[b];
      return u.ids[a] < u.ids[b];
    });
    order.resize(std::min(n, cfg.card_target));
    c = order;
  }
  std::sort(c.begin(), c.end());
  std::vector<int> outside;
  for (int i = 0; i < n; ++i) {
    if (!std::binary_search(c.begin(), c.end(), i)) outside.push_back(i);
  }
  while (departed-- > 0 && !outside.empty()) {
    const auto k = static_cast<std::size_t>(rng.below(outside.size()));
    c.push_back(outside[k]);
    outside.erase(outside.begin() + static_cast<std::ptrdiff_t>(k));
  }
  for (int i = 0; i < n; ++i) {
    if (u.bench[i] > cfg.limits.dev_bound) c.push_back(i);
  }
  return c;
}

nlohmann::json to_json(const IterationRecord& r) {
  return {{"iteration", r.iteration},
          {"lambda", r.lambda},
          {"te", r.te},
          {"objective", r.objective},
          {"score", r.score},
          {"candidates", r.num_candidates},
          {"in_band", r.in_band},
          {"accepted", r.accepted},
          {"random_refill", r.random_refill},
          {"total_abs_deviation", r.total_abs_deviation},
          {"wall_s", r.wall_s}};
}

}  // namespace

PeriodResult run_period(const AssetUniverse& u, const Holdings& prev, const EngineConfig& cfg, std::ostream* log) {
  cfg.validate();
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  Rng rng(cfg.seed);
  const int n = u.size();
  Vector w_pre = Vector::Zero(n);
  for (const auto& [id, weight] : prev) {
    const int i = u.find(id);
    if (i >= 0) w_pre[i] = weight;
  }

  CandidateState state = CandidateState::make(n, initial_candidates(u, prev, cfg, rng), w_pre, cfg.lambda0,
                                              cfg.lambda_bar, cfg.seed);

  PeriodResult result;
  std::optional<double> best_score;
  Vector last_w;
  double last_te = 0.0;
  std::vector<int> last_good;
  double lambda = cfg.lambda0;
  int iteration = 0;

  do {
    IterationRecord rec;
    rec.iteration = iteration;
    rec.lambda = lambda;
    rec.score = std::numeric_limits<double>::quiet_NaN();

    state = enforce_active_share_budget(std::move(state), u, rng, cfg.as_budget, cfg.limits.dev_bound);
    state = ensure_group_coverage(std::move(state), u, cfg.limits, cfg.as_budget, cfg.card_target);
    state.lambda = lambda;
    rec.num_candidates = static_cast<int>(state.candidates.size());

    MasterProblem mp;
    try {
      mp = build_master(u, state.candidates, lambda, cfg.limits);
    } catch (const InfeasibleByConstruction& e) {
      result.status = PeriodStatus::MasterInfeasible;
      result.message = e.what();
      result.lambda_final = lambda;
      result.iterations = iteration;
      return result;
    }
    const QpSolution sol = solve_qp(mp.qp, cfg.qp);
    ++iteration;

    if (sol.status != QpStatus::Optimal) {
      if (last_good.empty()) {
        result.status = PeriodStatus::MasterInfeasible;
        result.message = "initial master solve: " + std::string(to_string(sol.status));
        result.lambda_final = lambda;
        result.iterations = iteration;
        return result;
      }
      // Fall back to the last solvable candidate set and perturb it.
      spdlog::debug("master solve {} at iteration {}, reverting candidates", to_string(sol.status), iteration);
      state.set_candidates(last_good);
      state = drop_weak_candidates(std::move(state), u, last_w, cfg.drop_threshold, cfg.limits.dev_bound);
      state = random_refill(std::move(state), cfg.card_target, u, rng, cfg.as_budget);
      rec.te = std::numeric_limits<double>::quiet_NaN();
      rec.objective = std::numeric_limits<double>::quiet_NaN();
      rec.random_refill = true;
      rec.wall_s = elapsed();
      if (log) *log << to_json(rec).dump() << '\n';
      result.trace.push_back(rec);
      continue;
    }

    Vector w = expand_weights(mp, sol.x);
    const double te = tracking_error(u, w);
    last_w = w;
    last_te = te;
    last_good = state.candidates;
    rec.te = te;
    rec.objective = sol.objective;
    rec.total_abs_deviation = total_abs_deviation(as_span(w), as_span(u.bench));

    if (te < cfg.te_min || te > cfg.te_max) {
      lambda = adjust_lambda(lambda, te, cfg);
    } else {
      rec.in_band = true;
      const double score = score_solution(w, u, w_pre, cfg);
      double compare = score;
      if (cfg.literal_score) {
        compare = mv_objective(u, w, cfg.lambda_bar) + cfg.turnover_eps * turnover(as_span(w), as_span(u.bench));
      }
      rec.score = score;
      if (!best_score || compare < *best_score) {
        best_score = compare;
        rec.accepted = true;
        result.w_best = w;
        result.te_best = te;
        result.score_best = score;
      }

      state = drop_weak_candidates(std::move(state), u, w, cfg.drop_threshold, cfg.limits.dev_bound);
      const MarginalReport report = marginal_effects(mp, sol, u, state, cfg.pricing, cfg.pricing_threads);
      RefillOutcome refill = refill_candidates(std::move(state), report, cfg.card_target, u, rng, cfg.as_budget);
      state = std::move(refill.state);
      rec.random_refill = refill.random_fallback;
    }
    rec.wall_s = elapsed();
    if (log) *log << to_json(rec).dump() << '\n';
    result.trace.push_back(rec);
  } while (elapsed() < cfg.time_limit_s && (cfg.max_iterations == 0 || iteration < cfg.max_iterations));

  result.iterations = iteration;
  result.lambda_final = lambda;
  if (best_score) {
    result.status = PeriodStatus::Ok;
  } else {
    result.status = PeriodStatus::TimeLimitNoFeasibleTe;
    result.w_best = last_w;
    result.te_best = last_te;
    result.score_best = score_solution(last_w, u, w_pre, cfg);
  }
  result.d_best = result.w_best - u.bench;
  const int active = count_active(result.w_best, cfg.drop_threshold);
  if (active < cfg.card_min) {
    spdlog::warn("{}: portfolio holds {} assets, below the cardinality floor {}", format_date(u.date), active,
                 cfg.card_min);
  }
  return result;
}

}  // namespace cgport
