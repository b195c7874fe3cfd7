#include "cgport/pricing.hpp"

#include <algorithm>
#include <stdexcept>
#include <thread>

#include "cgport/errors.hpp"

namespace cgport {

namespace {

std::vector<int> complement(int n, const std::vector<int>& sorted) {
  std::vector<int> out;
  out.reserve(n - sorted.size());
  auto it = sorted.begin();
  for (int i = 0; i < n; ++i) {
    if (it != sorted.end() && *it == i) {
      ++it;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

double mass(const AssetUniverse& u, const std::vector<int>& set) {
  double total = 0.0;
  for (int i : set) total += u.bench[i];
  return total;
}

// Candidates plus up to `need` assets taken in `order`, skipping any that
// would push the candidate benchmark mass above `budget`.
std::vector<int> fill_under_budget(const CandidateState& state, const std::vector<int>& order, int need,
                                   const AssetUniverse& u, double budget) {
  std::vector<int> next = state.candidates;
  double total = mass(u, state.candidates);
  int added = 0;
  for (int i : order) {
    if (added == need) break;
    if (total + u.bench[i] > budget) continue;
    if (std::binary_search(state.candidates.begin(), state.candidates.end(), i)) continue;
    next.push_back(i);
    total += u.bench[i];
    ++added;
  }
  return next;
}

}  // namespace

CandidateState CandidateState::make(int universe_size, std::vector<int> candidates, Vector w_pre, double lambda,
                                    double lambda_bar, std::uint64_t seed) {
  CandidateState s;
  s.w_pre = w_pre.size() == 0 ? Vector::Zero(universe_size) : std::move(w_pre);
  if (s.w_pre.size() != universe_size) throw std::invalid_argument("CandidateState: w_pre length mismatch");
  s.lambda = lambda;
  s.lambda_bar = lambda_bar;
  s.rng_seed = seed;
  s.set_candidates(std::move(candidates));
  s.removed_before_drop = s.removed;
  return s;
}

void CandidateState::set_candidates(std::vector<int> c) {
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  candidates = std::move(c);
  removed = complement(static_cast<int>(w_pre.size()), candidates);
}

double CandidateState::candidate_bench_mass(const AssetUniverse& u) const { return mass(u, candidates); }

double marginal_direct_effect(const AssetUniverse& u, const Vector& d_full, double lambda, double w_pre_i, int asset,
                              const PricingParams& params) {
  if (d_full.size() != u.size()) throw std::invalid_argument("marginal_direct_effect: d length mismatch");
  if (asset < 0 || asset >= u.size()) throw std::invalid_argument("marginal_direct_effect: asset out of range");
  const double held = w_pre_i >= params.held_threshold ? 1.0 : 0.0;
  return 2.0 * u.omega.col(asset).dot(d_full) - lambda * u.alpha[asset] - 2.0 * lambda * params.turnover_rate * held;
}

double indirect_effect(const MasterProblem& mp, const QpSolution& sol, const AssetUniverse& u, int asset) {
  if (sol.status != QpStatus::Optimal || sol.s_ineq.size() != mp.qp.num_ineq() || sol.s_eq.size() != mp.qp.num_eq()) {
    throw MissingDuals("indirect_effect needs converged duals of the master problem");
  }
  double weighted = 0.0;  // multipliers^T column
  for (std::size_t r = 0; r < mp.ineq_rows.size(); ++r) {
    const RowTag& tag = mp.ineq_rows[r];
    double a = 0.0;
    switch (tag.kind) {
      case RowKind::SectorUB: a = u.sector_of[asset] == tag.index ? 1.0 : 0.0; break;
      case RowKind::SectorLB: a = u.sector_of[asset] == tag.index ? -1.0 : 0.0; break;
      case RowKind::McapUB: a = u.mcapq_of[asset] == tag.index ? 1.0 : 0.0; break;
      case RowKind::McapLB: a = u.mcapq_of[asset] == tag.index ? -1.0 : 0.0; break;
      case RowKind::BetaUB: a = u.beta[asset]; break;
      case RowKind::BetaLB: a = -u.beta[asset]; break;
      default: break;
    }
    weighted += a * sol.s_ineq[static_cast<Eigen::Index>(r)];
  }
  for (std::size_t r = 0; r < mp.eq_rows.size(); ++r) {
    if (mp.eq_rows[r].kind == RowKind::Budget) weighted += sol.s_eq[static_cast<Eigen::Index>(r)];
  }
  return -weighted;
}

MarginalReport marginal_effects(const MasterProblem& mp, const QpSolution& sol, const AssetUniverse& u,
                                const CandidateState& state, const PricingParams& params, int threads) {
  if (sol.status != QpStatus::Optimal) throw MissingDuals("marginal_effects needs an optimal master solution");
  const Vector d = expand_weights(mp, sol.x) - u.bench;
  const std::vector<int>& outside = state.removed;

  MarginalReport report;
  report.records.resize(outside.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      const int i = outside[j];
      MarginalRecord& rec = report.records[j];
      rec.asset = i;
      rec.id = u.ids[i];
      rec.direct = marginal_direct_effect(u, d, mp.lambda, state.w_pre[i], i, params);
      rec.indirect = indirect_effect(mp, sol, u, i);
      rec.delta = rec.direct - rec.indirect;
    }
  };

  const std::size_t count = outside.size();
  const std::size_t workers = std::clamp<std::size_t>(threads > 0 ? threads : 1, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    work(0, count);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t t = 0; t < workers; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(count, begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
  }

  std::sort(report.records.begin(), report.records.end(), [](const MarginalRecord& a, const MarginalRecord& b) {
    if (a.delta != b.delta) return a.delta < b.delta;
    return a.id < b.id;
  });
  return report;
}

CandidateState enforce_active_share_budget(CandidateState state, const AssetUniverse& u, Rng& rng, double budget,
                                           double dev_bound) {
  double total = mass(u, state.candidates);
  if (total <= budget) return state;
  std::vector<int> keep = state.candidates;
  std::vector<int> removable;
  for (int i : keep) {
    if (u.bench[i] <= dev_bound) removable.push_back(i);
  }
  while (total > budget && !removable.empty()) {
    const auto pick = static_cast<std::size_t>(rng.below(removable.size()));
    const int asset = removable[pick];
    removable.erase(removable.begin() + static_cast<std::ptrdiff_t>(pick));
    keep.erase(std::find(keep.begin(), keep.end(), asset));
    total -= u.bench[asset];
  }
  state.set_candidates(std::move(keep));
  return state;
}

namespace {

struct Group {
  std::vector<int> members;
  double bound = 0.0;
};

std::vector<Group> coverage_groups(const AssetUniverse& u, const ModelLimits& limits) {
  std::vector<Group> groups(static_cast<std::size_t>(u.num_sectors() + kNumQuintiles));
  for (int s = 0; s < u.num_sectors(); ++s) groups[static_cast<std::size_t>(s)].bound = limits.sector_bound;
  for (int q = 0; q < kNumQuintiles; ++q) groups[static_cast<std::size_t>(u.num_sectors() + q)].bound = limits.mcap_bound;
  for (int i = 0; i < u.size(); ++i) {
    groups[static_cast<std::size_t>(u.sector_of[i])].members.push_back(i);
    groups[static_cast<std::size_t>(u.num_sectors() + u.mcapq_of[i] - 1)].members.push_back(i);
  }
  return groups;
}

// Headroom of a group's lower bound: candidates may rise dev_bound above
// their benchmark weight, everything else sits at -w^b.
double coverage_slack(const Group& g, const std::vector<char>& in, const AssetUniverse& u, double dev_bound) {
  double slack = g.bound;
  for (int i : g.members) slack += in[static_cast<std::size_t>(i)] ? dev_bound : -u.bench[i];
  return slack;
}

}  // namespace

CandidateState ensure_group_coverage(CandidateState state, const AssetUniverse& u, const ModelLimits& limits,
                                     double budget, int card_target) {
  const auto groups = coverage_groups(u, limits);
  std::vector<char> in(static_cast<std::size_t>(u.size()), 0);
  for (int i : state.candidates) in[static_cast<std::size_t>(i)] = 1;
  std::vector<char> required(in.size(), 0);

  for (const Group& g : groups) {
    std::vector<int> pool;
    for (int i : g.members) {
      if (!in[static_cast<std::size_t>(i)]) pool.push_back(i);
    }
    std::sort(pool.begin(), pool.end(), [&](int a, int b) {
      if (u.bench[a] != u.bench[b]) return u.bench[a] < u.bench[b];
      return u.ids[a] < u.ids[b];
    });
    auto next = pool.begin();
    while (coverage_slack(g, in, u, limits.dev_bound) < 0.0 && next != pool.end()) {
      in[static_cast<std::size_t>(*next)] = 1;
      required[static_cast<std::size_t>(*next)] = 1;
      ++next;
    }
  }

  std::vector<int> order;
  for (int i = 0; i < u.size(); ++i) {
    if (in[static_cast<std::size_t>(i)] && !required[static_cast<std::size_t>(i)] && u.bench[i] <= limits.dev_bound) {
      order.push_back(i);
    }
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (u.bench[a] != u.bench[b]) return u.bench[a] > u.bench[b];
    return u.ids[a] < u.ids[b];
  });
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!in[i]) continue;
    total += u.bench[static_cast<Eigen::Index>(i)];
    ++count;
  }
  for (int i : order) {
    if (total <= budget && count <= card_target) break;
    in[static_cast<std::size_t>(i)] = 0;
    const bool ok = std::all_of(groups.begin(), groups.end(), [&](const Group& g) {
      return coverage_slack(g, in, u, limits.dev_bound) >= 0.0;
    });
    if (ok) {
      total -= u.bench[i];
      --count;
    } else {
      in[static_cast<std::size_t>(i)] = 1;
    }
  }

  std::vector<int> next;
  for (int i = 0; i < u.size(); ++i) {
    if (in[static_cast<std::size_t>(i)]) next.push_back(i);
  }
  state.set_candidates(std::move(next));
  return state;
}

CandidateState drop_weak_candidates(CandidateState state, const AssetUniverse& u, const Vector& w_full,
                                    double threshold, double dev_bound) {
  state.removed_before_drop = state.removed;
  std::vector<int> keep;
  int argmin = -1;
  for (int i : state.candidates) {
    if (u.bench[i] > dev_bound) continue;  // cannot leave the candidate set
    if (argmin < 0 || w_full[i] < w_full[argmin]) argmin = i;
  }
  for (int i : state.candidates) {
    const bool locked = u.bench[i] > dev_bound;
    if (!locked && (i == argmin || w_full[i] < threshold)) continue;
    keep.push_back(i);
  }
  state.set_candidates(std::move(keep));
  return state;
}

RefillOutcome refill_candidates(CandidateState state, const MarginalReport& report, int card_target,
                                const AssetUniverse& u, Rng& rng, double budget) {
  RefillOutcome out;
  const int need = card_target - static_cast<int>(state.candidates.size());
  if (need <= 0) {
    out.state = std::move(state);
    return out;
  }

  std::vector<int> ranked;
  ranked.reserve(report.records.size());
  for (const auto& rec : report.records) ranked.push_back(rec.asset);

  CandidateState trial = state;
  trial.set_candidates(fill_under_budget(state, ranked, need, u, budget));
  if (trial.removed != state.removed_before_drop) {
    out.state = std::move(trial);
    return out;
  }

  // Stalled: the candidate set came back unchanged. Pick at random instead.
  out.state = random_refill(std::move(state), card_target, u, rng, budget);
  out.random_fallback = true;
  return out;
}

CandidateState random_refill(CandidateState state, int card_target, const AssetUniverse& u, Rng& rng, double budget) {
  const int need = card_target - static_cast<int>(state.candidates.size());
  if (need <= 0) return state;
  std::vector<int> pool = state.removed;
  for (std::size_t k = pool.size(); k > 1; --k) {
    const auto j = static_cast<std::size_t>(rng.below(k));
    std::swap(pool[k - 1], pool[j]);
  }
  state.set_candidates(fill_under_budget(state, pool, need, u, budget));
  return state;
}

}  // namespace cgport
