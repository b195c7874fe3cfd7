#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cgport/model.hpp"
#include "cgport/rng.hpp"

namespace cgport {

/// Candidate bookkeeping for one review period. `candidates` and `removed`
/// are sorted and partition the universe.
struct CandidateState {
  std::vector<int> candidates;
  std::vector<int> removed;
  // Removed set as it was before the most recent drop; used for stall
  // detection in refill_candidates.
  std::vector<int> removed_before_drop;
  Vector w_pre;  // drifted previous weights over the universe
  double lambda = 5.0;
  double lambda_bar = 5.0;
  std::uint64_t rng_seed = 0;

  static CandidateState make(int universe_size, std::vector<int> candidates, Vector w_pre, double lambda,
                             double lambda_bar, std::uint64_t seed);
  void set_candidates(std::vector<int> c);
  double candidate_bench_mass(const AssetUniverse& u) const;
};

struct PricingParams {
  double turnover_rate = 1e-3;  // scaled by 2 lambda in the direct effect
  double held_threshold = 1e-5;
};

/// m_i = 2 d^T Omega_{.,i} - lambda alpha_i - 2 lambda rate 1[w_pre_i >= threshold].
double marginal_direct_effect(const AssetUniverse& u, const Vector& d_full, double lambda, double w_pre_i, int asset,
                              const PricingParams& params = {});

/// k_i = pi^T A_{.,i}: the shadow prices pi = d rho / d rhs (the negated
/// solver multipliers) against the column asset i would have in the existing
/// rows of `mp` (budget, its sector, its quintile, beta). The asset's own
/// deviation and sign rows are not part of the column. Throws MissingDuals
/// unless `sol` is an optimal solve of `mp`.
double indirect_effect(const MasterProblem& mp, const QpSolution& sol, const AssetUniverse& u, int asset);

struct MarginalRecord {
  int asset = -1;
  std::string id;
  double direct = 0.0;    // m
  double indirect = 0.0;  // k
  double delta = 0.0;     // m - k
};

/// Sorted ascending by delta, ties by asset id.
struct MarginalReport {
  std::vector<MarginalRecord> records;
};

/// delta_i = m_i - k_i for every asset outside `state.candidates`. Work is
/// split across `threads` workers; output does not depend on the split.
MarginalReport marginal_effects(const MasterProblem& mp, const QpSolution& sol, const AssetUniverse& u,
                                const CandidateState& state, const PricingParams& params = {}, int threads = 1);

/// Randomly deselect candidates until their benchmark mass is <= budget.
/// Assets whose exclusion is infeasible by construction (w^b above
/// `dev_bound`) are never deselected.
CandidateState enforce_active_share_budget(CandidateState state, const AssetUniverse& u, Rng& rng,
                                           double budget = 0.4, double dev_bound = 0.05);

/// Make every sector and capitalization quintile able to meet its lower
/// active-weight bound: while a group's excluded benchmark mass exceeds
/// `limits.*_bound` plus what its candidates can add (dev_bound each), add
/// the group's smallest excluded benchmark weight. Afterwards candidates not
/// needed for coverage are removed, largest benchmark weight first, until the
/// candidate mass is back under `budget` and at most `card_target` remain.
CandidateState ensure_group_coverage(CandidateState state, const AssetUniverse& u, const ModelLimits& limits,
                                     double budget = 0.4, int card_target = std::numeric_limits<int>::max());

/// Drop the lowest-weight candidate and every candidate below `threshold`.
CandidateState drop_weak_candidates(CandidateState state, const AssetUniverse& u, const Vector& w_full,
                                    double threshold = 1e-5, double dev_bound = 0.05);

struct RefillOutcome {
  CandidateState state;
  bool random_fallback = false;
};

/// Add the lowest-delta report entries until |C| = card_target, skipping any
/// that would lift the candidate benchmark mass above `budget`. If the
/// resulting removed set equals `state.removed_before_drop` the additions are
/// discarded and replaced by a seeded random selection.
RefillOutcome refill_candidates(CandidateState state, const MarginalReport& report, int card_target,
                                const AssetUniverse& u, Rng& rng, double budget = 0.4);

/// Fill up to card_target with assets drawn uniformly from outside the
/// candidate set, under the same benchmark-mass budget.
CandidateState random_refill(CandidateState state, int card_target, const AssetUniverse& u, Rng& rng,
                             double budget = 0.4);

}  // namespace cgport
