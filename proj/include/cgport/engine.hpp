#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "cgport/model.hpp"
#include "cgport/pricing.hpp"

namespace cgport {

/// How lambda reacts to a tracking error outside [te_min, te_max]. Both rules
/// only ever multiply by 0.9 or 1.1.
///   TowardBand: te < te_min -> 1.1 lambda, te > te_max -> 0.9 lambda. A larger
///               lambda weights alpha more and so raises the tracking error.
///   Algorithm:  te < te_min -> 0.9 lambda, te > te_max -> 1.1 lambda, as the
///               published pseudocode reads.
enum class LambdaRule { TowardBand, Algorithm };

std::string_view to_string(LambdaRule rule);

struct EngineConfig {
  double time_limit_s = 170.0;
  // 0 = unlimited. When set below what the clock allows, it is the binding
  // stop and the run is reproducible bit for bit.
  int max_iterations = 0;
  double lambda0 = 5.0;
  double lambda_bar = 5.0;
  double te_min = 0.05;
  double te_max = 0.1;
  int card_target = 70;
  int card_min = 50;
  double drop_threshold = 1e-5;
  double turnover_eps = 5e-3;  // 1e-3 * lambda_bar
  double as_budget = 0.4;
  double lambda_lo = 1e-6;
  double lambda_hi = 1e6;
  std::uint64_t seed = 0;
  LambdaRule lambda_rule = LambdaRule::TowardBand;
  // Rank in-band solutions with turnover measured against the benchmark
  // rather than the drifted holdings.
  bool literal_score = false;
  int pricing_threads = 1;
  ModelLimits limits;
  PricingParams pricing;
  QpSettings qp;

  // Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

enum class PeriodStatus { Ok, TimeLimitNoFeasibleTe, MasterInfeasible };

std::string_view to_string(PeriodStatus status);

struct IterationRecord {
  int iteration = 0;
  double lambda = 0.0;
  double te = 0.0;
  double objective = 0.0;
  double score = 0.0;  // NaN when out of band
  int num_candidates = 0;
  bool in_band = false;
  bool accepted = false;
  bool random_refill = false;
  double total_abs_deviation = 0.0;
  double wall_s = 0.0;
};

struct PeriodResult {
  Vector w_best;
  Vector d_best;
  double score_best = 0.0;
  double te_best = 0.0;
  double lambda_final = 0.0;
  int iterations = 0;
  std::vector<IterationRecord> trace;
  PeriodStatus status = PeriodStatus::Ok;
  std::string message;
};

/// Weights held going into a review, keyed by asset id (drifted, not
/// necessarily covering the new universe).
using Holdings = std::map<std::string, double>;

double adjust_lambda(double lambda, double te, const EngineConfig& cfg);

/// d^T Omega d - lambda_bar alpha^T d + turnover_eps * turnover(w, w_pre).
double score_solution(const Vector& w, const AssetUniverse& u, const Vector& w_pre, const EngineConfig& cfg);

/// Column-generation loop for one review period. `log`, when given, receives
/// one JSON object per iteration.
PeriodResult run_period(const AssetUniverse& u, const Holdings& prev, const EngineConfig& cfg,
                        std::ostream* log = nullptr);

/// Number of weights strictly above `threshold`.
int count_active(const Vector& w, double threshold);

}  // namespace cgport
