#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "cgport/model.hpp"

namespace cgport {

enum class SubsetStatus { Solved, InfeasibleByConstruction, SolverFailed };

std::string_view to_string(SubsetStatus status);

struct SubsetObjective {
  std::vector<int> subset;
  double objective = 0.0;  // NaN unless Solved
  SubsetStatus status = SubsetStatus::Solved;
};

struct ExactResult {
  std::vector<int> best_subset;
  Vector best_weights;  // full universe
  double best_objective = 0.0;
  std::int64_t evaluated_subsets = 0;
  std::int64_t solved_subsets = 0;
  std::vector<SubsetObjective> per_subset;  // filled when requested
};

struct ExactOptions {
  int max_n = 20;
  bool keep_table = false;
  int threads = 1;
  ModelLimits limits;
  QpSettings qp;
};

/// Minimum of the master objective over every candidate set S with
/// k_min <= |S| <= k_max. Throws TooLarge when u.size() > opts.max_n and
/// Error when no subset is solvable.
ExactResult enumerate_exact(const AssetUniverse& u, int k_min, int k_max, double lambda, const ExactOptions& opts = {});

/// rho(C + {asset}, w_asset = eps) - rho(C): the finite-difference reference
/// for delta_asset * eps. `asset` must lie outside mp's candidates.
double perturbed_resolve(const MasterProblem& mp, const AssetUniverse& u, int asset, double eps = 1e-4,
                         const QpSettings& qp = {});

/// k_min..k_max subset table as CSV: subset ids, size, status, objective.
void write_subset_table_csv(std::ostream& os, const AssetUniverse& u, const ExactResult& result);

std::int64_t binomial(int n, int k);

}  // namespace cgport
