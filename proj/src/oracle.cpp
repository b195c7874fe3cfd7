#include "cgport/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "cgport/errors.hpp"

namespace cgport {

std::string_view to_string(SubsetStatus status) {
  switch (status) {
    case SubsetStatus::Solved:
      return "solved";
    case SubsetStatus::InfeasibleByConstruction:
      return "infeasible_by_construction";
    case SubsetStatus::SolverFailed:
      return "solver_failed";
  }
  return "unknown";
}

std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::int64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

ExactResult enumerate_exact(const AssetUniverse& u, int k_min, int k_max, double lambda, const ExactOptions& opts) {
  const int n = u.size();
  if (n > opts.max_n) {
    throw TooLarge("exact enumeration over " + std::to_string(n) + " assets exceeds the limit of " +
                   std::to_string(opts.max_n));
  }
  k_min = std::max(k_min, 1);
  k_max = std::min(k_max, n);
  if (k_min > k_max) throw std::invalid_argument("enumerate_exact: empty cardinality band");

  std::vector<std::vector<int>> subsets;
  for (int k = k_min; k <= k_max; ++k) {
    std::vector<int> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
      subsets.push_back(idx);
      int pos = k - 1;
      while (pos >= 0 && idx[pos] == n - k + pos) --pos;
      if (pos < 0) break;
      ++idx[pos];
      for (int j = pos + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
  }

  std::vector<SubsetObjective> table(subsets.size());
  std::vector<Vector> weights(subsets.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      SubsetObjective& row = table[s];
      row.subset = subsets[s];
      row.objective = std::numeric_limits<double>::quiet_NaN();
      try {
        const MasterProblem mp = build_master(u, row.subset, lambda, opts.limits);
        const QpSolution sol = solve_qp(mp.qp, opts.qp);
        if (sol.status == QpStatus::Optimal) {
          row.status = SubsetStatus::Solved;
          row.objective = sol.objective;
          weights[s] = expand_weights(mp, sol.x);
        } else {
          row.status = SubsetStatus::SolverFailed;
        }
      } catch (const InfeasibleByConstruction&) {
        row.status = SubsetStatus::InfeasibleByConstruction;
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(opts.threads > 0 ? opts.threads : 1, 1, subsets.size());
  if (workers == 1) {
    work(0, subsets.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (subsets.size() + workers - 1) / workers;
    for (std::size_t t = 0; t < workers; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(subsets.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
  }

  ExactResult result;
  result.evaluated_subsets = static_cast<std::int64_t>(subsets.size());
  std::ptrdiff_t best = -1;
  for (std::size_t s = 0; s < table.size(); ++s) {
    if (table[s].status != SubsetStatus::Solved) continue;
    ++result.solved_subsets;
    if (best < 0 || table[s].objective < table[static_cast<std::size_t>(best)].objective) {
      best = static_cast<std::ptrdiff_t>(s);
    }
  }
  if (best < 0) throw Error("enumerate_exact: no subset in the cardinality band is feasible");
  result.best_subset = table[static_cast<std::size_t>(best)].subset;
  result.best_objective = table[static_cast<std::size_t>(best)].objective;
  result.best_weights = weights[static_cast<std::size_t>(best)];
  if (opts.keep_table) result.per_subset = std::move(table);
  return result;
}

double perturbed_resolve(const MasterProblem& mp, const AssetUniverse& u, int asset, double eps, const QpSettings& qp) {
  if (mp.col_of(asset) >= 0) throw std::invalid_argument("perturbed_resolve: asset already a candidate");

  const QpSolution base = solve_qp(mp.qp, qp);
  if (base.status != QpStatus::Optimal) throw Error("perturbed_resolve: base master not solved to optimality");

  std::vector<int> grown = mp.candidates;
  grown.push_back(asset);
  MasterProblem forced = build_master(u, grown, mp.lambda, mp.limits);
  const int col = forced.col_of(asset);
  auto& fq = forced.qp;
  const auto p = fq.A_eq.rows();
  fq.A_eq.conservativeResize(p + 1, Eigen::NoChange);
  fq.A_eq.row(p).setZero();
  fq.A_eq(p, col) = 1.0;
  fq.b_eq.conservativeResize(p + 1);
  fq.b_eq[p] = eps;
  forced.eq_rows.push_back({RowKind::FixedWeight, asset});

  const QpSolution perturbed = solve_qp(fq, qp);
  if (perturbed.status != QpStatus::Optimal) throw Error("perturbed_resolve: forced master not solved to optimality");
  return perturbed.objective - base.objective;
}

void write_subset_table_csv(std::ostream& os, const AssetUniverse& u, const ExactResult& result) {
  os.precision(17);
  os << "subset,size,status,objective\n";
  for (const auto& row : result.per_subset) {
    std::string ids;
    for (int i : row.subset) {
      if (!ids.empty()) ids += ' ';
      ids += u.ids[i];
    }
    os << ids << ',' << row.subset.size() << ',' << to_string(row.status) << ',';
    if (row.status == SubsetStatus::Solved) os << row.objective;
    os << '\n';
  }
}

}  // namespace cgport
