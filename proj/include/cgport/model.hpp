#pragma once

#include <chrono>
#include <span>
#include <string>
#include <vector>

#include "cgport/qp.hpp"

namespace cgport {

using Date = std::chrono::sys_days;

std::string format_date(Date d);  // YYYY-MM-DD

inline constexpr int kNumQuintiles = 5;

/// Market snapshot for one review date. Asset i is described by entry i of
/// every per-asset container.
struct AssetUniverse {
  Date date{};
  std::vector<std::string> ids;
  std::vector<std::string> names;
  Vector alpha;
  Vector beta;
  std::vector<int> sector_of;  // index into sector_names
  std::vector<std::string> sector_names;
  std::vector<int> mcapq_of;  // 1 (largest) .. 5 (smallest)
  Vector bench;
  Matrix omega;

  int size() const { return static_cast<int>(ids.size()); }
  int num_sectors() const { return static_cast<int>(sector_names.size()); }
  // Index of `id`, or -1.
  int find(const std::string& id) const;
};

/// Throws ValidationError when a structural invariant is broken (benchmark
/// off the simplex, asymmetric or indefinite covariance, bad quintile...).
void validate(const AssetUniverse& u);

/// Bounds on active weights. Defaults are the production limits.
struct ModelLimits {
  double dev_bound = 0.05;
  double sector_bound = 0.1;
  double mcap_bound = 0.1;
  double beta_bound = 0.1;
};

enum class RowKind { NonNeg, Budget, DevUB, DevLB, SectorUB, SectorLB, McapUB, McapLB, BetaUB, BetaLB, FixedWeight };

std::string_view to_string(RowKind kind);

/// Semantic tag for one constraint row. `index` is the asset (universe index),
/// sector, or quintile the row refers to, or -1.
struct RowTag {
  RowKind kind;
  int index = -1;
};

/// The mean-variance master problem restricted to a candidate set. Variables
/// are w_i for the candidates (in ascending universe order); every other
/// asset carries the fixed deviation -w^b_i.
struct MasterProblem {
  QuadraticProgram qp;
  std::vector<int> candidates;  // column j <-> universe asset candidates[j]
  std::vector<RowTag> ineq_rows;
  std::vector<RowTag> eq_rows;
  Vector fixed_d;  // full-universe; zero on candidates
  double lambda = 0.0;
  ModelLimits limits;

  // Column of universe asset `i`, or -1 if not a candidate.
  int col_of(int asset) const;
};

/// Assemble the restricted master for candidate set `candidates` (any order,
/// no duplicates). Throws InfeasibleByConstruction when an excluded asset's
/// fixed deviation breaks its bound, or an aggregate row has no candidates
/// and a violated constant.
MasterProblem build_master(const AssetUniverse& u, std::span<const int> candidates, double lambda,
                           const ModelLimits& limits = {});

/// Full-universe weights from the master's variable vector.
Vector expand_weights(const MasterProblem& mp, const Vector& x);

/// d^T Omega d - lambda alpha^T d with d = w - w^b.
double mv_objective(const AssetUniverse& u, const Vector& w, double lambda);

/// sqrt(d^T Omega d).
double tracking_error(const AssetUniverse& u, const Vector& w);

/// 1 - sum_i min(w_i, w^b_i).
double active_share(std::span<const double> w, std::span<const double> bench);

/// sum_i |w_i - w^b_i|.
double total_abs_deviation(std::span<const double> w, std::span<const double> bench);

inline std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace cgport
