#include "cgport/model.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "cgport/errors.hpp"

namespace cgport {

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

int AssetUniverse::find(const std::string& id) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  return it == ids.end() ? -1 : static_cast<int>(it - ids.begin());
}

void validate(const AssetUniverse& u) {
  const int n = u.size();
  const auto where = " (" + format_date(u.date) + ")";
  if (n == 0) throw ValidationError("universe is empty" + where);
  if (u.alpha.size() != n || u.beta.size() != n || u.bench.size() != n ||
      static_cast<int>(u.sector_of.size()) != n || static_cast<int>(u.mcapq_of.size()) != n ||
      u.omega.rows() != n || u.omega.cols() != n) {
    throw ValidationError("per-asset fields disagree in length" + where);
  }
  for (int i = 0; i < n; ++i) {
    const auto& id = u.ids[i];
    if (u.bench[i] < 0.0) throw ValidationError("negative benchmark weight for " + id + where);
    if (u.mcapq_of[i] < 1 || u.mcapq_of[i] > kNumQuintiles) throw ValidationError("quintile out of 1..5 for " + id + where);
    if (u.sector_of[i] < 0 || u.sector_of[i] >= u.num_sectors()) throw ValidationError("unknown sector for " + id + where);
    if (!std::isfinite(u.alpha[i]) || !std::isfinite(u.beta[i])) throw ValidationError("non-finite alpha/beta for " + id + where);
  }
  if (std::abs(u.bench.sum() - 1.0) > 1e-6) {
    throw ValidationError("benchmark weights sum to " + std::to_string(u.bench.sum()) + where);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (std::abs(u.omega(i, j) - u.omega(j, i)) > 1e-10) {
        throw ValidationError("covariance asymmetric at (" + u.ids[i] + ", " + u.ids[j] + ")" + where);
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(u.omega, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-8) throw ValidationError("covariance is not PSD" + where);
}

std::string_view to_string(RowKind kind) {
  switch (kind) {
    case RowKind::NonNeg: return "NonNeg";
    case RowKind::Budget: return "Budget";
    case RowKind::DevUB: return "DevUB";
    case RowKind::DevLB: return "DevLB";
    case RowKind::SectorUB: return "SectorUB";
    case RowKind::SectorLB: return "SectorLB";
    case RowKind::McapUB: return "McapUB";
    case RowKind::McapLB: return "McapLB";
    case RowKind::BetaUB: return "BetaUB";
    case RowKind::BetaLB: return "BetaLB";
    case RowKind::FixedWeight: return "FixedWeight";
  }
  return "Unknown";
}

int MasterProblem::col_of(int asset) const {
  const auto it = std::lower_bound(candidates.begin(), candidates.end(), asset);
  return (it != candidates.end() && *it == asset) ? static_cast<int>(it - candidates.begin()) : -1;
}

MasterProblem build_master(const AssetUniverse& u, std::span<const int> candidates, double lambda,
                           const ModelLimits& limits) {
  const int n_all = u.size();
  MasterProblem mp;
  mp.lambda = lambda;
  mp.limits = limits;
  mp.candidates.assign(candidates.begin(), candidates.end());
  std::sort(mp.candidates.begin(), mp.candidates.end());
  if (mp.candidates.empty()) throw std::invalid_argument("build_master: candidate set is empty");
  if (std::adjacent_find(mp.candidates.begin(), mp.candidates.end()) != mp.candidates.end()) {
    throw std::invalid_argument("build_master: duplicate candidate");
  }
  if (mp.candidates.front() < 0 || mp.candidates.back() >= n_all) {
    throw std::invalid_argument("build_master: candidate outside the universe");
  }

  const auto& C = mp.candidates;
  const int n = static_cast<int>(C.size());
  std::vector<int> fixed;
  std::vector<char> in_c(n_all, 0);
  for (int i : C) in_c[i] = 1;
  for (int i = 0; i < n_all; ++i) {
    if (!in_c[i]) fixed.push_back(i);
  }

  mp.fixed_d = Vector::Zero(n_all);
  for (int i : fixed) {
    if (u.bench[i] > limits.dev_bound + 1e-12) {
      throw InfeasibleByConstruction("asset " + u.ids[i] + " has benchmark weight " + std::to_string(u.bench[i]) +
                                     " above the deviation bound but is not a candidate");
    }
    mp.fixed_d[i] = -u.bench[i];
  }

  // Objective in the candidate weights x: d_C = x - b_C, d_F fixed.
  const Eigen::VectorXi ci = Eigen::Map<const Eigen::VectorXi>(C.data(), n);
  const Eigen::VectorXi fi = Eigen::Map<const Eigen::VectorXi>(fixed.data(), static_cast<Eigen::Index>(fixed.size()));
  const Matrix omega_cc = u.omega(ci, ci);
  const Matrix omega_cf = u.omega(ci, fi);
  const Vector b_c = u.bench(ci);
  const Vector d_f = mp.fixed_d(fi);
  const Vector alpha_c = u.alpha(ci);
  const Vector alpha_f = u.alpha(fi);

  auto& qp = mp.qp;
  qp.Q = omega_cc;
  qp.c = -2.0 * omega_cc * b_c + 2.0 * omega_cf * d_f - lambda * alpha_c;
  qp.constant = b_c.dot(omega_cc * b_c) - 2.0 * b_c.dot(omega_cf * d_f) + d_f.dot(u.omega(fi, fi) * d_f) +
                lambda * alpha_c.dot(b_c) - lambda * alpha_f.dot(d_f);

  const int n_sec = u.num_sectors();
  const int m = n + 2 * n + 2 * n_sec + 2 * kNumQuintiles + 2;
  qp.A_ineq = Matrix::Zero(m, n);
  qp.b_ineq = Vector::Zero(m);
  mp.ineq_rows.reserve(m);
  int row = 0;
  auto add_row = [&](RowKind kind, int index, double rhs) {
    mp.ineq_rows.push_back({kind, index});
    qp.b_ineq[row] = rhs;
    return row++;
  };

  for (int j = 0; j < n; ++j) qp.A_ineq(add_row(RowKind::NonNeg, C[j], 0.0), j) = -1.0;
  for (int j = 0; j < n; ++j) {
    qp.A_ineq(add_row(RowKind::DevUB, C[j], b_c[j] + limits.dev_bound), j) = 1.0;
    qp.A_ineq(add_row(RowKind::DevLB, C[j], limits.dev_bound - b_c[j]), j) = -1.0;
  }

  // Aggregate rows: sum_{group} d = sum_{group & C} x - sum_{group} w^b.
  auto add_group = [&](RowKind ub, RowKind lb, int index, double bound, auto&& coef, const std::string& label) {
    double bench_sum = 0.0;
    bool any = false;
    for (int i = 0; i < n_all; ++i) bench_sum += coef(i) * u.bench[i];
    const int r_ub = add_row(ub, index, bound + bench_sum);
    const int r_lb = add_row(lb, index, bound - bench_sum);
    for (int j = 0; j < n; ++j) {
      const double a = coef(C[j]);
      if (a != 0.0) any = true;
      qp.A_ineq(r_ub, j) = a;
      qp.A_ineq(r_lb, j) = -a;
    }
    if (!any && std::abs(bench_sum) > bound + 1e-12) {
      throw InfeasibleByConstruction(label + " has no candidates and a fixed active weight of " +
                                     std::to_string(-bench_sum));
    }
  };
  for (int s = 0; s < n_sec; ++s) {
    add_group(RowKind::SectorUB, RowKind::SectorLB, s, limits.sector_bound,
              [&](int i) { return u.sector_of[i] == s ? 1.0 : 0.0; }, "sector " + u.sector_names[s]);
  }
  for (int k = 1; k <= kNumQuintiles; ++k) {
    add_group(RowKind::McapUB, RowKind::McapLB, k, limits.mcap_bound,
              [&](int i) { return u.mcapq_of[i] == k ? 1.0 : 0.0; }, "quintile " + std::to_string(k));
  }
  add_group(RowKind::BetaUB, RowKind::BetaLB, -1, limits.beta_bound, [&](int i) { return u.beta[i]; }, "beta");

  qp.A_eq = Matrix::Ones(1, n);
  qp.b_eq = Vector::Ones(1);
  mp.eq_rows.push_back({RowKind::Budget, -1});
  return mp;
}

Vector expand_weights(const MasterProblem& mp, const Vector& x) {
  Vector w = Vector::Zero(mp.fixed_d.size());
  for (std::size_t j = 0; j < mp.candidates.size(); ++j) w[mp.candidates[j]] = x[static_cast<Eigen::Index>(j)];
  return w;
}

double mv_objective(const AssetUniverse& u, const Vector& w, double lambda) {
  const Vector d = w - u.bench;
  return d.dot(u.omega * d) - lambda * u.alpha.dot(d);
}

double tracking_error(const AssetUniverse& u, const Vector& w) {
  const Vector d = w - u.bench;
  return std::sqrt(std::max(0.0, d.dot(u.omega * d)));
}

double active_share(std::span<const double> w, std::span<const double> bench) {
  if (w.size() != bench.size()) throw std::invalid_argument("active_share: length mismatch");
  double overlap = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) overlap += std::min(w[i], bench[i]);
  return 1.0 - overlap;
}

double total_abs_deviation(std::span<const double> w, std::span<const double> bench) {
  if (w.size() != bench.size()) throw std::invalid_argument("total_abs_deviation: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += std::abs(w[i] - bench[i]);
  return total;
}

}  // namespace cgport
