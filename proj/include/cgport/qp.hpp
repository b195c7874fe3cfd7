#pragma once

#include <Eigen/Dense>
#include <string_view>

namespace cgport {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/**
 * Dense convex QP
 *
 *   minimize    x^T Q x + c^T x + constant
 *   subject to  A_ineq x <= b_ineq
 *               A_eq   x  = b_eq
 *
 * Note the objective carries no 1/2 factor: the gradient is 2 Q x + c.
 */
struct QuadraticProgram {
  Matrix Q;
  Vector c;
  Matrix A_ineq;
  Vector b_ineq;
  Matrix A_eq;
  Vector b_eq;
  double constant = 0.0;

  Eigen::Index num_vars() const { return c.size(); }
  Eigen::Index num_ineq() const { return b_ineq.size(); }
  Eigen::Index num_eq() const { return b_eq.size(); }

  // Value of x^T Q x + c^T x + constant.
  double objective_at(const Vector& x) const;

  // Throws std::invalid_argument if any dimension disagrees.
  void check_dimensions() const;
};

enum class QpStatus { Optimal, MaxIter, Infeasible };

std::string_view to_string(QpStatus status);

/// Infinity-norm residuals of the KKT system, using multipliers s_ineq >= 0 on
/// the <=-rows and free multipliers s_eq, with stationarity
/// 2 Q x + c + A_ineq^T s_ineq + A_eq^T s_eq = 0.
struct KktResiduals {
  double primal_ineq = 0.0;
  double primal_eq = 0.0;
  double stationarity = 0.0;
  double comp_slack = 0.0;

  double max() const;
};

struct QpSolution {
  Vector x;
  Vector s_ineq;
  Vector s_eq;
  double objective = 0.0;
  QpStatus status = QpStatus::MaxIter;
  KktResiduals kkt;
  int iterations = 0;
};

struct QpSettings {
  double tol = 1e-8;
  int max_iter = 200;
  // Iterations without primal-residual progress (while complementarity is
  // already small) before the problem is declared infeasible.
  int stall_window = 15;
};

KktResiduals kkt_residuals(const QuadraticProgram& qp, const QpSolution& sol);

/// Primal-dual interior-point method (Mehrotra predictor-corrector) on the
/// dense KKT system. When Q needs a PSD repair, the objective and residuals
/// refer to the repaired problem.
QpSolution solve_qp(const QuadraticProgram& qp, const QpSettings& settings = {});

/// Symmetrize and clamp eigenvalues below -1e-8 to zero. Returns true when a
/// clamp was applied.
bool repair_psd(Matrix& m, double neg_tol = 1e-8);

}  // namespace cgport
