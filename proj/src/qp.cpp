#include "cgport/qp.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cgport {

namespace {

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Largest step in (0, 1] keeping v + step * dv >= 0.
double max_step(const Vector& v, const Vector& dv) {
  double step = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) step = std::min(step, -v[i] / dv[i]);
  }
  return step;
}

}  // namespace

double QuadraticProgram::objective_at(const Vector& x) const {
  return x.dot(Q * x) + c.dot(x) + constant;
}

void QuadraticProgram::check_dimensions() const {
  const auto n = c.size();
  auto fail = [](const std::string& what) { throw std::invalid_argument("QuadraticProgram: " + what); };
  if (Q.rows() != n || Q.cols() != n) fail("Q must be " + std::to_string(n) + "x" + std::to_string(n));
  if (A_ineq.rows() != b_ineq.size()) fail("A_ineq rows do not match b_ineq");
  if (A_eq.rows() != b_eq.size()) fail("A_eq rows do not match b_eq");
  if (A_ineq.rows() > 0 && A_ineq.cols() != n) fail("A_ineq columns do not match c");
  if (A_eq.rows() > 0 && A_eq.cols() != n) fail("A_eq columns do not match c");
}

std::string_view to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal:
      return "Optimal";
    case QpStatus::MaxIter:
      return "MaxIter";
    case QpStatus::Infeasible:
      return "Infeasible";
  }
  return "Unknown";
}

double KktResiduals::max() const { return std::max({primal_ineq, primal_eq, stationarity, comp_slack}); }

KktResiduals kkt_residuals(const QuadraticProgram& qp, const QpSolution& sol) {
  qp.check_dimensions();
  const auto n = qp.num_vars();
  if (sol.x.size() != n || sol.s_ineq.size() != qp.num_ineq() || sol.s_eq.size() != qp.num_eq()) {
    throw std::invalid_argument("kkt_residuals: solution dimensions do not match the problem");
  }
  KktResiduals r;
  Vector grad = 2.0 * (qp.Q * sol.x) + qp.c;
  if (qp.num_ineq() > 0) {
    const Vector slack = qp.b_ineq - qp.A_ineq * sol.x;
    r.primal_ineq = std::max(0.0, (-slack).maxCoeff());
    r.comp_slack = sol.s_ineq.cwiseProduct(slack).cwiseAbs().maxCoeff();
    grad += qp.A_ineq.transpose() * sol.s_ineq;
  }
  if (qp.num_eq() > 0) {
    r.primal_eq = inf_norm(qp.A_eq * sol.x - qp.b_eq);
    grad += qp.A_eq.transpose() * sol.s_eq;
  }
  r.stationarity = inf_norm(grad);
  return r;
}

bool repair_psd(Matrix& m, double neg_tol) {
  m = 0.5 * (m + m.transpose()).eval();
  if (m.rows() == 0) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  const Vector& ev = eig.eigenvalues();
  if (ev.minCoeff() >= -neg_tol) return false;
  Vector clamped = ev;
  for (Eigen::Index i = 0; i < clamped.size(); ++i) {
    if (clamped[i] < -neg_tol) clamped[i] = 0.0;
  }
  m = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  m = 0.5 * (m + m.transpose()).eval();
  return true;
}

QpSolution solve_qp(const QuadraticProgram& qp, const QpSettings& settings) {
  qp.check_dimensions();
  if (!(settings.tol > 0.0)) throw std::invalid_argument("solve_qp: tol must be positive");

  const auto n = qp.num_vars();
  const auto m = qp.num_ineq();
  const auto p = qp.num_eq();

  QuadraticProgram repaired;
  const bool clamped = [&] {
    Matrix q = qp.Q;
    const bool changed = repair_psd(q);
    if (changed) {
      repaired = qp;
      repaired.Q = std::move(q);
    }
    return changed;
  }();
  const QuadraticProgram& prob = clamped ? repaired : qp;
  const Matrix Q2 = 2.0 * prob.Q;

  const Matrix& A = qp.A_ineq;
  const Matrix& E = qp.A_eq;
  const Vector& b = qp.b_ineq;
  const Vector& e = qp.b_eq;

  constexpr double kReg = 1e-11;
  const Eigen::Index dim = n + p;
  Matrix K(dim, dim);

  auto assemble = [&](const Vector& w) {
    K.setZero();
    K.topLeftCorner(n, n) = Q2;
    if (m > 0) K.topLeftCorner(n, n).noalias() += A.transpose() * w.asDiagonal() * A;
    K.topLeftCorner(n, n).diagonal().array() += kReg;
    if (p > 0) {
      K.topRightCorner(n, p) = E.transpose();
      K.bottomLeftCorner(p, n) = E;
      K.bottomRightCorner(p, p).diagonal().setConstant(-kReg);
    }
  };

  // Starting point from a least-squares fit with unit weights.
  Vector x = Vector::Zero(n);
  Vector y = Vector::Zero(p);
  Vector z = Vector::Ones(m);
  Vector s = Vector::Ones(m);
  {
    assemble(Vector::Ones(m));
    Vector rhs(dim);
    rhs.head(n) = -qp.c;
    if (m > 0) rhs.head(n) += A.transpose() * b;
    rhs.tail(p) = e;
    Vector sol = K.partialPivLu().solve(rhs);
    if (sol.allFinite()) {
      x = sol.head(n);
    }
    if (m > 0) {
      z = b - A * x;
      const double shift = std::max(-1.5 * z.minCoeff(), 0.0);
      z.array() += shift;
      const double zs = z.dot(s);
      z.array() += 0.5 * zs / s.sum();
      s.array() += 0.5 * zs / std::max(z.sum(), 1e-12);
      z = z.cwiseMax(1e-4);
    }
  }

  QpSolution out;
  out.status = QpStatus::MaxIter;

  double best_primal = std::numeric_limits<double>::infinity();
  int stall = 0;

  Vector r_d(n), r_p(m), r_e(p);
  Vector dx(n), dy(p), dz(m), ds(m);

  auto newton = [&](const Vector& w, const Vector& rhs_c, const Eigen::PartialPivLU<Matrix>& lu) {
    Vector rhs(dim);
    rhs.head(n) = -r_d;
    if (m > 0) {
      Vector t = (rhs_c + s.cwiseProduct(r_p)).cwiseQuotient(z);
      rhs.head(n) -= A.transpose() * t;
    }
    rhs.tail(p) = -r_e;
    Vector sol = lu.solve(rhs);
    // One refinement pass against the unregularized reduced system.
    Vector res(dim);
    res.head(n) = rhs.head(n) - (Q2 * sol.head(n));
    if (m > 0) res.head(n) -= A.transpose() * (w.cwiseProduct(A * sol.head(n)));
    if (p > 0) {
      res.head(n) -= E.transpose() * sol.tail(p);
      res.tail(p) = rhs.tail(p) - E * sol.head(n);
    }
    sol += lu.solve(res);
    dx = sol.head(n);
    dy = sol.tail(p);
    if (m > 0) {
      dz = -r_p - A * dx;
      ds = (rhs_c - s.cwiseProduct(dz)).cwiseQuotient(z);
    }
  };

  int iter = 0;
  for (; iter < settings.max_iter; ++iter) {
    r_d = Q2 * x + qp.c;
    if (m > 0) {
      r_d += A.transpose() * s;
      r_p = A * x + z - b;
    }
    if (p > 0) {
      r_d += E.transpose() * y;
      r_e = E * x - e;
    }
    const double mu = m > 0 ? z.dot(s) / static_cast<double>(m) : 0.0;
    const double comp_max = m > 0 ? z.cwiseProduct(s).maxCoeff() : 0.0;
    const double primal = std::max(inf_norm(r_p), inf_norm(r_e));
    const double dual = inf_norm(r_d);

    if (primal <= 0.1 * settings.tol && dual <= 0.1 * settings.tol && comp_max <= 0.01 * settings.tol) {
      out.status = QpStatus::Optimal;
      break;
    }

    // Primal infeasibility: complementarity has collapsed (or the
    // multipliers diverge) while the primal residual stops improving.
    if (primal < 0.9 * best_primal) {
      best_primal = primal;
      stall = 0;
    } else {
      ++stall;
    }
    const double mult = std::max(inf_norm(s), inf_norm(y));
    if (primal > settings.tol && ((stall >= settings.stall_window && mu < settings.tol) || mult > 1e12)) {
      out.status = QpStatus::Infeasible;
      break;
    }

    const Vector w = m > 0 ? Vector(s.cwiseQuotient(z)) : Vector();
    assemble(w);
    Eigen::PartialPivLU<Matrix> lu(K);

    // Predictor.
    Vector rhs_c = m > 0 ? Vector(-z.cwiseProduct(s)) : Vector();
    newton(w, rhs_c, lu);
    if (m > 0) {
      const double step_aff = std::min(max_step(z, dz), max_step(s, ds));
      const double mu_aff = (z + step_aff * dz).dot(s + step_aff * ds) / static_cast<double>(m);
      const double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);
      // Corrector.
      rhs_c = (-z.cwiseProduct(s) - dz.cwiseProduct(ds)).array() + sigma * mu;
      newton(w, rhs_c, lu);
    }
    if (!dx.allFinite() || !dy.allFinite() || (m > 0 && (!dz.allFinite() || !ds.allFinite()))) {
      break;
    }

    double step = 1.0;
    if (m > 0) step = std::min(1.0, 0.995 * std::min(max_step(z, dz), max_step(s, ds)));
    x += step * dx;
    y += step * dy;
    if (m > 0) {
      z += step * dz;
      s += step * ds;
      z = z.cwiseMax(1e-300);
      s = s.cwiseMax(1e-300);
    }
  }

  out.iterations = iter;
  out.x = x;
  out.s_ineq = s;
  out.s_eq = y;
  out.objective = prob.objective_at(x);
  out.kkt = kkt_residuals(prob, out);
  if (out.status == QpStatus::Optimal && out.kkt.max() > settings.tol) out.status = QpStatus::MaxIter;
  return out;
}

}  // namespace cgport
