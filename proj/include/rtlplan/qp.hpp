#pragma once

// Dense strictly convex QP:  minimize 1/2 z'Hz + g'z  subject to  A z >= b.
// Goldfarb-Idnani dual active-set method: start from the unconstrained
// minimizer and add violated constraints one at a time, dropping earlier
// ones whose multipliers would turn negative.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace rtlplan {

constexpr int qp_max_dim = 8;
constexpr int qp_max_rows = 16;

struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A;  // m x n
  Eigen::VectorXd b;

  int n() const { return static_cast<int>(g.size()); }
  int m() const { return static_cast<int>(b.size()); }

  /// Throws std::invalid_argument on shape, symmetry or definiteness problems.
  void check() const {
    if (H.rows() != n() || H.cols() != n()) throw std::invalid_argument("qp: H must be n x n");
    if (A.rows() != m() || (m() > 0 && A.cols() != n())) throw std::invalid_argument("qp: A must be m x n");
    if (n() < 1 || n() > qp_max_dim) throw std::invalid_argument("qp: dimension out of range");
    if (m() > qp_max_rows) throw std::invalid_argument("qp: too many constraints");
    if (!H.allFinite() || !g.allFinite() || !A.allFinite() || !b.allFinite())
      throw std::invalid_argument("qp: non-finite data");
    if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1 + H.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("qp: H is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < 1e-9) throw std::invalid_argument("qp: H is not positive definite");
  }
};

enum class QpStatus { optimal, infeasible, max_iter };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal:
      return "optimal";
    case QpStatus::infeasible:
      return "infeasible";
    case QpStatus::max_iter:
      return "max_iter";
  }
  return "?";
}

struct QpSolution {
  Eigen::VectorXd z;
  Eigen::VectorXd multipliers;  // one per row, zero when inactive
  std::vector<int> active_set;  // sorted
  QpStatus status = QpStatus::optimal;
  int iterations = 0;
  double objective = 0;
};

inline double qp_objective(const QpProblem& p, const Eigen::VectorXd& z) { return 0.5 * z.dot(p.H * z) + p.g.dot(z); }

/// Solver with warm start: rows active at the previous solve are tried first.
class QpSolver {
 public:
  QpSolution solve(const QpProblem& p, bool validate = true) {
    if (validate) p.check();
    QpSolution s = run(p);
    if (s.status == QpStatus::optimal) warm_ = s.active_set;
    return s;
  }
  void reset() { warm_.clear(); }
  const std::vector<int>& warm_set() const { return warm_; }

 private:
  std::vector<int> warm_;

  QpSolution run(const QpProblem& p) const {
    const int n = p.n(), m = p.m();
    QpSolution out;
    out.multipliers = Eigen::VectorXd::Zero(m);
    Eigen::LLT<Eigen::MatrixXd> llt(p.H);
    const Eigen::MatrixXd Hinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::VectorXd z = -Hinv * p.g;

    const double scale = 1 + (m > 0 ? p.b.cwiseAbs().maxCoeff() : 0.0);
    const double feas_tol = 1e-12 * scale;
    std::vector<int> act;
    std::vector<double> u;
    const int cap = 100 * (n + m);
    int iter = 0;

    auto slack = [&](int i) { return p.A.row(i).dot(z) - p.b[i]; };
    auto pick = [&]() {
      for (int i : warm_)
        if (i < m && std::find(act.begin(), act.end(), i) == act.end() && slack(i) < -feas_tol) return i;
      int best = -1;
      double worst = -feas_tol;
      for (int i = 0; i < m; ++i) {
        if (std::find(act.begin(), act.end(), i) != act.end()) continue;
        double s = slack(i) / std::max(1e-300, p.A.row(i).norm());
        if (s < worst) {
          worst = s;
          best = i;
        }
      }
      return best;
    };

    auto finish = [&](QpStatus st) {
      out.status = st;
      out.z = z;
      out.iterations = iter;
      for (std::size_t j = 0; j < act.size(); ++j) out.multipliers[act[j]] = u[j];
      out.active_set = act;
      std::sort(out.active_set.begin(), out.active_set.end());
      out.objective = qp_objective(p, z);
      return out;
    };

    for (;;) {
      const int np = pick();
      if (np < 0) return finish(QpStatus::optimal);
      const Eigen::VectorXd nvec = p.A.row(np).transpose();
      double up = 0;  // multiplier of the entering row
      for (;;) {
        if (++iter > cap) return finish(QpStatus::max_iter);
        const int q = static_cast<int>(act.size());
        Eigen::VectorXd d, r(q);
        if (q == 0) {
          d = Hinv * nvec;
        } else {
          Eigen::MatrixXd N(n, q);
          for (int j = 0; j < q; ++j) N.col(j) = p.A.row(act[static_cast<std::size_t>(j)]).transpose();
          Eigen::MatrixXd HN = Hinv * N;
          Eigen::MatrixXd M = N.transpose() * HN;
          r = M.ldlt().solve(HN.transpose() * nvec);
          d = Hinv * nvec - HN * r;
        }
        // partial step: largest t keeping current multipliers nonnegative
        double t1 = std::numeric_limits<double>::infinity();
        int drop = -1;
        for (int j = 0; j < q; ++j)
          if (r[j] > 0) {
            double t = u[static_cast<std::size_t>(j)] / r[j];
            if (t < t1) {
              t1 = t;
              drop = j;
            }
          }
        const double dn = d.dot(nvec);
        const bool zero_dir = d.norm() <= 1e-12 * (1 + nvec.norm()) || dn <= 1e-14 * nvec.squaredNorm();
        const double t2 = zero_dir ? std::numeric_limits<double>::infinity() : -slack(np) / dn;
        if (std::isinf(t1) && std::isinf(t2)) return finish(QpStatus::infeasible);
        const double t = std::min(t1, t2);
        if (!zero_dir) z += t * d;
        for (int j = 0; j < q; ++j) u[static_cast<std::size_t>(j)] -= t * r[j];
        up += t;
        if (t2 <= t1) {
          act.push_back(np);
          u.push_back(up);
          break;
        }
        act.erase(act.begin() + drop);
        u.erase(u.begin() + drop);
      }
    }
  }
};

/// Cold-start solve.
inline QpSolution solve_qp(const QpProblem& p) { return QpSolver{}.solve(p); }

/// Largest KKT residual: stationarity, primal feasibility, dual sign and
/// complementarity.
inline double kkt_residual(const QpProblem& p, const QpSolution& s) {
  Eigen::VectorXd grad = p.H * s.z + p.g;
  if (p.m() > 0) grad -= p.A.transpose() * s.multipliers;
  double r = grad.cwiseAbs().maxCoeff();
  for (int i = 0; i < p.m(); ++i) {
    double sl = p.A.row(i).dot(s.z) - p.b[i];
    r = std::max({r, -sl, -s.multipliers[i], std::abs(s.multipliers[i] * sl)});
  }
  return r;
}

}  // namespace rtlplan
