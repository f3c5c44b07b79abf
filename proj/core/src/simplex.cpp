#include "mibpcert/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mibpcert {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

SimplexTableau::SimplexTableau(const LpProblem& problem) {
  n_struct_ = static_cast<int>(problem.lo.size());
  if (problem.hi.size() != n_struct_)
    throw std::invalid_argument("SimplexTableau: bound size mismatch");
  for (int j = 0; j < n_struct_; ++j) {
    if (!std::isfinite(problem.lo[j]) || !std::isfinite(problem.hi[j]) ||
        problem.lo[j] > problem.hi[j])
      throw std::invalid_argument("SimplexTableau: structural bounds must be finite and ordered");
  }
  m_ = static_cast<int>(problem.rows.size());
  const int k_cap = n_struct_ + 2 * m_ + 4;
  T_ = Eigen::MatrixXd::Zero(std::max(m_, 1), k_cap);
  xval_ = Eigen::VectorXd::Zero(k_cap);
  col_lo_ = Eigen::VectorXd::Zero(k_cap);
  col_hi_ = Eigen::VectorXd::Zero(k_cap);
  k_ = 0;
  for (int j = 0; j < n_struct_; ++j) add_column(problem.lo[j], problem.hi[j]);
  build_rows(problem.rows);
}

int SimplexTableau::add_column(double lo, double hi) {
  if (k_ == T_.cols()) {
    const Eigen::Index newc = T_.cols() + std::max<Eigen::Index>(16, T_.cols() / 2);
    T_.conservativeResize(Eigen::NoChange, newc);
    T_.rightCols(newc - k_).setZero();
    xval_.conservativeResize(newc);
    col_lo_.conservativeResize(newc);
    col_hi_.conservativeResize(newc);
  }
  col_lo_[k_] = lo;
  col_hi_[k_] = hi;
  // Nonbasic columns rest at a finite bound; prefer the lower one.
  xval_[k_] = std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi : 0.0);
  pos_in_basis_.push_back(-1);
  return k_++;
}

void SimplexTableau::build_rows(const std::vector<LpRowSpec>& rows) {
  basis_.assign(m_, -1);
  for (int i = 0; i < m_; ++i) {
    // Row equilibration: big-M rows otherwise wreck the tableau scaling.
    double scale = 0.0;
    for (const auto& [col, coef] : rows[i].terms) scale = std::max(scale, std::abs(coef));
    scale = scale > 1e-12 ? 1.0 / scale : 1.0;
    for (const auto& [col, coef] : rows[i].terms) {
      if (col < 0 || col >= n_struct_)
        throw std::invalid_argument("SimplexTableau: row references unknown column");
      T_(i, col) += scale * coef;
    }
    double slo = 0.0, shi = 0.0;
    switch (rows[i].cmp) {
      case Cmp::le: slo = 0.0; shi = kInf; break;
      case Cmp::ge: slo = -kInf; shi = 0.0; break;
      case Cmp::eq: slo = 0.0; shi = 0.0; break;
    }
    const int s = add_column(slo, shi);
    xval_[s] = 0.0;
    T_(i, s) = 1.0;

    // Residual with every structural column at its resting bound.
    double r = scale * rows[i].rhs;
    for (const auto& [col, coef] : rows[i].terms) r -= scale * coef * xval_[col];

    if (r >= slo - kFeasTol && r <= shi + kFeasTol) {
      xval_[s] = std::clamp(r, slo, shi);
      basis_[i] = s;
      pos_in_basis_[s] = i;
    } else {
      // Slack rests at its violated-side bound; an artificial column absorbs
      // the remaining gap with a positive value. The basic column must stay a
      // unit vector, so rows with a negative residual are sign-flipped.
      const double srest = r < slo ? slo : shi;
      xval_[s] = std::isfinite(srest) ? srest : 0.0;
      const double resid = r - xval_[s];
      const int t = add_column(0.0, kInf);
      if (resid < 0.0) T_.row(i).head(k_) *= -1.0;
      T_(i, t) = 1.0;
      xval_[t] = std::abs(resid);
      basis_[i] = t;
      pos_in_basis_[t] = i;
      artificials_.push_back(t);
    }
  }
}

bool SimplexTableau::basis_feasible() const {
  for (int i = 0; i < m_; ++i) {
    const int b = basis_[i];
    if (xval_[b] < col_lo_[b] - kFeasTol || xval_[b] > col_hi_[b] + kFeasTol) return false;
  }
  for (int t : artificials_)
    if (xval_[t] > kFeasTol) return false;
  return true;
}

void SimplexTableau::run_simplex(const Eigen::VectorXd& cost, long max_iters) {
  // Reduced-cost row d = c - c_B^T * T. Maintained incrementally across
  // pivots and refreshed periodically: drift in d causes phantom entering
  // candidates that stall the iteration on degenerate pivots.
  Eigen::VectorXd d;
  const auto refresh = [&] {
    d = cost.head(k_);
    for (int i = 0; i < m_; ++i) {
      const double cb = cost[basis_[i]];
      if (cb != 0.0) d.noalias() -= cb * T_.row(i).head(k_).transpose();
    }
  };
  refresh();
  long since_refresh = 0;

  const auto price = [&](bool bland_rule) {
    int q = -1;
    double bestmag = kCostTol;
    for (int j = 0; j < k_; ++j) {
      if (pos_in_basis_[j] >= 0) continue;
      if (col_hi_[j] - col_lo_[j] < 1e-15) continue;  // fixed column
      const double dj = d[j];
      const bool at_lo = std::isfinite(col_lo_[j]) && xval_[j] <= col_lo_[j] + kFeasTol;
      int s = 0;
      if (at_lo && dj < -kCostTol) s = 1;
      else if (!at_lo && dj > kCostTol) s = -1;
      if (s == 0) continue;
      if (bland_rule) return j;
      if (std::abs(dj) > bestmag) {
        bestmag = std::abs(dj);
        q = j;
      }
    }
    return q;
  };

  int degenerate_run = 0;
  bool bland = false;
  for (long it = 0; it < max_iters; ++it) {
    if (++since_refresh > 256) {
      refresh();
      since_refresh = 0;
    }
    int q = price(bland);
    if (q < 0 && since_refresh > 0) {
      refresh();
      since_refresh = 0;
      q = price(bland);
    }
    if (q < 0) return;  // optimal

    const bool at_lo = std::isfinite(col_lo_[q]) && xval_[q] <= col_lo_[q] + kFeasTol;
    const int sigma = at_lo ? 1 : -1;

    // Ratio test: entering moves by delta >= 0; basic i changes at rate
    // -sigma * T(i,q). Ties prefer the larger pivot magnitude (numerical
    // stability) except under Bland's rule, where the lowest basic variable
    // index guarantees termination.
    double delta = col_hi_[q] - col_lo_[q];  // bound-flip cap
    int leave_row = -1;
    double leave_target = 0.0;
    for (int i = 0; i < m_; ++i) {
      const double a = T_(i, q);
      if (std::abs(a) < kPivotTol) continue;
      const int b = basis_[i];
      const double rate = -static_cast<double>(sigma) * a;
      double cap;
      double target;
      if (rate < 0.0 && std::isfinite(col_lo_[b])) {
        cap = (xval_[b] - col_lo_[b]) / (-rate);
        target = col_lo_[b];
      } else if (rate > 0.0 && std::isfinite(col_hi_[b])) {
        cap = (col_hi_[b] - xval_[b]) / rate;
        target = col_hi_[b];
      } else {
        continue;
      }
      if (cap < 0.0) cap = 0.0;
      const bool strictly = cap < delta - 1e-12;
      const bool tie = !strictly && cap <= delta + 1e-12 && leave_row >= 0;
      bool take = strictly || (cap <= delta && leave_row < 0);
      if (tie) {
        if (bland)
          take = basis_[i] < basis_[leave_row];
        else
          take = std::abs(a) > std::abs(T_(leave_row, q)) + 1e-15 ||
                 (std::abs(std::abs(a) - std::abs(T_(leave_row, q))) <= 1e-15 &&
                  basis_[i] < basis_[leave_row]);
      }
      if (take) {
        delta = std::min(delta, cap);
        leave_row = i;
        leave_target = target;
      }
    }
    if (!std::isfinite(delta))
      throw std::runtime_error("SimplexTableau: unbounded direction in a bounded problem");

    const bool progressed = delta > 1e-12;
    const double step = static_cast<double>(sigma) * delta;
    if (delta > 0.0) {
      xval_[q] += step;
      for (int i = 0; i < m_; ++i) {
        const double a = T_(i, q);
        if (a != 0.0) xval_[basis_[i]] -= step * a;
      }
    }
    if (leave_row >= 0) {
      const int leaving = basis_[leave_row];
      xval_[leaving] = leave_target;  // snap exactly onto its bound
      const double piv = T_(leave_row, q);
      T_.row(leave_row).head(k_) /= piv;
      for (int i = 0; i < m_; ++i) {
        if (i == leave_row) continue;
        const double f = T_(i, q);
        if (f != 0.0) T_.row(i).head(k_) -= f * T_.row(leave_row).head(k_);
      }
      const double dq = d[q];
      if (dq != 0.0) d.noalias() -= dq * T_.row(leave_row).head(k_).transpose();
      pos_in_basis_[leaving] = -1;
      basis_[leave_row] = q;
      pos_in_basis_[q] = leave_row;
      ++pivots_;
    }

    if (progressed) {
      degenerate_run = 0;
      bland = false;
    } else if (++degenerate_run > kDegenerateLimit) {
      bland = true;
    }
  }
  throw std::runtime_error("SimplexTableau: iteration limit hit (numerical trouble)");
}

bool SimplexTableau::feasibilize() {
  if (feasible_ && basis_feasible()) return true;
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(T_.cols());
  bool any = false;
  for (int t : artificials_) {
    if (col_hi_[t] > 0.0) {
      cost[t] = 1.0;
      any = true;
    }
  }
  if (any) {
    run_simplex(cost, 2000L + 40L * (m_ + k_));
    double infeas = 0.0;
    for (int t : artificials_) infeas += std::abs(xval_[t]);
    if (infeas > 1e-7) return false;
    // Retire artificials: pivot basic ones out where possible, then pin all
    // of them to zero so they never re-enter.
    for (int t : artificials_) {
      const int row = pos_in_basis_[t];
      if (row >= 0) {
        int q = -1;
        for (int j = 0; j < k_; ++j) {
          if (pos_in_basis_[j] >= 0) continue;
          if (col_hi_[j] - col_lo_[j] < 1e-15) continue;
          if (std::abs(T_(row, j)) > 1e-7) {
            q = j;
            break;
          }
        }
        if (q >= 0) {
          const double piv = T_(row, q);
          T_.row(row).head(k_) /= piv;
          for (int i = 0; i < m_; ++i) {
            if (i == row) continue;
            const double f = T_(i, q);
            if (f != 0.0) T_.row(i).head(k_) -= f * T_.row(row).head(k_);
          }
          pos_in_basis_[t] = -1;
          basis_[row] = q;
          pos_in_basis_[q] = row;
          xval_[q] = xval_[t];  // both zero up to tolerance
          xval_[t] = 0.0;
          ++pivots_;
        }
      }
      col_lo_[t] = 0.0;
      col_hi_[t] = 0.0;
      xval_[t] = 0.0;
    }
  }
  feasible_ = true;
  return true;
}

LpResult SimplexTableau::optimize(const std::vector<std::pair<int, double>>& cost) {
  LpResult res;
  if (!feasible_) {
    res.status = LpStatus::infeasible;
    return res;
  }
  Eigen::VectorXd c = Eigen::VectorXd::Zero(T_.cols());
  for (const auto& [j, v] : cost) {
    if (j < 0 || j >= n_struct_) throw std::invalid_argument("SimplexTableau: cost index");
    c[j] += v;
  }
  const long before = pivots_;
  run_simplex(c, 2000L + 40L * (m_ + k_));
  res.status = LpStatus::optimal;
  res.x = xval_.head(n_struct_);
  res.objective = 0.0;
  for (const auto& [j, v] : cost) res.objective += v * xval_[j];
  res.iterations = pivots_ - before;
  return res;
}

LpResult SimplexTableau::solve(const std::vector<std::pair<int, double>>& cost) {
  if (!feasibilize()) {
    LpResult res;
    res.status = LpStatus::infeasible;
    return res;
  }
  return optimize(cost);
}

void SimplexTableau::snapshot() {
  snapshot_.T = T_;
  snapshot_.xval = xval_;
  snapshot_.basis = basis_;
  snapshot_.pos_in_basis = pos_in_basis_;
  have_snapshot_ = true;
}

void SimplexTableau::restore() {
  if (!have_snapshot_) throw std::logic_error("SimplexTableau: no snapshot");
  T_ = snapshot_.T;
  xval_ = snapshot_.xval;
  basis_ = snapshot_.basis;
  pos_in_basis_ = snapshot_.pos_in_basis;
}

LpResult solve_lp_dense(const LpProblem& problem,
                        const std::vector<std::pair<int, double>>& cost) {
  SimplexTableau tab(problem);
  return tab.solve(cost);
}

}  // namespace mibpcert
