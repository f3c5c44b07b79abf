#pragma once

#include "mibpcert/opt_model.hpp"

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace mibpcert {

enum class LpStatus { optimal, infeasible };

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  double objective = 0.0;
  Eigen::VectorXd x;  // structural variables only
  long iterations = 0;
};

struct LpRowSpec {
  std::vector<std::pair<int, double>> terms;  // (column, coefficient)
  Cmp cmp = Cmp::eq;
  double rhs = 0.0;
};

struct LpProblem {
  Eigen::VectorXd lo, hi;  // finite bounds per structural variable
  std::vector<LpRowSpec> rows;
};

/// Primal simplex over bounded variables with a dense tableau. Two phases:
/// feasibilize() drives artificial columns out of violated rows, optimize()
/// minimizes a linear cost from the current feasible basis. Deterministic:
/// Dantzig pricing with lowest-index ties, switching to Bland's rule after a
/// run of degenerate steps. snapshot()/restore() allow several objectives to
/// be priced from one feasibility phase.
class SimplexTableau {
 public:
  explicit SimplexTableau(const LpProblem& problem);

  /// Phase 1. Returns false when the rows are infeasible.
  bool feasibilize();

  /// Phase 2 from the current (feasible) basis; cost is sparse over
  /// structural columns. Minimizes.
  LpResult optimize(const std::vector<std::pair<int, double>>& cost);

  /// feasibilize + optimize.
  LpResult solve(const std::vector<std::pair<int, double>>& cost);

  void snapshot();
  void restore();

  long total_pivots() const { return pivots_; }

 private:
  static constexpr double kFeasTol = 1e-9;
  static constexpr double kCostTol = 1e-9;
  static constexpr double kPivotTol = 1e-11;
  static constexpr int kDegenerateLimit = 60;

  struct State {
    Eigen::MatrixXd T;
    Eigen::VectorXd xval;
    std::vector<int> basis;
    std::vector<int> pos_in_basis;
  };

  int add_column(double lo, double hi);
  void build_rows(const std::vector<LpRowSpec>& rows);
  void run_simplex(const Eigen::VectorXd& cost_full, long max_iters);
  bool basis_feasible() const;

  int n_struct_ = 0;
  int m_ = 0;  // rows
  int k_ = 0;  // columns (structural + slack + artificial)
  Eigen::MatrixXd T_;        // m_ x k_, maintained as B^{-1} * A
  Eigen::VectorXd xval_;     // value per column
  Eigen::VectorXd col_lo_, col_hi_;
  std::vector<int> basis_;          // column basic in each row
  std::vector<int> pos_in_basis_;   // -1 when nonbasic
  std::vector<int> artificials_;
  bool feasible_ = false;
  long pivots_ = 0;
  State snapshot_;
  bool have_snapshot_ = false;
};

/// One-shot convenience wrapper.
LpResult solve_lp_dense(const LpProblem& problem,
                        const std::vector<std::pair<int, double>>& cost);

}  // namespace mibpcert
