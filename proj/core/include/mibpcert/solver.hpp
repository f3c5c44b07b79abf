#pragma once

#include "mibpcert/opt_model.hpp"
#include "mibpcert/simplex.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace mibpcert {

enum class SolveStatus { proved, node_limit, time_limit };

struct SolveConfig {
  double gap_tol = 1e-6;      // absolute; proved iff |incumbent - bound| <= gap_tol
  long node_limit = 0;        // 0 = unlimited
  double time_limit_s = 0.0;  // 0 = unlimited
  double feas_tol = 1e-9;     // bilinear exactness threshold at a candidate point
  int threads = 1;            // solve_batch concurrency
};

struct SolveOutcome {
  double bound = 0.0;                // sound outer bound on the true optimum
  std::optional<double> incumbent;   // best feasible objective value found
  double gap = 0.0;                  // |incumbent - bound|, +inf without incumbent
  long nodes = 0;                    // LP relaxations solved
  SolveStatus status = SolveStatus::proved;
  std::vector<double> bound_history; // global bound after each processed node
};

/// Optional primal heuristic: maps an LP point (full model-variable vector)
/// to the objective value of some genuinely feasible realization, or nullopt.
using PrimalEvaluator =
    std::function<std::optional<double>(const Objective&, const Eigen::VectorXd&)>;

/// Branch-and-bound over binary indicators, then spatial bisection of the
/// bilinear operand with the largest McCormick violation. Best-bound node
/// order; deterministic. The returned bound is sound even on node/time
/// limits. Throws std::runtime_error if the model is infeasible.
SolveOutcome solve(const OptModel& model, const Objective& objective,
                   const SolveConfig& config = {}, const PrimalEvaluator& evaluator = {});

/// Sequential or concurrent solves, one per objective; results are identical
/// to calling solve() per objective in order, regardless of concurrency.
std::vector<SolveOutcome> solve_batch(const OptModel& model,
                                      const std::vector<Objective>& objectives,
                                      const SolveConfig& config = {},
                                      const PrimalEvaluator& evaluator = {});

/// The plain LP relaxation of the model (binaries relaxed to their bounds).
LpResult solve_lp(const OptModel& model, const Objective& objective);

}  // namespace mibpcert
