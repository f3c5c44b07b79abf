#include "mibpcert/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <memory>
#include <queue>
#include <stdexcept>

namespace mibpcert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFixTol = 1e-12;
constexpr double kIntTol = 1e-7;
constexpr double kOutward = 1e-11;

struct Liveness {
  std::vector<char> var, row, prod, branch;
  std::vector<int> binaries;  // live binary variables, ascending
};

// Variables reachable from the objective through definitions, plus every
// free-standing row touching a reachable variable. Definition rows of
// unreachable auxiliaries are dropped: their outputs carry interval-hull
// bounds, so those rows are satisfiable for any assignment of the reachable
// variables and removing them changes neither the optimum nor soundness.
Liveness compute_liveness(const OptModel& model, VarId target) {
  const int nv = model.num_vars();
  Liveness live;
  live.var.assign(nv, 0);
  live.row.assign(model.rows().size(), 0);
  live.prod.assign(model.bilinear().size(), 0);
  live.branch.assign(model.branches().size(), 0);

  std::vector<std::vector<int>> plain_rows_of(nv);
  for (std::size_t r = 0; r < model.rows().size(); ++r) {
    if (model.rows()[r].defines.valid()) continue;
    for (const LinTerm& t : model.rows()[r].row.terms)
      plain_rows_of[t.var.index].push_back(static_cast<int>(r));
  }
  std::vector<std::vector<int>> branches_of(nv);
  for (std::size_t b = 0; b < model.branches().size(); ++b)
    branches_of[model.branches()[b].value.index].push_back(static_cast<int>(b));

  std::vector<int> work;
  auto mark_var = [&](VarId v) {
    if (!live.var[v.index]) {
      live.var[v.index] = 1;
      work.push_back(v.index);
    }
  };
  auto mark_row = [&](int r) {
    if (live.row[r]) return;
    live.row[r] = 1;
    for (const LinTerm& t : model.rows()[r].row.terms) mark_var(t.var);
  };
  auto mark_branch = [&](int b) {
    if (live.branch[b]) return;
    live.branch[b] = 1;
    const BranchConstraint& br = model.branches()[b];
    mark_var(br.indicator);
    mark_var(br.value);
    for (const LinTerm& t : br.active_expr) mark_var(t.var);
    for (const LinTerm& t : br.inactive_expr) mark_var(t.var);
    if (br.active_guard)
      for (const LinTerm& t : br.active_guard->terms) mark_var(t.var);
    if (br.inactive_guard)
      for (const LinTerm& t : br.inactive_guard->terms) mark_var(t.var);
  };

  mark_var(target);
  while (!work.empty()) {
    const int v = work.back();
    work.pop_back();
    const auto& def = model.defined_by(VarId{v});
    switch (def.kind) {
      case OptModel::DefinedBy::Kind::row:
        mark_row(def.index);
        break;
      case OptModel::DefinedBy::Kind::product:
        if (!live.prod[def.index]) {
          live.prod[def.index] = 1;
          mark_var(model.bilinear()[def.index].x);
          mark_var(model.bilinear()[def.index].y);
        }
        break;
      case OptModel::DefinedBy::Kind::branch:
        for (int b : branches_of[v]) mark_branch(b);
        break;
      case OptModel::DefinedBy::Kind::none:
        break;
    }
    for (int r : plain_rows_of[v]) mark_row(r);
  }

  for (int v = 0; v < nv; ++v)
    if (live.var[v] && model.kind(VarId{v}) == VarKind::binary) live.binaries.push_back(v);
  return live;
}

struct Bounds {
  Eigen::VectorXd lo, hi;
};

Interval range_of(const std::vector<LinTerm>& terms, double constant, const Bounds& b) {
  double lo = constant, hi = constant;
  for (const LinTerm& t : terms) {
    const double l = b.lo[t.var.index], h = b.hi[t.var.index];
    if (t.coef >= 0.0) {
      lo += t.coef * l;
      hi += t.coef * h;
    } else {
      lo += t.coef * h;
      hi += t.coef * l;
    }
  }
  return Interval(std::min(lo, hi), std::max(lo, hi));
}

bool tighten(Bounds& b, int v, double lo, double hi) {
  bool changed = false;
  if (lo > b.lo[v] + 1e-12) {
    b.lo[v] = lo;
    changed = true;
  }
  if (hi < b.hi[v] - 1e-12) {
    b.hi[v] = hi;
    changed = true;
  }
  return changed;
}

bool propagate_row(const LinearConstraint& c, Bounds& b, bool* changed) {
  double alo = 0.0, ahi = 0.0;
  for (const LinTerm& t : c.terms) {
    const double l = b.lo[t.var.index], h = b.hi[t.var.index];
    if (t.coef >= 0.0) {
      alo += t.coef * l;
      ahi += t.coef * h;
    } else {
      alo += t.coef * h;
      ahi += t.coef * l;
    }
  }
  const double tol = 1e-9 * std::max(1.0, std::abs(c.rhs));
  if (c.cmp != Cmp::le && ahi < c.rhs - tol) return false;
  if (c.cmp != Cmp::ge && alo > c.rhs + tol) return false;

  for (const LinTerm& t : c.terms) {
    if (std::abs(t.coef) < 1e-14) continue;
    const int v = t.var.index;
    const double l = b.lo[v], h = b.hi[v];
    double rest_lo, rest_hi;
    if (t.coef >= 0.0) {
      rest_lo = alo - t.coef * l;
      rest_hi = ahi - t.coef * h;
    } else {
      rest_lo = alo - t.coef * h;
      rest_hi = ahi - t.coef * l;
    }
    double new_lo = l, new_hi = h;
    if (c.cmp != Cmp::ge) {  // activity <= rhs
      const double cap = c.rhs - rest_lo;
      if (t.coef > 0.0)
        new_hi = std::min(new_hi, cap / t.coef + kOutward);
      else
        new_lo = std::max(new_lo, cap / t.coef - kOutward);
    }
    if (c.cmp != Cmp::le) {  // activity >= rhs
      const double cap = c.rhs - rest_hi;
      if (t.coef > 0.0)
        new_lo = std::max(new_lo, cap / t.coef - kOutward);
      else
        new_hi = std::min(new_hi, cap / t.coef + kOutward);
    }
    if (new_lo > new_hi + 1e-9) return false;
    if (tighten(b, v, new_lo, std::max(new_lo, new_hi)) && changed) *changed = true;
  }
  return true;
}

bool guard_possible(const LinearConstraint& g, const Bounds& b) {
  const Interval r = range_of(g.terms, 0.0, b);
  const double tol = 1e-9 * std::max(1.0, std::abs(g.rhs));
  switch (g.cmp) {
    case Cmp::le: return r.lo <= g.rhs + tol;
    case Cmp::ge: return r.hi >= g.rhs - tol;
    case Cmp::eq: return r.lo <= g.rhs + tol && r.hi >= g.rhs - tol;
  }
  return true;
}

bool propagate(const OptModel& model, const Liveness& live, Bounds& b) {
  for (int pass = 0; pass < 8; ++pass) {
    bool changed = false;
    for (int v : live.binaries) {
      if (b.lo[v] > kIntTol && b.lo[v] < 1.0) {
        b.lo[v] = 1.0;
        changed = true;
      }
      if (b.hi[v] < 1.0 - kIntTol && b.hi[v] > 0.0) {
        b.hi[v] = 0.0;
        changed = true;
      }
      if (b.lo[v] > b.hi[v] + 1e-9) return false;
    }
    for (std::size_t r = 0; r < model.rows().size(); ++r) {
      if (!live.row[r]) continue;
      if (!propagate_row(model.rows()[r].row, b, &changed)) return false;
    }
    for (std::size_t p = 0; p < model.bilinear().size(); ++p) {
      if (!live.prod[p]) continue;
      const BilinearTerm& t = model.bilinear()[p];
      const Interval x(b.lo[t.x.index], std::max(b.lo[t.x.index], b.hi[t.x.index]));
      const Interval y(b.lo[t.y.index], std::max(b.lo[t.y.index], b.hi[t.y.index]));
      const Interval w = x * y;
      changed |= tighten(b, t.product.index, w.lo - kOutward, w.hi + kOutward);
      if (b.lo[t.product.index] > b.hi[t.product.index] + 1e-9) return false;
    }
    for (std::size_t bi = 0; bi < model.branches().size(); ++bi) {
      if (!live.branch[bi]) continue;
      const BranchConstraint& br = model.branches()[bi];
      const int ind = br.indicator.index;
      const bool can_active = b.hi[ind] > 0.5;
      const bool can_inactive = b.lo[ind] < 0.5;
      const bool active_ok =
          can_active && (!br.active_guard || guard_possible(*br.active_guard, b));
      const bool inactive_ok =
          can_inactive && (!br.inactive_guard || guard_possible(*br.inactive_guard, b));
      if (!active_ok && !inactive_ok) return false;
      if (!active_ok && can_active) {
        b.hi[ind] = 0.0;
        changed = true;
      }
      if (!inactive_ok && can_inactive) {
        b.lo[ind] = 1.0;
        changed = true;
      }

      Interval hull(0.0, 0.0);
      const bool fixed_active = b.lo[ind] > 0.5;
      const bool fixed_inactive = b.hi[ind] < 0.5;
      if (fixed_active)
        hull = range_of(br.active_expr, br.active_const, b);
      else if (fixed_inactive)
        hull = range_of(br.inactive_expr, br.inactive_const, b);
      else
        hull = Interval::hull(range_of(br.active_expr, br.active_const, b),
                              range_of(br.inactive_expr, br.inactive_const, b));
      changed |= tighten(b, br.value.index, hull.lo - kOutward, hull.hi + kOutward);
      if (b.lo[br.value.index] > b.hi[br.value.index] + 1e-9) return false;

      if (fixed_active && br.active_guard) {
        if (!propagate_row(*br.active_guard, b, &changed)) return false;
      } else if (fixed_inactive && br.inactive_guard) {
        if (!propagate_row(*br.inactive_guard, b, &changed)) return false;
      }
    }
    if (!changed) break;
  }
  return true;
}

struct LoweredLp {
  LpProblem problem;
  std::vector<int> col_of;  // model var -> lp column, -1 when fixed or dead
  std::vector<double> fixed_value;
  bool trivially_infeasible = false;
};

LoweredLp lower_lp(const OptModel& model, const Liveness& live, const Bounds& b) {
  LoweredLp l;
  const int nv = model.num_vars();
  l.col_of.assign(nv, -1);
  l.fixed_value.assign(nv, 0.0);
  std::vector<double> lo_cols, hi_cols;
  for (int v = 0; v < nv; ++v) {
    l.fixed_value[v] = 0.5 * (b.lo[v] + b.hi[v]);
    if (!live.var[v]) continue;
    if (b.hi[v] - b.lo[v] <= kFixTol) continue;
    l.col_of[v] = static_cast<int>(lo_cols.size());
    lo_cols.push_back(b.lo[v]);
    hi_cols.push_back(b.hi[v]);
  }
  l.problem.lo.resize(static_cast<long>(lo_cols.size()));
  l.problem.hi.resize(static_cast<long>(hi_cols.size()));
  for (std::size_t j = 0; j < lo_cols.size(); ++j) {
    l.problem.lo[static_cast<long>(j)] = lo_cols[j];
    l.problem.hi[static_cast<long>(j)] = hi_cols[j];
  }

  // Emits terms + extra indicator term, folding fixed variables into the rhs.
  auto emit = [&](const std::vector<LinTerm>& terms, Cmp cmp, double rhs,
                  int indicator_col, double indicator_coef) {
    LpRowSpec row;
    double shift = 0.0;
    for (const LinTerm& t : terms) {
      const int col = l.col_of[t.var.index];
      if (col >= 0)
        row.terms.push_back({col, t.coef});
      else
        shift += t.coef * l.fixed_value[t.var.index];
    }
    if (indicator_col >= 0 && indicator_coef != 0.0)
      row.terms.push_back({indicator_col, indicator_coef});
    row.cmp = cmp;
    row.rhs = rhs - shift;
    if (row.terms.empty()) {
      const double tol = 1e-7 * std::max(1.0, std::abs(row.rhs));
      const bool ok = (cmp == Cmp::le && 0.0 <= row.rhs + tol) ||
                      (cmp == Cmp::ge && 0.0 >= row.rhs - tol) ||
                      (cmp == Cmp::eq && std::abs(row.rhs) <= tol);
      if (!ok) l.trivially_infeasible = true;
      return;
    }
    l.problem.rows.push_back(std::move(row));
  };

  for (std::size_t r = 0; r < model.rows().size(); ++r) {
    if (!live.row[r]) continue;
    emit(model.rows()[r].row.terms, model.rows()[r].row.cmp, model.rows()[r].row.rhs, -1, 0.0);
  }

  for (std::size_t p = 0; p < model.bilinear().size(); ++p) {
    if (!live.prod[p]) continue;
    const BilinearTerm& t = model.bilinear()[p];
    const int xv = t.x.index, yv = t.y.index;
    const bool xfix = l.col_of[xv] < 0, yfix = l.col_of[yv] < 0;
    const double xm = l.fixed_value[xv], ym = l.fixed_value[yv];
    if (xfix && yfix) {
      emit({{t.product, 1.0}}, Cmp::eq, xm * ym, -1, 0.0);
      continue;
    }
    if (xfix) {
      emit({{t.product, 1.0}, {t.y, -xm}}, Cmp::eq, 0.0, -1, 0.0);
      continue;
    }
    if (yfix) {
      emit({{t.product, 1.0}, {t.x, -ym}}, Cmp::eq, 0.0, -1, 0.0);
      continue;
    }
    const double xl = b.lo[xv], xu = b.hi[xv], yl = b.lo[yv], yu = b.hi[yv];
    emit({{t.product, 1.0}, {t.y, -xl}, {t.x, -yl}}, Cmp::ge, -xl * yl, -1, 0.0);
    emit({{t.product, 1.0}, {t.y, -xu}, {t.x, -yu}}, Cmp::ge, -xu * yu, -1, 0.0);
    emit({{t.product, 1.0}, {t.y, -xu}, {t.x, -yl}}, Cmp::le, -xu * yl, -1, 0.0);
    emit({{t.product, 1.0}, {t.y, -xl}, {t.x, -yu}}, Cmp::le, -xl * yu, -1, 0.0);
  }

  for (std::size_t bi = 0; bi < model.branches().size(); ++bi) {
    if (!live.branch[bi]) continue;
    const BranchConstraint& br = model.branches()[bi];
    const int ind = br.indicator.index;
    const bool fixed_active = b.lo[ind] > 0.5;
    const bool fixed_inactive = b.hi[ind] < 0.5;

    auto arm_terms = [&](const std::vector<LinTerm>& expr) {
      std::vector<LinTerm> terms;
      terms.push_back({br.value, 1.0});
      for (const LinTerm& t : expr) terms.push_back({t.var, -t.coef});
      return terms;
    };

    if (fixed_active || fixed_inactive) {
      const auto& expr = fixed_active ? br.active_expr : br.inactive_expr;
      const double cst = fixed_active ? br.active_const : br.inactive_const;
      emit(arm_terms(expr), Cmp::eq, cst, -1, 0.0);
      const auto& guard = fixed_active ? br.active_guard : br.inactive_guard;
      if (guard) emit(guard->terms, guard->cmp, guard->rhs, -1, 0.0);
      continue;
    }

    const int acol = l.col_of[ind];
    auto arm_rows = [&](const std::vector<LinTerm>& expr, double cst, bool when_active) {
      const auto terms = arm_terms(expr);
      const Interval r = range_of(terms, -cst, b);
      const double m_hi = std::max(0.0, r.hi);
      const double m_lo = std::max(0.0, -r.lo);
      // when_active: |value - expr - cst| <= M * (1 - a)
      // otherwise:   |value - expr - cst| <= M * a
      if (m_hi > 0.0)
        emit(terms, Cmp::le, cst + (when_active ? m_hi : 0.0), acol,
             when_active ? m_hi : -m_hi);
      if (m_lo > 0.0)
        emit(terms, Cmp::ge, cst - (when_active ? m_lo : 0.0), acol,
             when_active ? -m_lo : m_lo);
    };
    arm_rows(br.active_expr, br.active_const, true);
    arm_rows(br.inactive_expr, br.inactive_const, false);

    auto guard_rows = [&](const LinearConstraint& g, bool when_active) {
      auto one_side = [&](Cmp cmp, double rhs) {
        const Interval r = range_of(g.terms, 0.0, b);
        const double m = cmp == Cmp::le ? std::max(0.0, r.hi - rhs) : std::max(0.0, rhs - r.lo);
        if (m <= 0.0) return;
        const double sign = cmp == Cmp::le ? 1.0 : -1.0;
        // le active:   G + M a <= rhs + M     le inactive: G - M a <= rhs
        // ge active:   G - M a >= rhs - M     ge inactive: G + M a >= rhs
        emit(g.terms, cmp, rhs + (when_active ? sign * m : 0.0), acol,
             when_active ? sign * m : -sign * m);
      };
      if (g.cmp == Cmp::eq) {
        one_side(Cmp::le, g.rhs);
        one_side(Cmp::ge, g.rhs);
      } else {
        one_side(g.cmp, g.rhs);
      }
    };
    if (br.active_guard) guard_rows(*br.active_guard, true);
    if (br.inactive_guard) guard_rows(*br.inactive_guard, false);
  }
  return l;
}

struct BoundOverride {
  int var;
  double lo, hi;
};

// Nodes carry only their branching decisions; bounds are re-materialized
// from the root when the node is processed (keeps the queue small).
struct Node {
  std::vector<BoundOverride> overrides;
  double bound;  // valid lower bound (internal sense) for this subtree
  long id;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

Eigen::VectorXd expand_point(const LoweredLp& l, const Eigen::VectorXd& x) {
  Eigen::VectorXd full(static_cast<long>(l.col_of.size()));
  for (std::size_t v = 0; v < l.col_of.size(); ++v)
    full[static_cast<long>(v)] =
        l.col_of[v] >= 0 ? x[l.col_of[v]] : l.fixed_value[v];
  return full;
}

SolveOutcome solve_impl(const OptModel& model, const Objective& objective,
                        const SolveConfig& config, const PrimalEvaluator& evaluator,
                        SimplexTableau* root_tableau, const LoweredLp* root_lp,
                        const Bounds* root_bounds, const Liveness* root_live) {
  if (!model.finalized()) throw std::logic_error("solve: model must be finalized");
  const auto t_start = std::chrono::steady_clock::now();
  const double smult = objective.sense == Sense::minimize ? 1.0 : -1.0;

  Liveness live_local;
  const Liveness* live = root_live;
  if (!live) {
    live_local = compute_liveness(model, objective.target);
    live = &live_local;
  }

  Bounds root;
  if (root_bounds) {
    root = *root_bounds;
  } else {
    root.lo.resize(model.num_vars());
    root.hi.resize(model.num_vars());
    for (int v = 0; v < model.num_vars(); ++v) {
      const Interval iv = model.bounds(VarId{v});
      root.lo[v] = iv.lo;
      root.hi[v] = iv.hi;
    }
    if (!propagate(model, *live, root))
      throw std::runtime_error("solve: model infeasible at the root");
  }

  SolveOutcome out;
  double incumbent = kInf;      // internal: minimize smult * target
  double global_bound = -kInf;  // bound of the last popped node (monotone)
  long next_id = 1;
  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  open.push({{}, -kInf, 0});

  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  bool limit_hit = false;
  SolveStatus limit_status = SolveStatus::proved;
  while (!open.empty()) {
    if (config.node_limit > 0 && out.nodes >= config.node_limit) {
      limit_hit = true;
      limit_status = SolveStatus::node_limit;
      break;
    }
    if (config.time_limit_s > 0 && elapsed() > config.time_limit_s) {
      limit_hit = true;
      limit_status = SolveStatus::time_limit;
      break;
    }
    Node node = open.top();
    open.pop();
    if (std::isfinite(node.bound)) global_bound = std::max(global_bound, node.bound);
    if (std::isfinite(incumbent) && incumbent - global_bound <= config.gap_tol) break;
    if (node.bound >= incumbent - 1e-12) continue;

    Bounds nb = root;
    for (const BoundOverride& o : node.overrides) {
      nb.lo[o.var] = std::max(nb.lo[o.var], o.lo);
      nb.hi[o.var] = std::min(nb.hi[o.var], o.hi);
    }
    const bool use_root_tableau = node.id == 0 && root_tableau != nullptr;
    if (!use_root_tableau && !propagate(model, *live, nb)) continue;

    LoweredLp local;
    const LoweredLp* lp;
    LpResult res;
    bool lp_failed = false;
    try {
      if (use_root_tableau) {
        lp = root_lp;
        root_tableau->restore();
        const int tcol = root_lp->col_of[objective.target.index];
        std::vector<std::pair<int, double>> cost;
        if (tcol >= 0) cost.push_back({tcol, smult});
        res = root_tableau->optimize(cost);
        if (res.status == LpStatus::optimal && tcol < 0)
          res.objective = smult * root_lp->fixed_value[objective.target.index];
      } else {
        local = lower_lp(model, *live, nb);
        lp = &local;
        if (local.trivially_infeasible) {
          ++out.nodes;
          out.bound_history.push_back(smult * global_bound);
          continue;
        }
        const int tcol = local.col_of[objective.target.index];
        std::vector<std::pair<int, double>> cost;
        if (tcol >= 0) cost.push_back({tcol, smult});
        res = solve_lp_dense(local.problem, cost);
        if (res.status == LpStatus::optimal && tcol < 0)
          res.objective = smult * local.fixed_value[objective.target.index];
      }
    } catch (const std::runtime_error&) {
      // Numerical trouble in the relaxation: stop here with the current
      // (sound) global bound rather than risking an unsound prune.
      lp_failed = true;
    }
    if (lp_failed) {
      limit_hit = true;
      limit_status = SolveStatus::node_limit;
      break;
    }
    ++out.nodes;
    out.bound_history.push_back(smult * std::max(global_bound, std::isfinite(node.bound)
                                                                   ? node.bound
                                                                   : global_bound));
    if (res.status == LpStatus::infeasible) continue;

    double node_bound = res.objective;
    if (std::isfinite(node.bound)) node_bound = std::max(node_bound, node.bound);
    if (node_bound >= incumbent - 1e-12) continue;

    const Eigen::VectorXd point = expand_point(*lp, res.x);

    if (evaluator) {
      if (auto val = evaluator(objective, point)) incumbent = std::min(incumbent, smult * *val);
    }

    // Branch on the most infeasible binary (fraction nearest one half),
    // ties to the lowest variable index.
    int frac_var = -1;
    double best_infeas = kIntTol;
    for (int v : live->binaries) {
      if (nb.hi[v] - nb.lo[v] <= kFixTol) continue;
      const double val = point[v];
      const double infeas = std::min(val - std::floor(val), std::ceil(val) - val);
      if (infeas > best_infeas + 1e-15) {
        best_infeas = infeas;
        frac_var = v;
      }
    }
    if (frac_var >= 0) {
      Node down{node.overrides, node_bound, next_id++};
      down.overrides.push_back({frac_var, 0.0, 0.0});
      Node up{node.overrides, node_bound, next_id++};
      up.overrides.push_back({frac_var, 1.0, 1.0});
      open.push(std::move(down));
      open.push(std::move(up));
      continue;
    }

    // All binaries integral: spatial branching on the product with the
    // largest McCormick violation, ties to the lowest product variable.
    int worst = -1;
    double worst_viol = config.feas_tol;
    for (std::size_t p = 0; p < model.bilinear().size(); ++p) {
      if (!live->prod[p]) continue;
      const BilinearTerm& t = model.bilinear()[p];
      const double viol =
          std::abs(point[t.product.index] - point[t.x.index] * point[t.y.index]);
      if (viol > worst_viol + 1e-15) {
        worst_viol = viol;
        worst = static_cast<int>(p);
      }
    }
    if (worst < 0) {
      incumbent = std::min(incumbent, node_bound);  // exact leaf
      continue;
    }
    const BilinearTerm& t = model.bilinear()[worst];
    const double wx = nb.hi[t.x.index] - nb.lo[t.x.index];
    const double wy = nb.hi[t.y.index] - nb.lo[t.y.index];
    const int sv = wx >= wy ? t.x.index : t.y.index;
    const double midp = 0.5 * (nb.lo[sv] + nb.hi[sv]);
    Node left{node.overrides, node_bound, next_id++};
    left.overrides.push_back({sv, nb.lo[sv], midp});
    Node right{node.overrides, node_bound, next_id++};
    right.overrides.push_back({sv, midp, nb.hi[sv]});
    open.push(std::move(left));
    open.push(std::move(right));
  }

  if (limit_hit) {
    out.status = limit_status;
  } else {
    out.status = SolveStatus::proved;
    if (open.empty()) {
      if (!std::isfinite(incumbent))
        throw std::runtime_error("solve: model has no feasible point");
      global_bound = std::max(global_bound, incumbent);
    }
  }

  if (std::isfinite(global_bound)) {
    out.bound = smult * global_bound;
  } else {
    // Limits hit before any relaxation: the variable's own (sound) bounds.
    out.bound = objective.sense == Sense::minimize ? root.lo[objective.target.index]
                                                   : root.hi[objective.target.index];
  }
  if (std::isfinite(incumbent)) {
    out.incumbent = smult * incumbent;
    out.gap = std::abs(*out.incumbent - out.bound);
  } else {
    out.gap = kInf;
  }
  return out;
}

}  // namespace

SolveOutcome solve(const OptModel& model, const Objective& objective, const SolveConfig& config,
                   const PrimalEvaluator& evaluator) {
  return solve_impl(model, objective, config, evaluator, nullptr, nullptr, nullptr, nullptr);
}

std::vector<SolveOutcome> solve_batch(const OptModel& model,
                                      const std::vector<Objective>& objectives,
                                      const SolveConfig& config,
                                      const PrimalEvaluator& evaluator) {
  std::vector<SolveOutcome> results(objectives.size());
  if (objectives.empty()) return results;

  if (config.threads > 1) {
    std::vector<std::future<SolveOutcome>> futures;
    futures.reserve(objectives.size());
    for (const Objective& o : objectives)
      futures.push_back(std::async(std::launch::async, [&model, o, &config, &evaluator] {
        return solve(model, o, config, evaluator);
      }));
    for (std::size_t i = 0; i < futures.size(); ++i) results[i] = futures[i].get();
    return results;
  }

  // Consecutive objectives over the same target share the root relaxation's
  // feasibility phase; phase 2 restarts from the same snapshot either way, so
  // results match objective-by-objective solve() calls exactly.
  int cached_target = -1;
  Liveness live;
  Bounds root;
  LoweredLp lp;
  std::unique_ptr<SimplexTableau> tableau;
  bool root_ok = false;

  for (std::size_t i = 0; i < objectives.size(); ++i) {
    const Objective& o = objectives[i];
    if (o.target.index != cached_target) {
      cached_target = o.target.index;
      live = compute_liveness(model, o.target);
      root.lo.resize(model.num_vars());
      root.hi.resize(model.num_vars());
      for (int v = 0; v < model.num_vars(); ++v) {
        const Interval iv = model.bounds(VarId{v});
        root.lo[v] = iv.lo;
        root.hi[v] = iv.hi;
      }
      root_ok = propagate(model, live, root);
      if (root_ok) {
        lp = lower_lp(model, live, root);
        root_ok = !lp.trivially_infeasible;
      }
      tableau.reset();
      if (root_ok) {
        tableau = std::make_unique<SimplexTableau>(lp.problem);
        root_ok = tableau->feasibilize();
        if (root_ok) tableau->snapshot();
      }
    }
    if (!root_ok) throw std::runtime_error("solve: model infeasible at the root");
    results[i] = solve_impl(model, o, config, evaluator, tableau.get(), &lp, &root, &live);
  }
  return results;
}

LpResult solve_lp(const OptModel& model, const Objective& objective) {
  if (!model.finalized()) throw std::logic_error("solve_lp: model must be finalized");
  Liveness live;
  live.var.assign(model.num_vars(), 1);
  live.row.assign(model.rows().size(), 1);
  live.prod.assign(model.bilinear().size(), 1);
  live.branch.assign(model.branches().size(), 1);
  Bounds b;
  b.lo.resize(model.num_vars());
  b.hi.resize(model.num_vars());
  for (int v = 0; v < model.num_vars(); ++v) {
    const Interval iv = model.bounds(VarId{v});
    b.lo[v] = iv.lo;
    b.hi[v] = iv.hi;
  }
  LoweredLp l = lower_lp(model, live, b);
  LpResult res;
  if (l.trivially_infeasible) return res;
  const int tcol = l.col_of[objective.target.index];
  const double smult = objective.sense == Sense::minimize ? 1.0 : -1.0;
  std::vector<std::pair<int, double>> cost;
  if (tcol >= 0) cost.push_back({tcol, smult});
  res = solve_lp_dense(l.problem, cost);
  if (res.status == LpStatus::optimal) {
    res.objective = tcol >= 0 ? smult * res.objective
                              : l.fixed_value[objective.target.index];
    Eigen::VectorXd full(model.num_vars());
    for (int v = 0; v < model.num_vars(); ++v)
      full[v] = l.col_of[v] >= 0 ? res.x[l.col_of[v]] : l.fixed_value[v];
    res.x = full;
  }
  return res;
}

}  // namespace mibpcert
