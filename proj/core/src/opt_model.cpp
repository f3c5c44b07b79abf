#include "mibpcert/opt_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mibpcert {

void OptModel::check_var(VarId v) const {
  if (!v.valid() || v.index >= num_vars())
    throw std::invalid_argument("OptModel: variable id out of range");
}

void OptModel::check_mutable() const {
  if (finalized_) throw std::logic_error("OptModel: already finalized");
}

VarId OptModel::add_var(double lo, double hi, VarKind kind, std::string name) {
  check_mutable();
  if (!std::isfinite(lo) || !std::isfinite(hi))
    throw std::invalid_argument("OptModel: variable bounds must be finite");
  if (lo > hi) throw std::invalid_argument("OptModel: lower bound exceeds upper bound");
  if (kind == VarKind::binary && (lo < 0.0 || hi > 1.0))
    throw std::invalid_argument("OptModel: binary bounds must lie within [0,1]");
  lo_.push_back(lo);
  hi_.push_back(hi);
  kinds_.push_back(kind);
  names_.push_back(std::move(name));
  defined_by_.push_back({});
  return VarId{num_vars() - 1};
}

VarId OptModel::add_fixed(double value, std::string name) {
  return add_var(value, value, VarKind::continuous, std::move(name));
}

void OptModel::set_bounds(VarId v, double lo, double hi) {
  check_mutable();
  check_var(v);
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi)
    throw std::invalid_argument("OptModel: invalid bounds");
  lo_[v.index] = lo;
  hi_[v.index] = hi;
}

Interval OptModel::bounds(VarId v) const {
  check_var(v);
  return Interval(lo_[v.index], hi_[v.index]);
}

VarKind OptModel::kind(VarId v) const {
  check_var(v);
  return kinds_[v.index];
}

const std::string& OptModel::name(VarId v) const {
  check_var(v);
  return names_[v.index];
}

const OptModel::DefinedBy& OptModel::defined_by(VarId v) const {
  check_var(v);
  return defined_by_[v.index];
}

Interval OptModel::expr_range(const std::vector<LinTerm>& expr, double constant) const {
  Interval acc = Interval::point(constant);
  for (const LinTerm& t : expr) {
    check_var(t.var);
    if (!std::isfinite(t.coef)) throw std::invalid_argument("OptModel: non-finite coefficient");
    acc = acc + t.coef * Interval(lo_[t.var.index], hi_[t.var.index]);
  }
  return acc;
}

void OptModel::add_constraint(LinearConstraint c) {
  check_mutable();
  if (c.terms.empty()) throw std::invalid_argument("OptModel: constraint needs at least one term");
  for (const LinTerm& t : c.terms) {
    check_var(t.var);
    if (!std::isfinite(t.coef)) throw std::invalid_argument("OptModel: non-finite coefficient");
  }
  rows_.push_back({std::move(c), VarId{}});
}

void OptModel::add_definition(VarId v, std::vector<LinTerm> expr, double constant) {
  check_mutable();
  check_var(v);
  if (defined_by_[v.index].kind != DefinedBy::Kind::none)
    throw std::logic_error("OptModel: variable already has a definition");
  LinearConstraint c;
  c.terms.push_back({v, 1.0});
  for (LinTerm& t : expr) {
    check_var(t.var);
    if (t.var == v) throw std::invalid_argument("OptModel: definition refers to itself");
    c.terms.push_back({t.var, -t.coef});
  }
  c.cmp = Cmp::eq;
  c.rhs = constant;
  rows_.push_back({std::move(c), v});
  defined_by_[v.index] = {DefinedBy::Kind::row, static_cast<int>(rows_.size()) - 1};
}

VarId OptModel::add_mccormick(VarId x, VarId y, std::string name) {
  check_mutable();
  check_var(x);
  check_var(y);
  const Interval bx = bounds(x);
  const Interval by = bounds(y);
  if (!std::isfinite(bx.lo) || !std::isfinite(bx.hi) || !std::isfinite(by.lo) ||
      !std::isfinite(by.hi))
    throw std::invalid_argument("OptModel: McCormick operands must have finite bounds");
  const Interval bw = bx * by;
  VarId w = add_var(bw.lo, bw.hi, VarKind::continuous, std::move(name));
  defined_by_[w.index] = {DefinedBy::Kind::product, static_cast<int>(bilinear_.size())};
  bilinear_.push_back({w, x, y});
  return w;
}

void OptModel::add_branch_bigM(BranchConstraint b) {
  check_mutable();
  check_var(b.indicator);
  check_var(b.value);
  if (kinds_[b.indicator.index] != VarKind::binary)
    throw std::invalid_argument("OptModel: branch indicator must be binary");
  for (const LinTerm& t : b.active_expr) check_var(t.var);
  for (const LinTerm& t : b.inactive_expr) check_var(t.var);

  // Validate the tightest big-M constants against the cap now; the solver
  // re-derives them from (possibly tighter) node bounds.
  auto arm_gap = [&](const std::vector<LinTerm>& expr, double cst) {
    std::vector<LinTerm> diff;
    diff.push_back({b.value, 1.0});
    for (const LinTerm& t : expr) diff.push_back({t.var, -t.coef});
    const Interval r = expr_range(diff, -cst);
    return std::max(std::abs(r.lo), std::abs(r.hi));
  };
  auto guard_gap = [&](const LinearConstraint& g) {
    const Interval r = expr_range(g.terms, -g.rhs);
    return std::max(std::abs(r.lo), std::abs(r.hi));
  };
  double m = std::max(arm_gap(b.active_expr, b.active_const),
                      arm_gap(b.inactive_expr, b.inactive_const));
  if (b.active_guard) m = std::max(m, guard_gap(*b.active_guard));
  if (b.inactive_guard) m = std::max(m, guard_gap(*b.inactive_guard));
  if (m > big_m_cap)
    throw std::runtime_error("OptModel: big-M constant " + std::to_string(m) +
                             " exceeds cap; seed tighter variable bounds");

  if (defined_by_[b.value.index].kind == DefinedBy::Kind::none)
    defined_by_[b.value.index] = {DefinedBy::Kind::branch, static_cast<int>(branches_.size())};
  branches_.push_back(std::move(b));
}

void OptModel::add_objective(Objective o) {
  check_var(o.target);
  objectives_.push_back(o);
}

void OptModel::finalize() {
  if (finalized_) return;
  for (int i = 0; i < num_vars(); ++i) {
    if (!std::isfinite(lo_[i]) || !std::isfinite(hi_[i]) || lo_[i] > hi_[i])
      throw std::runtime_error("OptModel: variable " + std::to_string(i) + " has invalid bounds");
    if (kinds_[i] == VarKind::binary && (lo_[i] < 0.0 || hi_[i] > 1.0))
      throw std::runtime_error("OptModel: binary variable escaped [0,1]");
  }
  finalized_ = true;
}

namespace {

void append_num(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void append_var(std::string& out, VarId v) {
  out += 'v';
  out += std::to_string(v.index);
}

void append_expr(std::string& out, const std::vector<LinTerm>& terms) {
  bool first = true;
  for (const LinTerm& t : terms) {
    if (!first) out += " + ";
    first = false;
    append_num(out, t.coef);
    out += '*';
    append_var(out, t.var);
  }
  if (first) out += "0";
}

const char* cmp_text(Cmp c) {
  switch (c) {
    case Cmp::le: return "<=";
    case Cmp::eq: return "=";
    case Cmp::ge: return ">=";
  }
  return "=";
}

}  // namespace

std::string OptModel::export_text() const {
  std::string out = "MIBPCERT-MODEL v1\n";
  out += "vars " + std::to_string(num_vars()) + "\n";
  for (int i = 0; i < num_vars(); ++i) {
    append_var(out, VarId{i});
    out += kinds_[i] == VarKind::binary ? " binary " : " continuous ";
    append_num(out, lo_[i]);
    out += ' ';
    append_num(out, hi_[i]);
    if (!names_[i].empty()) {
      out += " # ";
      out += names_[i];
    }
    out += '\n';
  }
  out += "constraints " + std::to_string(rows_.size()) + "\n";
  for (const RowInfo& r : rows_) {
    append_expr(out, r.row.terms);
    out += ' ';
    out += cmp_text(r.row.cmp);
    out += ' ';
    append_num(out, r.row.rhs);
    out += '\n';
  }
  out += "bilinear " + std::to_string(bilinear_.size()) + "\n";
  for (const BilinearTerm& t : bilinear_) {
    append_var(out, t.product);
    out += " = ";
    append_var(out, t.x);
    out += " * ";
    append_var(out, t.y);
    out += '\n';
  }
  out += "branches " + std::to_string(branches_.size()) + "\n";
  for (const BranchConstraint& b : branches_) {
    out += "if ";
    append_var(out, b.indicator);
    out += " then ";
    append_var(out, b.value);
    out += " = ";
    append_expr(out, b.active_expr);
    out += " + ";
    append_num(out, b.active_const);
    if (b.active_guard) {
      out += " with ";
      append_expr(out, b.active_guard->terms);
      out += ' ';
      out += cmp_text(b.active_guard->cmp);
      out += ' ';
      append_num(out, b.active_guard->rhs);
    }
    out += " else ";
    append_var(out, b.value);
    out += " = ";
    append_expr(out, b.inactive_expr);
    out += " + ";
    append_num(out, b.inactive_const);
    if (b.inactive_guard) {
      out += " with ";
      append_expr(out, b.inactive_guard->terms);
      out += ' ';
      out += cmp_text(b.inactive_guard->cmp);
      out += ' ';
      append_num(out, b.inactive_guard->rhs);
    }
    out += '\n';
  }
  out += "objectives " + std::to_string(objectives_.size()) + "\n";
  for (const Objective& o : objectives_) {
    out += o.sense == Sense::minimize ? "min " : "max ";
    append_var(out, o.target);
    out += '\n';
  }
  out += "end\n";
  return out;
}

}  // namespace mibpcert
