#pragma once

#include "mibpcert/interval.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mibpcert {

enum class VarKind { continuous, binary };

struct VarId {
  int index = -1;
  bool valid() const { return index >= 0; }
  friend bool operator==(VarId a, VarId b) { return a.index == b.index; }
  friend bool operator!=(VarId a, VarId b) { return a.index != b.index; }
  friend bool operator<(VarId a, VarId b) { return a.index < b.index; }
};

struct LinTerm {
  VarId var;
  double coef = 0.0;
};

enum class Cmp { le, eq, ge };

struct LinearConstraint {
  std::vector<LinTerm> terms;
  Cmp cmp = Cmp::eq;
  double rhs = 0.0;
};

/// w = x * y, introduced by add_mccormick. The envelope rows live in the
/// model's lowering; the term itself is kept for exactness checks and
/// spatial branching.
struct BilinearTerm {
  VarId product;
  VarId x;
  VarId y;
};

/// value = active_expr + active_const when indicator = 1,
/// value = inactive_expr + inactive_const when indicator = 0,
/// with optional guard rows enforced on the matching side. Lowered via
/// big-M with constants derived from the (finite) variable bounds.
struct BranchConstraint {
  VarId indicator;
  VarId value;
  std::vector<LinTerm> active_expr;
  double active_const = 0.0;
  std::vector<LinTerm> inactive_expr;
  double inactive_const = 0.0;
  std::optional<LinearConstraint> active_guard;
  std::optional<LinearConstraint> inactive_guard;
};

enum class Sense { minimize, maximize };

struct Objective {
  VarId target;
  Sense sense = Sense::minimize;
};

/// Where a row came from; definitions (rows that uniquely determine one
/// auxiliary variable) are distinguished so the solver can drop chains that
/// cannot influence an objective.
struct RowInfo {
  LinearConstraint row;
  VarId defines;  // invalid when the row is a free-standing constraint
};

/// A mixed-integer bilinear program: finitely bounded variables, linear
/// rows, bilinear product terms and two-sided branch constraints.
/// Construction is single-threaded; finalized models are immutable and safe
/// to share across concurrent solves.
class OptModel {
 public:
  VarId add_var(double lo, double hi, VarKind kind = VarKind::continuous, std::string name = "");
  VarId add_fixed(double value, std::string name = "");

  void set_bounds(VarId v, double lo, double hi);
  Interval bounds(VarId v) const;
  VarKind kind(VarId v) const;
  const std::string& name(VarId v) const;
  int num_vars() const { return static_cast<int>(lo_.size()); }

  /// Free-standing linear row.
  void add_constraint(LinearConstraint c);

  /// Adds the equality v = expr + constant and records v as defined by it.
  void add_definition(VarId v, std::vector<LinTerm> expr, double constant = 0.0);

  /// Introduces w = x*y with four-corner bounds and the McCormick envelope.
  /// Degenerate operands collapse the envelope to the exact linear relation.
  /// Throws if an operand bound is not finite.
  VarId add_mccormick(VarId x, VarId y, std::string name = "");

  /// Lowers a branch constraint via big-M; throws if a required constant
  /// would exceed big_m_cap (the seed bounds are too loose).
  void add_branch_bigM(BranchConstraint b);

  void add_objective(Objective o);

  /// Validates invariants (finite bounds everywhere, binaries within [0,1])
  /// and freezes the model.
  void finalize();
  bool finalized() const { return finalized_; }

  const std::vector<RowInfo>& rows() const { return rows_; }
  const std::vector<BilinearTerm>& bilinear() const { return bilinear_; }
  const std::vector<BranchConstraint>& branches() const { return branches_; }
  const std::vector<Objective>& objectives() const { return objectives_; }

  /// The structure (if any) that defines a variable: a row index, a bilinear
  /// term index or a branch index.
  struct DefinedBy {
    enum class Kind { none, row, product, branch } kind = Kind::none;
    int index = -1;
  };
  const DefinedBy& defined_by(VarId v) const;

  /// Interval range of a linear expression under the current bounds.
  Interval expr_range(const std::vector<LinTerm>& expr, double constant = 0.0) const;

  double big_m_cap = 1e6;

  /// Deterministic, versioned text rendering: identical models produce
  /// identical bytes. The grammar is documented in docs/model_format.md.
  std::string export_text() const;

 private:
  void check_var(VarId v) const;
  void check_mutable() const;

  std::vector<double> lo_, hi_;
  std::vector<VarKind> kinds_;
  std::vector<std::string> names_;
  std::vector<DefinedBy> defined_by_;
  std::vector<RowInfo> rows_;
  std::vector<BilinearTerm> bilinear_;
  std::vector<BranchConstraint> branches_;
  std::vector<Objective> objectives_;
  bool finalized_ = false;
};

}  // namespace mibpcert
