#include "mibpcert/opt_model.hpp"
#include "mibpcert/solver.hpp"

#include "doctest.h"

#include <random>

using namespace mibpcert;

TEST_CASE("variable bookkeeping and validation") {
  OptModel m;
  const VarId x = m.add_var(-1, 2, VarKind::continuous, "x");
  CHECK(m.bounds(x).lo == -1);
  CHECK(m.bounds(x).hi == 2);
  CHECK(m.name(x) == "x");
  CHECK_THROWS_AS(m.add_var(1, 0), std::invalid_argument);
  CHECK_THROWS_AS(m.add_var(0, std::numeric_limits<double>::infinity()), std::invalid_argument);
  CHECK_THROWS_AS(m.add_var(-0.5, 1, VarKind::binary), std::invalid_argument);
  CHECK_THROWS_AS(m.add_constraint({{}, Cmp::eq, 0.0}), std::invalid_argument);
  m.finalize();
  CHECK_THROWS_AS(m.add_var(0, 1), std::logic_error);
}

TEST_CASE("mccormick with a fixed operand collapses to the exact product") {
  OptModel m;
  const VarId c = m.add_var(3, 3);  // degenerate
  const VarId y = m.add_var(-1, 2);
  const VarId w = m.add_mccormick(c, y);
  CHECK(m.bounds(w).lo == doctest::Approx(-3));
  CHECK(m.bounds(w).hi == doctest::Approx(6));
  m.add_objective({w, Sense::maximize});
  m.finalize();
  // LP relaxation alone pins w = 3y exactly.
  const LpResult hi = solve_lp(m, {w, Sense::maximize});
  CHECK(hi.objective == doctest::Approx(6));
  const LpResult lo = solve_lp(m, {w, Sense::minimize});
  CHECK(lo.objective == doctest::Approx(-3));
}

TEST_CASE("mccormick envelope is a strict relaxation at the known gap point") {
  // x, y in [0,1]: (0.5, 0.5, w=0) satisfies all four inequalities although
  // the exact product is 0.25.
  OptModel m;
  const VarId x = m.add_var(0, 1);
  const VarId y = m.add_var(0, 1);
  const VarId w = m.add_mccormick(x, y);
  m.finalize();

  auto envelope_ok = [&](double xv, double yv, double wv) {
    const double xl = 0, xu = 1, yl = 0, yu = 1;
    return wv >= xl * yv + yl * xv - xl * yl - 1e-12 &&
           wv >= xu * yv + yu * xv - xu * yu - 1e-12 &&
           wv <= xu * yv + yl * xv - xu * yl + 1e-12 &&
           wv <= xl * yv + yu * xv - xl * yu + 1e-12;
  };
  CHECK(envelope_ok(0.5, 0.5, 0.0));
  CHECK(0.5 * 0.5 != 0.0);
  (void)w;
}

TEST_CASE("exact products satisfy the envelope: 10k random points per box") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  for (int box = 0; box < 10; ++box) {
    const double xl = -2 + 3 * u(rng), xu = xl + 2 * u(rng) + 1e-3;
    const double yl = -1 - u(rng), yu = yl + u(rng) + 1e-3;
    for (int i = 0; i < 1000; ++i) {
      const double xv = xl + (xu - xl) * u(rng);
      const double yv = yl + (yu - yl) * u(rng);
      const double wv = xv * yv;
      CHECK(wv >= xl * yv + yl * xv - xl * yl - 1e-9);
      CHECK(wv >= xu * yv + yu * xv - xu * yu - 1e-9);
      CHECK(wv <= xu * yv + yl * xv - xu * yl + 1e-9);
      CHECK(wv <= xl * yv + yu * xv - xl * yu + 1e-9);
    }
  }
}

TEST_CASE("mccormick rejects unbounded operands by construction") {
  OptModel m;
  const VarId x = m.add_var(0, 1);
  (void)x;
  // add_var already rejects infinite bounds, so every operand is finite;
  // the product-bound rule is the four-corner hull.
  const VarId a = m.add_var(-2, 3);
  const VarId b = m.add_var(-1, 4);
  const VarId w = m.add_mccormick(a, b);
  CHECK(m.bounds(w).lo == doctest::Approx(-8));
  CHECK(m.bounds(w).hi == doctest::Approx(12));
}

TEST_CASE("branch big-M: sign-determined ReLU folds to the fixed arm") {
  // Pre-activation in [-4, 0]: the solver's propagation forces the inactive
  // branch and pins the output to 0.
  OptModel m;
  const VarId pre = m.add_var(-4, 0);
  const VarId a = m.add_var(0, 1, VarKind::binary);
  const VarId post = m.add_var(0, 0.0);
  BranchConstraint br;
  br.indicator = a;
  br.value = post;
  br.active_expr = {{pre, 1.0}};
  br.active_guard = LinearConstraint{{{pre, 1.0}}, Cmp::ge, 0.0};
  br.inactive_guard = LinearConstraint{{{pre, 1.0}}, Cmp::le, 0.0};
  m.add_branch_bigM(br);
  m.finalize();
  const SolveOutcome out = solve(m, {post, Sense::maximize});
  CHECK(out.bound == doctest::Approx(0.0));
  CHECK(out.nodes <= 2);
}

TEST_CASE("branch big-M: straddling ReLU solves to the interval hull") {
  OptModel m;
  const VarId pre = m.add_var(-1, 2);
  const VarId a = m.add_var(0, 1, VarKind::binary);
  const VarId post = m.add_var(0, 2);
  BranchConstraint br;
  br.indicator = a;
  br.value = post;
  br.active_expr = {{pre, 1.0}};
  br.active_guard = LinearConstraint{{{pre, 1.0}}, Cmp::ge, 0.0};
  br.inactive_guard = LinearConstraint{{{pre, 1.0}}, Cmp::le, 0.0};
  m.add_branch_bigM(br);
  m.finalize();
  CHECK(solve(m, {post, Sense::maximize}).bound == doctest::Approx(2.0));
  CHECK(solve(m, {post, Sense::minimize}).bound == doctest::Approx(0.0));
}

TEST_CASE("branch big-M: fixing the indicator reproduces each branch relation") {
  // 100 random feasible points per branch, tolerance 1e-8.
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1, 2);
  OptModel m;
  const VarId pre = m.add_var(-1, 2);
  const VarId a = m.add_var(0, 1, VarKind::binary);
  const VarId post = m.add_var(0, 2);
  BranchConstraint br;
  br.indicator = a;
  br.value = post;
  br.active_expr = {{pre, 1.0}};
  br.active_guard = LinearConstraint{{{pre, 1.0}}, Cmp::ge, 0.0};
  br.inactive_guard = LinearConstraint{{{pre, 1.0}}, Cmp::le, 0.0};
  m.add_branch_bigM(br);

  for (int i = 0; i < 100; ++i) {
    const double pv = u(rng);
    OptModel fixed;
    const VarId p2 = fixed.add_var(pv, pv);
    const VarId a2 = fixed.add_var(pv > 0 ? 1 : 0, pv > 0 ? 1 : 0, VarKind::binary);
    const VarId q2 = fixed.add_var(0, 2);
    BranchConstraint b2;
    b2.indicator = a2;
    b2.value = q2;
    b2.active_expr = {{p2, 1.0}};
    b2.active_guard = LinearConstraint{{{p2, 1.0}}, Cmp::ge, 0.0};
    b2.inactive_guard = LinearConstraint{{{p2, 1.0}}, Cmp::le, 0.0};
    fixed.add_branch_bigM(b2);
    fixed.finalize();
    const LpResult r = solve_lp(fixed, {q2, Sense::maximize});
    REQUIRE(r.status == LpStatus::optimal);
    CHECK(r.objective == doctest::Approx(std::max(pv, 0.0)).epsilon(1e-8));
  }
}

TEST_CASE("branch big-M rejects constants beyond the cap") {
  OptModel m;
  m.big_m_cap = 10.0;
  const VarId pre = m.add_var(-1e5, 1e5);
  const VarId a = m.add_var(0, 1, VarKind::binary);
  const VarId post = m.add_var(0, 1e5);
  BranchConstraint br;
  br.indicator = a;
  br.value = post;
  br.active_expr = {{pre, 1.0}};
  CHECK_THROWS_AS(m.add_branch_bigM(br), std::runtime_error);
}

TEST_CASE("export: empty model renders header and zero sections") {
  OptModel m;
  m.finalize();
  const std::string text = m.export_text();
  CHECK(text.rfind("MIBPCERT-MODEL v1\n", 0) == 0);
  CHECK(text.find("vars 0\n") != std::string::npos);
  CHECK(text.find("constraints 0\n") != std::string::npos);
  CHECK(text.find("bilinear 0\n") != std::string::npos);
  CHECK(text.find("branches 0\n") != std::string::npos);
  CHECK(text.find("objectives 0\n") != std::string::npos);
  CHECK(text.find("end\n") != std::string::npos);
}

TEST_CASE("export is deterministic and distinguishes distinct models") {
  OptModel a;
  const VarId x = a.add_var(0, 1, VarKind::continuous, "x");
  a.add_constraint({{{x, 2.0}}, Cmp::le, 1.5});
  a.finalize();
  CHECK(a.export_text() == a.export_text());

  OptModel b;
  const VarId y = b.add_var(0, 1, VarKind::continuous, "x");
  b.add_constraint({{{y, 2.0}}, Cmp::le, 1.25});
  b.finalize();
  CHECK(a.export_text() != b.export_text());
}

TEST_CASE("definitions are single-assignment") {
  OptModel m;
  const VarId x = m.add_var(0, 1);
  const VarId y = m.add_var(0, 2);
  m.add_definition(y, {{x, 2.0}});
  CHECK_THROWS_AS(m.add_definition(y, {{x, 1.0}}), std::logic_error);
  CHECK_THROWS_AS(m.add_definition(x, {{x, 1.0}}), std::invalid_argument);
}
