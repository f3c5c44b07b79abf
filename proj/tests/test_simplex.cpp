#include "mibpcert/simplex.hpp"

#include "doctest.h"

#include <random>

using namespace mibpcert;

namespace {

// Brute-force oracle: enumerate candidate vertices as intersections of n
// active constraints chosen from rows (as equalities) and variable bounds,
// keep feasible ones, return the best objective.
struct VertexOracle {
  const LpProblem& p;
  Eigen::VectorXd cost;

  std::optional<double> best_min = std::nullopt;

  bool feasible(const Eigen::VectorXd& x) const {
    const double tol = 1e-7;
    for (int j = 0; j < x.size(); ++j)
      if (x[j] < p.lo[j] - tol || x[j] > p.hi[j] + tol) return false;
    for (const auto& r : p.rows) {
      double a = 0;
      for (const auto& [c, v] : r.terms) a += v * x[c];
      if (r.cmp != Cmp::ge && a > r.rhs + tol) return false;
      if (r.cmp != Cmp::le && a < r.rhs - tol) return false;
    }
    return true;
  }

  void consider(const Eigen::VectorXd& x) {
    if (!feasible(x)) return;
    const double v = cost.dot(x);
    if (!best_min || v < *best_min) best_min = v;
  }

  struct Plane {
    Eigen::VectorXd a;
    double b;
  };

  // Each "constraint" is a hyperplane: either a row treated at equality or a
  // variable pinned at one of its bounds.
  void run() {
    const int n = static_cast<int>(p.lo.size());
    std::vector<Plane> planes;
    for (const auto& r : p.rows) {
      Plane pl;
      pl.a = Eigen::VectorXd::Zero(n);
      for (const auto& [c, v] : r.terms) pl.a[c] += v;
      pl.b = r.rhs;
      planes.push_back(pl);
    }
    for (int j = 0; j < n; ++j) {
      Plane lo;
      lo.a = Eigen::VectorXd::Zero(n);
      lo.a[j] = 1;
      lo.b = p.lo[j];
      planes.push_back(lo);
      Plane hi = lo;
      hi.b = p.hi[j];
      planes.push_back(hi);
    }
    std::vector<int> pick(n, 0);
    enumerate(planes, pick, 0, 0);
  }

  void enumerate(const std::vector<Plane>& planes, std::vector<int>& pick, int depth, int from) {
    const int n = static_cast<int>(p.lo.size());
    if (depth == n) {
      Eigen::MatrixXd A(n, n);
      Eigen::VectorXd b(n);
      for (int i = 0; i < n; ++i) {
        A.row(i) = planes[pick[i]].a.transpose();
        b[i] = planes[pick[i]].b;
      }
      const Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
      if (!lu.isInvertible()) return;
      consider(lu.solve(b));
      return;
    }
    for (int i = from; i < static_cast<int>(planes.size()); ++i) {
      pick[depth] = i;
      enumerate(planes, pick, depth + 1, i + 1);
    }
  }
};

}  // namespace

TEST_CASE("max x over a box") {
  LpProblem p;
  p.lo = Eigen::VectorXd::Zero(1);
  p.hi = Eigen::VectorXd::Constant(1, 2.0);
  const LpResult r = solve_lp_dense(p, {{0, -1.0}});  // minimize -x
  REQUIRE(r.status == LpStatus::optimal);
  CHECK(-r.objective == doctest::Approx(2.0));
  CHECK(r.x[0] == doctest::Approx(2.0));
}

TEST_CASE("max x+y subject to x+y <= 1 on the unit box") {
  LpProblem p;
  p.lo = Eigen::VectorXd::Zero(2);
  p.hi = Eigen::VectorXd::Ones(2);
  p.rows.push_back({{{0, 1.0}, {1, 1.0}}, Cmp::le, 1.0});
  const LpResult r = solve_lp_dense(p, {{0, -1.0}, {1, -1.0}});
  REQUIRE(r.status == LpStatus::optimal);
  CHECK(-r.objective == doctest::Approx(1.0));
}

TEST_CASE("equality rows force phase 1") {
  LpProblem p;
  p.lo = Eigen::VectorXd::Constant(3, -5.0);
  p.hi = Eigen::VectorXd::Constant(3, 5.0);
  p.rows.push_back({{{0, 1.0}, {1, 1.0}, {2, 1.0}}, Cmp::eq, 3.0});
  p.rows.push_back({{{0, 1.0}, {1, -1.0}}, Cmp::eq, 1.0});
  const LpResult r = solve_lp_dense(p, {{2, 1.0}});  // minimize z
  REQUIRE(r.status == LpStatus::optimal);
  // x + y = 3 - z, x - y = 1; minimum z with x,y in [-5,5]: z = 3 - x - y,
  // maximize x + y subject to x = y + 1 -> x = 5, y = 4 -> z = -6... but z >= -5.
  CHECK(r.objective == doctest::Approx(-5.0));
}

TEST_CASE("infeasible rows are reported") {
  LpProblem p;
  p.lo = Eigen::VectorXd::Zero(1);
  p.hi = Eigen::VectorXd::Ones(1);
  p.rows.push_back({{{0, 1.0}}, Cmp::ge, 2.0});
  const LpResult r = solve_lp_dense(p, {{0, 1.0}});
  CHECK(r.status == LpStatus::infeasible);
}

TEST_CASE("degenerate-prone LP still terminates") {
  // Many redundant rows through the same vertex.
  LpProblem p;
  p.lo = Eigen::VectorXd::Zero(3);
  p.hi = Eigen::VectorXd::Ones(3);
  for (int i = 0; i < 6; ++i)
    p.rows.push_back({{{0, 1.0}, {1, 1.0}, {2, 1.0}}, Cmp::le, 1.0});
  p.rows.push_back({{{0, 1.0}, {1, 2.0}}, Cmp::le, 1.0});
  const LpResult r = solve_lp_dense(p, {{0, -3.0}, {1, -2.0}, {2, -1.0}});
  REQUIRE(r.status == LpStatus::optimal);
  CHECK(-r.objective == doctest::Approx(3.0));  // x=1 alone
}

TEST_CASE("50 random LPs match the vertex-enumeration oracle within 1e-7") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_int_distribution<int> nvars(2, 4);
  std::uniform_int_distribution<int> nrows(1, 4);

  int solved = 0;
  for (int trial = 0; trial < 60 && solved < 50; ++trial) {
    const int n = nvars(rng);
    LpProblem p;
    p.lo.resize(n);
    p.hi.resize(n);
    Eigen::VectorXd center(n);
    for (int j = 0; j < n; ++j) {
      const double a = u(rng), b = u(rng);
      p.lo[j] = std::min(a, b);
      p.hi[j] = std::max(a, b) + 0.1;
      center[j] = 0.5 * (p.lo[j] + p.hi[j]);
    }
    // Rows pass through a known interior point, so the LP is feasible.
    const int m = nrows(rng);
    for (int i = 0; i < m; ++i) {
      LpRowSpec row;
      double activity = 0.0;
      for (int j = 0; j < n; ++j)
        if (std::abs(u(rng)) > 0.3) {
          const double coef = u(rng);
          row.terms.push_back({j, coef});
          activity += coef * center[j];
        }
      if (row.terms.empty()) {
        row.terms.push_back({0, 1.0});
        activity = center[0];
      }
      const int kind = static_cast<int>(std::floor((u(rng) + 1) * 1.49));
      const double margin = 0.25 * std::abs(u(rng));
      if (kind == 0) {
        row.cmp = Cmp::le;
        row.rhs = activity + margin;
      } else if (kind == 1) {
        row.cmp = Cmp::ge;
        row.rhs = activity - margin;
      } else {
        row.cmp = Cmp::eq;
        row.rhs = activity;
      }
      p.rows.push_back(std::move(row));
    }
    std::vector<std::pair<int, double>> cost;
    for (int j = 0; j < n; ++j) cost.push_back({j, u(rng)});

    VertexOracle oracle{p, Eigen::VectorXd::Zero(n)};
    for (const auto& [j, c] : cost) oracle.cost[j] = c;
    oracle.run();

    REQUIRE(oracle.best_min.has_value());
    const LpResult r = solve_lp_dense(p, cost);
    ++solved;
    REQUIRE(r.status == LpStatus::optimal);
    CHECK(r.objective == doctest::Approx(*oracle.best_min).epsilon(1e-7).scale(1.0));
  }
  CHECK(solved >= 50);
}

TEST_CASE("snapshot/restore reprices fresh objectives from one feasibility phase") {
  LpProblem p;
  p.lo = Eigen::VectorXd::Constant(2, -1.0);
  p.hi = Eigen::VectorXd::Constant(2, 1.0);
  p.rows.push_back({{{0, 1.0}, {1, 1.0}}, Cmp::eq, 0.5});
  SimplexTableau tab(p);
  REQUIRE(tab.feasibilize());
  tab.snapshot();
  const LpResult a = tab.optimize({{0, 1.0}});
  tab.restore();
  const LpResult b = tab.optimize({{0, -1.0}});
  tab.restore();
  const LpResult a2 = tab.optimize({{0, 1.0}});
  CHECK(a.objective == doctest::Approx(-0.5));  // x = -0.5 with y = 1
  CHECK(-b.objective == doctest::Approx(1.0));  // x = 1, y = -0.5
  CHECK(a.objective == a2.objective);
  CHECK((a.x - a2.x).cwiseAbs().maxCoeff() == 0.0);
}
