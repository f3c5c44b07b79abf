#include "mibpcert/encoder.hpp"
#include "mibpcert/solver.hpp"
#include "mibpcert/threat.hpp"

#include "doctest.h"

#include <random>

using namespace mibpcert;

namespace {

ModelSpec tiny_spec() {
  ModelSpec s;
  s.layer_dims = {2, 2, 1};
  s.with_bias = false;
  return s;
}

Params tiny_params() {
  Params p = zero_params(tiny_spec());
  p.weights[0] << 1, 1, 1, -1;
  p.weights[1] << -1, 1;
  return p;
}

// The tiny net under an l_inf ball of radius 1 around (1, 1), label +1.
IterationEncoding tiny_encoding(const ThreatModel& threat) {
  return encode_iteration(tiny_spec(), ParamBox::point(tiny_spec(), tiny_params()), threat, {0},
                          0.1);
}

}  // namespace

TEST_CASE("pure LP model solves in one node") {
  OptModel m;
  const VarId x = m.add_var(0, 2);
  const VarId y = m.add_var(0, 1);
  m.add_constraint({{{x, 1.0}, {y, 1.0}}, Cmp::le, 2.5});
  m.finalize();
  const SolveOutcome out = solve(m, {x, Sense::maximize});
  CHECK(out.bound == doctest::Approx(2.0));
  CHECK(out.nodes == 1);
  CHECK(out.status == SolveStatus::proved);
  REQUIRE(out.incumbent.has_value());
  CHECK(*out.incumbent == doctest::Approx(2.0));
}

TEST_CASE("logit range of the tiny net: branch and bound beats intervals") {
  std::vector<Sample> data(1);
  data[0].x = Eigen::Vector2d(1, 1);
  data[0].y = 1;
  const ThreatModel threat = linf(data, 1.0);
  IterationEncoding enc = tiny_encoding(threat);

  // The logit variable of the only sample.
  const VarId logit = enc.samples[0].post.back()[0];
  CHECK(enc.model.bounds(logit).lo == doctest::Approx(-4));  // interval bound
  CHECK(enc.model.bounds(logit).hi == doctest::Approx(2));   // interval bound

  SolveConfig cfg;
  const SolveOutcome hi = solve(enc.model, {logit, Sense::maximize}, cfg);
  CHECK(hi.status == SolveStatus::proved);
  CHECK(hi.bound == doctest::Approx(0.0).epsilon(1e-6));  // tighter than +2
  const SolveOutcome lo = solve(enc.model, {logit, Sense::minimize}, cfg);
  CHECK(lo.bound == doctest::Approx(-4.0).epsilon(1e-6));
}

TEST_CASE("certified one-step bounds contain the concrete update of the tiny net") {
  std::vector<Sample> data(1);
  data[0].x = Eigen::Vector2d(1, 1);
  data[0].y = 1;
  const ThreatModel threat = linf(data, 1.0);
  IterationEncoding enc = tiny_encoding(threat);

  const Params grads = backward(tiny_spec(), tiny_params(), data[0].x, 1);
  const Params next = sgd_step(tiny_params(), grads, 0.1);
  const ParamIndexer indexer(tiny_spec());
  const Eigen::VectorXd flat = indexer.flatten(next);

  const std::vector<SolveOutcome> outs = solve_batch(enc.model, enc.model.objectives());
  REQUIRE(outs.size() == 2 * static_cast<std::size_t>(indexer.count()));
  for (int j = 0; j < indexer.count(); ++j) {
    CHECK(outs[2 * j].bound <= flat[j] + 1e-7);
    CHECK(outs[2 * j + 1].bound >= flat[j] - 1e-7);
  }
  // w5' = -1 - 0.1 * dL/dw5 with dL/dw5 = -x5 and x5 in [0, 4]: [-1, -0.6].
  const int w5 = indexer.weight_index(1, 0, 0);
  CHECK(outs[2 * w5].bound == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(outs[2 * w5 + 1].bound == doctest::Approx(-0.6).epsilon(1e-6));
}

TEST_CASE("solve_batch equals objective-by-objective solve, in order") {
  std::vector<Sample> data(1);
  data[0].x = Eigen::Vector2d(1, 1);
  data[0].y = 1;
  const ThreatModel threat = linf(data, 1.0);
  IterationEncoding enc = tiny_encoding(threat);
  const auto objectives = enc.model.objectives();

  const auto batch = solve_batch(enc.model, objectives);
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    const SolveOutcome one = solve(enc.model, objectives[i]);
    CHECK(batch[i].bound == one.bound);
    CHECK(batch[i].nodes == one.nodes);
    CHECK(batch[i].incumbent.has_value() == one.incumbent.has_value());
    if (one.incumbent) CHECK(*batch[i].incumbent == *one.incumbent);
  }

  // Concurrency must not change results.
  SolveConfig two_threads;
  two_threads.threads = 2;
  const auto parallel = solve_batch(enc.model, objectives, two_threads);
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    CHECK(parallel[i].bound == batch[i].bound);
    CHECK(parallel[i].nodes == batch[i].nodes);
  }

  CHECK(solve_batch(enc.model, {}).empty());
}

TEST_CASE("min and max of a fixed variable both return the constant") {
  OptModel m;
  const VarId c = m.add_var(0.75, 0.75);
  m.finalize();
  const auto outs = solve_batch(m, {{c, Sense::minimize}, {c, Sense::maximize}});
  CHECK(outs[0].bound == doctest::Approx(0.75));
  CHECK(outs[1].bound == doctest::Approx(0.75));
}

TEST_CASE("global relaxation bound is monotone over node processing") {
  std::vector<Sample> data(1);
  data[0].x = Eigen::Vector2d(1, 1);
  data[0].y = 1;
  const ThreatModel threat = linf(data, 1.0);
  IterationEncoding enc = tiny_encoding(threat);
  const VarId logit = enc.samples[0].post.back()[0];
  const SolveOutcome out = solve(enc.model, {logit, Sense::maximize});
  for (std::size_t i = 1; i < out.bound_history.size(); ++i)
    CHECK(out.bound_history[i] <= out.bound_history[i - 1] + 1e-12);  // max: bounds fall
}

TEST_CASE("node limit returns a sound but possibly loose bound") {
  std::vector<Sample> data(1);
  data[0].x = Eigen::Vector2d(1, 1);
  data[0].y = 1;
  const ThreatModel threat = linf(data, 1.0);
  IterationEncoding enc = tiny_encoding(threat);
  const VarId logit = enc.samples[0].post.back()[0];

  SolveConfig cfg;
  cfg.node_limit = 1;
  const SolveOutcome limited = solve(enc.model, {logit, Sense::maximize}, cfg);
  CHECK(limited.status == SolveStatus::node_limit);
  const SolveOutcome full = solve(enc.model, {logit, Sense::maximize});
  CHECK(limited.bound >= full.bound - 1e-9);  // sound: never below the true max
  CHECK(limited.bound <= enc.model.bounds(logit).hi + 1e-9);
}

TEST_CASE("soundness fuzz: sampled realizations stay within proven bounds") {
  // Random tiny instances; 1000 sampled admissible (dataset, theta) pairs per
  // instance must land inside the proven update-variable bounds.
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(-1, 1);
  ModelSpec spec;
  spec.layer_dims = {2, 2, 1};
  spec.with_bias = true;
  const ParamIndexer indexer(spec);

  for (int inst = 0; inst < 3; ++inst) {
    const Params center = init_params(spec, 500 + inst);
    ParamBox box = ParamBox::point(spec, center);
    // Give the parameter box some width, as in later training iterations.
    for (auto& w : box.weights)
      for (auto& iv : w.data) iv = Interval(iv.lo - 0.02, iv.hi + 0.02);

    std::vector<Sample> data(2);
    data[0].x = Eigen::Vector2d(u(rng), u(rng));
    data[0].y = 1;
    data[1].x = Eigen::Vector2d(u(rng), u(rng));
    data[1].y = -1;
    const ThreatModel threat = linf(data, 0.05);

    IterationEncoding enc = encode_iteration(spec, box, threat, {0, 1}, 0.1);
    SolveConfig cfg;
    cfg.gap_tol = 1e-5;
    const auto outs = solve_batch(enc.model, enc.model.objectives(), cfg);

    std::uniform_real_distribution<double> u01(0, 1);
    for (int trial = 0; trial < 1000; ++trial) {
      const PerturbedDataset d = threat.sample(rng);
      Params theta = zero_params(spec);
      for (int l = 0; l < spec.num_weight_layers(); ++l) {
        for (int r = 0; r < box.weights[l].rows; ++r)
          for (int c = 0; c < box.weights[l].cols; ++c) {
            const Interval& iv = box.weights[l].at(r, c);
            theta.weights[l](r, c) = iv.lo + u01(rng) * iv.width();
          }
      }
      std::vector<Sample> batch = {d.samples[0], d.samples[1]};
      const Params next = sgd_step(theta, batch_gradient(spec, theta, batch), 0.1);
      const Eigen::VectorXd flat = indexer.flatten(next);
      for (int j = 0; j < indexer.count(); ++j) {
        CHECK(flat[j] >= outs[2 * j].bound - 1e-7);
        CHECK(flat[j] <= outs[2 * j + 1].bound + 1e-7);
      }
    }
  }
}

TEST_CASE("phase enumeration + grid oracle matches branch-and-bound") {
  // 2-2-1 nets, one sample, eps = 0.1, first-iteration bounds. The ReLU
  // phases partition the input box; gridding the box (the parameters are
  // fixed at iteration one) and evaluating the exact SGD step at every grid
  // point covers all phase patterns.
  std::mt19937_64 rng(9001);
  std::uniform_real_distribution<double> u(-1, 1);
  ModelSpec spec;
  spec.layer_dims = {2, 2, 1};
  spec.with_bias = true;
  const ParamIndexer indexer(spec);
  const double eps = 0.1;
  const double lr = 0.1;

  for (int inst = 0; inst < 4; ++inst) {
    const Params theta = init_params(spec, 900 + inst);
    std::vector<Sample> data(1);
    data[0].x = Eigen::Vector2d(u(rng), u(rng));
    data[0].y = inst % 2 == 0 ? 1 : -1;
    const ThreatModel threat = linf(data, eps);

    IterationEncoding enc =
        encode_iteration(spec, ParamBox::point(spec, theta), threat, {0}, lr);
    SolveConfig cfg;
    cfg.gap_tol = 1e-6;
    const auto outs = solve_batch(enc.model, enc.model.objectives(), cfg);

    const int grid = 101;  // step 2e-3 over the box
    Eigen::VectorXd lo_oracle =
        Eigen::VectorXd::Constant(indexer.count(), std::numeric_limits<double>::infinity());
    Eigen::VectorXd hi_oracle = -lo_oracle;
    for (int a = 0; a < grid; ++a)
      for (int b = 0; b < grid; ++b) {
        Sample s = data[0];
        s.x[0] += -eps + 2 * eps * a / (grid - 1);
        s.x[1] += -eps + 2 * eps * b / (grid - 1);
        const Params next = sgd_step(theta, backward(spec, theta, s.x, s.y), lr);
        const Eigen::VectorXd flat = indexer.flatten(next);
        lo_oracle = lo_oracle.cwiseMin(flat);
        hi_oracle = hi_oracle.cwiseMax(flat);
      }
    for (int j = 0; j < indexer.count(); ++j) {
      CHECK(outs[2 * j].bound <= lo_oracle[j] + 1e-9);  // sound
      CHECK(outs[2 * j].bound >= lo_oracle[j] - 2e-3);  // and tight
      CHECK(outs[2 * j + 1].bound >= hi_oracle[j] - 1e-9);
      CHECK(outs[2 * j + 1].bound <= hi_oracle[j] + 2e-3);
    }
  }
}
