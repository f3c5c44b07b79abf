#include "mibpcert/encoder.hpp"
#include "mibpcert/solver.hpp"

#include "doctest.h"

#include <cmath>
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

ThreatModel tiny_threat() {
  std::vector<Sample> data(1);
  data[0].x = Eigen::Vector2d(1, 1);
  data[0].y = 1;
  return linf(data, 1.0);
}

}  // namespace

TEST_CASE("first-iteration census of the worked 2-2-1 example") {
  const ThreatModel threat = tiny_threat();
  EncodeConfig cfg;
  cfg.emit_input_gradients = true;  // the fully written-out problem lists them
  IterationEncoding enc = encode_iteration(tiny_spec(), ParamBox::point(tiny_spec(), tiny_params()),
                                           threat, {0}, 0.1, cfg);
  CHECK(enc.census.inputs == 2);
  CHECK(enc.census.param_fixings == 6);
  CHECK(enc.census.layer_equalities == 3);
  CHECK(enc.census.relu_units == 2);
  CHECK(enc.census.loss_and_grad == 2);
  CHECK(enc.census.gradient_equalities == 10);
  CHECK(enc.census.updates == 6);
  CHECK(enc.census.total() == 31);

  // Input variables carry the threat box as bounds.
  CHECK(enc.model.bounds(enc.samples[0].inputs[0]).lo == doctest::Approx(0));
  CHECK(enc.model.bounds(enc.samples[0].inputs[0]).hi == doctest::Approx(2));
  // Parameter variables are fixed by degenerate bounds, never substituted:
  // they still appear in bilinear terms.
  CHECK(enc.model.bounds(enc.param_vars[0]).is_point());
  bool param_in_bilinear = false;
  for (const auto& t : enc.model.bilinear())
    for (VarId p : enc.param_vars)
      if (t.x == p || t.y == p) param_in_bilinear = true;
  CHECK(param_in_bilinear);

  // Export renders every section deterministically.
  const std::string text = enc.model.export_text();
  CHECK(text.rfind("MIBPCERT-MODEL v1\n", 0) == 0);
  CHECK(text == enc.model.export_text());
  CHECK(enc.model.objectives().size() == 12);  // min and max per parameter
}

TEST_CASE("epsilon zero fixes the input variables") {
  std::vector<Sample> data(1);
  data[0].x = Eigen::Vector2d(0.25, -0.5);
  data[0].y = 1;
  const ThreatModel threat = linf(data, 0.0);
  IterationEncoding enc = encode_iteration(tiny_spec(), ParamBox::point(tiny_spec(), tiny_params()),
                                           threat, {0}, 0.1);
  CHECK(enc.model.bounds(enc.samples[0].inputs[0]).is_point());
  CHECK(enc.model.bounds(enc.samples[0].inputs[1]).is_point());
}

TEST_CASE("one-hot missing group lowers to binaries plus a sum row") {
  std::vector<Sample> data(1);
  data[0].x = Eigen::Vector3d(0, 1, 0);
  data[0].y = 1;
  const ThreatModel threat =
      categorical_missing(data, {{0, 3}}, [](int, int) { return true; });
  ModelSpec spec;
  spec.layer_dims = {3, 1};
  spec.with_bias = true;
  IterationEncoding enc =
      encode_iteration(spec, ParamBox::point(spec, init_params(spec, 1)), threat, {0}, 0.1);
  int binaries = 0;
  for (VarId v : enc.samples[0].inputs)
    if (enc.model.kind(v) == VarKind::binary) ++binaries;
  CHECK(binaries == 3);
  int sum_rows = 0;
  for (const auto& r : enc.model.rows()) {
    if (r.defines.valid() || r.row.terms.size() != 3 || r.row.cmp != Cmp::eq) continue;
    if (r.row.rhs == 1.0) ++sum_rows;
  }
  CHECK(sum_rows == 1);
}

TEST_CASE("degenerate boxes collapse solved update bounds to concrete SGD") {
  // 50 random nets and samples: with eps = 0 and a point parameter box,
  // every solved update bound equals the concrete step within 1e-7.
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(-1, 1);
  ModelSpec spec;
  spec.layer_dims = {2, 3, 1};
  spec.with_bias = true;
  const ParamIndexer indexer(spec);
  for (int inst = 0; inst < 50; ++inst) {
    const Params theta = init_params(spec, 7000 + inst);
    std::vector<Sample> data(1);
    data[0].x = Eigen::Vector2d(u(rng), u(rng));
    data[0].y = inst % 2 == 0 ? 1 : -1;
    const ThreatModel threat = linf(data, 0.0);
    IterationEncoding enc =
        encode_iteration(spec, ParamBox::point(spec, theta), threat, {0}, 0.1);
    const auto outs = solve_batch(enc.model, enc.model.objectives());
    const Eigen::VectorXd expect =
        indexer.flatten(sgd_step(theta, backward(spec, theta, data[0].x, data[0].y), 0.1));
    for (int j = 0; j < indexer.count(); ++j) {
      CHECK(outs[2 * j].bound == doctest::Approx(expect[j]).epsilon(1e-7).scale(1.0));
      CHECK(outs[2 * j + 1].bound == doctest::Approx(expect[j]).epsilon(1e-7).scale(1.0));
    }
  }
}

TEST_CASE("solved update bounds are never wider than interval propagation") {
  std::mt19937_64 rng(91);
  std::uniform_real_distribution<double> u(-1, 1);
  ModelSpec spec;
  spec.layer_dims = {2, 2, 1};
  spec.with_bias = true;
  const ParamIndexer indexer(spec);
  for (int inst = 0; inst < 5; ++inst) {
    const Params theta = init_params(spec, 300 + inst);
    ParamBox box = ParamBox::point(spec, theta);
    for (auto& w : box.weights)
      for (auto& iv : w.data) iv = Interval(iv.lo - 0.01, iv.hi + 0.01);
    std::vector<Sample> data(2);
    data[0].x = Eigen::Vector2d(u(rng), u(rng));
    data[0].y = 1;
    data[1].x = Eigen::Vector2d(u(rng), u(rng));
    data[1].y = -1;
    const ThreatModel threat = linf(data, 0.05);
    IterationEncoding enc = encode_iteration(spec, box, threat, {0, 1}, 0.1);
    const auto outs = solve_batch(enc.model, enc.model.objectives(), {});
    for (int j = 0; j < indexer.count(); ++j) {
      const Interval seeded = enc.model.bounds(enc.update_vars[j]);
      CHECK(outs[2 * j].bound >= seeded.lo - 1e-9);
      CHECK(outs[2 * j + 1].bound <= seeded.hi + 1e-9);
    }
  }
}

TEST_CASE("binary count stays within unstable ReLUs plus unstable hinges") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1, 1);
  ModelSpec spec;
  spec.layer_dims = {2, 4, 1};
  spec.with_bias = true;
  for (int inst = 0; inst < 5; ++inst) {
    const Params theta = init_params(spec, 40 + inst);
    std::vector<Sample> data(3);
    for (auto& s : data) {
      s.x = Eigen::Vector2d(u(rng), u(rng));
      s.y = u(rng) > 0 ? 1 : -1;
    }
    const ThreatModel threat = linf(data, 0.1);
    IterationEncoding enc =
        encode_iteration(spec, ParamBox::point(spec, theta), threat, {0, 1, 2}, 0.1);
    int binaries = 0;
    for (int v = 0; v < enc.model.num_vars(); ++v)
      if (enc.model.kind(VarId{v}) == VarKind::binary) ++binaries;
    int budget = 0;
    for (const auto& sv : enc.samples) budget += sv.relu_binaries + sv.hinge_binaries;
    CHECK(binaries == budget);  // l_inf threat adds no extra binaries
    CHECK(budget <= 3 * (4 + 1));
  }
}

TEST_CASE("relu encodings: stable cases add no binaries, straddling adds one") {
  auto one_unit = [](double x0, double eps) {
    std::vector<Sample> data(1);
    data[0].x = Eigen::VectorXd::Constant(1, x0);
    data[0].y = 1;
    ModelSpec s2;
    s2.layer_dims = {1, 1, 1};
    s2.with_bias = false;
    Params p = zero_params(s2);
    p.weights[0](0, 0) = 1.0;
    p.weights[1](0, 0) = 1.0;
    const ThreatModel threat = linf(data, eps);
    return encode_iteration(s2, ParamBox::point(s2, p), threat, {0}, 0.1);
  };
  // Stable-off: pre box [-4, 0] -> output fixed 0, no binary.
  {
    IterationEncoding enc = one_unit(-2.0, 2.0);
    CHECK(enc.samples[0].relu_binaries == 0);
    CHECK(enc.model.bounds(enc.samples[0].post[0][0]).is_point());
    CHECK(enc.model.bounds(enc.samples[0].post[0][0]).lo == 0.0);
  }
  // Stable-on: pre box [1, 3] -> output aliases the input, no binary.
  {
    IterationEncoding enc = one_unit(2.0, 1.0);
    CHECK(enc.samples[0].relu_binaries == 0);
    CHECK(enc.samples[0].post[0][0] == enc.samples[0].pre[0][0]);
  }
  // Straddling: pre box [-1, 2] -> one binary; solved output range [0, 2].
  {
    IterationEncoding enc = one_unit(0.5, 1.5);
    CHECK(enc.samples[0].relu_binaries == 1);
    const VarId post = enc.samples[0].post[0][0];
    CHECK(solve(enc.model, {post, Sense::maximize}).bound == doctest::Approx(2.0));
    CHECK(solve(enc.model, {post, Sense::minimize}).bound == doctest::Approx(0.0));
  }
}

TEST_CASE("stable hinge collapses loss and gradient without a binary") {
  std::vector<Sample> data(1);
  data[0].x = Eigen::VectorXd::Constant(1, 3.0);
  data[0].y = 1;
  ModelSpec s2;
  s2.layer_dims = {1, 1};
  s2.with_bias = false;
  Params p = zero_params(s2);
  p.weights[0](0, 0) = 1.0;  // logit = x in [2, 4]: margin certainly inactive
  const ThreatModel threat = linf(data, 1.0);
  IterationEncoding enc = encode_iteration(s2, ParamBox::point(s2, p), threat, {0}, 0.1);
  CHECK(enc.samples[0].hinge_binaries == 0);
  CHECK(enc.model.bounds(enc.samples[0].loss).is_point());
  CHECK(enc.model.bounds(enc.samples[0].loss).lo == 0.0);
  CHECK(enc.model.bounds(enc.samples[0].logit_grad[0]).is_point());
  CHECK(enc.model.bounds(enc.samples[0].logit_grad[0]).lo == 0.0);
  for (VarId g : enc.samples[0].param_grad) CHECK(enc.model.bounds(g).is_point());
}

TEST_CASE("fixed loss and gradient values for a pinned logit") {
  // logit fixed at -2, y = +1: J = 3, dJ/dlogit = -1.
  std::vector<Sample> data(1);
  data[0].x = Eigen::VectorXd::Constant(1, -2.0);
  data[0].y = 1;
  ModelSpec s2;
  s2.layer_dims = {1, 1};
  s2.with_bias = false;
  Params p = zero_params(s2);
  p.weights[0](0, 0) = 1.0;
  const ThreatModel threat = linf(data, 0.0);
  IterationEncoding enc = encode_iteration(s2, ParamBox::point(s2, p), threat, {0}, 0.1);
  const SolveOutcome j = solve(enc.model, {enc.samples[0].loss, Sense::maximize});
  CHECK(j.bound == doctest::Approx(3.0));
  const SolveOutcome g = solve(enc.model, {enc.samples[0].logit_grad[0], Sense::minimize});
  CHECK(g.bound == doctest::Approx(-1.0));
}

TEST_CASE("one-vs-all loss produces one hinge block per class") {
  ModelSpec spec;
  spec.layer_dims = {2, 2, 3};
  spec.loss = Loss::hinge_one_vs_all;
  spec.with_bias = true;
  std::vector<Sample> data(1);
  data[0].x = Eigen::Vector2d(0.1, -0.2);
  data[0].y = 2;
  const ThreatModel threat = linf(data, 0.05);
  IterationEncoding enc =
      encode_iteration(spec, ParamBox::point(spec, init_params(spec, 3)), threat, {0}, 0.1);
  CHECK(enc.samples[0].margins.size() == 3);
  CHECK(enc.samples[0].logit_grad.size() == 3);
  CHECK(enc.census.loss_and_grad == 6);
}

TEST_CASE("non-positive learning rates are rejected") {
  const ThreatModel threat = tiny_threat();
  CHECK_THROWS_AS(encode_iteration(tiny_spec(), ParamBox::point(tiny_spec(), tiny_params()),
                                   threat, {0}, 0.0),
                  std::invalid_argument);
}

TEST_CASE("batch of identical samples matches the single-sample bounds") {
  ModelSpec spec;
  spec.layer_dims = {2, 2, 1};
  spec.with_bias = true;
  const Params theta = init_params(spec, 77);
  std::vector<Sample> one(1), three(3);
  one[0].x = Eigen::Vector2d(0.3, -0.4);
  one[0].y = 1;
  three[0] = three[1] = three[2] = one[0];
  const ThreatModel t1 = linf(one, 0.05);
  const ThreatModel t3 = linf(three, 0.05);

  IterationEncoding e1 = encode_iteration(spec, ParamBox::point(spec, theta), t1, {0}, 0.1);
  IterationEncoding e3 =
      encode_iteration(spec, ParamBox::point(spec, theta), t3, {0, 1, 2}, 0.1);
  const auto o1 = solve_batch(e1.model, e1.model.objectives());
  const auto o3 = solve_batch(e3.model, e3.model.objectives());
  const ParamIndexer indexer(spec);
  for (int j = 0; j < indexer.count(); ++j) {
    // Mean aggregation: identical samples give identical per-step bounds.
    CHECK(o1[2 * j].bound == doctest::Approx(o3[2 * j].bound).epsilon(1e-6));
    CHECK(o1[2 * j + 1].bound == doctest::Approx(o3[2 * j + 1].bound).epsilon(1e-6));
  }
}

TEST_CASE("prediction encoding: point box reproduces the concrete logits") {
  ModelSpec spec;
  spec.layer_dims = {2, 3, 1};
  spec.with_bias = true;
  const Params theta = init_params(spec, 8);
  const Eigen::Vector2d x(0.4, -0.7);
  PredictionEncoding enc = encode_prediction(spec, ParamBox::point(spec, theta), x);
  const double expect = forward(spec, theta, x).logits()[0];
  CHECK(solve(enc.model, {enc.logit_vars[0], Sense::minimize}).bound ==
        doctest::Approx(expect).epsilon(1e-7));
  CHECK(solve(enc.model, {enc.logit_vars[0], Sense::maximize}).bound ==
        doctest::Approx(expect).epsilon(1e-7));
}

TEST_CASE("prediction encoding: sampled concrete logits stay inside solved range") {
  std::mt19937_64 rng(64);
  std::uniform_real_distribution<double> u01(0, 1);
  ModelSpec spec;
  spec.layer_dims = {2, 2, 1};
  spec.with_bias = true;
  ParamBox box = ParamBox::point(spec, init_params(spec, 5));
  for (auto& w : box.weights)
    for (auto& iv : w.data) iv = Interval(iv.lo - 0.05, iv.hi + 0.05);
  const Eigen::Vector2d x(0.2, 0.9);
  PredictionEncoding enc = encode_prediction(spec, box, x);
  const double lo = solve(enc.model, {enc.logit_vars[0], Sense::minimize}).bound;
  const double hi = solve(enc.model, {enc.logit_vars[0], Sense::maximize}).bound;
  for (int i = 0; i < 1000; ++i) {
    Params theta = zero_params(spec);
    for (int l = 0; l < 2; ++l)
      for (int r = 0; r < box.weights[l].rows; ++r)
        for (int c = 0; c < box.weights[l].cols; ++c) {
          const Interval& iv = box.weights[l].at(r, c);
          theta.weights[l](r, c) = iv.lo + u01(rng) * iv.width();
        }
    const double v = forward(spec, theta, x).logits()[0];
    CHECK(v >= lo - 1e-7);
    CHECK(v <= hi + 1e-7);
  }
}

TEST_CASE("prediction encoding: three classes give three logits and six gaps") {
  ModelSpec spec;
  spec.layer_dims = {2, 2, 3};
  spec.loss = Loss::hinge_one_vs_all;
  spec.with_bias = true;
  PredictionEncoding enc = encode_prediction(spec, ParamBox::point(spec, init_params(spec, 4)),
                                             Eigen::Vector2d(0.1, 0.2));
  CHECK(enc.logit_vars.size() == 3);
  int gaps = 0;
  for (const auto& row : enc.gap_vars)
    for (VarId v : row)
      if (v.valid()) ++gaps;
  CHECK(gaps == 6);
}

TEST_CASE("convolution lowering matches the dense convolution oracle") {
  // 1-channel 3x3 input, 2x2 kernel, stride 1 -> 4 outputs with 4 products
  // each; checked against direct convolution on 20 random points.
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1, 1);
  Conv2dDims dims;
  dims.in_h = dims.in_w = 3;
  dims.k_h = dims.k_w = 2;

  for (int trial = 0; trial < 20; ++trial) {
    OptModel m;
    std::vector<VarId> kernel, input, bias;
    std::vector<double> kv, xv;
    for (int i = 0; i < 4; ++i) {
      kv.push_back(u(rng));
      kernel.push_back(m.add_var(kv.back(), kv.back()));
    }
    const double bv = u(rng);
    bias.push_back(m.add_var(bv, bv));
    for (int i = 0; i < 9; ++i) {
      xv.push_back(u(rng));
      input.push_back(m.add_var(xv.back(), xv.back()));
    }
    const auto out = encode_conv2d(m, dims, kernel, bias, input);
    REQUIRE(out.size() == 4);
    m.finalize();
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) {
        double expect = bv;
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) expect += kv[i * 2 + j] * xv[(r + i) * 3 + (c + j)];
        const LpResult res = solve_lp(m, {out[r * 2 + c], Sense::minimize});
        REQUIRE(res.status == LpStatus::optimal);
        CHECK(res.objective == doctest::Approx(expect).epsilon(1e-9));
      }
  }
}

TEST_CASE("sigmoid and tanh envelopes on [0,1] use the fixed coefficients") {
  OptModel m;
  const VarId x = m.add_var(0, 1);
  const VarId s = encode_activation_relaxed(m, Activation::sigmoid, x);
  const VarId t = encode_activation_relaxed(m, Activation::tanh, x);
  (void)s;
  (void)t;
  int sig_rows = 0, tanh_rows = 0;
  for (const auto& r : m.rows()) {
    for (const auto& term : r.row.terms) {
      if (term.coef == -0.25) ++sig_rows;   // 0.25x + {0.48, 0.5}
      if (term.coef == -0.76) ++tanh_rows;  // 0.76x lower line
    }
  }
  CHECK(sig_rows == 2);
  CHECK(tanh_rows == 1);

  // The true functions satisfy the envelopes at 100 grid points.
  for (int i = 0; i <= 100; ++i) {
    const double v = i / 100.0;
    const double sig = 1.0 / (1.0 + std::exp(-v));
    CHECK(sig >= 0.25 * v + 0.48 - 1e-12);
    CHECK(sig <= 0.25 * v + 0.5 + 1e-12);
    CHECK(std::tanh(v) >= 0.76 * v - 1e-12);
    CHECK(std::tanh(v) <= v + 1e-12);
  }
}

TEST_CASE("general-range envelopes are sound for sigmoid and tanh") {
  for (Activation act : {Activation::sigmoid, Activation::tanh}) {
    for (const auto& range :
         std::vector<std::pair<double, double>>{{-2.0, 1.5}, {-3.0, -0.5}, {0.2, 2.5}}) {
      OptModel m;
      const VarId x = m.add_var(range.first, range.second);
      const VarId y = encode_activation_relaxed(m, act, x);
      // Evaluate every envelope row at a grid of true function points.
      for (int i = 0; i <= 200; ++i) {
        const double v = range.first + (range.second - range.first) * i / 200.0;
        const double f = act == Activation::sigmoid ? 1.0 / (1.0 + std::exp(-v)) : std::tanh(v);
        for (const auto& r : m.rows()) {
          REQUIRE(r.row.terms.size() == 2);
          REQUIRE(r.row.terms[0].var == y);
          const double lhs = f + r.row.terms[1].coef * v;
          if (r.row.cmp == Cmp::le) CHECK(lhs <= r.row.rhs + 1e-9);
          if (r.row.cmp == Cmp::ge) CHECK(lhs >= r.row.rhs - 1e-9);
        }
      }
    }
  }
}
