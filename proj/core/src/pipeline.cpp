#include "mibpcert/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace mibpcert {

namespace {

ParamBox box_from_flat(const ModelSpec& spec, const ParamIndexer& indexer,
                       const std::vector<Interval>& flat) {
  ParamBox box;
  for (int l = 0; l < spec.num_weight_layers(); ++l) {
    IntervalTensor w(spec.layer_dims[l + 1], spec.layer_dims[l]);
    for (int u = 0; u < w.rows; ++u)
      for (int v = 0; v < w.cols; ++v) w.at(u, v) = flat[indexer.weight_index(l, u, v)];
    box.weights.push_back(std::move(w));
    IntervalTensor b(spec.layer_dims[l + 1], 1);
    if (spec.with_bias)
      for (int u = 0; u < b.rows; ++u) b.at(u) = flat[indexer.bias_index(l, u)];
    box.biases.push_back(std::move(b));
  }
  return box;
}

}  // namespace

PrimalEvaluator make_step_evaluator(const IterationEncoding& encoding,
                                    const ThreatModel& threat) {
  const ModelSpec spec = encoding.spec;
  const ParamIndexer indexer(spec);
  // Objective target -> flat parameter index.
  std::unordered_map<int, int> target_to_param;
  for (std::size_t j = 0; j < encoding.update_vars.size(); ++j)
    target_to_param[encoding.update_vars[j].index] = static_cast<int>(j);

  // Copy the variable layout needed from the encoding; the encoding itself
  // may move after this call.
  struct SampleLayout {
    int dataset_index;
    std::vector<int> input_vars;
    int flip_var;
  };
  std::vector<SampleLayout> layout;
  for (const SampleVars& sv : encoding.samples) {
    SampleLayout sl;
    sl.dataset_index = sv.dataset_index;
    for (VarId v : sv.inputs) sl.input_vars.push_back(v.index);
    sl.flip_var = sv.flip.valid() ? sv.flip.index : -1;
    layout.push_back(std::move(sl));
  }
  std::vector<int> param_var_index;
  for (VarId v : encoding.param_vars) param_var_index.push_back(v.index);
  std::vector<std::pair<double, double>> param_bounds;
  for (VarId v : encoding.param_vars) {
    const Interval iv = encoding.model.bounds(v);
    param_bounds.push_back({iv.lo, iv.hi});
  }
  const double lr = encoding.lr;
  const GradAggregation agg = encoding.agg;

  return [=, &threat](const Objective& o,
                      const Eigen::VectorXd& point) -> std::optional<double> {
    const auto it = target_to_param.find(o.target.index);
    if (it == target_to_param.end()) return std::nullopt;

    PerturbedDataset candidate;
    candidate.samples = threat.original();
    for (const auto& sl : layout) {
      Sample& s = candidate.samples[sl.dataset_index];
      for (std::size_t f = 0; f < sl.input_vars.size(); ++f)
        s.x[static_cast<long>(f)] = point[sl.input_vars[f]];
      if (sl.flip_var >= 0 && point[sl.flip_var] > 0.5) s.y = -s.y;
    }
    const PerturbedDataset admissible = threat.project(candidate);

    Eigen::VectorXd theta(static_cast<long>(param_var_index.size()));
    for (std::size_t j = 0; j < param_var_index.size(); ++j)
      theta[static_cast<long>(j)] =
          std::clamp(point[param_var_index[j]], param_bounds[j].first, param_bounds[j].second);
    const Params params = indexer.unflatten(theta);

    std::vector<Sample> batch;
    for (const auto& sl : layout) batch.push_back(admissible.samples[sl.dataset_index]);
    const Params grads = batch_gradient(spec, params, batch, agg);
    const Params next = sgd_step(params, grads, lr);
    return indexer.flatten(next)[it->second];
  };
}

CertifiedParams train_certified(const ModelSpec& spec, const Params& initial,
                                const ThreatModel& threat, const TrainConfig& config) {
  spec.validate();
  check_shapes(spec, initial);
  const ParamIndexer indexer(spec);
  const int n = threat.size();
  const BatchSchedule schedule{config.shuffle_seed, n, std::min(config.batch, n)};
  const int iterations = config.resolved_iterations(n);
  if (iterations <= 0) throw std::invalid_argument("train_certified: no iterations configured");

  EncodeConfig encode_cfg = config.encode;
  encode_cfg.agg = config.agg;

  CertifiedParams result;
  result.initial = initial;
  ParamBox box = ParamBox::point(spec, initial);

  for (int it = 0; it < iterations; ++it) {
    const std::vector<int> batch = schedule.indices(it);
    IterationEncoding enc = encode_iteration(spec, box, threat, batch, config.lr, encode_cfg);
    const PrimalEvaluator evaluator = make_step_evaluator(enc, threat);
    const std::vector<Objective> objectives = enc.model.objectives();
    const std::vector<SolveOutcome> outcomes =
        solve_batch(enc.model, objectives, config.solver, evaluator);

    IterationStats stats;
    std::vector<Interval> flat(indexer.count());
    for (int j = 0; j < indexer.count(); ++j) {
      const SolveOutcome& lo_out = outcomes[2 * j];
      const SolveOutcome& hi_out = outcomes[2 * j + 1];
      double lo = lo_out.bound, hi = hi_out.bound;
      if (lo > hi) {  // numerical crossing of two sound bounds
        const double mid = 0.5 * (lo + hi);
        lo = hi = mid;
      }
      flat[j] = Interval(lo, hi);
      stats.total_nodes += lo_out.nodes + hi_out.nodes;
      stats.max_nodes = std::max({stats.max_nodes, lo_out.nodes, hi_out.nodes});
      if (lo_out.status != SolveStatus::proved) ++stats.non_proved_solves;
      if (hi_out.status != SolveStatus::proved) ++stats.non_proved_solves;
      stats.max_width = std::max(stats.max_width, hi - lo);
    }
    box = box_from_flat(spec, indexer, flat);
    result.per_iteration.push_back(box);
    result.stats.push_back(stats);
  }
  return result;
}

namespace {

// Evaluator for prediction models: clamp the parameter point into the box
// and run the concrete forward pass.
PrimalEvaluator make_logit_evaluator(const PredictionEncoding& enc, const ModelSpec& spec,
                                     const Eigen::VectorXd& x) {
  const ParamIndexer indexer(spec);
  std::vector<int> param_var_index;
  std::vector<std::pair<double, double>> param_bounds;
  for (VarId v : enc.param_vars) {
    param_var_index.push_back(v.index);
    const Interval iv = enc.model.bounds(v);
    param_bounds.push_back({iv.lo, iv.hi});
  }
  // Objective target -> (u, v) logit gap or single logit.
  struct Target {
    int u = -1, v = -1;  // v < 0: plain logit u
  };
  std::unordered_map<int, Target> targets;
  for (std::size_t u = 0; u < enc.logit_vars.size(); ++u)
    targets[enc.logit_vars[u].index] = {static_cast<int>(u), -1};
  for (std::size_t u = 0; u < enc.gap_vars.size(); ++u)
    for (std::size_t v = 0; v < enc.gap_vars[u].size(); ++v)
      if (enc.gap_vars[u][v].valid())
        targets[enc.gap_vars[u][v].index] = {static_cast<int>(u), static_cast<int>(v)};

  return [=](const Objective& o, const Eigen::VectorXd& point) -> std::optional<double> {
    const auto it = targets.find(o.target.index);
    if (it == targets.end()) return std::nullopt;
    Eigen::VectorXd theta(static_cast<long>(param_var_index.size()));
    for (std::size_t j = 0; j < param_var_index.size(); ++j)
      theta[static_cast<long>(j)] =
          std::clamp(point[param_var_index[j]], param_bounds[j].first, param_bounds[j].second);
    const Params params = indexer.unflatten(theta);
    const Eigen::VectorXd logits = forward(spec, params, x).logits();
    return it->second.v < 0 ? logits[it->second.u]
                            : logits[it->second.u] - logits[it->second.v];
  };
}

}  // namespace

Verdict predict_certified(const ModelSpec& spec, const ParamBox& bounds, const Eigen::VectorXd& x,
                          const SolveConfig& solver) {
  spec.validate();
  PredictionEncoding enc = encode_prediction(spec, bounds, x);
  const PrimalEvaluator evaluator = make_logit_evaluator(enc, spec, x);

  if (spec.loss == Loss::hinge_binary) {
    const SolveOutcome lo = solve(enc.model, {enc.logit_vars[0], Sense::minimize}, solver,
                                  evaluator);
    if (lo.bound >= 0.0) return Verdict::of(1);
    const SolveOutcome hi = solve(enc.model, {enc.logit_vars[0], Sense::maximize}, solver,
                                  evaluator);
    if (hi.bound < 0.0) return Verdict::of(-1);
    return Verdict::abstain();
  }

  // Candidate classes in descending nominal-logit order (midpoint weights).
  const Eigen::VectorXd nominal = forward(spec, bounds.midpoint(spec), x).logits();
  std::vector<int> order(spec.output_dim());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (nominal[a] != nominal[b]) return nominal[a] > nominal[b];
    return a < b;
  });

  for (int u : order) {
    bool dominated = false;
    for (int v = 0; v < spec.output_dim(); ++v) {
      if (v == u) continue;
      const SolveOutcome gap =
          solve(enc.model, {enc.gap_vars[u][v], Sense::minimize}, solver, evaluator);
      if (gap.bound < 0.0) {
        dominated = true;
        break;
      }
    }
    if (!dominated) return Verdict::of(u);
  }
  return Verdict::abstain();
}

CertMetrics certified_accuracy(const ModelSpec& spec, const ParamBox& bounds,
                               const std::vector<Sample>& testset, const SolveConfig& solver) {
  if (testset.empty()) throw std::invalid_argument("certified_accuracy: empty test set");
  int certified = 0, correct = 0;
  for (const Sample& s : testset) {
    const Verdict v = predict_certified(spec, bounds, s.x, solver);
    if (v.certified) {
      ++certified;
      if (v.label == s.y) ++correct;
    }
  }
  CertMetrics m;
  m.cert_rate = static_cast<double>(certified) / static_cast<double>(testset.size());
  m.cert_acc = static_cast<double>(correct) / static_cast<double>(testset.size());
  return m;
}

}  // namespace mibpcert
