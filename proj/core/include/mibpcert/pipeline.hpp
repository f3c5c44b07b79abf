#pragma once

#include "mibpcert/encoder.hpp"
#include "mibpcert/interval.hpp"
#include "mibpcert/nn.hpp"
#include "mibpcert/solver.hpp"
#include "mibpcert/threat.hpp"

#include <vector>

namespace mibpcert {

struct TrainConfig {
  double lr = 0.1;
  int batch = 100;
  int iterations = 0;  // derived from epochs when 0
  int epochs = 1;
  std::uint64_t shuffle_seed = 0;
  GradAggregation agg = GradAggregation::mean;
  SolveConfig solver;
  EncodeConfig encode;

  int resolved_iterations(int n) const {
    if (iterations > 0) return iterations;
    const BatchSchedule s{shuffle_seed, n, std::min(batch, n)};
    return epochs * s.iters_per_epoch();
  }
};

struct IterationStats {
  long total_nodes = 0;
  long max_nodes = 0;
  int non_proved_solves = 0;
  double max_width = 0.0;
};

/// Per-iteration sound parameter boxes plus solver statistics.
struct CertifiedParams {
  Params initial;
  std::vector<ParamBox> per_iteration;
  std::vector<IterationStats> stats;

  const ParamBox& final_box() const { return per_iteration.back(); }
  bool any_non_proved() const {
    for (const auto& s : stats)
      if (s.non_proved_solves > 0) return true;
    return false;
  }
};

/// Iterative certified training: each step seeds bounds by interval
/// propagation, encodes the step exactly, and proves min/max bounds for
/// every updated parameter. Every concrete trajectory on any admissible
/// dataset stays inside the returned boxes.
CertifiedParams train_certified(const ModelSpec& spec, const Params& initial,
                                const ThreatModel& threat, const TrainConfig& config);

struct Verdict {
  bool certified = false;
  int label = 0;  // meaningful only when certified

  static Verdict abstain() { return {false, 0}; }
  static Verdict of(int y) { return {true, y}; }
};

/// Certified prediction: a class is returned only if its logit provably
/// dominates every other logit for all parameters in the box (binary: the
/// single logit has a proven sign). Candidates are tried in descending
/// nominal-logit order.
Verdict predict_certified(const ModelSpec& spec, const ParamBox& bounds, const Eigen::VectorXd& x,
                          const SolveConfig& solver = {});

struct CertMetrics {
  double cert_rate = 0.0;  // non-abstain fraction
  double cert_acc = 0.0;   // certified-and-correct fraction
};

CertMetrics certified_accuracy(const ModelSpec& spec, const ParamBox& bounds,
                               const std::vector<Sample>& testset,
                               const SolveConfig& solver = {});

/// The solver's primal rounding heuristic for iteration encodings: projects
/// an LP point onto an admissible dataset and parameter box, then evaluates
/// one exact SGD step.
PrimalEvaluator make_step_evaluator(const IterationEncoding& encoding, const ThreatModel& threat);

}  // namespace mibpcert
