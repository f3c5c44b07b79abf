#pragma once

#include "mibpcert/nn.hpp"

#include <vector>

namespace mibpcert {

/// Closed real interval. Most operations are the exact interval-arithmetic
/// counterparts of the scalar ones (four-corner rule for products).
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double l, double h);
  static Interval point(double v) { return Interval(v, v); }
  static Interval hull(const Interval& a, const Interval& b);

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double v, double slack = 0.0) const { return v >= lo - slack && v <= hi + slack; }
  bool is_point() const { return lo == hi; }
};

Interval operator+(const Interval& a, const Interval& b);
Interval operator-(const Interval& a, const Interval& b);
Interval operator*(const Interval& a, const Interval& b);
Interval operator*(double c, const Interval& a);
Interval relu(const Interval& a);
Interval act_interval(Activation act, const Interval& a);

/// Elementwise lower/upper bounds with a (rows x cols) shape; vectors are
/// single-column tensors.
struct IntervalTensor {
  int rows = 0;
  int cols = 1;
  std::vector<Interval> data;

  IntervalTensor() = default;
  IntervalTensor(int r, int c);
  static IntervalTensor point(const Eigen::MatrixXd& m);
  static IntervalTensor point(const Eigen::VectorXd& v);
  static IntervalTensor box(const Eigen::MatrixXd& lo, const Eigen::MatrixXd& hi);

  Interval& at(int r, int c = 0) { return data[static_cast<std::size_t>(r) * cols + c]; }
  const Interval& at(int r, int c = 0) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  int size() const { return rows * cols; }

  bool contains(const Eigen::MatrixXd& m, double slack = 0.0) const;
  bool contains(const Eigen::VectorXd& v, double slack = 0.0) const;
  double max_width() const;
  void validate() const;  // lower <= upper, no NaN
};

/// Per-layer weight/bias boxes; the interval analogue of Params.
struct ParamBox {
  std::vector<IntervalTensor> weights;
  std::vector<IntervalTensor> biases;

  static ParamBox point(const ModelSpec& spec, const Params& p);
  bool contains(const ModelSpec& spec, const Params& p, double slack = 0.0) const;
  double max_width() const;
  Params midpoint(const ModelSpec& spec) const;
  Params lower(const ModelSpec& spec) const;
  Params upper(const ModelSpec& spec) const;
};

/// Boxes for every intermediate of one sample's forward/backward pass.
/// Carries everything the encoder needs to seed finite variable bounds.
struct BoxTrace {
  IntervalTensor input;               // the sample's admissible feature box
  std::vector<IntervalTensor> pre;    // per layer, before activation
  std::vector<IntervalTensor> post;   // per layer, after activation (last = logits)
  IntervalTensor logit_grad;          // dJ/dlogit per class
  IntervalTensor loss;                // scalar J
  std::vector<IntervalTensor> delta;  // dJ/dpre per layer
  ParamBox param_grad;                // dJ/dtheta boxes

  const IntervalTensor& logits() const { return post.back(); }
};

/// Interval forward pass: exact interval matrix arithmetic per layer,
/// activation applied elementwise ([l,u] -> [max(l,0), max(u,0)] for ReLU).
BoxTrace ibp_forward(const ModelSpec& spec, const ParamBox& params, const IntervalTensor& input);

/// Interval backward pass for ReLU networks; fills the gradient boxes of an
/// existing forward trace. When the label may flip (binary only), gradients
/// hull both label signs.
void ibp_backward(const ModelSpec& spec, const ParamBox& params, int y, BoxTrace& trace,
                  bool label_may_flip = false);

/// Interval mean (or sum) of per-sample gradient boxes.
ParamBox ibp_batch_gradient(const ModelSpec& spec, const std::vector<BoxTrace>& traces,
                            GradAggregation agg = GradAggregation::mean);

/// theta' = theta - lr * grad with interval subtraction; widths add exactly.
ParamBox ibp_sgd_step(const ParamBox& params, const ParamBox& grads, double lr);

struct IbpTrainResult {
  std::vector<ParamBox> per_iteration;  // boxes after iteration 1..T
  bool diverged = false;                // some width exceeded the cap
  int diverged_at = -1;
};

class ThreatModel;  // threat.hpp

struct IbpTrainConfig {
  double lr = 0.1;
  int iterations = 1;
  BatchSchedule schedule;
  GradAggregation agg = GradAggregation::mean;
  double divergence_cap = 1e6;
};

/// Interval-domain training baseline: per-iteration sound parameter boxes.
IbpTrainResult ibp_train(const ModelSpec& spec, const Params& initial,
                         const std::vector<Sample>& data, const ThreatModel& threat,
                         const IbpTrainConfig& config);

}  // namespace mibpcert
