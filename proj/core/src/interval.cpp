#include "mibpcert/interval.hpp"

#include "mibpcert/threat.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mibpcert {

Interval::Interval(double l, double h) : lo(l), hi(h) {
  if (std::isnan(l) || std::isnan(h)) throw std::invalid_argument("Interval: NaN bound");
  if (l > h) throw std::invalid_argument("Interval: lower > upper");
}

Interval Interval::hull(const Interval& a, const Interval& b) {
  return Interval(std::min(a.lo, b.lo), std::max(a.hi, b.hi));
}

Interval operator+(const Interval& a, const Interval& b) {
  return Interval(a.lo + b.lo, a.hi + b.hi);
}

Interval operator-(const Interval& a, const Interval& b) {
  return Interval(a.lo - b.hi, a.hi - b.lo);
}

Interval operator*(const Interval& a, const Interval& b) {
  const double c1 = a.lo * b.lo, c2 = a.lo * b.hi, c3 = a.hi * b.lo, c4 = a.hi * b.hi;
  return Interval(std::min(std::min(c1, c2), std::min(c3, c4)),
                  std::max(std::max(c1, c2), std::max(c3, c4)));
}

Interval operator*(double c, const Interval& a) {
  return c >= 0.0 ? Interval(c * a.lo, c * a.hi) : Interval(c * a.hi, c * a.lo);
}

Interval relu(const Interval& a) {
  return Interval(std::max(a.lo, 0.0), std::max(a.hi, 0.0));
}

Interval act_interval(Activation act, const Interval& a) {
  switch (act) {
    case Activation::relu: return relu(a);
    case Activation::sigmoid:  // monotone increasing
      return Interval(1.0 / (1.0 + std::exp(-a.lo)), 1.0 / (1.0 + std::exp(-a.hi)));
    case Activation::tanh: return Interval(std::tanh(a.lo), std::tanh(a.hi));
  }
  return a;
}

IntervalTensor::IntervalTensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c) {}

IntervalTensor IntervalTensor::point(const Eigen::MatrixXd& m) {
  IntervalTensor t(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int r = 0; r < t.rows; ++r)
    for (int c = 0; c < t.cols; ++c) t.at(r, c) = Interval::point(m(r, c));
  return t;
}

IntervalTensor IntervalTensor::point(const Eigen::VectorXd& v) {
  IntervalTensor t(static_cast<int>(v.size()), 1);
  for (int r = 0; r < t.rows; ++r) t.at(r) = Interval::point(v[r]);
  return t;
}

IntervalTensor IntervalTensor::box(const Eigen::MatrixXd& lo, const Eigen::MatrixXd& hi) {
  if (lo.rows() != hi.rows() || lo.cols() != hi.cols())
    throw std::invalid_argument("IntervalTensor: shape mismatch");
  IntervalTensor t(static_cast<int>(lo.rows()), static_cast<int>(lo.cols()));
  for (int r = 0; r < t.rows; ++r)
    for (int c = 0; c < t.cols; ++c) t.at(r, c) = Interval(lo(r, c), hi(r, c));
  return t;
}

bool IntervalTensor::contains(const Eigen::MatrixXd& m, double slack) const {
  if (m.rows() != rows || m.cols() != cols) return false;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (!at(r, c).contains(m(r, c), slack)) return false;
  return true;
}

bool IntervalTensor::contains(const Eigen::VectorXd& v, double slack) const {
  if (v.size() != rows || cols != 1) return false;
  for (int r = 0; r < rows; ++r)
    if (!at(r).contains(v[r], slack)) return false;
  return true;
}

double IntervalTensor::max_width() const {
  double w = 0.0;
  for (const Interval& iv : data) w = std::max(w, iv.width());
  return w;
}

void IntervalTensor::validate() const {
  for (const Interval& iv : data) {
    if (std::isnan(iv.lo) || std::isnan(iv.hi)) throw std::runtime_error("IntervalTensor: NaN");
    if (iv.lo > iv.hi) throw std::runtime_error("IntervalTensor: lower > upper");
  }
}

ParamBox ParamBox::point(const ModelSpec& spec, const Params& p) {
  check_shapes(spec, p);
  ParamBox b;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    b.weights.push_back(IntervalTensor::point(p.weights[l]));
    b.biases.push_back(IntervalTensor::point(Eigen::MatrixXd(p.biases[l])));
  }
  return b;
}

bool ParamBox::contains(const ModelSpec& spec, const Params& p, double slack) const {
  check_shapes(spec, p);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].contains(p.weights[l], slack)) return false;
    if (!biases[l].contains(Eigen::MatrixXd(p.biases[l]), slack)) return false;
  }
  return true;
}

double ParamBox::max_width() const {
  double w = 0.0;
  for (const auto& t : weights) w = std::max(w, t.max_width());
  for (const auto& t : biases) w = std::max(w, t.max_width());
  return w;
}

namespace {
Params select_point(const ModelSpec& spec, const ParamBox& box, int which) {
  Params p = zero_params(spec);
  for (std::size_t l = 0; l < box.weights.size(); ++l) {
    for (int u = 0; u < box.weights[l].rows; ++u)
      for (int v = 0; v < box.weights[l].cols; ++v) {
        const Interval& iv = box.weights[l].at(u, v);
        p.weights[l](u, v) = which < 0 ? iv.lo : which > 0 ? iv.hi : iv.mid();
      }
    for (int u = 0; u < box.biases[l].rows; ++u) {
      const Interval& iv = box.biases[l].at(u);
      p.biases[l][u] = which < 0 ? iv.lo : which > 0 ? iv.hi : iv.mid();
    }
  }
  return p;
}
}  // namespace

Params ParamBox::midpoint(const ModelSpec& spec) const { return select_point(spec, *this, 0); }
Params ParamBox::lower(const ModelSpec& spec) const { return select_point(spec, *this, -1); }
Params ParamBox::upper(const ModelSpec& spec) const { return select_point(spec, *this, 1); }

BoxTrace ibp_forward(const ModelSpec& spec, const ParamBox& params, const IntervalTensor& input) {
  spec.validate();
  if (input.rows != spec.input_dim() || input.cols != 1)
    throw std::invalid_argument("ibp_forward: input box shape mismatch");
  input.validate();

  BoxTrace t;
  t.input = input;
  IntervalTensor cur = input;
  const int layers = spec.num_weight_layers();
  for (int l = 0; l < layers; ++l) {
    const IntervalTensor& w = params.weights[l];
    const IntervalTensor& b = params.biases[l];
    IntervalTensor pre(w.rows, 1);
    for (int u = 0; u < w.rows; ++u) {
      Interval acc = b.at(u);
      for (int v = 0; v < w.cols; ++v) acc = acc + w.at(u, v) * cur.at(v);
      pre.at(u) = acc;
    }
    t.pre.push_back(pre);
    if (l + 1 < layers) {
      IntervalTensor post(pre.rows, 1);
      for (int u = 0; u < pre.rows; ++u) post.at(u) = act_interval(spec.activation, pre.at(u));
      t.post.push_back(post);
      cur = post;
    } else {
      t.post.push_back(pre);
    }
  }
  return t;
}

namespace {

// Hinge gradient box per class: -s when the margin is certainly active
// (s*logit <= 1 everywhere), 0 when certainly inactive (s*logit > 1
// everywhere), else the hull of both.
Interval hinge_grad_interval(const Interval& logit, double s) {
  const Interval m = s >= 0.0 ? Interval(s * logit.lo, s * logit.hi) : Interval(s * logit.hi, s * logit.lo);
  if (m.hi <= 1.0) return Interval::point(-s);
  if (m.lo > 1.0) return Interval::point(0.0);
  return s >= 0.0 ? Interval(-s, 0.0) : Interval(0.0, -s);
}

Interval hinge_loss_interval(const Interval& logit, double s) {
  const Interval margin = Interval::point(1.0) - (s * logit);
  return relu(margin);
}

}  // namespace

void ibp_backward(const ModelSpec& spec, const ParamBox& params, int y, BoxTrace& trace,
                  bool label_may_flip) {
  check_label(spec, y);
  if (label_may_flip && spec.loss != Loss::hinge_binary)
    throw std::invalid_argument("ibp_backward: label flips only supported for binary labels");
  const int layers = spec.num_weight_layers();
  const int k = spec.output_dim();

  trace.logit_grad = IntervalTensor(k, 1);
  trace.loss = IntervalTensor(1, 1);
  Interval loss_acc = Interval::point(0.0);
  for (int c = 0; c < k; ++c) {
    const double s = spec.loss == Loss::hinge_binary ? static_cast<double>(y) : (c == y ? 1.0 : -1.0);
    Interval g = hinge_grad_interval(trace.logits().at(c), s);
    Interval jc = hinge_loss_interval(trace.logits().at(c), s);
    if (label_may_flip) {
      g = Interval::hull(g, hinge_grad_interval(trace.logits().at(c), -s));
      jc = Interval::hull(jc, hinge_loss_interval(trace.logits().at(c), -s));
    }
    trace.logit_grad.at(c) = g;
    loss_acc = loss_acc + jc;
  }
  trace.loss.at(0) = loss_acc;

  trace.delta.assign(layers, IntervalTensor());
  trace.param_grad.weights.clear();
  trace.param_grad.biases.clear();
  for (int l = 0; l < layers; ++l) {
    trace.param_grad.weights.push_back(
        IntervalTensor(spec.layer_dims[l + 1], spec.layer_dims[l]));
    trace.param_grad.biases.push_back(IntervalTensor(spec.layer_dims[l + 1], 1));
  }

  IntervalTensor delta = trace.logit_grad;  // dJ/dpre at the last layer
  for (int l = layers - 1; l >= 0; --l) {
    trace.delta[l] = delta;
    if (l > 0) {
      if (spec.activation != Activation::relu)
        throw std::invalid_argument("ibp_backward: only ReLU backward is supported");
      IntervalTensor next(spec.layer_dims[l], 1);
      for (int v = 0; v < spec.layer_dims[l]; ++v) {
        Interval acc = Interval::point(0.0);
        for (int u = 0; u < spec.layer_dims[l + 1]; ++u)
          acc = acc + params.weights[l].at(u, v) * delta.at(u);
        // Gate through the ReLU: pass when certainly positive, zero when
        // certainly non-positive, else the hull with zero.
        const Interval pre = trace.pre[l - 1].at(v);
        if (pre.hi <= 0.0)
          next.at(v) = Interval::point(0.0);
        else if (pre.lo > 0.0)
          next.at(v) = acc;
        else
          next.at(v) = Interval::hull(Interval::point(0.0), acc);
      }
      delta = next;
    }
  }
  // Weight/bias gradient boxes: dJ/dw[u,v] = input_v * delta_u.
  for (int l = 0; l < layers; ++l) {
    for (int u = 0; u < spec.layer_dims[l + 1]; ++u) {
      for (int v = 0; v < spec.layer_dims[l]; ++v) {
        const Interval in_v = l == 0 ? trace.input.at(v) : trace.post[l - 1].at(v);
        trace.param_grad.weights[l].at(u, v) = in_v * trace.delta[l].at(u);
      }
      if (spec.with_bias) trace.param_grad.biases[l].at(u) = trace.delta[l].at(u);
    }
  }
}

ParamBox ibp_batch_gradient(const ModelSpec& spec, const std::vector<BoxTrace>& traces,
                            GradAggregation agg) {
  if (traces.empty()) throw std::invalid_argument("ibp_batch_gradient: empty batch");
  ParamBox acc;
  for (int l = 0; l < spec.num_weight_layers(); ++l) {
    acc.weights.push_back(IntervalTensor(spec.layer_dims[l + 1], spec.layer_dims[l]));
    acc.biases.push_back(IntervalTensor(spec.layer_dims[l + 1], 1));
  }
  for (const BoxTrace& t : traces) {
    for (std::size_t l = 0; l < acc.weights.size(); ++l) {
      for (std::size_t i = 0; i < acc.weights[l].data.size(); ++i)
        acc.weights[l].data[i] = acc.weights[l].data[i] + t.param_grad.weights[l].data[i];
      for (std::size_t i = 0; i < acc.biases[l].data.size(); ++i)
        acc.biases[l].data[i] = acc.biases[l].data[i] + t.param_grad.biases[l].data[i];
    }
  }
  if (agg == GradAggregation::mean) {
    const double inv = 1.0 / static_cast<double>(traces.size());
    for (std::size_t l = 0; l < acc.weights.size(); ++l) {
      for (Interval& iv : acc.weights[l].data) iv = inv * iv;
      for (Interval& iv : acc.biases[l].data) iv = inv * iv;
    }
  }
  return acc;
}

ParamBox ibp_sgd_step(const ParamBox& params, const ParamBox& grads, double lr) {
  if (lr <= 0.0) throw std::invalid_argument("ibp_sgd_step: learning rate must be positive");
  ParamBox next = params;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    for (std::size_t i = 0; i < params.weights[l].data.size(); ++i)
      next.weights[l].data[i] = params.weights[l].data[i] - lr * grads.weights[l].data[i];
    for (std::size_t i = 0; i < params.biases[l].data.size(); ++i)
      next.biases[l].data[i] = params.biases[l].data[i] - lr * grads.biases[l].data[i];
  }
  return next;
}

IbpTrainResult ibp_train(const ModelSpec& spec, const Params& initial,
                         const std::vector<Sample>& data, const ThreatModel& threat,
                         const IbpTrainConfig& config) {
  spec.validate();
  IbpTrainResult result;
  ParamBox box = ParamBox::point(spec, initial);
  for (int it = 0; it < config.iterations; ++it) {
    std::vector<BoxTrace> traces;
    for (int idx : config.schedule.indices(it)) {
      BoxTrace t = ibp_forward(spec, box, threat.input_box(idx));
      ibp_backward(spec, box, data[idx].y, t, threat.label_may_flip(idx));
      traces.push_back(std::move(t));
    }
    ParamBox grad = ibp_batch_gradient(spec, traces, config.agg);
    box = ibp_sgd_step(box, grad, config.lr);
    result.per_iteration.push_back(box);
    if (!result.diverged && box.max_width() > config.divergence_cap) {
      result.diverged = true;
      result.diverged_at = it;
    }
  }
  return result;
}

}  // namespace mibpcert
