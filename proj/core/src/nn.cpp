#include "mibpcert/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace mibpcert {

void ModelSpec::validate() const {
  if (layer_dims.size() < 2)
    throw std::invalid_argument("ModelSpec: need at least input and output dims");
  for (int d : layer_dims)
    if (d < 1) throw std::invalid_argument("ModelSpec: all layer dims must be >= 1");
  if (loss == Loss::hinge_binary && output_dim() != 1)
    throw std::invalid_argument("ModelSpec: binary hinge requires output dim 1");
}

void check_shapes(const ModelSpec& spec, const Params& params) {
  const int layers = spec.num_weight_layers();
  if (static_cast<int>(params.weights.size()) != layers ||
      static_cast<int>(params.biases.size()) != layers)
    throw std::invalid_argument("Params: layer count mismatch");
  for (int l = 0; l < layers; ++l) {
    if (params.weights[l].rows() != spec.layer_dims[l + 1] ||
        params.weights[l].cols() != spec.layer_dims[l])
      throw std::invalid_argument("Params: weight shape mismatch at layer " + std::to_string(l));
    if (params.biases[l].size() != spec.layer_dims[l + 1])
      throw std::invalid_argument("Params: bias shape mismatch at layer " + std::to_string(l));
  }
}

void check_label(const ModelSpec& spec, int y) {
  if (spec.loss == Loss::hinge_binary) {
    if (y != -1 && y != 1) throw std::invalid_argument("label must be -1 or +1 for binary hinge");
  } else {
    if (y < 0 || y >= spec.output_dim())
      throw std::invalid_argument("label out of range for one-vs-all hinge");
  }
}

Params zero_params(const ModelSpec& spec) {
  spec.validate();
  Params p;
  for (int l = 0; l < spec.num_weight_layers(); ++l) {
    p.weights.push_back(Eigen::MatrixXd::Zero(spec.layer_dims[l + 1], spec.layer_dims[l]));
    p.biases.push_back(Eigen::VectorXd::Zero(spec.layer_dims[l + 1]));
  }
  return p;
}

Params init_params(const ModelSpec& spec, std::uint64_t seed, double scale) {
  Params p = zero_params(spec);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < spec.num_weight_layers(); ++l) {
    const double bound = scale / std::sqrt(static_cast<double>(spec.layer_dims[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < p.weights[l].cols(); ++j) p.weights[l](i, j) = dist(rng);
  }
  return p;
}

namespace {

double apply_act(Activation a, double v) {
  switch (a) {
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
    case Activation::tanh: return std::tanh(v);
  }
  return v;
}

// Derivative w.r.t. the pre-activation. The ReLU branch at exactly 0 is 0.
double act_deriv(Activation a, double pre) {
  switch (a) {
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-pre));
      return s * (1.0 - s);
    }
    case Activation::tanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

// Per-class hinge sign: +1 on the true class, -1 elsewhere; the single
// binary logit acts as the true-class score of label +1.
double hinge_sign(const ModelSpec& spec, int y, int c) {
  if (spec.loss == Loss::hinge_binary) return static_cast<double>(y);
  return c == y ? 1.0 : -1.0;
}

}  // namespace

ForwardTrace forward(const ModelSpec& spec, const Params& params, const Eigen::VectorXd& x) {
  check_shapes(spec, params);
  if (x.size() != spec.input_dim()) throw std::invalid_argument("forward: input size mismatch");
  ForwardTrace t;
  Eigen::VectorXd cur = x;
  const int layers = spec.num_weight_layers();
  for (int l = 0; l < layers; ++l) {
    Eigen::VectorXd pre = params.weights[l] * cur + params.biases[l];
    t.pre.push_back(pre);
    if (l + 1 < layers) {
      Eigen::VectorXd post(pre.size());
      for (Eigen::Index i = 0; i < pre.size(); ++i) post[i] = apply_act(spec.activation, pre[i]);
      t.post.push_back(post);
      cur = post;
    } else {
      t.post.push_back(pre);
    }
  }
  return t;
}

double hinge_loss(const ModelSpec& spec, const Eigen::VectorXd& logits, int y) {
  check_label(spec, y);
  if (logits.size() != spec.output_dim()) throw std::invalid_argument("hinge_loss: logit size mismatch");
  double total = 0.0;
  for (Eigen::Index c = 0; c < logits.size(); ++c) {
    const double margin = 1.0 - hinge_sign(spec, y, static_cast<int>(c)) * logits[c];
    total += margin > 0.0 ? margin : 0.0;
  }
  return total;
}

Eigen::VectorXd hinge_loss_grad(const ModelSpec& spec, const Eigen::VectorXd& logits, int y) {
  check_label(spec, y);
  if (logits.size() != spec.output_dim())
    throw std::invalid_argument("hinge_loss_grad: logit size mismatch");
  Eigen::VectorXd g(logits.size());
  for (Eigen::Index c = 0; c < logits.size(); ++c) {
    const double s = hinge_sign(spec, y, static_cast<int>(c));
    g[c] = s * logits[c] <= 1.0 ? -s : 0.0;
  }
  return g;
}

Params backward(const ModelSpec& spec, const Params& params, const Eigen::VectorXd& x, int y) {
  const ForwardTrace t = forward(spec, params, x);
  Params grads = zero_params(spec);
  const int layers = spec.num_weight_layers();

  Eigen::VectorXd delta = hinge_loss_grad(spec, t.logits(), y);  // dJ/dpre of the last layer
  for (int l = layers - 1; l >= 0; --l) {
    const Eigen::VectorXd& input = l == 0 ? x : t.post[l - 1];
    grads.weights[l] = delta * input.transpose();
    if (spec.with_bias) grads.biases[l] = delta;
    if (l > 0) {
      Eigen::VectorXd dpost = params.weights[l].transpose() * delta;
      delta.resize(dpost.size());
      for (Eigen::Index i = 0; i < dpost.size(); ++i)
        delta[i] = dpost[i] * act_deriv(spec.activation, t.pre[l - 1][i]);
    }
  }
  return grads;
}

Params sgd_step(const Params& params, const Params& grads, double lr) {
  if (lr <= 0.0) throw std::invalid_argument("sgd_step: learning rate must be positive");
  if (params.weights.size() != grads.weights.size())
    throw std::invalid_argument("sgd_step: layer count mismatch");
  Params next = params;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    next.weights[l] -= lr * grads.weights[l];
    next.biases[l] -= lr * grads.biases[l];
  }
  return next;
}

Params batch_gradient(const ModelSpec& spec, const Params& params,
                      const std::vector<Sample>& batch, GradAggregation agg) {
  if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  Params acc = zero_params(spec);
  for (const Sample& s : batch) {
    Params g = backward(spec, params, s.x, s.y);
    for (std::size_t l = 0; l < acc.weights.size(); ++l) {
      acc.weights[l] += g.weights[l];
      acc.biases[l] += g.biases[l];
    }
  }
  if (agg == GradAggregation::mean) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t l = 0; l < acc.weights.size(); ++l) {
      acc.weights[l] *= inv;
      acc.biases[l] *= inv;
    }
  }
  return acc;
}

int predict_class(const ModelSpec& spec, const Eigen::VectorXd& logits) {
  if (spec.loss == Loss::hinge_binary) return logits[0] >= 0.0 ? 1 : -1;
  Eigen::Index best = 0;
  logits.maxCoeff(&best);
  return static_cast<int>(best);
}

double accuracy(const ModelSpec& spec, const Params& params, const std::vector<Sample>& data) {
  if (data.empty()) throw std::invalid_argument("accuracy: empty dataset");
  int hits = 0;
  for (const Sample& s : data)
    if (predict_class(spec, forward(spec, params, s.x).logits()) == s.y) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<int> BatchSchedule::indices(int iteration) const {
  if (n <= 0 || batch <= 0) throw std::invalid_argument("BatchSchedule: n and batch must be positive");
  const int per_epoch = iters_per_epoch();
  const int epoch = iteration / per_epoch;
  const int slot = iteration % per_epoch;
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1));
  std::shuffle(perm.begin(), perm.end(), rng);
  const int begin = slot * batch;
  const int end = std::min(n, begin + batch);
  return std::vector<int>(perm.begin() + begin, perm.begin() + end);
}

std::vector<Params> run_sgd(const ModelSpec& spec, const Params& initial,
                            const std::vector<Sample>& data, double lr, int iterations,
                            const BatchSchedule& schedule, GradAggregation agg) {
  std::vector<Params> trajectory;
  Params cur = initial;
  for (int it = 0; it < iterations; ++it) {
    std::vector<Sample> batch;
    for (int idx : schedule.indices(it)) batch.push_back(data[idx]);
    cur = sgd_step(cur, batch_gradient(spec, cur, batch, agg), lr);
    trajectory.push_back(cur);
  }
  return trajectory;
}

ParamIndexer::ParamIndexer(const ModelSpec& spec) : spec_(spec) {
  spec.validate();
  for (int l = 0; l < spec.num_weight_layers(); ++l) {
    layer_offset_.push_back(total_);
    const int out = spec.layer_dims[l + 1];
    const int in = spec.layer_dims[l];
    total_ += out * in + (spec.with_bias ? out : 0);
  }
}

int ParamIndexer::weight_index(int layer, int out, int in) const {
  return layer_offset_[layer] + out * spec_.layer_dims[layer] + in;
}

int ParamIndexer::bias_index(int layer, int out) const {
  if (!spec_.with_bias) throw std::invalid_argument("ParamIndexer: model has no biases");
  const int rows = spec_.layer_dims[layer + 1];
  const int cols = spec_.layer_dims[layer];
  return layer_offset_[layer] + rows * cols + out;
}

std::string ParamIndexer::name(int flat) const {
  for (int l = spec_.num_weight_layers() - 1; l >= 0; --l) {
    if (flat < layer_offset_[l]) continue;
    const int local = flat - layer_offset_[l];
    const int cols = spec_.layer_dims[l];
    const int rows = spec_.layer_dims[l + 1];
    if (local < rows * cols)
      return "w" + std::to_string(l) + "[" + std::to_string(local / cols) + "," +
             std::to_string(local % cols) + "]";
    return "b" + std::to_string(l) + "[" + std::to_string(local - rows * cols) + "]";
  }
  throw std::invalid_argument("ParamIndexer: flat index out of range");
}

Eigen::VectorXd ParamIndexer::flatten(const Params& params) const {
  check_shapes(spec_, params);
  Eigen::VectorXd flat(total_);
  for (int l = 0; l < spec_.num_weight_layers(); ++l) {
    for (Eigen::Index u = 0; u < params.weights[l].rows(); ++u)
      for (Eigen::Index v = 0; v < params.weights[l].cols(); ++v)
        flat[weight_index(l, static_cast<int>(u), static_cast<int>(v))] = params.weights[l](u, v);
    if (spec_.with_bias)
      for (Eigen::Index u = 0; u < params.biases[l].size(); ++u)
        flat[bias_index(l, static_cast<int>(u))] = params.biases[l][u];
  }
  return flat;
}

Params ParamIndexer::unflatten(const Eigen::VectorXd& flat) const {
  if (flat.size() != total_) throw std::invalid_argument("ParamIndexer: flat size mismatch");
  Params p = zero_params(spec_);
  for (int l = 0; l < spec_.num_weight_layers(); ++l) {
    for (Eigen::Index u = 0; u < p.weights[l].rows(); ++u)
      for (Eigen::Index v = 0; v < p.weights[l].cols(); ++v)
        p.weights[l](u, v) = flat[weight_index(l, static_cast<int>(u), static_cast<int>(v))];
    if (spec_.with_bias)
      for (Eigen::Index u = 0; u < p.biases[l].size(); ++u)
        p.biases[l][u] = flat[bias_index(l, static_cast<int>(u))];
  }
  return p;
}

}  // namespace mibpcert
