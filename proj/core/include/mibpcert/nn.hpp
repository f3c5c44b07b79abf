#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace mibpcert {

enum class Activation { relu, sigmoid, tanh };
enum class Loss { hinge_binary, hinge_one_vs_all };
enum class GradAggregation { mean, sum };

/// Architecture and loss of a fully connected network. layer_dims runs from
/// the input dimension to the output dimension; the activation applies to
/// every layer except the last, which stays linear (the logits).
struct ModelSpec {
  std::vector<int> layer_dims;
  Activation activation = Activation::relu;
  Loss loss = Loss::hinge_binary;
  bool with_bias = true;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int num_weight_layers() const { return static_cast<int>(layer_dims.size()) - 1; }

  /// Throws std::invalid_argument on inconsistent dimensions or a binary
  /// loss paired with a multi-logit output.
  void validate() const;
};

/// Concrete weights and biases, one matrix/vector pair per weight layer.
/// weights[l] is (layer_dims[l+1] x layer_dims[l]). Biases are kept (as
/// zeros) even for bias-free models so shapes stay uniform; they are
/// excluded from the flat parameter indexing when with_bias is false.
struct Params {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// One labeled point. Binary labels are -1/+1; one-vs-all labels are class
/// indices 0..k-1.
struct Sample {
  Eigen::VectorXd x;
  int y = 0;
};

/// Every intermediate of a forward pass: pre[l] before the activation,
/// post[l] after it (post on the last layer equals pre: logits).
struct ForwardTrace {
  std::vector<Eigen::VectorXd> pre;
  std::vector<Eigen::VectorXd> post;
  const Eigen::VectorXd& logits() const { return post.back(); }
};

void check_shapes(const ModelSpec& spec, const Params& params);
void check_label(const ModelSpec& spec, int y);

Params zero_params(const ModelSpec& spec);

/// Uniform(-scale/sqrt(fan_in), +scale/sqrt(fan_in)) weights, zero biases.
Params init_params(const ModelSpec& spec, std::uint64_t seed, double scale = 1.0);

ForwardTrace forward(const ModelSpec& spec, const Params& params, const Eigen::VectorXd& x);

/// max(0, 1 - y*logit) for binary labels; sum of per-class hinges with sign
/// +1 on the true class and -1 elsewhere for one-vs-all.
double hinge_loss(const ModelSpec& spec, const Eigen::VectorXd& logits, int y);

/// dJ/dlogit. The hinge counts its boundary as active: the gradient is -s_c
/// whenever s_c * logit_c <= 1.
Eigen::VectorXd hinge_loss_grad(const ModelSpec& spec, const Eigen::VectorXd& logits, int y);

/// Exact gradients of the hinge loss w.r.t. every weight and bias. The ReLU
/// subgradient at a pre-activation of exactly 0 is 0.
Params backward(const ModelSpec& spec, const Params& params, const Eigen::VectorXd& x, int y);

Params sgd_step(const Params& params, const Params& grads, double lr);

/// Gradient of the mean (or sum) loss over a batch.
Params batch_gradient(const ModelSpec& spec, const Params& params,
                      const std::vector<Sample>& batch,
                      GradAggregation agg = GradAggregation::mean);

int predict_class(const ModelSpec& spec, const Eigen::VectorXd& logits);

double accuracy(const ModelSpec& spec, const Params& params, const std::vector<Sample>& data);

/// Deterministic mini-batch schedule: a fresh seeded shuffle per epoch,
/// chunked into consecutive batches (the last chunk may be short).
struct BatchSchedule {
  std::uint64_t seed = 0;
  int n = 0;
  int batch = 0;

  int iters_per_epoch() const { return (n + batch - 1) / batch; }
  std::vector<int> indices(int iteration) const;
};

/// Plain SGD; returns the parameter trajectory theta_1..theta_T (the caller
/// already holds theta_0).
std::vector<Params> run_sgd(const ModelSpec& spec, const Params& initial,
                            const std::vector<Sample>& data, double lr, int iterations,
                            const BatchSchedule& schedule,
                            GradAggregation agg = GradAggregation::mean);

/// Flat parameter indexing shared by the solver objectives, certified-bound
/// tensors and reports: per layer, weights row-major, then biases.
struct ParamIndexer {
  explicit ParamIndexer(const ModelSpec& spec);

  int count() const { return total_; }
  int weight_index(int layer, int out, int in) const;
  int bias_index(int layer, int out) const;
  std::string name(int flat) const;

  Eigen::VectorXd flatten(const Params& params) const;
  Params unflatten(const Eigen::VectorXd& flat) const;

 private:
  ModelSpec spec_;
  std::vector<int> layer_offset_;
  int total_ = 0;
};

}  // namespace mibpcert
