#pragma once

#include "mibpcert/interval.hpp"
#include "mibpcert/nn.hpp"
#include "mibpcert/opt_model.hpp"
#include "mibpcert/threat.hpp"

#include <vector>

namespace mibpcert {

struct EncodeConfig {
  GradAggregation agg = GradAggregation::mean;
  bool emit_input_gradients = false;  // also encode dJ/dinput rows (layer 0)
  int pwl_segments = 4;               // tangent count for sigmoid/tanh envelopes
};

/// Logical constraint counts per family, tracked while encoding (lowered row
/// counts differ; this follows the written-out optimization problem).
struct ConstraintCensus {
  int inputs = 0;
  int param_fixings = 0;
  int layer_equalities = 0;
  int relu_units = 0;
  int loss_and_grad = 0;
  int gradient_equalities = 0;
  int updates = 0;
  int total() const {
    return inputs + param_fixings + layer_equalities + relu_units + loss_and_grad +
           gradient_equalities + updates;
  }
};

/// Variable handles for one encoded sample.
struct SampleVars {
  int dataset_index = -1;
  int label = 0;
  std::vector<VarId> inputs;
  std::vector<std::vector<VarId>> pre;    // per layer
  std::vector<std::vector<VarId>> post;   // per layer (last = logits)
  std::vector<VarId> margins;             // per class
  VarId loss;
  std::vector<VarId> logit_grad;          // per class
  std::vector<std::vector<VarId>> delta;  // dJ/dpre per layer
  std::vector<VarId> param_grad;          // flat, ParamIndexer order
  VarId flip;                             // label-flip binary, invalid if absent
  VarId sparsity_z;                       // modification indicator, invalid if absent
  int relu_binaries = 0;
  int hinge_binaries = 0;
};

/// One training iteration lowered to a mixed-integer bilinear program. The
/// 2m min/max objectives over update_vars yield the next parameter box.
struct IterationEncoding {
  OptModel model;
  std::vector<VarId> param_vars;   // theta_i, flat
  std::vector<VarId> update_vars;  // theta_{i+1}, flat
  std::vector<SampleVars> samples;
  ConstraintCensus census;
  ModelSpec spec;
  double lr = 0.0;
  GradAggregation agg = GradAggregation::mean;
};

/// A forward-only query: fixed input, boxed parameters.
struct PredictionEncoding {
  OptModel model;
  std::vector<VarId> param_vars;
  std::vector<VarId> logit_vars;
  // gap_vars[u][v] = logit_u - logit_v for u != v (multi-class only)
  std::vector<std::vector<VarId>> gap_vars;
};

/// Encodes one training step of the batch under the threat model: inputs,
/// boxed parameters, forward pass, hinge loss, backward pass and the SGD
/// update, with every variable bound seeded from interval propagation.
IterationEncoding encode_iteration(const ModelSpec& spec, const ParamBox& params,
                                   const ThreatModel& threat,
                                   const std::vector<int>& batch_indices, double lr,
                                   const EncodeConfig& config = {});

PredictionEncoding encode_prediction(const ModelSpec& spec, const ParamBox& params,
                                     const Eigen::VectorXd& x, const EncodeConfig& config = {});

/// 2D convolution flattened to its affine form: one equality per output cell
/// with kernel-input products. Single stride pair, no padding.
struct Conv2dDims {
  int in_channels = 1, in_h = 0, in_w = 0;
  int out_channels = 1, k_h = 0, k_w = 0;
  int stride = 1;
  int out_h() const { return (in_h - k_h) / stride + 1; }
  int out_w() const { return (in_w - k_w) / stride + 1; }
};
std::vector<VarId> encode_conv2d(OptModel& model, const Conv2dDims& dims,
                                 const std::vector<VarId>& kernel,  // [co][ci][kh][kw] flat
                                 const std::vector<VarId>& bias,    // per out channel
                                 const std::vector<VarId>& input);  // [ci][h][w] flat

/// Sound linear envelopes for sigmoid/tanh over the input's bounds: the
/// fixed coefficient pair on [0,1], otherwise supporting lines of the
/// concave/convex envelopes (pwl_segments tangents).
VarId encode_activation_relaxed(OptModel& model, Activation kind, VarId input,
                                int pwl_segments = 4);

}  // namespace mibpcert
