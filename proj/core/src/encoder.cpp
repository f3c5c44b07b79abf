#include "mibpcert/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mibpcert {

namespace {

Interval var_box(const OptModel& m, VarId v) { return m.bounds(v); }

bool degenerate(const Interval& iv) { return iv.width() <= 1e-12; }

// Accumulates coef*a*b into a linear expression. Parameter variables are
// never substituted by constants even when their box is degenerate: the
// product stays a bilinear term so later iterations keep the dependency.
struct ExprBuilder {
  explicit ExprBuilder(OptModel& m) : model(m) {}
  OptModel& model;
  std::vector<LinTerm> terms;
  double constant = 0.0;

  void add_var(VarId v, double coef) { terms.push_back({v, coef}); }

  void add_product(VarId a, bool a_is_param, VarId b, double coef, const std::string& name) {
    const Interval ba = var_box(model, a);
    const Interval bb = var_box(model, b);
    if (degenerate(bb)) {
      // The non-parameter side collapsed; the (possibly parameter) side
      // stays a variable term.
      terms.push_back({a, coef * bb.mid()});
      return;
    }
    if (degenerate(ba) && !a_is_param) {
      terms.push_back({b, coef * ba.mid()});
      return;
    }
    const VarId p = model.add_mccormick(a, b, name);
    terms.push_back({p, coef});
  }
};

struct IntervalExpr {
  Interval value = Interval::point(0.0);
  void add(const Interval& a, const Interval& b) { value = value + a * b; }
  void add(const Interval& a, double c) { value = value + c * a; }
};

struct Encoder {
  const ModelSpec& spec;
  const ParamBox& box;
  const EncodeConfig& config;
  ParamIndexer indexer;
  IterationEncoding out;

  Encoder(const ModelSpec& s, const ParamBox& b, const EncodeConfig& c)
      : spec(s), box(b), config(c), indexer(s) {
    out.spec = s;
    out.agg = c.agg;
  }

  OptModel& model() { return out.model; }

  Interval param_box_entry(int flat) const {
    for (int l = 0; l < spec.num_weight_layers(); ++l) {
      const int rows = spec.layer_dims[l + 1], cols = spec.layer_dims[l];
      for (int u = 0; u < rows; ++u)
        for (int v = 0; v < cols; ++v)
          if (indexer.weight_index(l, u, v) == flat) return box.weights[l].at(u, v);
      if (spec.with_bias)
        for (int u = 0; u < rows; ++u)
          if (indexer.bias_index(l, u) == flat) return box.biases[l].at(u);
    }
    throw std::logic_error("param_box_entry: bad index");
  }

  void encode_params() {
    out.param_vars.resize(indexer.count());
    for (int l = 0; l < spec.num_weight_layers(); ++l) {
      const int rows = spec.layer_dims[l + 1], cols = spec.layer_dims[l];
      for (int u = 0; u < rows; ++u)
        for (int v = 0; v < cols; ++v) {
          const Interval iv = box.weights[l].at(u, v);
          const int flat = indexer.weight_index(l, u, v);
          out.param_vars[flat] =
              model().add_var(iv.lo, iv.hi, VarKind::continuous, indexer.name(flat));
          if (degenerate(iv)) ++out.census.param_fixings;
        }
      if (spec.with_bias)
        for (int u = 0; u < rows; ++u) {
          const Interval iv = box.biases[l].at(u);
          const int flat = indexer.bias_index(l, u);
          out.param_vars[flat] =
              model().add_var(iv.lo, iv.hi, VarKind::continuous, indexer.name(flat));
          if (degenerate(iv)) ++out.census.param_fixings;
        }
    }
  }

  SampleVars encode_sample(const ThreatModel& threat, int dataset_index, const BoxTrace& trace,
                           std::vector<VarId>& sparsity_zs) {
    SampleVars sv;
    sv.dataset_index = dataset_index;
    sv.label = threat.original()[dataset_index].y;
    const std::string tag = "s" + std::to_string(dataset_index) + ".";

    encode_input(threat, dataset_index, trace, sv, tag, sparsity_zs);
    encode_forward(trace, sv, tag);
    encode_loss_and_grad(trace, sv, tag);
    encode_backward(trace, sv, tag);
    return sv;
  }

  void encode_input(const ThreatModel& threat, int idx, const BoxTrace& trace, SampleVars& sv,
                    const std::string& tag, std::vector<VarId>& sparsity_zs) {
    const auto fs = threat.feature_structure(idx);
    std::vector<bool> in_group(threat.feature_dim(), false);
    for (const auto& g : fs.groups)
      for (int f = 0; f < g.size; ++f) in_group[g.begin + f] = true;

    for (int f = 0; f < threat.feature_dim(); ++f) {
      const Interval iv = fs.box.at(f);
      const VarKind kind = in_group[f] ? VarKind::binary : VarKind::continuous;
      sv.inputs.push_back(model().add_var(iv.lo, iv.hi, kind, tag + "x" + std::to_string(f)));
      ++out.census.inputs;
    }
    for (const auto& g : fs.groups) {
      LinearConstraint sum;
      for (int f = 0; f < g.size; ++f) sum.terms.push_back({sv.inputs[g.begin + f], 1.0});
      sum.cmp = Cmp::eq;
      sum.rhs = 1.0;
      model().add_constraint(std::move(sum));
    }

    if (threat.label_may_flip(idx)) {
      if (spec.loss != Loss::hinge_binary)
        throw std::invalid_argument("encode_input: label flips need binary hinge loss");
      sv.flip = model().add_var(0.0, 1.0, VarKind::binary, tag + "flip");
    }

    if (threat.sparsity_budget() && threat.in_sparsity_scope(idx) &&
        !threat.sample_frozen(idx)) {
      sv.sparsity_z = model().add_var(0.0, 1.0, VarKind::binary, tag + "z");
      sparsity_zs.push_back(sv.sparsity_z);
      const Eigen::VectorXd& orig = threat.original()[idx].x;
      for (int f = 0; f < threat.feature_dim(); ++f) {
        const Interval iv = fs.box.at(f);
        const double up = iv.hi - orig[f];
        const double down = orig[f] - iv.lo;
        if (up > 0.0)
          model().add_constraint({{{sv.inputs[f], 1.0}, {sv.sparsity_z, -up}}, Cmp::le, orig[f]});
        if (down > 0.0)
          model().add_constraint(
              {{{sv.inputs[f], -1.0}, {sv.sparsity_z, -down}}, Cmp::le, -orig[f]});
      }
    }
    (void)trace;
  }

  void encode_forward(const BoxTrace& trace, SampleVars& sv, const std::string& tag) {
    std::vector<VarId> cur = sv.inputs;
    const int layers = spec.num_weight_layers();
    for (int l = 0; l < layers; ++l) {
      const int rows = spec.layer_dims[l + 1];
      const int cols = spec.layer_dims[l];
      std::vector<VarId> pre(rows);
      for (int u = 0; u < rows; ++u) {
        ExprBuilder eb{model()};
        for (int v = 0; v < cols; ++v)
          eb.add_product(out.param_vars[indexer.weight_index(l, u, v)], /*a_is_param=*/true,
                         cur[v], 1.0,
                         tag + "p" + std::to_string(l) + "_" + std::to_string(u) + "_" +
                             std::to_string(v));
        if (spec.with_bias) eb.add_var(out.param_vars[indexer.bias_index(l, u)], 1.0);
        const Interval pb = trace.pre[l].at(u);
        pre[u] = model().add_var(pb.lo, pb.hi, VarKind::continuous,
                                 tag + "pre" + std::to_string(l) + "." + std::to_string(u));
        model().add_definition(pre[u], eb.terms, eb.constant);
        ++out.census.layer_equalities;
      }
      sv.pre.push_back(pre);

      if (l + 1 == layers) {
        sv.post.push_back(pre);  // logits
        break;
      }
      std::vector<VarId> post(rows);
      for (int u = 0; u < rows; ++u) {
        switch (spec.activation) {
          case Activation::relu:
            post[u] = encode_relu_unit(pre[u], trace.pre[l].at(u),
                                       tag + "a" + std::to_string(l) + "." + std::to_string(u),
                                       sv);
            break;
          case Activation::sigmoid:
          case Activation::tanh:
            post[u] = encode_activation_relaxed(model(), spec.activation, pre[u],
                                                config.pwl_segments);
            break;
        }
      }
      sv.post.push_back(post);
      cur = post;
    }
  }

  // Stable units short-circuit: identity or zero without a binary. Unstable
  // units get one indicator reused later by the gradient gate. A box [0, u]
  // counts as unstable: the gradient gate still needs its zero branch.
  VarId encode_relu_unit(VarId pre, const Interval& pb, const std::string& name, SampleVars& sv) {
    ++out.census.relu_units;
    if (pb.hi <= 0.0) return model().add_fixed(0.0, name + ".off");
    if (pb.lo > 0.0) return pre;
    const VarId a = model().add_var(0.0, 1.0, VarKind::binary, name + ".on");
    ++sv.relu_binaries;
    const VarId post =
        model().add_var(0.0, std::max(pb.hi, 0.0), VarKind::continuous, name + ".out");
    BranchConstraint br;
    br.indicator = a;
    br.value = post;
    br.active_expr = {{pre, 1.0}};
    br.inactive_expr = {};
    br.active_guard = LinearConstraint{{{pre, 1.0}}, Cmp::ge, 0.0};
    br.inactive_guard = LinearConstraint{{{pre, 1.0}}, Cmp::le, 0.0};
    model().add_branch_bigM(std::move(br));
    relu_indicator_.push_back({pre, a});
    return post;
  }

  VarId relu_indicator_for(VarId pre) const {
    for (const auto& [p, a] : relu_indicator_)
      if (p == pre) return a;
    return VarId{};
  }

  // Hinge loss and its gradient share one indicator per class, keeping both
  // consistent. The boundary (margin exactly 0) belongs to the active side.
  void encode_loss_and_grad(const BoxTrace& trace, SampleVars& sv, const std::string& tag) {
    const int k = spec.output_dim();
    const std::vector<VarId>& logits = sv.post.back();
    std::vector<VarId> j_vars;
    for (int c = 0; c < k; ++c) {
      const double s =
          spec.loss == Loss::hinge_binary ? static_cast<double>(sv.label) : (c == sv.label ? 1.0 : -1.0);
      const Interval lb = trace.logits().at(c);
      Interval mb = Interval::point(1.0) - (s * lb);
      if (sv.flip.valid()) mb = Interval::hull(mb, Interval::point(1.0) - (-s * lb));

      // margin = 1 - s'*logit, with s' flipped by the label-flip binary.
      ExprBuilder eb{model()};
      eb.constant = 1.0;
      eb.add_var(logits[c], -s);
      if (sv.flip.valid()) eb.add_product(sv.flip, false, logits[c], 2.0 * s, tag + "fm");
      const VarId margin = model().add_var(mb.lo, mb.hi, VarKind::continuous,
                                           tag + "margin" + std::to_string(c));
      model().add_definition(margin, eb.terms, eb.constant);
      sv.margins.push_back(margin);

      const Interval gb = trace.logit_grad.at(c);
      VarId jc, dc;
      if (mb.lo >= 0.0) {  // hinge certainly active
        jc = margin;
        if (!sv.flip.valid()) {
          dc = model().add_fixed(-s, tag + "dJ" + std::to_string(c));
        } else {
          dc = model().add_var(gb.lo, gb.hi, VarKind::continuous, tag + "dJ" + std::to_string(c));
          model().add_definition(dc, {{sv.flip, 2.0 * s}}, -s);
        }
      } else if (mb.hi < 0.0) {  // certainly inactive
        jc = model().add_fixed(0.0, tag + "J" + std::to_string(c));
        dc = model().add_fixed(0.0, tag + "dJ" + std::to_string(c));
      } else {
        const VarId h = model().add_var(0.0, 1.0, VarKind::binary, tag + "h" + std::to_string(c));
        ++sv.hinge_binaries;
        jc = model().add_var(0.0, std::max(mb.hi, 0.0), VarKind::continuous,
                             tag + "J" + std::to_string(c));
        BranchConstraint br;
        br.indicator = h;
        br.value = jc;
        br.active_expr = {{margin, 1.0}};
        br.inactive_expr = {};
        br.active_guard = LinearConstraint{{{margin, 1.0}}, Cmp::ge, 0.0};
        br.inactive_guard = LinearConstraint{{{margin, 1.0}}, Cmp::le, 0.0};
        model().add_branch_bigM(std::move(br));

        dc = model().add_var(gb.lo, gb.hi, VarKind::continuous, tag + "dJ" + std::to_string(c));
        if (!sv.flip.valid()) {
          model().add_definition(dc, {{h, -s}});
        } else {
          const VarId fh = model().add_mccormick(sv.flip, h, tag + "fh" + std::to_string(c));
          model().add_definition(dc, {{h, -s}, {fh, 2.0 * s}});
        }
      }
      out.census.loss_and_grad += 2;
      sv.logit_grad.push_back(dc);
      j_vars.push_back(jc);
    }

    if (k == 1) {
      sv.loss = j_vars[0];
    } else {
      Interval jb = Interval::point(0.0);
      for (int c = 0; c < k; ++c) jb = jb + var_box(model(), j_vars[c]);
      sv.loss = model().add_var(jb.lo, jb.hi, VarKind::continuous, tag + "J");
      std::vector<LinTerm> terms;
      for (VarId j : j_vars) terms.push_back({j, 1.0});
      model().add_definition(sv.loss, terms);
    }
  }

  void encode_backward(const BoxTrace& trace, SampleVars& sv, const std::string& tag) {
    const int layers = spec.num_weight_layers();
    if (layers > 1 && spec.activation != Activation::relu)
      throw std::invalid_argument("encode_backward: training encodings support ReLU only");
    sv.delta.assign(layers, {});
    sv.delta[layers - 1] = sv.logit_grad;
    sv.param_grad.assign(indexer.count(), VarId{});

    for (int l = layers - 1; l >= 0; --l) {
      const int rows = spec.layer_dims[l + 1];
      const int cols = spec.layer_dims[l];
      const std::vector<VarId>& inputs = l == 0 ? sv.inputs : sv.post[l - 1];

      for (int u = 0; u < rows; ++u) {
        const VarId dpre = sv.delta[l][u];
        const Interval db = trace.delta[l].at(u);
        for (int v = 0; v < cols; ++v) {
          const Interval ib = l == 0 ? trace.input.at(v) : trace.post[l - 1].at(v);
          sv.param_grad[indexer.weight_index(l, u, v)] = gradient_product(
              inputs[v], ib, dpre, db, trace.param_grad.weights[l].at(u, v),
              tag + "gw" + std::to_string(l) + "_" + std::to_string(u) + "_" + std::to_string(v));
          ++out.census.gradient_equalities;
        }
        if (spec.with_bias) sv.param_grad[indexer.bias_index(l, u)] = dpre;
      }

      if (l > 0) {
        // dJ/dpost of layer l-1, then gate through the shared ReLU indicator.
        std::vector<VarId> next(cols);
        for (int v = 0; v < cols; ++v) {
          ExprBuilder eb{model()};
          IntervalExpr ib;
          for (int u = 0; u < rows; ++u) {
            eb.add_product(out.param_vars[indexer.weight_index(l, u, v)], true, sv.delta[l][u],
                           1.0,
                           tag + "wd" + std::to_string(l) + "_" + std::to_string(u) + "_" +
                               std::to_string(v));
            ib.add(box.weights[l].at(u, v), trace.delta[l].at(u));
          }
          const VarId dpost = model().add_var(ib.value.lo, ib.value.hi, VarKind::continuous,
                                              tag + "dpost" + std::to_string(l - 1) + "." +
                                                  std::to_string(v));
          model().add_definition(dpost, eb.terms, eb.constant);
          ++out.census.gradient_equalities;

          const Interval pb = trace.pre[l - 1].at(v);
          const Interval gateb = trace.delta[l - 1].at(v);
          if (pb.lo > 0.0) {
            next[v] = dpost;  // certainly passing
          } else if (pb.hi <= 0.0) {
            next[v] = model().add_fixed(0.0, tag + "dpre" + std::to_string(l - 1) + "." +
                                                 std::to_string(v));
          } else {
            const VarId a = relu_indicator_for(sv.pre[l - 1][v]);
            if (!a.valid()) throw std::logic_error("encode_backward: missing ReLU indicator");
            const VarId dpre =
                model().add_var(gateb.lo, gateb.hi, VarKind::continuous,
                                tag + "dpre" + std::to_string(l - 1) + "." + std::to_string(v));
            BranchConstraint br;
            br.indicator = a;
            br.value = dpre;
            br.active_expr = {{dpost, 1.0}};
            br.inactive_expr = {};
            model().add_branch_bigM(std::move(br));
            next[v] = dpre;
          }
        }
        sv.delta[l - 1] = next;
      } else if (config.emit_input_gradients) {
        for (int v = 0; v < cols; ++v) {
          ExprBuilder eb{model()};
          IntervalExpr ib;
          for (int u = 0; u < rows; ++u) {
            eb.add_product(out.param_vars[indexer.weight_index(l, u, v)], true, sv.delta[l][u],
                           1.0, tag + "wx" + std::to_string(u) + "_" + std::to_string(v));
            ib.add(box.weights[l].at(u, v), trace.delta[l].at(u));
          }
          const VarId dx = model().add_var(ib.value.lo, ib.value.hi, VarKind::continuous,
                                           tag + "dx" + std::to_string(v));
          model().add_definition(dx, eb.terms, eb.constant);
          ++out.census.gradient_equalities;
        }
      }
    }
  }

  // g = input * dpre with collapsed forms when either side is fixed.
  VarId gradient_product(VarId input, const Interval& ib, VarId dpre, const Interval& db,
                         const Interval& gb, const std::string& name) {
    if (degenerate(db)) {
      if (std::abs(db.mid()) == 0.0) return model().add_fixed(0.0, name);
      if (degenerate(ib)) return model().add_fixed(ib.mid() * db.mid(), name);
      const VarId g = model().add_var(gb.lo, gb.hi, VarKind::continuous, name);
      model().add_definition(g, {{input, db.mid()}});
      return g;
    }
    if (degenerate(ib)) {
      const VarId g = model().add_var(gb.lo, gb.hi, VarKind::continuous, name);
      model().add_definition(g, {{dpre, ib.mid()}});
      return g;
    }
    return model().add_mccormick(input, dpre, name);
  }

  void encode_update(const std::vector<BoxTrace>& traces, double lr) {
    out.lr = lr;
    const double factor =
        config.agg == GradAggregation::mean ? lr / static_cast<double>(out.samples.size()) : lr;
    out.update_vars.resize(indexer.count());
    for (int j = 0; j < indexer.count(); ++j) {
      std::vector<LinTerm> terms;
      terms.push_back({out.param_vars[j], 1.0});
      Interval agg = Interval::point(0.0);
      for (std::size_t s = 0; s < out.samples.size(); ++s) {
        const VarId g = out.samples[s].param_grad[j];
        const Interval gbox = grad_box(traces[s], j);
        agg = agg + gbox;
        const Interval gb = var_box(model(), g);
        if (degenerate(gb) && gb.mid() == 0.0) continue;  // exact zero contribution
        terms.push_back({g, -factor});
      }
      const Interval ub = param_box_entry(j) - (factor * agg);
      const int flat = j;
      out.update_vars[j] = model().add_var(ub.lo, ub.hi, VarKind::continuous,
                                           indexer.name(flat) + "'");
      model().add_definition(out.update_vars[j], terms);
      ++out.census.updates;
    }
  }

  Interval grad_box(const BoxTrace& trace, int flat) const {
    for (int l = 0; l < spec.num_weight_layers(); ++l) {
      const int rows = spec.layer_dims[l + 1], cols = spec.layer_dims[l];
      for (int u = 0; u < rows; ++u)
        for (int v = 0; v < cols; ++v)
          if (indexer.weight_index(l, u, v) == flat) return trace.param_grad.weights[l].at(u, v);
      if (spec.with_bias)
        for (int u = 0; u < rows; ++u)
          if (indexer.bias_index(l, u) == flat) return trace.param_grad.biases[l].at(u);
    }
    throw std::logic_error("grad_box: bad index");
  }

 private:
  std::vector<std::pair<VarId, VarId>> relu_indicator_;
};

}  // namespace

IterationEncoding encode_iteration(const ModelSpec& spec, const ParamBox& params,
                                   const ThreatModel& threat,
                                   const std::vector<int>& batch_indices, double lr,
                                   const EncodeConfig& config) {
  spec.validate();
  if (batch_indices.empty()) throw std::invalid_argument("encode_iteration: empty batch");
  if (spec.activation != Activation::relu && spec.num_weight_layers() > 1)
    throw std::invalid_argument("encode_iteration: training encodings support ReLU only");
  if (lr <= 0.0) throw std::invalid_argument("encode_iteration: learning rate must be positive");

  Encoder enc(spec, params, config);
  enc.encode_params();

  std::vector<BoxTrace> traces;
  std::vector<VarId> sparsity_zs;
  for (int idx : batch_indices) {
    if (idx < 0 || idx >= threat.size())
      throw std::invalid_argument("encode_iteration: batch index out of range");
    check_label(spec, threat.original()[idx].y);
    BoxTrace trace = ibp_forward(spec, params, threat.input_box(idx));
    ibp_backward(spec, params, threat.original()[idx].y, trace, threat.label_may_flip(idx));
    enc.out.samples.push_back(
        enc.encode_sample(threat, idx, trace, sparsity_zs));
    traces.push_back(std::move(trace));
  }

  if (const auto budget = threat.sparsity_budget(); budget && !sparsity_zs.empty()) {
    LinearConstraint row;
    for (VarId z : sparsity_zs) row.terms.push_back({z, 1.0});
    row.cmp = Cmp::le;
    row.rhs = static_cast<double>(*budget);
    enc.model().add_constraint(std::move(row));
  }

  enc.encode_update(traces, lr);
  for (VarId u : enc.out.update_vars) {
    enc.model().add_objective({u, Sense::minimize});
    enc.model().add_objective({u, Sense::maximize});
  }
  enc.model().finalize();
  return std::move(enc.out);
}

PredictionEncoding encode_prediction(const ModelSpec& spec, const ParamBox& params,
                                     const Eigen::VectorXd& x, const EncodeConfig& config) {
  spec.validate();
  if (x.size() != spec.input_dim())
    throw std::invalid_argument("encode_prediction: input size mismatch");

  Encoder enc(spec, params, config);
  enc.encode_params();

  PredictionEncoding out;
  BoxTrace trace = ibp_forward(spec, params, IntervalTensor::point(x));

  SampleVars sv;
  sv.dataset_index = 0;
  for (int f = 0; f < spec.input_dim(); ++f)
    sv.inputs.push_back(enc.model().add_fixed(x[f], "x" + std::to_string(f)));
  enc.encode_forward(trace, sv, "q.");

  out.logit_vars = sv.post.back();
  const int k = spec.output_dim();
  if (k > 1) {
    out.gap_vars.assign(k, std::vector<VarId>(k, VarId{}));
    for (int u = 0; u < k; ++u)
      for (int v = 0; v < k; ++v) {
        if (u == v) continue;
        const Interval gb =
            var_box(enc.model(), out.logit_vars[u]) - var_box(enc.model(), out.logit_vars[v]);
        const VarId d = enc.model().add_var(gb.lo, gb.hi, VarKind::continuous,
                                            "gap" + std::to_string(u) + "_" + std::to_string(v));
        enc.model().add_definition(d, {{out.logit_vars[u], 1.0}, {out.logit_vars[v], -1.0}});
        out.gap_vars[u][v] = d;
      }
  }
  enc.model().finalize();
  out.param_vars = enc.out.param_vars;
  out.model = std::move(enc.out.model);
  return out;
}

std::vector<VarId> encode_conv2d(OptModel& model, const Conv2dDims& d,
                                 const std::vector<VarId>& kernel,
                                 const std::vector<VarId>& bias,
                                 const std::vector<VarId>& input) {
  if (static_cast<int>(kernel.size()) != d.out_channels * d.in_channels * d.k_h * d.k_w)
    throw std::invalid_argument("encode_conv2d: kernel size mismatch");
  if (static_cast<int>(bias.size()) != d.out_channels)
    throw std::invalid_argument("encode_conv2d: bias size mismatch");
  if (static_cast<int>(input.size()) != d.in_channels * d.in_h * d.in_w)
    throw std::invalid_argument("encode_conv2d: input size mismatch");
  if (d.out_h() < 1 || d.out_w() < 1) throw std::invalid_argument("encode_conv2d: empty output");

  auto kidx = [&](int co, int ci, int i, int j) {
    return ((co * d.in_channels + ci) * d.k_h + i) * d.k_w + j;
  };
  auto iidx = [&](int ci, int r, int c) { return (ci * d.in_h + r) * d.in_w + c; };

  std::vector<VarId> out;
  for (int co = 0; co < d.out_channels; ++co) {
    for (int r = 0; r < d.out_h(); ++r) {
      for (int c = 0; c < d.out_w(); ++c) {
        ExprBuilder eb{model};
        Interval range = model.bounds(bias[co]);
        for (int ci = 0; ci < d.in_channels; ++ci)
          for (int i = 0; i < d.k_h; ++i)
            for (int j = 0; j < d.k_w; ++j) {
              const VarId k = kernel[kidx(co, ci, i, j)];
              const VarId x = input[iidx(ci, r * d.stride + i, c * d.stride + j)];
              eb.add_product(k, true, x, 1.0, "conv");
              range = range + model.bounds(k) * model.bounds(x);
            }
        eb.add_var(bias[co], 1.0);
        const VarId y = model.add_var(range.lo, range.hi, VarKind::continuous,
                                      "y" + std::to_string(co) + "_" + std::to_string(r) + "_" +
                                          std::to_string(c));
        model.add_definition(y, eb.terms, eb.constant);
        out.push_back(y);
      }
    }
  }
  return out;
}

namespace {

struct EnvelopeLine {
  double slope, intercept;
};

// Supporting lines of the concave (upper) envelope of an S-shaped function
// (convex below zero, concave above) on [l, u].
std::vector<EnvelopeLine> upper_envelope(double l, double u, double (*f)(double),
                                         double (*fp)(double), int segments) {
  std::vector<EnvelopeLine> lines;
  const double fl = f(l), fu = f(u);
  if (u <= 0.0) {  // convex region: the chord dominates
    const double m = (fu - fl) / (u - l);
    lines.push_back({m, fl - m * l});
    return lines;
  }
  double start = l;
  if (l < 0.0) {
    // Tangency point t >= 0 where the chord from (l, f(l)) touches f:
    // h(t) = f'(t)(t - l) - (f(t) - f(l)) falls from >= 0 toward its root.
    auto h = [&](double t) { return fp(t) * (t - l) - (f(t) - fl); };
    if (h(u) >= 0.0) {
      // The chord never touches inside: it upper-bounds f on all of [l, u].
      const double m = (fu - fl) / (u - l);
      lines.push_back({m, fl - m * l});
      return lines;
    }
    double a = 0.0, b = u;
    for (int i = 0; i < 60; ++i) {
      const double mid = 0.5 * (a + b);
      (h(mid) >= 0.0 ? a : b) = mid;
    }
    const double t = a;
    const double m = fp(t);
    lines.push_back({m, f(t) - m * t});
    start = t;
  }
  for (int i = 0; i <= segments; ++i) {
    const double t = start + (u - start) * i / segments;
    const double m = fp(t);
    lines.push_back({m, f(t) - m * t});
  }
  return lines;
}

double sigmoid_f(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double sigmoid_fp(double x) {
  const double s = sigmoid_f(x);
  return s * (1.0 - s);
}
double tanh_f(double x) { return std::tanh(x); }
double tanh_fp(double x) {
  const double t = std::tanh(x);
  return 1.0 - t * t;
}

}  // namespace

VarId encode_activation_relaxed(OptModel& model, Activation kind, VarId input,
                                int pwl_segments) {
  if (kind == Activation::relu)
    throw std::invalid_argument("encode_activation_relaxed: use the exact ReLU encoding");
  const Interval ib = model.bounds(input);
  const Interval ob = act_interval(kind, ib);
  const VarId out = model.add_var(ob.lo, ob.hi, VarKind::continuous);

  auto add_upper = [&](double m, double c) {
    model.add_constraint({{{out, 1.0}, {input, -m}}, Cmp::le, c});
  };
  auto add_lower = [&](double m, double c) {
    model.add_constraint({{{out, 1.0}, {input, -m}}, Cmp::ge, c});
  };

  if (ib.lo >= 0.0 && ib.hi <= 1.0) {
    // Fixed coefficient pair on [0, 1].
    if (kind == Activation::sigmoid) {
      add_lower(0.25, 0.48);
      add_upper(0.25, 0.5);
    } else {
      add_lower(0.76, 0.0);
      add_upper(1.0, 0.0);
    }
    return out;
  }

  double (*f)(double) = kind == Activation::sigmoid ? sigmoid_f : tanh_f;
  double (*fp)(double) = kind == Activation::sigmoid ? sigmoid_fp : tanh_fp;
  const double slack = 1e-9;
  for (const auto& ln : upper_envelope(ib.lo, ib.hi, f, fp, pwl_segments))
    add_upper(ln.slope, ln.intercept + slack);
  // Lower envelope by symmetry: -f(-x) has the same S-shape for both.
  auto neg_f = kind == Activation::sigmoid
                   ? +[](double x) { return -sigmoid_f(-x); }
                   : +[](double x) { return -tanh_f(-x); };
  auto neg_fp = kind == Activation::sigmoid ? +[](double x) { return sigmoid_fp(-x); }
                                            : +[](double x) { return tanh_fp(-x); };
  for (const auto& ln : upper_envelope(-ib.hi, -ib.lo, neg_f, neg_fp, pwl_segments))
    add_lower(ln.slope, -ln.intercept - slack);
  return out;
}

}  // namespace mibpcert
