#pragma once

#include "mibpcert/interval.hpp"
#include "mibpcert/nn.hpp"

#include <functional>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace mibpcert {

enum class MonotoneDirection { non_decreasing, non_increasing };

/// Admissible perturbations of a training set, expressed as a conjunction of
/// clauses over the original samples. Features not touched by any clause are
/// pinned to their original values.
struct LinfBallClause {
  std::vector<int> samples;  // empty = every sample
  double eps = 0.0;
};

/// A one-hot group of an affected sample may take any valid completion
/// (models a missing categorical answer).
struct OneHotFreeClause {
  std::vector<int> samples;
  int begin = 0;  // first feature of the group
  int size = 0;   // group width
};

/// The hot index k of the group may stay at k or move down to k-1; rows
/// already at the smallest value stay fixed (models over-reporting).
struct AdjacentDownClause {
  std::vector<int> samples;  // empty = every sample
  int begin = 0;
  int size = 0;
};

/// At most `budget` of the in-scope samples may differ from the original.
struct SparsityBudgetClause {
  std::vector<int> samples;  // empty = every sample
  int budget = 0;
};

struct MonotoneClause {
  std::vector<int> samples;  // empty = every sample
  int feature = 0;
  MonotoneDirection direction = MonotoneDirection::non_decreasing;
};

/// Samples whose original label equals `label` are frozen entirely.
struct ConditionalFreezeClause {
  int label = 0;
};

/// Binary labels of in-scope samples may flip sign.
struct LabelFlipClause {
  std::vector<int> samples;
};

struct PerturbedDataset {
  std::vector<Sample> samples;
};

class ThreatModel {
 public:
  ThreatModel(std::vector<Sample> original, int feature_dim);

  // Clause builders; each validates indices and returns *this for chaining.
  ThreatModel& add_linf(LinfBallClause c);
  ThreatModel& add_one_hot_free(OneHotFreeClause c);
  ThreatModel& add_adjacent_down(AdjacentDownClause c);
  ThreatModel& add_sparsity(SparsityBudgetClause c);
  ThreatModel& add_monotone(MonotoneClause c);
  ThreatModel& add_conditional_freeze(ConditionalFreezeClause c);
  ThreatModel& add_label_flip(LabelFlipClause c);

  const std::vector<Sample>& original() const { return original_; }
  int size() const { return static_cast<int>(original_.size()); }
  int feature_dim() const { return feature_dim_; }

  /// Exact membership test for a candidate perturbed dataset. Equality of
  /// untouched features is checked to 1e-9.
  bool is_member(const PerturbedDataset& candidate) const;

  /// Draws an admissible perturbed dataset; every output satisfies is_member.
  PerturbedDataset sample(std::mt19937_64& rng) const;

  /// Projects an arbitrary candidate onto the admissible set (used by the
  /// solver's primal rounding heuristic). The result satisfies is_member.
  PerturbedDataset project(const PerturbedDataset& candidate) const;

  /// Elementwise hull of the admissible feature values of one sample.
  IntervalTensor input_box(int sample) const;

  bool sample_frozen(int sample) const;
  bool label_may_flip(int sample) const;
  bool in_sparsity_scope(int sample) const;
  std::optional<int> sparsity_budget() const;

  /// Structural description of one sample's admissible inputs, consumed by
  /// the encoder: plain box features plus one-hot group constraints.
  struct FeatureStructure {
    struct OneHotGroup {
      int begin = 0;
      int size = 0;
      std::vector<int> allowed;  // admissible hot indices
    };
    IntervalTensor box;                 // hull bounds per feature
    std::vector<OneHotGroup> groups;    // binary-encoded groups
  };
  FeatureStructure feature_structure(int sample) const;

  static const double kEqualityTol;

 private:
  void check_sample_indices(const std::vector<int>& idx) const;
  void check_group(int begin, int size) const;
  bool covers(const std::vector<int>& scope, int sample) const;
  bool row_is_one_hot(int sample, int begin, int size, int* hot) const;

  std::vector<Sample> original_;
  int feature_dim_ = 0;
  std::vector<LinfBallClause> linf_;
  std::vector<OneHotFreeClause> one_hot_free_;
  std::vector<AdjacentDownClause> adjacent_down_;
  std::vector<SparsityBudgetClause> sparsity_;
  std::vector<MonotoneClause> monotone_;
  std::vector<ConditionalFreezeClause> freeze_;
  std::vector<LabelFlipClause> label_flip_;
};

/// Every feature of every sample may move within +-eps.
ThreatModel linf(const std::vector<Sample>& dataset, double eps);

/// The given one-hot groups of the flagged samples range over all valid
/// completions. `affected(sample, group)` selects which are free.
ThreatModel categorical_missing(const std::vector<Sample>& dataset,
                                const std::vector<std::pair<int, int>>& groups,
                                const std::function<bool(int sample, int group)>& affected);

/// Over-reporting: within the group, hot index k >= 1 may move to k-1.
ThreatModel over_reporting(const std::vector<Sample>& dataset, int group_begin, int group_size);

}  // namespace mibpcert
