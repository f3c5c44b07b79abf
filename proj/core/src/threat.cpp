#include "mibpcert/threat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mibpcert {

const double ThreatModel::kEqualityTol = 1e-9;

ThreatModel::ThreatModel(std::vector<Sample> original, int feature_dim)
    : original_(std::move(original)), feature_dim_(feature_dim) {
  if (original_.empty()) throw std::invalid_argument("ThreatModel: empty dataset");
  for (const Sample& s : original_)
    if (s.x.size() != feature_dim_)
      throw std::invalid_argument("ThreatModel: sample feature dim mismatch");
}

void ThreatModel::check_sample_indices(const std::vector<int>& idx) const {
  for (int i : idx)
    if (i < 0 || i >= size()) throw std::invalid_argument("ThreatModel: sample index out of range");
}

void ThreatModel::check_group(int begin, int size_) const {
  if (begin < 0 || size_ < 1 || begin + size_ > feature_dim_)
    throw std::invalid_argument("ThreatModel: one-hot group out of range");
  // Groups of all clauses must be pairwise disjoint.
  auto overlaps = [&](int b, int s) { return begin < b + s && b < begin + size_; };
  for (const auto& c : one_hot_free_)
    if (overlaps(c.begin, c.size)) throw std::invalid_argument("ThreatModel: overlapping one-hot groups");
  for (const auto& c : adjacent_down_)
    if (overlaps(c.begin, c.size)) throw std::invalid_argument("ThreatModel: overlapping one-hot groups");
}

bool ThreatModel::covers(const std::vector<int>& scope, int sample) const {
  return scope.empty() || std::find(scope.begin(), scope.end(), sample) != scope.end();
}

bool ThreatModel::row_is_one_hot(int sample, int begin, int size_, int* hot) const {
  const Eigen::VectorXd& x = original_[sample].x;
  int found = -1;
  for (int f = 0; f < size_; ++f) {
    const double v = x[begin + f];
    if (std::abs(v - 1.0) <= kEqualityTol) {
      if (found >= 0) return false;
      found = f;
    } else if (std::abs(v) > kEqualityTol) {
      return false;
    }
  }
  if (found < 0) return false;
  if (hot) *hot = found;
  return true;
}

ThreatModel& ThreatModel::add_linf(LinfBallClause c) {
  if (c.eps < 0.0) throw std::invalid_argument("ThreatModel: negative epsilon");
  check_sample_indices(c.samples);
  linf_.push_back(std::move(c));
  return *this;
}

ThreatModel& ThreatModel::add_one_hot_free(OneHotFreeClause c) {
  check_sample_indices(c.samples);
  check_group(c.begin, c.size);
  for (int i = 0; i < size(); ++i)
    if (covers(c.samples, i) && !row_is_one_hot(i, c.begin, c.size, nullptr))
      throw std::invalid_argument("ThreatModel: affected row is not one-hot");
  one_hot_free_.push_back(std::move(c));
  return *this;
}

ThreatModel& ThreatModel::add_adjacent_down(AdjacentDownClause c) {
  check_sample_indices(c.samples);
  check_group(c.begin, c.size);
  for (int i = 0; i < size(); ++i)
    if (covers(c.samples, i) && !row_is_one_hot(i, c.begin, c.size, nullptr))
      throw std::invalid_argument("ThreatModel: affected row is not one-hot");
  adjacent_down_.push_back(std::move(c));
  return *this;
}

ThreatModel& ThreatModel::add_sparsity(SparsityBudgetClause c) {
  check_sample_indices(c.samples);
  const int scope = c.samples.empty() ? size() : static_cast<int>(c.samples.size());
  if (c.budget < 0 || c.budget > scope)
    throw std::invalid_argument("ThreatModel: sparsity budget out of range");
  sparsity_.push_back(std::move(c));
  return *this;
}

ThreatModel& ThreatModel::add_monotone(MonotoneClause c) {
  check_sample_indices(c.samples);
  if (c.feature < 0 || c.feature >= feature_dim_)
    throw std::invalid_argument("ThreatModel: monotone feature out of range");
  monotone_.push_back(std::move(c));
  return *this;
}

ThreatModel& ThreatModel::add_conditional_freeze(ConditionalFreezeClause c) {
  freeze_.push_back(c);
  return *this;
}

ThreatModel& ThreatModel::add_label_flip(LabelFlipClause c) {
  check_sample_indices(c.samples);
  for (int i = 0; i < size(); ++i)
    if (covers(c.samples, i) && original_[i].y != -1 && original_[i].y != 1)
      throw std::invalid_argument("ThreatModel: label flips require binary -1/+1 labels");
  label_flip_.push_back(std::move(c));
  return *this;
}

bool ThreatModel::sample_frozen(int sample) const {
  for (const auto& c : freeze_)
    if (original_[sample].y == c.label) return true;
  return false;
}

bool ThreatModel::label_may_flip(int sample) const {
  if (sample_frozen(sample)) return false;
  for (const auto& c : label_flip_)
    if (covers(c.samples, sample)) return true;
  return false;
}

bool ThreatModel::in_sparsity_scope(int sample) const {
  for (const auto& c : sparsity_)
    if (covers(c.samples, sample)) return true;
  return false;
}

std::optional<int> ThreatModel::sparsity_budget() const {
  if (sparsity_.empty()) return std::nullopt;
  int budget = sparsity_.front().budget;
  for (const auto& c : sparsity_) budget = std::min(budget, c.budget);
  return budget;
}

ThreatModel::FeatureStructure ThreatModel::feature_structure(int sample) const {
  if (sample < 0 || sample >= size()) throw std::invalid_argument("ThreatModel: bad sample index");
  const Eigen::VectorXd& x = original_[sample].x;
  FeatureStructure fs;
  fs.box = IntervalTensor::point(x);
  if (sample_frozen(sample)) return fs;

  // Continuous freedom: intersection of every covering linf ball.
  std::vector<bool> has_linf(feature_dim_, false);
  std::vector<double> eps_eff(feature_dim_, 0.0);
  for (const auto& c : linf_) {
    if (!covers(c.samples, sample)) continue;
    for (int f = 0; f < feature_dim_; ++f) {
      eps_eff[f] = has_linf[f] ? std::min(eps_eff[f], c.eps) : c.eps;
      has_linf[f] = true;
    }
  }
  for (int f = 0; f < feature_dim_; ++f)
    if (has_linf[f]) fs.box.at(f) = Interval(x[f] - eps_eff[f], x[f] + eps_eff[f]);

  for (const auto& c : monotone_) {
    if (!covers(c.samples, sample)) continue;
    Interval& iv = fs.box.at(c.feature);
    if (c.direction == MonotoneDirection::non_decreasing)
      iv = Interval(std::max(iv.lo, x[c.feature]), std::max(iv.hi, x[c.feature]));
    else
      iv = Interval(std::min(iv.lo, x[c.feature]), std::min(iv.hi, x[c.feature]));
  }

  for (const auto& c : one_hot_free_) {
    if (!covers(c.samples, sample)) continue;
    FeatureStructure::OneHotGroup g;
    g.begin = c.begin;
    g.size = c.size;
    for (int f = 0; f < c.size; ++f) {
      g.allowed.push_back(f);
      fs.box.at(c.begin + f) = Interval(0.0, 1.0);
    }
    fs.groups.push_back(std::move(g));
  }

  for (const auto& c : adjacent_down_) {
    if (!covers(c.samples, sample)) continue;
    int hot = -1;
    row_is_one_hot(sample, c.begin, c.size, &hot);
    if (hot < 1) continue;  // smallest value stays fixed
    FeatureStructure::OneHotGroup g;
    g.begin = c.begin;
    g.size = c.size;
    g.allowed = {hot - 1, hot};
    fs.box.at(c.begin + hot - 1) = Interval(0.0, 1.0);
    fs.box.at(c.begin + hot) = Interval(0.0, 1.0);
    fs.groups.push_back(std::move(g));
  }
  return fs;
}

IntervalTensor ThreatModel::input_box(int sample) const { return feature_structure(sample).box; }

bool ThreatModel::is_member(const PerturbedDataset& candidate) const {
  if (static_cast<int>(candidate.samples.size()) != size()) return false;
  const double tol = kEqualityTol;

  for (int i = 0; i < size(); ++i) {
    const Sample& orig = original_[i];
    const Sample& cand = candidate.samples[i];
    if (cand.x.size() != feature_dim_) return false;

    if (cand.y != orig.y) {
      if (!label_may_flip(i) || cand.y != -orig.y) return false;
    }
    if (sample_frozen(i)) {
      if ((cand.x - orig.x).lpNorm<Eigen::Infinity>() > tol || cand.y != orig.y) return false;
      continue;
    }

    const FeatureStructure fs = feature_structure(i);
    for (int f = 0; f < feature_dim_; ++f)
      if (!fs.box.at(f).contains(cand.x[f], tol)) return false;

    // One-hot groups must hold a valid admissible completion.
    for (const auto& g : fs.groups) {
      int hot = -1;
      for (int f = 0; f < g.size; ++f) {
        const double v = cand.x[g.begin + f];
        if (std::abs(v - 1.0) <= tol) {
          if (hot >= 0) return false;
          hot = f;
        } else if (std::abs(v) > tol) {
          return false;
        }
      }
      if (hot < 0) return false;
      if (std::find(g.allowed.begin(), g.allowed.end(), hot) == g.allowed.end()) return false;
    }
  }

  for (const auto& c : sparsity_) {
    int modified = 0;
    for (int i = 0; i < size(); ++i) {
      if (!covers(c.samples, i)) continue;
      if ((candidate.samples[i].x - original_[i].x).lpNorm<Eigen::Infinity>() > tol) ++modified;
    }
    if (modified > c.budget) return false;
  }
  return true;
}

PerturbedDataset ThreatModel::sample(std::mt19937_64& rng) const {
  PerturbedDataset out;
  out.samples = original_;

  // Pick which in-scope samples may actually change under sparsity budgets.
  std::vector<bool> may_change(size(), true);
  for (const auto& c : sparsity_) {
    std::vector<int> scope;
    for (int i = 0; i < size(); ++i)
      if (covers(c.samples, i)) scope.push_back(i);
    std::uniform_int_distribution<int> count_dist(0, c.budget);
    const int chosen = count_dist(rng);
    std::shuffle(scope.begin(), scope.end(), rng);
    for (std::size_t j = static_cast<std::size_t>(chosen); j < scope.size(); ++j)
      may_change[scope[j]] = false;
  }

  for (int i = 0; i < size(); ++i) {
    if (sample_frozen(i) || !may_change[i]) continue;
    const FeatureStructure fs = feature_structure(i);
    Sample& s = out.samples[i];

    std::vector<bool> in_group(feature_dim_, false);
    for (const auto& g : fs.groups)
      for (int f = 0; f < g.size; ++f) in_group[g.begin + f] = true;

    for (int f = 0; f < feature_dim_; ++f) {
      if (in_group[f]) continue;
      const Interval& iv = fs.box.at(f);
      if (iv.is_point()) continue;
      std::uniform_real_distribution<double> dist(iv.lo, iv.hi);
      s.x[f] = dist(rng);
    }
    for (const auto& g : fs.groups) {
      std::uniform_int_distribution<std::size_t> pick(0, g.allowed.size() - 1);
      const int hot = g.allowed[pick(rng)];
      for (int f = 0; f < g.size; ++f) s.x[g.begin + f] = f == hot ? 1.0 : 0.0;
    }
    if (label_may_flip(i)) {
      std::uniform_int_distribution<int> coin(0, 1);
      if (coin(rng) == 1) s.y = -s.y;
    }
  }
  return out;
}

PerturbedDataset ThreatModel::project(const PerturbedDataset& candidate) const {
  PerturbedDataset out;
  out.samples = original_;
  if (candidate.samples.size() != original_.size()) return out;

  for (int i = 0; i < size(); ++i) {
    if (sample_frozen(i)) continue;
    const FeatureStructure fs = feature_structure(i);
    Sample& s = out.samples[i];
    const Sample& cand = candidate.samples[i];
    if (cand.x.size() != feature_dim_) continue;

    std::vector<bool> in_group(feature_dim_, false);
    for (const auto& g : fs.groups)
      for (int f = 0; f < g.size; ++f) in_group[g.begin + f] = true;

    for (int f = 0; f < feature_dim_; ++f) {
      if (in_group[f]) continue;
      const Interval& iv = fs.box.at(f);
      s.x[f] = std::clamp(cand.x[f], iv.lo, iv.hi);
    }
    for (const auto& g : fs.groups) {
      // Nearest admissible completion: hot index with the largest value.
      int best = g.allowed.front();
      for (int h : g.allowed)
        if (cand.x[g.begin + h] > cand.x[g.begin + best]) best = h;
      for (int f = 0; f < g.size; ++f) s.x[g.begin + f] = f == best ? 1.0 : 0.0;
    }
    if (label_may_flip(i) && cand.y == -original_[i].y) s.y = cand.y;
  }

  // Enforce sparsity budgets by reverting the least-perturbed extras.
  for (const auto& c : sparsity_) {
    std::vector<std::pair<double, int>> modified;  // (deviation, sample)
    for (int i = 0; i < size(); ++i) {
      if (!covers(c.samples, i)) continue;
      const double dev = (out.samples[i].x - original_[i].x).lpNorm<Eigen::Infinity>();
      if (dev > kEqualityTol) modified.push_back({dev, i});
    }
    if (static_cast<int>(modified.size()) > c.budget) {
      std::sort(modified.begin(), modified.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
      });
      for (std::size_t j = static_cast<std::size_t>(c.budget); j < modified.size(); ++j)
        out.samples[modified[j].second].x = original_[modified[j].second].x;
    }
  }
  return out;
}

ThreatModel linf(const std::vector<Sample>& dataset, double eps) {
  if (dataset.empty()) throw std::invalid_argument("linf: empty dataset");
  ThreatModel t(dataset, static_cast<int>(dataset.front().x.size()));
  t.add_linf({{}, eps});
  return t;
}

ThreatModel categorical_missing(const std::vector<Sample>& dataset,
                                const std::vector<std::pair<int, int>>& groups,
                                const std::function<bool(int sample, int group)>& affected) {
  if (dataset.empty()) throw std::invalid_argument("categorical_missing: empty dataset");
  ThreatModel t(dataset, static_cast<int>(dataset.front().x.size()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<int> samples;
    for (int i = 0; i < static_cast<int>(dataset.size()); ++i)
      if (affected(i, static_cast<int>(g))) samples.push_back(i);
    if (samples.empty()) continue;
    t.add_one_hot_free({samples, groups[g].first, groups[g].second});
  }
  return t;
}

ThreatModel over_reporting(const std::vector<Sample>& dataset, int group_begin, int group_size) {
  if (dataset.empty()) throw std::invalid_argument("over_reporting: empty dataset");
  ThreatModel t(dataset, static_cast<int>(dataset.front().x.size()));
  t.add_adjacent_down({{}, group_begin, group_size});
  return t;
}

}  // namespace mibpcert
