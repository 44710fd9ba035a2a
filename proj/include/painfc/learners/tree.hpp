#pragma once

// CART growth on a squared-error criterion. For 0/1 targets the node SSE equals
// n * p * (1 - p), i.e. half the Gini impurity times n, so the same scan serves
// classification trees (Gini) and the regression trees inside gradient boosting.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "painfc/feature_pipeline.hpp"
#include "painfc/random.hpp"

namespace painfc {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output (class-1 frequency, or boosting step)
  double samples = 0.0;
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  [[nodiscard]] std::size_t leaf_of(std::span<const double> x) const {
    std::size_t n = 0;
    while (nodes[n].feature >= 0)
      n = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[n].feature)] <= nodes[n].threshold ? nodes[n].left
                                                                                                         : nodes[n].right);
    return n;
  }
  [[nodiscard]] double predict(std::span<const double> x) const { return nodes[leaf_of(x)].value; }
  bool operator==(const Tree&) const = default;
};

struct TreeGrowConfig {
  std::size_t max_depth = 0;         // 0 = unlimited
  std::size_t min_samples_leaf = 1;
  std::size_t max_features = 0;      // 0 = all features
  bool random_thresholds = false;    // extra-trees style split draw
};

struct SplitCandidate {
  std::size_t feature = 0;
  double threshold = 0.0;
  double child_sse = 0.0;
};

/// Lexicographic preference: lower child SSE, then lower feature index, then lower threshold.
inline bool better_split(const SplitCandidate& a, const std::optional<SplitCandidate>& b) {
  if (!b) return true;
  const double tol = 1e-12 * std::max(1.0, std::fabs(b->child_sse));
  if (a.child_sse < b->child_sse - tol) return true;
  if (a.child_sse > b->child_sse + tol) return false;
  if (a.feature != b->feature) return a.feature < b->feature;
  return a.threshold < b->threshold;
}

inline double sse_of(double n, double sum, double sum_sq) { return n > 0 ? std::max(0.0, sum_sq - sum * sum / n) : 0.0; }

/// Exhaustive scan of feature `f` over the rows in `idx`: every midpoint between
/// consecutive distinct values, subject to the minimum leaf size.
inline std::optional<SplitCandidate> best_split_on_feature(const FeatureMatrix& X, std::span<const double> y,
                                                           std::vector<std::size_t>& idx, std::size_t f,
                                                           std::size_t min_leaf) {
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    const double va = X.at(a, f), vb = X.at(b, f);
    return va < vb || (va == vb && a < b);
  });
  double tot = 0.0, tot_sq = 0.0;
  for (auto i : idx) {
    tot += y[i];
    tot_sq += y[i] * y[i];
  }
  const double n = static_cast<double>(idx.size());
  std::optional<SplitCandidate> best;
  double left = 0.0, left_sq = 0.0;
  for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
    left += y[idx[k]];
    left_sq += y[idx[k]] * y[idx[k]];
    const double a = X.at(idx[k], f), b = X.at(idx[k + 1], f);
    if (!(a < b)) continue;
    const std::size_t nl = k + 1, nr = idx.size() - nl;
    if (nl < min_leaf || nr < min_leaf) continue;
    double thr = a + (b - a) / 2.0;
    if (!(thr < b)) thr = a;
    const double child = sse_of(static_cast<double>(nl), left, left_sq) + sse_of(n - static_cast<double>(nl), tot - left, tot_sq - left_sq);
    SplitCandidate c{f, thr, child};
    if (better_split(c, best)) best = c;
  }
  return best;
}

class TreeGrower {
 public:
  TreeGrower(const FeatureMatrix& X, std::span<const double> y, TreeGrowConfig cfg, Rng& rng)
      : X_(X), y_(y), cfg_(cfg), rng_(rng), importance_(X.cols, 0.0) {}

  /// Grows a tree on the multiset of rows `idx` (repeats act as sample weights).
  Tree grow(std::vector<std::size_t> idx) {
    Tree t;
    grow_node(t, std::move(idx), 0);
    return t;
  }

  /// Total SSE decrease credited to each feature over every tree grown so far.
  [[nodiscard]] const std::vector<double>& raw_importance() const { return importance_; }
  void reset_importance() { std::fill(importance_.begin(), importance_.end(), 0.0); }

 private:
  int grow_node(Tree& t, std::vector<std::size_t> idx, std::size_t depth) {
    const int id = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    double sum = 0.0, sum_sq = 0.0;
    for (auto i : idx) {
      sum += y_[i];
      sum_sq += y_[i] * y_[i];
    }
    const double n = static_cast<double>(idx.size());
    const double node_sse = sse_of(n, sum, sum_sq);
    t.nodes[static_cast<std::size_t>(id)].samples = n;
    t.nodes[static_cast<std::size_t>(id)].value = n > 0 ? sum / n : 0.0;

    const bool depth_ok = cfg_.max_depth == 0 || depth < cfg_.max_depth;
    if (!depth_ok || node_sse <= 1e-12 * std::max(1.0, n) || idx.size() < 2 * cfg_.min_samples_leaf) return id;

    const auto split = find_split(idx);
    if (!split) return id;

    std::vector<std::size_t> li, ri;
    for (auto i : idx) (X_.at(i, split->feature) <= split->threshold ? li : ri).push_back(i);
    importance_[split->feature] += node_sse - split->child_sse;
    idx.clear();
    idx.shrink_to_fit();
    const int l = grow_node(t, std::move(li), depth + 1);
    const int r = grow_node(t, std::move(ri), depth + 1);
    auto& node = t.nodes[static_cast<std::size_t>(id)];
    node.feature = static_cast<int>(split->feature);
    node.threshold = split->threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  std::optional<SplitCandidate> find_split(std::vector<std::size_t>& idx) {
    std::vector<std::size_t> features(X_.cols);
    std::iota(features.begin(), features.end(), std::size_t{0});
    const bool subsample = cfg_.max_features > 0 && cfg_.max_features < X_.cols;
    if (subsample || cfg_.random_thresholds) shuffle(features, rng_);
    const std::size_t quota = subsample ? cfg_.max_features : X_.cols;

    std::optional<SplitCandidate> best;
    std::size_t examined = 0;
    for (auto f : features) {
      // Keep drawing past the quota only while no valid split has been found.
      if (examined >= quota && best) break;
      ++examined;
      const auto c = cfg_.random_thresholds ? random_split_on_feature(idx, f)
                                            : best_split_on_feature(X_, y_, idx, f, cfg_.min_samples_leaf);
      if (c && better_split(*c, best)) best = c;
    }
    return best;
  }

  std::optional<SplitCandidate> random_split_on_feature(const std::vector<std::size_t>& idx, std::size_t f) {
    double lo = X_.at(idx.front(), f), hi = lo;
    for (auto i : idx) {
      lo = std::min(lo, X_.at(i, f));
      hi = std::max(hi, X_.at(i, f));
    }
    if (!(lo < hi)) return std::nullopt;
    const double thr = lo + unit_uniform(rng_) * (hi - lo);
    double nl = 0, sl = 0, ql = 0, nr = 0, sr = 0, qr = 0;
    for (auto i : idx) {
      if (X_.at(i, f) <= thr) {
        nl += 1;
        sl += y_[i];
        ql += y_[i] * y_[i];
      } else {
        nr += 1;
        sr += y_[i];
        qr += y_[i] * y_[i];
      }
    }
    const auto min_leaf = static_cast<double>(cfg_.min_samples_leaf);
    if (nl < min_leaf || nr < min_leaf) return std::nullopt;
    return SplitCandidate{f, thr, sse_of(nl, sl, ql) + sse_of(nr, sr, qr)};
  }

  const FeatureMatrix& X_;
  std::span<const double> y_;
  TreeGrowConfig cfg_;
  Rng& rng_;
  std::vector<double> importance_;
};

/// Scales a non-negative vector to sum 1; an all-zero vector stays zero.
inline std::vector<double> normalized(std::vector<double> v) {
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  if (s > 0)
    for (auto& x : v) x /= s;
  return v;
}

}  // namespace painfc
