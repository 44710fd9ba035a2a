#pragma once

// Confusion-matrix rates, ROC/AUC and two-group comparison statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "painfc/errors.hpp"

namespace painfc {

/// Binary labels / predictions, 0 or 1 per row.
using Labels = std::vector<std::uint8_t>;

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  [[nodiscard]] std::size_t positives() const { return tp + fn; }
  [[nodiscard]] std::size_t negatives() const { return tn + fp; }
  [[nodiscard]] std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// An exact ratio; value() is empty when the denominator is zero.
struct Rate {
  std::size_t numerator = 0;
  std::size_t denominator = 0;
  [[nodiscard]] bool defined() const { return denominator > 0; }
  [[nodiscard]] std::optional<double> value() const {
    if (!denominator) return std::nullopt;
    return static_cast<double>(numerator) / static_cast<double>(denominator);
  }
};

struct SensSpecAcc {
  Rate sensitivity;
  Rate specificity;
  Rate accuracy;
};

inline ConfusionCounts confusion(std::span<const std::uint8_t> labels, std::span<const std::uint8_t> predictions) {
  if (labels.size() != predictions.size()) throw ArgumentError("confusion: labels and predictions differ in length");
  if (labels.empty()) throw ArgumentError("confusion: empty input");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool y = labels[i] != 0, p = predictions[i] != 0;
    if (y && p) ++c.tp;
    else if (y) ++c.fn;
    else if (p) ++c.fp;
    else ++c.tn;
  }
  return c;
}

inline SensSpecAcc sens_spec_acc(const ConfusionCounts& c) {
  return {{c.tp, c.tp + c.fn}, {c.tn, c.tn + c.fp}, {c.tp + c.tn, c.total()}};
}

/// Predictions from probabilities: positive iff p >= threshold.
inline Labels threshold_predictions(std::span<const double> probs, double threshold = 0.5) {
  Labels out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= threshold ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // scores >= threshold are called positive at this point
};

struct RocCurve {
  std::vector<RocPoint> points;  // starts at (0,0), ends at (1,1)
  double auc = 0.0;
};

/// ROC by sweeping the distinct scores in descending order; tied scores move
/// together as one step, so the trapezoid area equals the Mann-Whitney concordance.
inline RocCurve roc_auc(std::span<const std::uint8_t> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw ArgumentError("roc_auc: labels and scores differ in length");
  std::size_t pos = 0;
  for (auto y : labels) pos += y != 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("roc_auc: both classes are required");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  double area2 = 0.0;  // twice the area in count units
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    std::size_t dtp = 0, dfp = 0;
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]]) ++dtp;
      else ++dfp;
      ++i;
    }
    area2 += static_cast<double>(dfp) * static_cast<double>(2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos), s});
  }
  curve.auc = area2 / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return curve;
}

// ---------------------------------------------------------------------------

struct GroupSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1)
  std::size_t n = 0;
};

inline GroupSummary summarize(std::span<const double> v) {
  GroupSummary g;
  g.n = v.size();
  if (v.empty()) return g;
  g.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - g.mean) * (x - g.mean);
    g.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return g;
}

struct GroupComparison {
  GroupSummary a;
  GroupSummary b;
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

/// Welch two-sample t-test (two-sided).
inline GroupComparison group_compare(std::span<const double> values_a, std::span<const double> values_b) {
  if (values_a.size() < 2 || values_b.size() < 2) throw ArgumentError("group_compare: each group needs >= 2 values");
  GroupComparison r{summarize(values_a), summarize(values_b)};
  const double va = r.a.sd * r.a.sd / static_cast<double>(r.a.n);
  const double vb = r.b.sd * r.b.sd / static_cast<double>(r.b.n);
  const double diff = r.a.mean - r.b.mean;
  const double se2 = va + vb;
  if (se2 == 0.0) {
    r.t = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
    r.df = static_cast<double>(r.a.n + r.b.n - 2);
    r.p_value = diff == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = diff / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / static_cast<double>(r.a.n - 1) + vb * vb / static_cast<double>(r.b.n - 1));
  const boost::math::students_t dist(r.df);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  r.p_value = std::clamp(r.p_value, 0.0, 1.0);
  return r;
}

struct ChiSquareResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

/// Pearson chi-square test of independence on an r x c contingency table.
inline ChiSquareResult chi_square_independence(const std::vector<std::vector<double>>& table) {
  if (table.size() < 2 || table.front().size() < 2) throw ArgumentError("chi-square needs at least a 2x2 table");
  const std::size_t rows = table.size(), cols = table.front().size();
  std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (table[i].size() != cols) throw ArgumentError("chi-square: ragged table");
    for (std::size_t j = 0; j < cols; ++j) {
      if (table[i][j] < 0) throw ArgumentError("chi-square: negative count");
      row_sum[i] += table[i][j];
      col_sum[j] += table[i][j];
      total += table[i][j];
    }
  }
  ChiSquareResult r;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double e = row_sum[i] * col_sum[j] / total;
      if (e <= 0) throw ArgumentError("chi-square: empty row or column");
      r.statistic += (table[i][j] - e) * (table[i][j] - e) / e;
    }
  r.df = static_cast<double>((rows - 1) * (cols - 1));
  const boost::math::chi_squared dist(r.df);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  return r;
}

}  // namespace painfc
