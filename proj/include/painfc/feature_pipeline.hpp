#pragma once

// Feature matrix assembly, median imputation, standardization and SMOTE.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "painfc/data_model.hpp"
#include "painfc/errors.hpp"
#include "painfc/eval_metrics.hpp"
#include "painfc/pharma_ladder.hpp"
#include "painfc/random.hpp"
#include "painfc/strings.hpp"
#include "painfc/text_extract.hpp"

namespace painfc {

enum class ColumnKind { continuous, onehot, ordinal, binary };

inline std::string_view to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::onehot: return "onehot";
    case ColumnKind::ordinal: return "ordinal";
    default: return "binary";
  }
}

struct ColumnMeta {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::string source;                    // module that produced the column
  std::vector<std::size_t> imputed_rows; // rows whose value was filled by imputation
};

inline constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();
inline bool is_absent(double v) { return std::isnan(v); }

/// Row-major numeric table with one binary label per row. Absent entries are NaN
/// until imputation; a matrix handed to a learner has none.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<ColumnMeta> columns;
  Labels labels;
  std::vector<std::string> row_ids;
  std::vector<std::uint8_t> synthetic;  // 1 for SMOTE-generated rows

  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  [[nodiscard]] std::vector<std::string> names() const {
    std::vector<std::string> n;
    n.reserve(columns.size());
    for (const auto& c : columns) n.push_back(c.name);
    return n;
  }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }

  [[nodiscard]] std::size_t count_positive() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  }

  void push_row(std::span<const double> v, std::uint8_t label, std::string id, std::uint8_t is_synthetic = 0) {
    if (v.size() != cols) throw SchemaError("push_row: width mismatch");
    values.insert(values.end(), v.begin(), v.end());
    labels.push_back(label);
    row_ids.push_back(std::move(id));
    synthetic.push_back(is_synthetic);
    ++rows;
  }

  /// Copy of the given rows, in the given order.
  [[nodiscard]] FeatureMatrix select_rows(std::span<const std::size_t> idx) const {
    FeatureMatrix out;
    out.cols = cols;
    out.columns = columns;
    for (auto& c : out.columns) c.imputed_rows.clear();
    std::map<std::size_t, std::size_t> remap;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto r = idx[k];
      if (r >= rows) throw ArgumentError("select_rows: index out of range");
      out.push_row(row(r), labels[r], row_ids[r], synthetic[r]);
      remap.emplace(r, k);
    }
    for (std::size_t c = 0; c < cols; ++c)
      for (auto r : columns[c].imputed_rows)
        if (auto it = remap.find(r); it != remap.end()) out.columns[c].imputed_rows.push_back(it->second);
    return out;
  }
};

inline FeatureMatrix empty_like(const FeatureMatrix& m) {
  FeatureMatrix out;
  out.cols = m.cols;
  out.columns = m.columns;
  for (auto& c : out.columns) c.imputed_rows.clear();
  return out;
}

/// Delimited export: row_id,label,synthetic,<feature columns>. Absent values are empty cells.
inline void write_matrix_csv(const FeatureMatrix& m, std::ostream& out) {
  out << "row_id,label,synthetic";
  for (const auto& c : m.columns) out << ',' << str::csv_field(c.name);
  out << '\n';
  for (std::size_t r = 0; r < m.rows; ++r) {
    out << str::csv_field(m.row_ids[r]) << ',' << int(m.labels[r]) << ',' << int(m.synthetic[r]);
    for (std::size_t c = 0; c < m.cols; ++c) {
      out << ',';
      if (!is_absent(m.at(r, c))) out << str::fmt_double(m.at(r, c));
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// assembly

struct AssembleSpec {
  std::vector<std::string> lab_codes;  // empty: union of codes present in the cohort, sorted
  int threshold = kPainThreshold;
  bool require_label = true;  // false: keep unlabeled rows (label 0) for scoring new records
};

struct AssembleResult {
  FeatureMatrix matrix;
  std::vector<Exclusion> dropped;  // rows with no label at the horizon
  std::vector<std::string> lab_codes;
  std::vector<std::string> unlabeled;  // kept without a label (require_label = false)
};

inline std::vector<std::string> cohort_lab_codes(const Cohort& cohort) {
  std::set<std::string> codes;
  for (const auto& r : cohort.records)
    for (const auto& [k, v] : r.labs) codes.insert(k);
  return {codes.begin(), codes.end()};
}

namespace detail {
inline std::string window_tag(double w) { return str::fmt_double(w) + "h"; }
}  // namespace detail

/// Builds one row per patient with a label at `horizon`. Dose windows used are the
/// profile windows that end strictly before the horizon.
inline AssembleResult assemble(const Cohort& cohort, const std::map<std::string, PainWindowScores>& scores,
                               const std::map<std::string, TierDoseProfile>& profiles, Horizon horizon,
                               const AssembleSpec& spec = {}) {
  AssembleResult res;
  res.lab_codes = spec.lab_codes.empty() ? cohort_lab_codes(cohort) : spec.lab_codes;
  const double horizon_h = horizon_hours(horizon);

  std::vector<double> windows;
  if (!cohort.records.empty()) {
    auto it = profiles.find(cohort.records.front().patient_id);
    if (it != profiles.end())
      for (double w : it->second.windows)
        if (w < horizon_h) windows.push_back(w);
  }

  auto& m = res.matrix;
  auto add_col = [&](std::string name, ColumnKind kind, std::string source) {
    m.columns.push_back({std::move(name), kind, std::move(source), {}});
  };
  add_col("age", ColumnKind::continuous, "data_model");
  add_col("sex_male", ColumnKind::onehot, "data_model");
  add_col("sex_female", ColumnKind::onehot, "data_model");
  add_col("smoking_yes", ColumnKind::onehot, "data_model");
  add_col("smoking_no", ColumnKind::onehot, "data_model");
  add_col("smoking_unknown", ColumnKind::onehot, "data_model");
  add_col("pathology", ColumnKind::ordinal, "data_model");
  add_col("tnm_stage", ColumnKind::ordinal, "data_model");
  add_col("n_class", ColumnKind::ordinal, "data_model");
  for (const auto& code : res.lab_codes) add_col("lab_" + code, ColumnKind::continuous, "data_model");
  add_col("pain24_bin", ColumnKind::binary, "text_extract");
  if (horizon == Horizon::h72) add_col("pain48_bin", ColumnKind::binary, "text_extract");
  for (double w : windows)
    for (auto t : kAllTiers)
      add_col("tier" + std::to_string(tier_number(t)) + "_used_" + detail::window_tag(w), ColumnKind::binary, "pharma_ladder");
  for (double w : windows)
    for (auto t : kAllTiers)
      add_col("tier" + std::to_string(tier_number(t)) + "_logdose_" + detail::window_tag(w), ColumnKind::continuous,
              "pharma_ladder");
  m.cols = m.columns.size();

  auto ordinal = [](const std::optional<int>& v) {
    return !v || *v == kUnknownOrdinal ? kAbsent : static_cast<double>(*v);
  };
  auto bin = [&](const std::optional<int>& s) {
    return s ? (is_pain_positive(*s, spec.threshold) ? 1.0 : 0.0) : kAbsent;
  };

  std::vector<double> row;
  for (const auto& rec : cohort.records) {
    auto sit = scores.find(rec.patient_id);
    auto pit = profiles.find(rec.patient_id);
    if (sit == scores.end() || pit == profiles.end())
      throw ArgumentError("assemble: missing scores or dose profile for patient " + rec.patient_id);
    const auto& sc = sit->second;
    const auto target = sc.at(horizon);
    if (!target && !spec.require_label) {
      res.unlabeled.push_back(rec.patient_id);
    } else if (!target) {
      res.dropped.push_back({rec.patient_id, "no pain score at " + std::string(to_string(horizon))});
      continue;
    }
    row.clear();
    row.push_back(rec.age ? static_cast<double>(*rec.age) : kAbsent);
    row.push_back(rec.sex == Sex::male ? 1.0 : 0.0);
    row.push_back(rec.sex == Sex::female ? 1.0 : 0.0);
    row.push_back(rec.smoking == Smoking::yes ? 1.0 : 0.0);
    row.push_back(rec.smoking == Smoking::no ? 1.0 : 0.0);
    row.push_back(rec.smoking == Smoking::unknown ? 1.0 : 0.0);
    row.push_back(rec.pathology ? static_cast<double>(static_cast<int>(*rec.pathology)) : kAbsent);
    row.push_back(ordinal(rec.tnm_stage));
    row.push_back(ordinal(rec.n_class));
    for (const auto& code : res.lab_codes) {
      auto it = rec.labs.find(code);
      row.push_back(it == rec.labs.end() ? kAbsent : it->second);
    }
    row.push_back(bin(sc.nrs_24));
    if (horizon == Horizon::h72) row.push_back(bin(sc.nrs_48));
    const auto& prof = pit->second;
    auto window_index = [&](double w) -> std::size_t {
      for (std::size_t i = 0; i < prof.windows.size(); ++i)
        if (prof.windows[i] == w) return i;
      throw ArgumentError("assemble: dose profile of " + rec.patient_id + " lacks window " + detail::window_tag(w));
    };
    for (double w : windows)
      for (auto t : kAllTiers) row.push_back(prof.at(t, window_index(w)).used ? 1.0 : 0.0);
    for (double w : windows)
      for (auto t : kAllTiers) row.push_back(prof.at(t, window_index(w)).log_dose);
    m.push_row(row, target && is_pain_positive(*target, spec.threshold) ? 1 : 0, rec.patient_id);
  }
  if (m.rows == 0) throw EmptyCohortError("assemble: no patient has a pain score at " + std::string(to_string(horizon)));
  return res;
}

// ---------------------------------------------------------------------------
// imputation / scaling

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Per-column median fill, fit on one matrix (a training fold) and applied to others.
/// Columns with no observed value in the fit matrix are dropped.
struct MedianImputer {
  std::vector<std::string> kept;     // column names, in output order
  std::vector<double> medians;       // per kept column
  std::vector<std::string> dropped;  // warnings: columns removed as entirely absent

  static MedianImputer fit(const FeatureMatrix& m) {
    if (m.rows == 0) throw ArgumentError("impute: matrix has no rows");
    MedianImputer imp;
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::vector<double> seen;
      for (std::size_t r = 0; r < m.rows; ++r)
        if (!is_absent(m.at(r, c))) seen.push_back(m.at(r, c));
      if (seen.empty()) {
        imp.dropped.push_back(m.columns[c].name);
        continue;
      }
      imp.kept.push_back(m.columns[c].name);
      imp.medians.push_back(median_of(std::move(seen)));
    }
    return imp;
  }

  [[nodiscard]] FeatureMatrix apply(const FeatureMatrix& m) const {
    std::map<std::string, std::size_t> pos;
    for (std::size_t c = 0; c < m.cols; ++c) pos[m.columns[c].name] = c;
    std::vector<std::size_t> src;
    for (const auto& name : kept) {
      auto it = pos.find(name);
      if (it == pos.end()) throw SchemaError("impute: column '" + name + "' missing from matrix");
      src.push_back(it->second);
    }
    FeatureMatrix out;
    out.cols = src.size();
    for (auto s : src) out.columns.push_back(m.columns[s]);
    out.rows = m.rows;
    out.labels = m.labels;
    out.row_ids = m.row_ids;
    out.synthetic = m.synthetic;
    out.values.resize(out.rows * out.cols);
    for (std::size_t r = 0; r < m.rows; ++r)
      for (std::size_t k = 0; k < src.size(); ++k) {
        double v = m.at(r, src[k]);
        if (is_absent(v)) {
          v = medians[k];
          out.columns[k].imputed_rows.push_back(r);
        }
        out.at(r, k) = v;
      }
    return out;
  }
};

inline FeatureMatrix impute_continuous(const FeatureMatrix& m) { return MedianImputer::fit(m).apply(m); }

/// Zero-mean / unit-variance scaling of continuous and ordinal columns, fit on a training fold.
/// One-hot and binary columns pass through. Constant columns are centered only.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const FeatureMatrix& m) {
    Standardizer s;
    s.mean.assign(m.cols, 0.0);
    s.scale.assign(m.cols, 1.0);
    if (m.rows == 0) return s;
    for (std::size_t c = 0; c < m.cols; ++c) {
      const auto kind = m.columns[c].kind;
      if (kind != ColumnKind::continuous && kind != ColumnKind::ordinal) continue;
      double mu = 0.0;
      for (std::size_t r = 0; r < m.rows; ++r) mu += m.at(r, c);
      mu /= static_cast<double>(m.rows);
      double ss = 0.0;
      for (std::size_t r = 0; r < m.rows; ++r) ss += (m.at(r, c) - mu) * (m.at(r, c) - mu);
      const double sd = std::sqrt(ss / static_cast<double>(m.rows));
      s.mean[c] = mu;
      s.scale[c] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  [[nodiscard]] FeatureMatrix apply(FeatureMatrix m) const {
    if (mean.size() != m.cols) throw SchemaError("standardize: width mismatch");
    for (std::size_t r = 0; r < m.rows; ++r)
      for (std::size_t c = 0; c < m.cols; ++c) m.at(r, c) = (m.at(r, c) - mean[c]) / scale[c];
    return m;
  }
};

// ---------------------------------------------------------------------------
// SMOTE

struct SmoteConfig {
  double trigger_ratio = 0.3;
  std::size_t k_neighbors = 5;
  double target_ratio = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(trigger_ratio > 0.0 && trigger_ratio <= target_ratio && target_ratio <= 1.0))
      throw ArgumentError("SMOTE config needs 0 < trigger_ratio <= target_ratio <= 1");
    if (k_neighbors < 1) throw ArgumentError("SMOTE config needs k_neighbors >= 1");
  }
};

/// How one synthetic row was made: seed + lambda * (neighbor - seed).
struct SyntheticOrigin {
  std::size_t seed_row = 0;
  std::size_t neighbor_row = 0;
  double lambda = 0.0;
};

struct SmoteResult {
  FeatureMatrix matrix;  // originals first, in their original order, then synthetic rows
  bool resampled = false;
  std::vector<SyntheticOrigin> origins;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// k nearest rows among `pool` for each pool member (Euclidean, ties by row index).
inline std::vector<std::vector<std::size_t>> nearest_neighbors(const FeatureMatrix& m, const std::vector<std::size_t>& pool,
                                                               std::size_t k) {
  std::vector<std::vector<std::size_t>> out(pool.size());
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    d.clear();
    for (std::size_t j = 0; j < pool.size(); ++j)
      if (j != i) d.emplace_back(squared_distance(m.row(pool[i]), m.row(pool[j])), pool[j]);
    const auto kk = std::min(k, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
    for (std::size_t q = 0; q < kk; ++q) out[i].push_back(d[q].second);
  }
  return out;
}

/// SMOTE with an injectable lambda source (a callable returning a double in [0, 1]).
template <typename LambdaSource>
SmoteResult smote_resample(const FeatureMatrix& m, const SmoteConfig& cfg, LambdaSource&& draw_lambda) {
  cfg.validate();
  SmoteResult res;
  res.matrix = m;
  const std::size_t pos = m.count_positive();
  const std::size_t neg = m.rows - pos;
  const std::uint8_t minority_label = pos <= neg ? 1 : 0;
  const std::size_t n_min = std::min(pos, neg), n_maj = std::max(pos, neg);
  if (n_min > 0 && static_cast<double>(n_min) / static_cast<double>(n_maj) >= cfg.trigger_ratio) return res;
  if (n_min < 2) throw ResampleError("SMOTE needs at least two minority rows, found " + std::to_string(n_min));

  std::vector<std::size_t> minority;
  for (std::size_t r = 0; r < m.rows; ++r)
    if (m.labels[r] == minority_label) minority.push_back(r);
  const auto neighbors = nearest_neighbors(m, minority, cfg.k_neighbors);

  const double need = cfg.target_ratio * static_cast<double>(n_maj);
  std::size_t n_new = 0;
  while (static_cast<double>(n_min + n_new) < need) ++n_new;

  Rng rng(derive_seed(cfg.seed, "smote"));
  std::vector<std::size_t> order(minority.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);

  std::vector<double> row(m.cols);
  for (std::size_t s = 0; s < n_new; ++s) {
    const std::size_t i = order[s % order.size()];
    const auto& nn = neighbors[i];
    const std::size_t nb = nn[uniform_index(rng, nn.size())];
    const double lambda = draw_lambda(rng);
    const auto a = m.row(minority[i]);
    const auto b = m.row(nb);
    for (std::size_t c = 0; c < m.cols; ++c) row[c] = a[c] + lambda * (b[c] - a[c]);
    res.matrix.push_row(row, minority_label, m.row_ids[minority[i]] + "#smote" + std::to_string(s), 1);
    res.origins.push_back({minority[i], nb, lambda});
  }
  res.resampled = true;
  return res;
}

inline SmoteResult smote_resample(const FeatureMatrix& m, const SmoteConfig& cfg) {
  return smote_resample(m, cfg, [](Rng& rng) { return unit_uniform(rng); });
}

}  // namespace painfc
