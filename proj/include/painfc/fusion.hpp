#pragma once

// Indicator-gated fusion of the ML probability with the LLM estimate:
//   p_final = (1{alpha < p_ml < beta} * p_llm + p_ml) / (1 + 1{alpha < p_ml < beta})
// The LLM estimate is only requested for in-band rows.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "painfc/errors.hpp"
#include "painfc/llm_bridge.hpp"
#include "painfc/log.hpp"
#include "painfc/strings.hpp"

namespace painfc {

enum class BandMode { average, replace };

inline std::string_view to_string(BandMode m) { return m == BandMode::average ? "average" : "replace"; }
inline BandMode parse_band_mode(std::string_view s) {
  if (s == "average") return BandMode::average;
  if (s == "replace") return BandMode::replace;
  throw ArgumentError("band_mode must be 'average' or 'replace', got '" + std::string(s) + "'");
}

struct FusionConfig {
  double alpha = 0.2;
  double beta = 0.6;
  double decision_threshold = 0.5;
  BandMode band_mode = BandMode::average;

  void validate() const {
    if (!(alpha >= 0.0 && alpha < beta && beta <= 1.0))
      throw ArgumentError("fusion band requires 0 <= alpha < beta <= 1");
    if (!(decision_threshold > 0.0 && decision_threshold < 1.0))
      throw ArgumentError("decision_threshold must lie in (0, 1)");
  }
  [[nodiscard]] bool in_band(double p_ml) const { return alpha < p_ml && p_ml < beta; }
};

struct FusionDecision {
  std::string patient_id;
  double p_ml = 0.0;
  std::optional<double> p_llm;
  bool indicator = false;
  double p_final = 0.0;
  bool predicted = false;
  std::optional<ProbabilityProvenance> llm_provenance;
};

using LlmSource = std::function<LlmProbability()>;

inline FusionDecision fuse(double p_ml, const LlmSource& p_llm_source, const FusionConfig& cfg = {}) {
  if (!(p_ml >= 0.0 && p_ml <= 1.0)) throw ArgumentError("p_ml must lie in [0, 1]");
  FusionDecision d;
  d.p_ml = p_ml;
  d.indicator = cfg.in_band(p_ml);
  if (!d.indicator) {
    d.p_final = p_ml;
  } else {
    LlmProbability est;
    try {
      est = p_llm_source();
    } catch (const std::exception& e) {
      warn(std::string("LLM estimate unavailable, using default: ") + e.what());
      est = {TierMidpoints{}.failure_default, ProbabilityProvenance::parse_failure_default};
    }
    d.p_llm = std::clamp(est.p_llm, 0.0, 1.0);
    d.llm_provenance = est.provenance;
    d.p_final = cfg.band_mode == BandMode::average ? (*d.p_llm + p_ml) / 2.0 : *d.p_llm;
  }
  d.predicted = d.p_final >= cfg.decision_threshold;
  return d;
}

inline FusionDecision fuse(double p_ml, double p_llm, const FusionConfig& cfg = {}) {
  return fuse(p_ml, [p_llm] { return LlmProbability{p_llm, ProbabilityProvenance::explicit_number}; }, cfg);
}

/// Fuses every row; `source(i)` is called only for in-band rows.
inline std::vector<FusionDecision> fuse_cohort(const std::vector<std::string>& ids, const std::vector<double>& p_ml,
                                               const std::function<LlmProbability(std::size_t)>& source,
                                               const FusionConfig& cfg = {}) {
  if (ids.size() != p_ml.size()) throw ArgumentError("fuse_cohort: ids and p_ml differ in length");
  cfg.validate();
  std::vector<FusionDecision> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto d = fuse(p_ml[i], [&] { return source(i); }, cfg);
    d.patient_id = ids[i];
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// band calibration

struct BandCalibration {
  double alpha = 0.2;
  double beta = 0.6;
  double break_even_threshold = 0.5;
  double break_even_value = 0.0;
  double outside_fraction = 0.0;
  bool fallback = false;
  std::string report;
};

struct CalibrationOptions {
  double min_outside_fraction = 0.8;
  std::size_t min_rows = 20;
};

/// Break-even threshold t* (precision closest to recall) and the widest open band
/// around it whose outside rows, thresholded at t*, keep precision and recall at or
/// above the break-even value. Falls back to (0.2, 0.6) when nothing qualifies.
inline BandCalibration calibrate_band(const std::vector<std::uint8_t>& labels, const std::vector<double>& p_ml,
                                      const CalibrationOptions& opt = {}) {
  if (labels.size() != p_ml.size()) throw ArgumentError("calibrate_band: labels and scores differ in length");
  if (labels.size() < opt.min_rows)
    throw ArgumentError("calibrate_band needs at least " + std::to_string(opt.min_rows) + " rows");
  const std::size_t n = labels.size();
  std::size_t n_pos = 0;
  for (auto y : labels) n_pos += y ? 1 : 0;
  if (n_pos == 0 || n_pos == n) throw ArgumentError("calibrate_band needs both classes");

  BandCalibration fb;
  fb.fallback = true;
  auto fallback = [&](const std::string& why) {
    fb.report = "fallback to (0.2, 0.6): " + why;
    warn("calibrate_band " + fb.report);
    return fb;
  };

  std::vector<double> uniq(p_ml);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < 2) return fallback("all development scores are equal");

  // counts at or below / at or above each unique score
  const std::size_t u = uniq.size();
  std::vector<std::size_t> pos_at(u, 0), neg_at(u, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto k = static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), p_ml[i]) - uniq.begin());
    (labels[i] ? pos_at : neg_at)[k]++;
  }
  std::vector<std::size_t> pos_le(u), neg_le(u);  // cumulative through index k
  std::size_t cp = 0, cn = 0;
  for (std::size_t k = 0; k < u; ++k) {
    cp += pos_at[k];
    cn += neg_at[k];
    pos_le[k] = cp;
    neg_le[k] = cn;
  }
  auto pos_ge = [&](std::size_t k) { return n_pos - (k ? pos_le[k - 1] : 0); };
  auto neg_ge = [&](std::size_t k) { return (n - n_pos) - (k ? neg_le[k - 1] : 0); };

  // break-even sweep: predict positive when p >= uniq[k]
  std::size_t best_k = 0;
  double best_gap = 2.0, be = 0.0;
  for (std::size_t k = 0; k < u; ++k) {
    const double tp = static_cast<double>(pos_ge(k)), fp = static_cast<double>(neg_ge(k));
    if (tp + fp == 0) continue;
    const double prec = tp / (tp + fp), rec = tp / static_cast<double>(n_pos);
    const double gap = std::abs(prec - rec);
    if (gap < best_gap - 1e-15) {
      best_gap = gap;
      best_k = k;
      be = std::min(prec, rec);
    }
  }
  const double t_star = uniq[best_k];

  // lower boundary a = uniq[i] with i < best_k (rows <= a are outside, predicted negative),
  // or a = 0 with nothing below; upper boundary b = uniq[j] with j > best_k (rows >= b outside,
  // predicted positive), or b = 1 with nothing above.
  struct Cand {
    double value;
    std::size_t pos, neg;  // outside rows contributed
  };
  std::vector<Cand> lower, upper;
  if (t_star > 0.0 && uniq[0] > 0.0) lower.push_back({0.0, 0, 0});
  for (std::size_t i = 0; i < best_k; ++i) lower.push_back({uniq[i], pos_le[i], neg_le[i]});
  for (std::size_t j = best_k + 1; j < u; ++j) upper.push_back({uniq[j], pos_ge(j), neg_ge(j)});
  if (t_star < 1.0 && uniq.back() < 1.0) upper.push_back({1.0, 0, 0});

  bool found = false;
  BandCalibration best;
  for (const auto& lo : lower) {
    for (const auto& hi : upper) {
      const double width = hi.value - lo.value;
      if (found && width <= best.beta - best.alpha) continue;
      const double fn = static_cast<double>(lo.pos), tp = static_cast<double>(hi.pos), fp = static_cast<double>(hi.neg);
      const double outside = static_cast<double>(lo.pos + lo.neg + hi.pos + hi.neg) / static_cast<double>(n);
      if (outside < opt.min_outside_fraction) continue;
      if (tp + fp == 0 || tp + fn == 0) continue;
      const double prec = tp / (tp + fp), rec = tp / (tp + fn);
      if (prec + 1e-12 < be || rec + 1e-12 < be) continue;
      found = true;
      best.alpha = lo.value;
      best.beta = hi.value;
      best.outside_fraction = outside;
    }
  }
  if (!found) return fallback("no band around the break-even threshold keeps outside precision/recall");
  best.break_even_threshold = t_star;
  best.break_even_value = be;
  std::ostringstream r;
  r << "break-even threshold " << str::fmt_fixed(t_star, 4) << " (precision/recall " << str::fmt_fixed(be, 4)
    << "); band (" << str::fmt_fixed(best.alpha, 4) << ", " << str::fmt_fixed(best.beta, 4) << ") leaves "
    << str::fmt_fixed(best.outside_fraction * 100.0, 1) << "% of rows outside";
  best.report = r.str();
  return best;
}

// ---------------------------------------------------------------------------
// audit table

inline void write_fusion_audit(const std::vector<FusionDecision>& rows, std::ostream& out) {
  out << "patient_id,p_ml,indicator,p_llm,provenance,p_final,predicted\n";
  for (const auto& d : rows) {
    out << str::csv_field(d.patient_id) << ',' << str::fmt_double(d.p_ml) << ',' << (d.indicator ? 1 : 0) << ','
        << (d.p_llm ? str::fmt_double(*d.p_llm) : std::string{}) << ','
        << (d.llm_provenance ? std::string(to_string(*d.llm_provenance)) : std::string{}) << ','
        << str::fmt_double(d.p_final) << ',' << (d.predicted ? "yes" : "no") << '\n';
  }
}

inline void write_fusion_audit(const std::vector<FusionDecision>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write fusion audit: " + path);
  write_fusion_audit(rows, out);
}

inline std::vector<FusionDecision> read_fusion_audit(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read fusion audit: " + path);
  std::string line;
  std::getline(in, line);
  std::vector<FusionDecision> rows;
  while (std::getline(in, line)) {
    if (str::trim(line).empty()) continue;
    auto f = str::parse_csv_line(line);
    if (f.size() != 7) throw SchemaError("fusion audit row has " + std::to_string(f.size()) + " fields: " + line);
    FusionDecision d;
    d.patient_id = f[0];
    d.p_ml = str::to_double(f[1]).value_or(NAN);
    d.indicator = f[2] == "1";
    if (!f[3].empty()) d.p_llm = str::to_double(f[3]);
    if (f[4] == "explicit_number") d.llm_provenance = ProbabilityProvenance::explicit_number;
    else if (f[4] == "tier_midpoint") d.llm_provenance = ProbabilityProvenance::tier_midpoint;
    else if (f[4] == "parse_failure_default") d.llm_provenance = ProbabilityProvenance::parse_failure_default;
    d.p_final = str::to_double(f[5]).value_or(NAN);
    d.predicted = f[6] == "yes";
    rows.push_back(std::move(d));
  }
  return rows;
}

}  // namespace painfc
