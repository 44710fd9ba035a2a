#pragma once

// Rule-based conversion of charted pain descriptions into 0-10 NRS scores,
// aggregated per 24 h window, and thresholding into pain-positive labels.

#include <algorithm>
#include <array>
#include <fstream>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "painfc/data_model.hpp"
#include "painfc/errors.hpp"
#include "painfc/strings.hpp"

namespace painfc {

enum class Horizon { h48, h72 };

inline std::string_view to_string(Horizon h) { return h == Horizon::h48 ? "h48" : "h72"; }
inline int horizon_hours(Horizon h) { return h == Horizon::h48 ? 48 : 72; }
inline std::optional<Horizon> parse_horizon(std::string_view s) {
  if (s == "h48" || s == "48" || s == "48h") return Horizon::h48;
  if (s == "h72" || s == "72" || s == "72h") return Horizon::h72;
  return std::nullopt;
}

struct PainWindowScores {
  std::optional<int> nrs_24;
  std::optional<int> nrs_48;
  std::optional<int> nrs_72;

  [[nodiscard]] std::optional<int> at(Horizon h) const { return h == Horizon::h48 ? nrs_48 : nrs_72; }
  bool operator==(const PainWindowScores&) const = default;
};

struct PainLabel {
  Horizon horizon;
  bool positive;
  bool operator==(const PainLabel&) const = default;
};

inline constexpr int kPainThreshold = 4;

/// A text rule. Either `fixed_score` is set, or the score is read from capture `group`.
struct ExtractionRule {
  std::string pattern;
  std::optional<int> fixed_score;
  int group = 0;
  int priority = 0;  // lower value wins
};

/// Compiled, validated rule set ordered by priority.
class RuleSet {
 public:
  explicit RuleSet(std::vector<ExtractionRule> rules) : rules_(std::move(rules)) {
    if (rules_.empty()) throw ArgumentError("rule set is empty");
    std::sort(rules_.begin(), rules_.end(), [](const auto& a, const auto& b) { return a.priority < b.priority; });
    std::set<int> prios;
    for (const auto& r : rules_) {
      if (!prios.insert(r.priority).second) throw ArgumentError("duplicate rule priority " + std::to_string(r.priority));
      if (r.fixed_score && (*r.fixed_score < 0 || *r.fixed_score > 10))
        throw ArgumentError("rule score outside [0, 10]: " + r.pattern);
      if (!r.fixed_score && r.group <= 0) throw ArgumentError("rule needs a fixed score or a capture group: " + r.pattern);
      try {
        compiled_.emplace_back(r.pattern, std::regex::icase | std::regex::ECMAScript | std::regex::optimize);
      } catch (const std::regex_error& e) {
        throw ArgumentError("invalid rule pattern '" + r.pattern + "': " + e.what());
      }
      if (!r.fixed_score && static_cast<std::size_t>(r.group) > compiled_.back().mark_count())
        throw ArgumentError("rule capture group out of range: " + r.pattern);
    }
  }

  /// Score for a single text, or nullopt when no rule matches. The highest-priority
  /// matching rule decides; several matches of that rule resolve to the larger score.
  [[nodiscard]] std::optional<int> score(const std::string& text) const {
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      std::optional<int> best;
      for (auto it = std::sregex_iterator(text.begin(), text.end(), compiled_[i]); it != std::sregex_iterator(); ++it) {
        int s;
        if (rules_[i].fixed_score) {
          s = *rules_[i].fixed_score;
        } else {
          auto v = str::to_int((*it)[rules_[i].group].str());
          if (!v || *v < 0 || *v > 10) continue;
          s = static_cast<int>(*v);
        }
        if (!best || s > *best) best = s;
      }
      if (best) return best;
    }
    return std::nullopt;
  }

  [[nodiscard]] const std::vector<ExtractionRule>& rules() const { return rules_; }

 private:
  std::vector<ExtractionRule> rules_;
  std::vector<std::regex> compiled_;
};

/// Built-in rules: explicit numeric mentions first, then the qualitative lexicon
/// (no pain 0, mild 2, moderate 5, severe 7, excruciating 9).
inline std::vector<ExtractionRule> default_rules() {
  return {
      {R"(\bnrs\s*(?:score)?\s*(?:of|is|:|=)?\s*(\d{1,2})\b)", std::nullopt, 1, 1},
      {R"(\bpain\s+(?:score|rating|level|intensity)\s*(?:of|is|:|=)?\s*(\d{1,2})\b)", std::nullopt, 1, 2},
      {R"(\bpain\s*(?:of|is|at|:|=)?\s*(\d{1,2})\s*/\s*10\b)", std::nullopt, 1, 3},
      {R"(\b(\d{1,2})\s*/\s*10\s+pain\b)", std::nullopt, 1, 4},
      {R"(\bpain\s*[:=]\s*(\d{1,2})\b)", std::nullopt, 1, 5},
      {R"(\b(?:no pain|pain[- ]free|denies pain)\b)", 0, 0, 9},
      {R"(\bexcruciating\b)", 9, 0, 10},
      {R"(\bsevere\b)", 7, 0, 11},
      {R"(\bmoderate\b)", 5, 0, 12},
      {R"(\bmild\b)", 2, 0, 13},
  };
}

inline const RuleSet& default_rule_set() {
  static const RuleSet rs(default_rules());
  return rs;
}

/// Rule file: one rule per line, `pattern, score, priority`. The score is either an
/// integer 0-10 or `$N` for capture group N. The pattern may itself contain commas;
/// the last two fields are taken as score and priority. Blank lines and `#` comments skipped.
inline std::vector<ExtractionRule> parse_rules(std::istream& in) {
  std::vector<ExtractionRule> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto t = str::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto last = t.rfind(',');
    const auto mid = last == std::string_view::npos ? last : t.rfind(',', last - 1);
    if (last == std::string_view::npos || mid == std::string_view::npos)
      throw ArgumentError("rule line " + std::to_string(no) + ": expected `pattern, score, priority`");
    ExtractionRule r;
    r.pattern = std::string(str::trim(t.substr(0, mid)));
    const auto score = str::trim(t.substr(mid + 1, last - mid - 1));
    auto prio = str::to_int(t.substr(last + 1));
    if (!prio) throw ArgumentError("rule line " + std::to_string(no) + ": bad priority");
    r.priority = static_cast<int>(*prio);
    if (!score.empty() && score.front() == '$') {
      auto g = str::to_int(score.substr(1));
      if (!g) throw ArgumentError("rule line " + std::to_string(no) + ": bad capture reference");
      r.group = static_cast<int>(*g);
    } else {
      auto s = str::to_int(score);
      if (!s) throw ArgumentError("rule line " + std::to_string(no) + ": bad score");
      r.fixed_score = static_cast<int>(*s);
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline RuleSet load_rule_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read rule file: " + path);
  return RuleSet(parse_rules(in));
}

/// Window upper bounds in hours. Window i covers (bound[i-1], bound[i]]; the first
/// window also includes t = 0 so an admission assessment is not lost.
inline constexpr std::array<double, 3> kWindowBounds{24.0, 48.0, 72.0};

inline std::optional<std::size_t> window_of(double time_h) {
  if (time_h < 0) return std::nullopt;
  for (std::size_t i = 0; i < kWindowBounds.size(); ++i)
    if (time_h <= kWindowBounds[i]) return i;
  return std::nullopt;
}

struct ExtractionResult {
  PainWindowScores scores;
  std::vector<std::size_t> unmatched;  // indices of observations no rule could score
};

/// Score of a single observation: a charted numeric NRS wins over its text.
inline std::optional<int> observation_score(const PainObservation& o, const RuleSet& rules) {
  if (o.nrs) return *o.nrs;
  if (o.text) return rules.score(*o.text);
  return std::nullopt;
}

/// Window score = maximum of the matched scores falling inside the window.
inline ExtractionResult extract_scores_detailed(const std::vector<PainObservation>& observations, const RuleSet& rules) {
  ExtractionResult res;
  std::array<std::optional<int>*, 3> slots{&res.scores.nrs_24, &res.scores.nrs_48, &res.scores.nrs_72};
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto s = observation_score(observations[i], rules);
    if (!s) {
      res.unmatched.push_back(i);
      continue;
    }
    const auto w = window_of(observations[i].time_h);
    if (!w) continue;
    auto& slot = *slots[*w];
    if (!slot || *s > *slot) slot = *s;
  }
  return res;
}

inline PainWindowScores extract_scores(const std::vector<PainObservation>& observations,
                                       const RuleSet& rules = default_rule_set()) {
  return extract_scores_detailed(observations, rules).scores;
}

inline bool is_pain_positive(int score, int threshold = kPainThreshold) { return score >= threshold; }

/// One label per horizon (48 h, 72 h) whose score is present.
inline std::vector<PainLabel> binarize(const PainWindowScores& scores, int threshold = kPainThreshold) {
  if (threshold < 0 || threshold > 10) throw ArgumentError("threshold must lie in [0, 10]");
  std::vector<PainLabel> out;
  if (scores.nrs_48) out.push_back({Horizon::h48, *scores.nrs_48 >= threshold});
  if (scores.nrs_72) out.push_back({Horizon::h72, *scores.nrs_72 >= threshold});
  return out;
}

}  // namespace painfc
