#pragma once

// Analgesic-ladder classification of free-text drug mentions and per-window
// exposure features (used flag + ln(1 + total mg)) per tier.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "painfc/data_model.hpp"
#include "painfc/errors.hpp"
#include "painfc/strings.hpp"

namespace painfc {

/// 1 = non-opioid, 2 = moderate opioid, 3 = strong opioid.
enum class DrugTier { non_opioid = 1, moderate_opioid = 2, strong_opioid = 3 };

inline constexpr std::array<DrugTier, 3> kAllTiers{DrugTier::non_opioid, DrugTier::moderate_opioid,
                                                    DrugTier::strong_opioid};

inline int tier_number(DrugTier t) { return static_cast<int>(t); }
inline std::size_t tier_index(DrugTier t) { return static_cast<std::size_t>(t) - 1; }

struct DrugMatch {
  std::string drug;  // canonical (generic) name
  DrugTier tier;
};

class DrugLexicon {
 public:
  /// Adds a generic drug and its synonyms (brand names, abbreviations, multi-word phrases).
  void add(const std::string& generic, DrugTier tier, const std::vector<std::string>& synonyms = {}) {
    const auto key = str::join(str::tokens(generic), " ");
    if (key.empty()) throw ArgumentError("empty drug name in lexicon");
    if (auto it = tiers_.find(key); it != tiers_.end() && it->second != tier)
      throw ArgumentError("drug '" + key + "' mapped to two tiers");
    tiers_[key] = tier;
    add_phrase(key, key);
    for (const auto& s : synonyms) {
      const auto syn = str::join(str::tokens(s), " ");
      if (!syn.empty()) add_phrase(syn, key);
    }
  }

  [[nodiscard]] bool empty() const { return tiers_.empty(); }
  [[nodiscard]] std::size_t size() const { return tiers_.size(); }
  [[nodiscard]] const std::map<std::string, DrugTier>& drugs() const { return tiers_; }

  /// Every lexicon drug mentioned in `text`, in text order. Longest phrase wins at a position.
  [[nodiscard]] std::vector<DrugMatch> find_all(std::string_view text) const {
    const auto toks = str::tokens(text);
    std::vector<DrugMatch> out;
    std::size_t i = 0;
    while (i < toks.size()) {
      std::size_t matched_len = 0;
      const std::string* canonical = nullptr;
      for (std::size_t len = std::min(max_phrase_len_, toks.size() - i); len >= 1; --len) {
        std::string phrase = toks[i];
        for (std::size_t k = 1; k < len; ++k) phrase += " " + toks[i + k];
        if (auto it = phrases_.find(phrase); it != phrases_.end()) {
          matched_len = len;
          canonical = &it->second;
          break;
        }
      }
      if (canonical) {
        out.push_back({*canonical, tiers_.at(*canonical)});
        i += matched_len;
      } else {
        ++i;
      }
    }
    return out;
  }

  /// Highest-tier drug mentioned, or nullopt.
  [[nodiscard]] std::optional<DrugMatch> match(std::string_view text) const {
    std::optional<DrugMatch> best;
    for (auto& m : find_all(text))
      if (!best || tier_number(m.tier) > tier_number(best->tier)) best = std::move(m);
    return best;
  }

 private:
  void add_phrase(const std::string& phrase, const std::string& canonical) {
    if (auto it = phrases_.find(phrase); it != phrases_.end() && it->second != canonical)
      throw ArgumentError("synonym '" + phrase + "' maps to both '" + it->second + "' and '" + canonical + "'");
    phrases_[phrase] = canonical;
    max_phrase_len_ = std::max(max_phrase_len_, str::tokens(phrase).size());
  }

  std::map<std::string, DrugTier> tiers_;
  std::map<std::string, std::string> phrases_;
  std::size_t max_phrase_len_ = 1;
};

/// Table of the three ladder tiers with common brand/synonym spellings.
inline DrugLexicon default_lexicon() {
  DrugLexicon lex;
  lex.add("morphine", DrugTier::strong_opioid, {"ms contin", "mscontin", "kadian", "oramorph"});
  lex.add("fentanyl", DrugTier::strong_opioid, {"duragesic", "sublimaze", "fentanil"});
  lex.add("oxycodone", DrugTier::strong_opioid, {"oxycontin", "roxicodone", "oxy ir"});
  lex.add("codeine", DrugTier::moderate_opioid, {"codeine phosphate"});
  lex.add("tramadol", DrugTier::moderate_opioid, {"ultram", "tramal"});
  lex.add("ibuprofen", DrugTier::non_opioid, {"advil", "motrin", "brufen"});
  lex.add("acetaminophen", DrugTier::non_opioid, {"paracetamol", "tylenol", "apap"});
  return lex;
}

/// Lexicon file: one drug per line, `name, tier, synonym, synonym, ...`; `#` comments.
inline DrugLexicon parse_lexicon(std::istream& in) {
  DrugLexicon lex;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto t = str::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto fields = str::split(t, ',');
    if (fields.size() < 2) throw ArgumentError("lexicon line " + std::to_string(no) + ": expected `name, tier, synonyms...`");
    const auto tier = str::to_int(fields[1]);
    if (!tier || *tier < 1 || *tier > 3) throw ArgumentError("lexicon line " + std::to_string(no) + ": tier must be 1, 2 or 3");
    std::vector<std::string> syn;
    for (std::size_t i = 2; i < fields.size(); ++i) syn.emplace_back(str::trim(fields[i]));
    lex.add(std::string(str::trim(fields[0])), static_cast<DrugTier>(*tier), syn);
  }
  if (lex.empty()) throw ArgumentError("lexicon file defines no drugs");
  return lex;
}

inline DrugLexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read lexicon file: " + path);
  return parse_lexicon(in);
}

inline std::optional<DrugTier> classify_drug(std::string_view drug_text, const DrugLexicon& lexicon) {
  if (lexicon.empty()) throw ArgumentError("classify_drug: lexicon is empty");
  if (auto m = lexicon.match(drug_text)) return m->tier;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

struct TierExposure {
  bool used = false;
  double total_mg = 0.0;
  double log_dose = 0.0;  // ln(1 + total_mg)
  bool operator==(const TierExposure&) const = default;
};

struct TierDoseProfile {
  std::vector<double> windows;                      // cumulative window ends, hours
  std::array<std::vector<TierExposure>, 3> cells;   // [tier index][window index]

  [[nodiscard]] const TierExposure& at(DrugTier t, std::size_t window_idx) const {
    return cells[tier_index(t)].at(window_idx);
  }
  bool operator==(const TierDoseProfile&) const = default;
};

inline const std::vector<double>& default_dose_windows() {
  static const std::vector<double> w{24.0, 48.0};
  return w;
}

/// Exposure per tier for each window [0, w]. Entries without a dose still mark the tier used.
inline TierDoseProfile build_profile(const std::vector<MedicationEntry>& log, const DrugLexicon& lexicon,
                                     const std::vector<double>& windows = default_dose_windows()) {
  if (lexicon.empty()) throw ArgumentError("build_profile: lexicon is empty");
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (!(windows[i] > 0)) throw ArgumentError("dose windows must be positive");
    if (i && !(windows[i] > windows[i - 1])) throw ArgumentError("dose windows must be strictly increasing");
  }
  TierDoseProfile p;
  p.windows = windows;
  for (auto& c : p.cells) c.assign(windows.size(), {});
  for (const auto& e : log) {
    const auto m = lexicon.match(e.drug_text);
    if (!m) continue;
    auto& row = p.cells[tier_index(m->tier)];
    for (std::size_t w = 0; w < windows.size(); ++w) {
      if (e.time_h > windows[w]) continue;
      row[w].used = true;
      if (e.dose_mg) row[w].total_mg += *e.dose_mg;
    }
  }
  for (auto& row : p.cells)
    for (auto& c : row) c.log_dose = std::log1p(c.total_mg);
  return p;
}

/// Key identifying "the same drug" for backward filling: the lexicon's generic name
/// when the text names a known drug, else the first word of the text.
inline std::string drug_key(std::string_view drug_text, const DrugLexicon* lexicon = nullptr) {
  if (lexicon)
    if (auto m = lexicon->match(drug_text)) return m->drug;
  auto toks = str::tokens(drug_text);
  return toks.empty() ? std::string{} : toks.front();
}

/// Backward fill per drug: a missing dose takes the next later dose of the same drug.
inline std::vector<MedicationEntry> backfill_doses(std::vector<MedicationEntry> log,
                                                   const DrugLexicon* lexicon = nullptr) {
  for (std::size_t i = 1; i < log.size(); ++i)
    if (log[i].time_h < log[i - 1].time_h) throw ArgumentError("backfill_doses: medication log is not sorted by time");
  std::map<std::string, double> next_dose;
  for (std::size_t i = log.size(); i-- > 0;) {
    const auto key = drug_key(log[i].drug_text, lexicon);
    if (log[i].dose_mg) {
      next_dose[key] = *log[i].dose_mg;
    } else if (auto it = next_dose.find(key); it != next_dose.end()) {
      log[i].dose_mg = it->second;
    }
  }
  return log;
}

/// Stable time sort, for logs that arrive unordered.
inline std::vector<MedicationEntry> sorted_by_time(std::vector<MedicationEntry> log) {
  std::stable_sort(log.begin(), log.end(), [](const auto& a, const auto& b) { return a.time_h < b.time_h; });
  return log;
}

}  // namespace painfc
