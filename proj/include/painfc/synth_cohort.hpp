#pragma once

// Seeded synthetic cohorts. Labels come from a bivariate Gaussian latent (48 h / 72 h);
// labs, analgesic exposure and the first-day pain score shift with the 48 h label by
// configurable effect sizes. Pain observations and clinical notes are rendered from
// templates the default extraction rules and the mock clinician can read back.

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "painfc/data_model.hpp"
#include "painfc/errors.hpp"
#include "painfc/random.hpp"
#include "painfc/strings.hpp"

namespace painfc {

struct LabMoments {
  const char* code;
  double mean_neg, sd_neg, mean_pos, sd_pos;
};

/// Group means/SDs (pain-negative vs pain-positive) for the seven reported labs.
inline constexpr std::array<LabMoments, 7> kLabMoments{{
    {"AST", 23.07, 7.69, 33.76, 32.87},
    {"ALT", 20.79, 12.52, 32.77, 36.2},
    {"HCT", 39.5, 5.4, 37.18, 9.37},
    {"MCV", 93.08, 6.76, 91.08, 5.66},
    {"RBC", 4.53, 5.52, 19.38, 79.14},
    {"MCH", 32.27, 10.74, 29.98, 2.35},
    {"GGT", 53.78, 54.10, 87.65, 175.71},
}};

struct SynthConfig {
  std::size_t n_patients = 200;
  double positive_rate_48 = 0.5;
  double positive_rate_72 = 0.4;
  double horizon_correlation = 0.6;  // latent correlation between the two horizon labels
  double effect_labs = 1.0;    // 0 = no shift, 1 = reported group difference
  double effect_tiers = 1.0;   // strong-opioid use vs first-day pain, dose vs label
  double effect_pain24 = 1.0;  // first-day pain vs 48 h label
  double noise = 1.0;          // multiplies lab SDs
  double note_signal_accuracy = 0.8;
  double missing_field_rate = 0.02;
  double missing_dose_rate = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    auto rate = [](double r, const char* name) {
      if (!(r > 0.0 && r < 1.0)) throw ArgumentError(std::string(name) + " must lie in (0, 1)");
    };
    if (n_patients < 10) throw ArgumentError("n_patients must be at least 10");
    rate(positive_rate_48, "positive_rate_48");
    rate(positive_rate_72, "positive_rate_72");
    if (!(horizon_correlation > -1.0 && horizon_correlation < 1.0))
      throw ArgumentError("horizon_correlation must lie in (-1, 1)");
    if (effect_labs < 0 || effect_tiers < 0 || effect_pain24 < 0 || noise < 0)
      throw ArgumentError("effect sizes and noise must be non-negative");
    if (!(note_signal_accuracy >= 0.0 && note_signal_accuracy <= 1.0))
      throw ArgumentError("note_signal_accuracy must lie in [0, 1]");
    if (!(missing_field_rate >= 0.0 && missing_field_rate < 0.2)) throw ArgumentError("missing_field_rate must lie in [0, 0.2)");
    if (!(missing_dose_rate >= 0.0 && missing_dose_rate < 1.0)) throw ArgumentError("missing_dose_rate must lie in [0, 1)");
  }
};

struct LatentRow {
  std::string patient_id;
  bool label_48 = false;
  bool label_72 = false;
  int nrs_24 = 0;
  int nrs_48 = 0;
  int nrs_72 = 0;
  bool note_signal_48 = false;  // what the 48 h note says (may disagree with the label)
  bool note_signal_72 = false;
  std::vector<int> observation_scores;  // intended score of each pain observation, record order
};

struct SynthResult {
  Cohort cohort;
  std::vector<LatentRow> latent;
};

/// Note phrases carrying the forward-looking pain signal.
inline const std::vector<std::string>& positive_note_phrases() {
  static const std::vector<std::string> v{"breakthrough pain episodes expected, rescue dosing requested",
                                          "guarding and grimacing on movement, analgesia wearing off early",
                                          "patient anxious about worsening pain overnight"};
  return v;
}
inline const std::vector<std::string>& negative_note_phrases() {
  static const std::vector<std::string> v{"resting comfortably, current analgesia effective",
                                          "mobilising independently, no rescue doses needed",
                                          "sleeping well, pain controlled on current regimen"};
  return v;
}

namespace detail {

inline double round1(double v) { return std::round(v * 10.0) / 10.0; }

/// Time strictly inside a pain window so window assignment is unambiguous.
inline double time_in_window(Rng& rng, double lo) { return round1(lo + 1.0 + 22.0 * unit_uniform(rng)); }

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::string observation_text(Rng& rng, int score) {
  const auto s = std::to_string(score);
  switch (uniform_index(rng, score == 0 ? 6 : 5)) {
    case 0: return "NRS " + s;
    case 1: return "pain score " + s + " on assessment";
    case 2: return "patient reports pain " + s + "/10";
    case 3: return s + "/10 pain at rest";
    case 4: return "pain: " + s;
    default: return "denies pain";
  }
}

struct DrugTemplate {
  const char* text;
  int tier;
  double median_mg;
};

inline constexpr std::array<DrugTemplate, 12> kDrugTemplates{{
    {"Morphine sulfate", 3, 10.0},
    {"MS Contin ER", 3, 30.0},
    {"Oxycodone IR", 3, 10.0},
    {"OxyContin", 3, 20.0},
    {"Fentanyl (Duragesic) patch", 3, 0.025},
    {"Tramadol", 2, 50.0},
    {"Ultram", 2, 50.0},
    {"Codeine phosphate", 2, 30.0},
    {"Ibuprofen", 1, 400.0},
    {"Advil", 1, 400.0},
    {"Acetaminophen", 1, 650.0},
    {"Tylenol", 1, 500.0},
}};

inline const DrugTemplate& pick_drug(Rng& rng, int tier) {
  std::vector<const DrugTemplate*> pool;
  for (const auto& d : kDrugTemplates)
    if (d.tier == tier) pool.push_back(&d);
  return *pool[uniform_index(rng, pool.size())];
}

}  // namespace detail

inline SynthResult generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "synth"));
  const boost::math::normal_distribution<double> std_normal;
  const double cut48 = boost::math::quantile(std_normal, cfg.positive_rate_48);
  const double cut72 = boost::math::quantile(std_normal, cfg.positive_rate_72);
  const double rho = cfg.horizon_correlation;

  static constexpr const char* kComplaints[] = {"Lower back pain radiating to the left leg", "Right upper quadrant pain",
                                                "Chest wall pain on deep breathing", "Bone pain in the pelvis",
                                                "Abdominal distension and pain", "Headache and neck pain"};
  static constexpr std::array<Pathology, 5> kPaths{Pathology::adenocarcinoma, Pathology::squamous, Pathology::neuroendocrine,
                                                   Pathology::soft_tissue_sarcoma, Pathology::other};

  SynthResult out;
  out.cohort.provenance = {"synth:seed=" + std::to_string(cfg.seed), ""};
  const int width = static_cast<int>(std::to_string(cfg.n_patients).size());
  for (std::size_t i = 0; i < cfg.n_patients; ++i) {
    PatientRecord r;
    LatentRow lat;
    std::string num = std::to_string(i + 1);
    r.patient_id = "P" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;
    lat.patient_id = r.patient_id;

    const double z48 = standard_normal(rng);
    const double z72 = rho * z48 + std::sqrt(1.0 - rho * rho) * standard_normal(rng);
    lat.label_48 = z48 < cut48;
    lat.label_72 = z72 < cut72;
    const double y = lat.label_48 ? 1.0 : 0.0;

    auto missing = [&] { return bernoulli(rng, cfg.missing_field_rate); };

    // demographics carry no signal
    if (!missing()) r.age = static_cast<int>(std::clamp(std::round(60.0 + 11.0 * standard_normal(rng)), 22.0, 92.0));
    if (!missing()) r.sex = bernoulli(rng, 0.5) ? Sex::male : Sex::female;
    const double sm = unit_uniform(rng);
    if (!missing()) r.smoking = sm < 0.35 ? Smoking::yes : (sm < 0.9 ? Smoking::no : Smoking::unknown);
    if (!missing()) r.pathology = kPaths[uniform_index(rng, kPaths.size())];
    if (!missing()) r.tnm_stage = bernoulli(rng, 0.05) ? kUnknownOrdinal : static_cast<int>(1 + uniform_index(rng, 4));
    if (!missing()) r.n_class = bernoulli(rng, 0.05) ? kUnknownOrdinal : static_cast<int>(uniform_index(rng, 4));

    for (const auto& m : kLabMoments) {
      const double mean = m.mean_neg + cfg.effect_labs * (m.mean_pos - m.mean_neg) * y;
      const double sd = (y > 0 && cfg.effect_labs > 0 ? m.sd_pos : m.sd_neg) * cfg.noise;
      const double v = mean + sd * standard_normal(rng);
      if (!missing()) r.labs[m.code] = std::max(0.1 * m.mean_neg, std::round(v * 100.0) / 100.0);
    }

    // first-day pain depends on the 48 h label
    const double p_pain24 = 0.5 + 0.5 * std::tanh(cfg.effect_pain24 * (y - 0.5) * 3.0);
    const bool pain24_pos = bernoulli(rng, p_pain24);
    auto draw_score = [&](bool positive) {
      return positive ? static_cast<int>(4 + uniform_index(rng, 6)) : static_cast<int>(uniform_index(rng, 4));
    };
    lat.nrs_24 = draw_score(pain24_pos);
    lat.nrs_48 = draw_score(lat.label_48);
    lat.nrs_72 = draw_score(lat.label_72);

    // analgesics: strong-opioid use follows first-day pain; doses scale with the label
    const double p_tier3 = detail::logistic(-0.5 + cfg.effect_tiers * (pain24_pos ? 1.5 : -1.5));
    const bool uses[3] = {bernoulli(rng, 0.6), bernoulli(rng, 0.35), bernoulli(rng, p_tier3)};
    for (int tier = 1; tier <= 3; ++tier) {
      if (!uses[tier - 1]) continue;
      const auto& drug = detail::pick_drug(rng, tier);
      const std::size_t n_doses = 1 + uniform_index(rng, 3);
      const double scale = std::exp(0.35 * standard_normal(rng) + (tier == 3 ? 0.4 * cfg.effect_tiers * y : 0.0));
      for (std::size_t k = 0; k < n_doses; ++k) {
        MedicationEntry e;
        e.time_h = detail::round1(0.5 + 47.0 * unit_uniform(rng));
        e.drug_text = drug.text;
        const double dose = drug.median_mg * scale;
        if (!bernoulli(rng, cfg.missing_dose_rate)) e.dose_mg = std::round(dose * 1000.0) / 1000.0;
        e.route = tier == 3 && drug.median_mg < 1.0 ? "transdermal" : "oral";
        r.medication_log.push_back(std::move(e));
      }
    }
    std::stable_sort(r.medication_log.begin(), r.medication_log.end(),
                     [](const auto& a, const auto& b) { return a.time_h < b.time_h; });

    // pain observations: per window one at the intended score, optionally lower ones
    const int window_scores[3] = {lat.nrs_24, lat.nrs_48, lat.nrs_72};
    for (int w = 0; w < 3; ++w) {
      const std::size_t extra = uniform_index(rng, 3);
      std::vector<int> scores{window_scores[w]};
      for (std::size_t k = 0; k < extra; ++k) scores.push_back(static_cast<int>(uniform_index(rng, window_scores[w] + 1)));
      for (int s : scores) {
        PainObservation o;
        o.time_h = detail::time_in_window(rng, 24.0 * w);
        if (bernoulli(rng, 0.15)) {
          o.nrs = s;
        } else {
          o.text = detail::observation_text(rng, s);
        }
        r.pain_observations.push_back(std::move(o));
        lat.observation_scores.push_back(s);
      }
    }

    if (!missing()) r.chief_complaint = kComplaints[uniform_index(rng, std::size(kComplaints))];

    r.clinical_notes.push_back({0.5, "Admitted for pain management review; oncology history reviewed."});
    lat.note_signal_48 = bernoulli(rng, cfg.note_signal_accuracy) ? lat.label_48 : !lat.label_48;
    lat.note_signal_72 = bernoulli(rng, cfg.note_signal_accuracy) ? lat.label_72 : !lat.label_72;
    auto phrase = [&](bool positive) {
      const auto& v = positive ? positive_note_phrases() : negative_note_phrases();
      return "Nursing: " + v[uniform_index(rng, v.size())] + ".";
    };
    r.clinical_notes.push_back({detail::round1(12.0 + 11.0 * unit_uniform(rng)), phrase(lat.note_signal_48)});
    r.clinical_notes.push_back({detail::round1(36.0 + 11.0 * unit_uniform(rng)), phrase(lat.note_signal_72)});

    out.cohort.records.push_back(std::move(r));
    out.latent.push_back(std::move(lat));
  }
  return out;
}

inline void write_latent_table(const std::vector<LatentRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write latent table: " + path);
  out << "patient_id,label_48,label_72,nrs_24,nrs_48,nrs_72,note_signal_48,note_signal_72\n";
  for (const auto& r : rows)
    out << r.patient_id << ',' << r.label_48 << ',' << r.label_72 << ',' << r.nrs_24 << ',' << r.nrs_48 << ','
        << r.nrs_72 << ',' << r.note_signal_48 << ',' << r.note_signal_72 << '\n';
}

/// Clinician stand-in that reads the most recent signal phrase in the prompt.
/// Answers "High probability (80%)" or "Low probability (15%)"; no phrase → Medium.
inline std::string mock_clinician_reply(const std::string& prompt) {
  std::size_t best_pos = std::string::npos;
  bool positive = false;
  auto scan = [&](const std::vector<std::string>& phrases, bool pos) {
    for (const auto& p : phrases) {
      const auto at = prompt.rfind(p);
      if (at != std::string::npos && (best_pos == std::string::npos || at > best_pos)) {
        best_pos = at;
        positive = pos;
      }
    }
  };
  scan(positive_note_phrases(), true);
  scan(negative_note_phrases(), false);
  if (best_pos == std::string::npos)
    return "3. Probability tier: Medium. Insufficient nursing documentation to refine the estimate.\n"
           "4. Main risk factors: unknown";
  if (positive)
    return "3. Probability tier: High probability (80%) of NRS >= 4.\n"
           "4. Main risk factors: documented breakthrough pain, analgesia wearing off";
  return "3. Probability tier: Low probability (15%) of NRS >= 4.\n"
         "4. Main risk factors: none prominent; current regimen effective";
}

}  // namespace painfc
