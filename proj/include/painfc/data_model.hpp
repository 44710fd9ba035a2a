#pragma once

// Patient record schema, line-delimited JSON ingestion and exclusion filtering.
//
// Record file: one JSON object per line. Keys:
//   patient_id (string, required), age (int), sex ("male"|"female"),
//   smoking ("yes"|"no"|"unknown"), pathology (see Pathology),
//   tnm_stage (1-4 | "unknown"), n_class (0-3 | "unknown"),
//   labs ({code: number}), medication_log ([{time_h, drug_text, dose_mg?, route?}]),
//   chief_complaint (string), clinical_notes ([{time_h, text}]),
//   pain_observations ([{time_h, text} | {time_h, nrs}])
// Any other key is kept verbatim in PatientRecord::extra.
// All times are hours from admission.

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "painfc/errors.hpp"
#include "painfc/strings.hpp"

namespace painfc {

enum class Sex { male, female };
enum class Smoking { yes, no, unknown };
enum class Pathology { adenocarcinoma, squamous, neuroendocrine, soft_tissue_sarcoma, other };

/// Ordinal value used by tnm_stage / n_class when the chart says "unknown".
inline constexpr int kUnknownOrdinal = -1;

struct MedicationEntry {
  double time_h = 0.0;
  std::string drug_text;
  std::optional<double> dose_mg;
  std::optional<std::string> route;
  bool operator==(const MedicationEntry&) const = default;
};

struct ClinicalNote {
  double time_h = 0.0;
  std::string text;
  bool operator==(const ClinicalNote&) const = default;
};

/// One pain assessment: free text as charted, or a numeric NRS, or both.
struct PainObservation {
  double time_h = 0.0;
  std::optional<std::string> text;
  std::optional<int> nrs;
  bool operator==(const PainObservation&) const = default;
};

struct PatientRecord {
  std::string patient_id;
  std::optional<int> age;
  std::optional<Sex> sex;
  std::optional<Smoking> smoking;
  std::optional<Pathology> pathology;
  std::optional<int> tnm_stage;  // 1-4 or kUnknownOrdinal
  std::optional<int> n_class;    // 0-3 or kUnknownOrdinal
  std::map<std::string, double> labs;
  std::vector<MedicationEntry> medication_log;
  std::optional<std::string> chief_complaint;
  std::vector<ClinicalNote> clinical_notes;
  std::vector<PainObservation> pain_observations;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const PatientRecord&) const = default;
};

struct Provenance {
  std::string source;
  std::string ingested_at;
};

struct Cohort {
  std::vector<PatientRecord> records;
  Provenance provenance;

  [[nodiscard]] const PatientRecord* find(std::string_view id) const {
    for (const auto& r : records)
      if (r.patient_id == id) return &r;
    return nullptr;
  }
  [[nodiscard]] std::size_t size() const { return records.size(); }
};

struct RejectedLine {
  std::size_t line_no = 0;  // 1-based
  std::string reason;
};

struct IngestResult {
  Cohort cohort;
  std::vector<RejectedLine> report;
};

struct Exclusion {
  std::string patient_id;
  std::string reason;
};

// ---------------------------------------------------------------------------
// enum <-> text

inline std::string_view to_string(Sex s) { return s == Sex::male ? "male" : "female"; }

inline std::string_view to_string(Smoking s) {
  switch (s) {
    case Smoking::yes: return "yes";
    case Smoking::no: return "no";
    default: return "unknown";
  }
}

inline std::string_view to_string(Pathology p) {
  switch (p) {
    case Pathology::adenocarcinoma: return "adenocarcinoma";
    case Pathology::squamous: return "squamous";
    case Pathology::neuroendocrine: return "neuroendocrine";
    case Pathology::soft_tissue_sarcoma: return "soft_tissue_sarcoma";
    default: return "other";
  }
}

inline std::optional<Sex> parse_sex(std::string_view s) {
  const auto l = str::lower(s);
  if (l == "male") return Sex::male;
  if (l == "female") return Sex::female;
  return std::nullopt;
}

inline std::optional<Smoking> parse_smoking(std::string_view s) {
  const auto l = str::lower(s);
  if (l == "yes") return Smoking::yes;
  if (l == "no") return Smoking::no;
  if (l == "unknown") return Smoking::unknown;
  return std::nullopt;
}

inline std::optional<Pathology> parse_pathology(std::string_view s) {
  const auto l = str::lower(s);
  for (auto p : {Pathology::adenocarcinoma, Pathology::squamous, Pathology::neuroendocrine,
                 Pathology::soft_tissue_sarcoma, Pathology::other})
    if (l == to_string(p)) return p;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// JSON <-> record

namespace detail {

struct RecordParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double require_time(const nlohmann::json& j, std::string_view where) {
  if (!j.contains("time_h") || !j["time_h"].is_number())
    throw RecordParseError(std::string(where) + ": time_h missing or not a number");
  const double t = j["time_h"].get<double>();
  if (!std::isfinite(t) || t < 0) throw RecordParseError(std::string(where) + ": time_h must be finite and >= 0");
  return t;
}

inline std::optional<int> parse_ordinal(const nlohmann::json& v, int lo, int hi, std::string_view name) {
  if (v.is_null()) return std::nullopt;
  if (v.is_string()) {
    if (str::lower(v.get<std::string>()) == "unknown") return kUnknownOrdinal;
    throw RecordParseError(std::string(name) + ": expected integer or \"unknown\"");
  }
  if (!v.is_number_integer()) throw RecordParseError(std::string(name) + ": expected integer or \"unknown\"");
  const int x = v.get<int>();
  if (x < lo || x > hi) throw RecordParseError(std::string(name) + ": out of range");
  return x;
}

inline nlohmann::json ordinal_json(int v) { return v == kUnknownOrdinal ? nlohmann::json("unknown") : nlohmann::json(v); }

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{"patient_id", "age", "sex", "smoking", "pathology",
                                          "tnm_stage", "n_class", "labs", "medication_log",
                                          "chief_complaint", "clinical_notes", "pain_observations"};
  return keys;
}

}  // namespace detail

/// Parses one record object. Throws std::runtime_error (with a readable reason) on any violation.
inline PatientRecord record_from_json(const nlohmann::json& j) {
  using detail::RecordParseError;
  if (!j.is_object()) throw RecordParseError("record is not an object");
  PatientRecord r;
  if (!j.contains("patient_id") || !j["patient_id"].is_string() || str::trim(j["patient_id"].get<std::string>()).empty())
    throw RecordParseError("missing patient_id");
  r.patient_id = j["patient_id"].get<std::string>();

  if (j.contains("age") && !j["age"].is_null()) {
    if (!j["age"].is_number_integer() || j["age"].get<long long>() < 0) throw RecordParseError("age must be an integer >= 0");
    r.age = j["age"].get<int>();
  }
  auto enum_field = [&](const char* key, auto parse) {
    using Ret = decltype(parse(std::string_view{}));
    if (!j.contains(key) || j[key].is_null()) return Ret{};
    if (!j[key].is_string()) throw RecordParseError(std::string(key) + ": expected string");
    auto v = parse(j[key].get<std::string>());
    if (!v) throw RecordParseError(std::string(key) + ": unrecognized value '" + j[key].get<std::string>() + "'");
    return v;
  };
  r.sex = enum_field("sex", parse_sex);
  r.smoking = enum_field("smoking", parse_smoking);
  r.pathology = enum_field("pathology", parse_pathology);
  if (j.contains("tnm_stage")) r.tnm_stage = detail::parse_ordinal(j["tnm_stage"], 1, 4, "tnm_stage");
  if (j.contains("n_class")) r.n_class = detail::parse_ordinal(j["n_class"], 0, 3, "n_class");

  if (j.contains("labs") && !j["labs"].is_null()) {
    if (!j["labs"].is_object()) throw RecordParseError("labs: expected object");
    for (const auto& [code, v] : j["labs"].items()) {
      if (!v.is_number() || !std::isfinite(v.get<double>())) throw RecordParseError("labs." + code + ": not a finite number");
      r.labs[code] = v.get<double>();
    }
  }
  if (j.contains("medication_log") && !j["medication_log"].is_null()) {
    if (!j["medication_log"].is_array()) throw RecordParseError("medication_log: expected array");
    for (const auto& m : j["medication_log"]) {
      MedicationEntry e;
      e.time_h = detail::require_time(m, "medication_log");
      if (!m.contains("drug_text") || !m["drug_text"].is_string()) throw RecordParseError("medication_log: drug_text missing");
      e.drug_text = m["drug_text"].get<std::string>();
      if (m.contains("dose_mg") && !m["dose_mg"].is_null()) {
        if (!m["dose_mg"].is_number() || !(m["dose_mg"].get<double>() > 0) || !std::isfinite(m["dose_mg"].get<double>()))
          throw RecordParseError("medication_log: dose_mg must be a positive number");
        e.dose_mg = m["dose_mg"].get<double>();
      }
      if (m.contains("route") && m["route"].is_string()) e.route = m["route"].get<std::string>();
      r.medication_log.push_back(std::move(e));
    }
  }
  if (j.contains("chief_complaint") && !j["chief_complaint"].is_null()) {
    if (!j["chief_complaint"].is_string()) throw RecordParseError("chief_complaint: expected string");
    r.chief_complaint = j["chief_complaint"].get<std::string>();
  }
  if (j.contains("clinical_notes") && !j["clinical_notes"].is_null()) {
    if (!j["clinical_notes"].is_array()) throw RecordParseError("clinical_notes: expected array");
    for (const auto& n : j["clinical_notes"]) {
      ClinicalNote note;
      note.time_h = detail::require_time(n, "clinical_notes");
      if (!n.contains("text") || !n["text"].is_string()) throw RecordParseError("clinical_notes: text missing");
      note.text = n["text"].get<std::string>();
      r.clinical_notes.push_back(std::move(note));
    }
  }
  if (j.contains("pain_observations") && !j["pain_observations"].is_null()) {
    if (!j["pain_observations"].is_array()) throw RecordParseError("pain_observations: expected array");
    for (const auto& o : j["pain_observations"]) {
      PainObservation obs;
      obs.time_h = detail::require_time(o, "pain_observations");
      if (o.contains("text") && o["text"].is_string()) obs.text = o["text"].get<std::string>();
      if (o.contains("nrs") && !o["nrs"].is_null()) {
        if (!o["nrs"].is_number_integer() || o["nrs"].get<int>() < 0 || o["nrs"].get<int>() > 10)
          throw RecordParseError("pain_observations: nrs must be an integer in [0, 10]");
        obs.nrs = o["nrs"].get<int>();
      }
      if (!obs.text && !obs.nrs) throw RecordParseError("pain_observations: entry has neither text nor nrs");
      r.pain_observations.push_back(std::move(obs));
    }
  }
  for (const auto& [key, v] : j.items())
    if (!detail::known_keys().count(key)) r.extra[key] = v;
  return r;
}

inline nlohmann::json record_to_json(const PatientRecord& r) {
  nlohmann::json j = nlohmann::json::object();
  j["patient_id"] = r.patient_id;
  if (r.age) j["age"] = *r.age;
  if (r.sex) j["sex"] = to_string(*r.sex);
  if (r.smoking) j["smoking"] = to_string(*r.smoking);
  if (r.pathology) j["pathology"] = to_string(*r.pathology);
  if (r.tnm_stage) j["tnm_stage"] = detail::ordinal_json(*r.tnm_stage);
  if (r.n_class) j["n_class"] = detail::ordinal_json(*r.n_class);
  if (!r.labs.empty()) j["labs"] = r.labs;
  if (!r.medication_log.empty()) {
    auto& arr = j["medication_log"] = nlohmann::json::array();
    for (const auto& e : r.medication_log) {
      nlohmann::json m{{"time_h", e.time_h}, {"drug_text", e.drug_text}};
      if (e.dose_mg) m["dose_mg"] = *e.dose_mg;
      if (e.route) m["route"] = *e.route;
      arr.push_back(std::move(m));
    }
  }
  if (r.chief_complaint) j["chief_complaint"] = *r.chief_complaint;
  if (!r.clinical_notes.empty()) {
    auto& arr = j["clinical_notes"] = nlohmann::json::array();
    for (const auto& n : r.clinical_notes) arr.push_back({{"time_h", n.time_h}, {"text", n.text}});
  }
  if (!r.pain_observations.empty()) {
    auto& arr = j["pain_observations"] = nlohmann::json::array();
    for (const auto& o : r.pain_observations) {
      nlohmann::json x{{"time_h", o.time_h}};
      if (o.text) x["text"] = *o.text;
      if (o.nrs) x["nrs"] = *o.nrs;
      arr.push_back(std::move(x));
    }
  }
  for (const auto& [key, v] : r.extra.items()) j[key] = v;
  return j;
}

inline std::string serialize_record(const PatientRecord& r) { return record_to_json(r).dump(); }

inline void write_cohort(const Cohort& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write cohort file: " + path);
  for (const auto& r : c.records) out << serialize_record(r) << '\n';
}

/// Parses an in-memory record stream. Bad lines are reported and skipped.
inline IngestResult ingest_stream(std::istream& in, std::string source) {
  IngestResult res;
  res.cohort.provenance.source = std::move(source);
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (str::trim(line).empty()) continue;
    try {
      auto rec = record_from_json(nlohmann::json::parse(line));
      if (!seen.insert(rec.patient_id).second) {
        res.report.push_back({line_no, "duplicate patient_id '" + rec.patient_id + "'"});
        continue;
      }
      res.cohort.records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      res.report.push_back({line_no, std::string("malformed JSON: ") + e.what()});
    } catch (const std::runtime_error& e) {
      res.report.push_back({line_no, e.what()});
    }
  }
  return res;
}

/// Reads a record file. `schema_version` must be "1" (the only layout so far).
inline IngestResult ingest_cohort(const std::string& path, std::string_view schema_version = "1") {
  if (schema_version != "1") throw ArgumentError("unsupported record schema version: " + std::string(schema_version));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read record file: " + path);
  return ingest_stream(in, path);
}

// ---------------------------------------------------------------------------
// missingness / exclusions

/// Field names understood by missingness(): top-level keys plus "labs.<CODE>".
inline std::vector<std::string> default_expected_fields() {
  return {"age", "sex", "smoking", "pathology", "tnm_stage", "n_class", "chief_complaint",
          "medication_log", "labs.AST", "labs.ALT", "labs.HCT", "labs.MCV", "labs.RBC", "labs.MCH", "labs.GGT"};
}

inline bool field_present(const PatientRecord& r, std::string_view field) {
  if (field.rfind("labs.", 0) == 0) return r.labs.count(std::string(field.substr(5))) > 0;
  if (field == "patient_id") return !r.patient_id.empty();
  if (field == "age") return r.age.has_value();
  if (field == "sex") return r.sex.has_value();
  if (field == "smoking") return r.smoking.has_value();
  if (field == "pathology") return r.pathology.has_value();
  if (field == "tnm_stage") return r.tnm_stage.has_value();
  if (field == "n_class") return r.n_class.has_value();
  if (field == "labs") return !r.labs.empty();
  if (field == "medication_log") return !r.medication_log.empty();
  if (field == "chief_complaint") return r.chief_complaint && !str::trim(*r.chief_complaint).empty();
  if (field == "clinical_notes") return !r.clinical_notes.empty();
  if (field == "pain_observations") return !r.pain_observations.empty();
  throw ArgumentError("unknown record field: " + std::string(field));
}

/// Fraction of `expected_fields` absent from the record.
inline double missingness(const PatientRecord& r, const std::vector<std::string>& expected_fields) {
  if (expected_fields.empty()) throw ArgumentError("missingness: expected_fields is empty");
  std::size_t absent = 0;
  for (const auto& f : expected_fields)
    if (!field_present(r, f)) ++absent;
  return static_cast<double>(absent) / static_cast<double>(expected_fields.size());
}

struct ExclusionConfig {
  double max_missing = 0.30;
  std::size_t min_pain_assessments = 3;
  std::vector<std::string> expected_fields = default_expected_fields();
};

struct ExclusionResult {
  Cohort retained;
  std::vector<Exclusion> excluded;
};

inline ExclusionResult apply_exclusions(const Cohort& cohort, const ExclusionConfig& cfg = {}) {
  if (!(cfg.max_missing >= 0.0 && cfg.max_missing <= 1.0)) throw ArgumentError("max_missing must lie in [0, 1]");
  ExclusionResult out;
  out.retained.provenance = cohort.provenance;
  for (const auto& r : cohort.records) {
    std::vector<std::string> reasons;
    const double miss = missingness(r, cfg.expected_fields);
    if (miss > cfg.max_missing)
      reasons.push_back("missing data fraction " + str::fmt_fixed(miss, 3) + " exceeds " + str::fmt_fixed(cfg.max_missing, 3));
    if (r.pain_observations.size() < cfg.min_pain_assessments) reasons.push_back("insufficient pain assessments");
    if (reasons.empty())
      out.retained.records.push_back(r);
    else
      out.excluded.push_back({r.patient_id, str::join(reasons, "; ")});
  }
  return out;
}

inline void write_exclusion_report(const std::vector<Exclusion>& ex, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write exclusion report: " + path);
  out << "patient_id,reason\n";
  for (const auto& e : ex) out << str::csv_field(e.patient_id) << ',' << str::csv_field(e.reason) << '\n';
}

}  // namespace painfc
