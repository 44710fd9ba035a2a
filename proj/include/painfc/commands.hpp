#pragma once

// Pipeline stages behind the command-line tool. Each stage reads its inputs from
// and writes its outputs to the run directory, so stages compose through files.
//
// Run directory layout:
//   cohort.jsonl, latent.csv                   synth
//   ingest/{clean.jsonl,rejected.csv,exclusions.csv,unmatched.csv,features_<h>.csv}
//   train/{summary.csv,cv_<h>_<model>.json,oof_<h>.csv}, models/<h>_<model>.json
//   eval/{metrics.csv,roc_<h>_<model>.csv,labs_<h>.csv,categorical_<h>.csv}
//   kb/{manifest.json,vectors.bin}             rag-index
//   predict/p_ml_<h>.csv
//   fuse/{audit_<h>.csv,llm_only_<h>.csv,band_<h>.json,llm_log.jsonl}
//   report/{metrics.csv,auc.csv,roc_<h>_<system>.csv}
//   manifest.json                              timestamps (the only non-reproducible file
//                                              besides the LLM latency log)

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "painfc/data_model.hpp"
#include "painfc/errors.hpp"
#include "painfc/eval_metrics.hpp"
#include "painfc/feature_pipeline.hpp"
#include "painfc/fusion.hpp"
#include "painfc/http_endpoint.hpp"
#include "painfc/learners.hpp"
#include "painfc/llm_bridge.hpp"
#include "painfc/pharma_ladder.hpp"
#include "painfc/rag_retriever.hpp"
#include "painfc/synth_cohort.hpp"
#include "painfc/text_extract.hpp"

namespace painfc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// configuration

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::string output_dir = "run";
  std::string cohort;           // empty: <output_dir>/cohort.jsonl
  std::string kb_dir;           // guideline text files for rag-index
  std::string lexicon;          // empty: built-in
  std::string rules;            // empty: built-in
  std::string prompt_template = "v3";  // v1 | v2 | v3 | path to a template file
  std::vector<Horizon> horizons{Horizon::h48, Horizon::h72};
  std::size_t k_folds = 5;
  SmoteConfig smote;
  std::vector<ModelSpec> models;
  std::string primary_model;    // empty: best mean CV AUC per horizon
  FusionConfig fusion;
  bool calibrate_band = false;
  bool llm_baseline = false;    // also query the LLM for every row (LLM-only column)
  EndpointConfig endpoint;
  std::size_t retrieval_k = 4;
  std::size_t prompt_budget = 16000;
  ExclusionConfig exclusion;
  SynthConfig synth;

  [[nodiscard]] std::uint64_t require_seed() const {
    if (!seed) throw ArgumentError("a seed is required: set \"seed\" in the config file or pass --seed");
    return *seed;
  }
  [[nodiscard]] fs::path out() const { return output_dir; }
  [[nodiscard]] fs::path cohort_path() const { return cohort.empty() ? out() / "cohort.jsonl" : fs::path(cohort); }
};

inline std::vector<ModelSpec> default_model_specs() {
  std::vector<ModelSpec> v;
  for (auto k : kAllModelKinds) v.push_back({k, {}, 0});
  return v;
}

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ArgumentError(where + " must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ArgumentError("unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace detail

/// Parses the JSON config. Unknown keys are errors so typos do not silently fall back.
inline RunConfig config_from_json(const json& j) {
  using detail::check_keys;
  using detail::read;
  check_keys(j, {"seed", "output_dir", "paths", "horizons", "k_folds", "smote", "models", "primary_model", "fusion",
                 "llm_baseline", "endpoint", "retrieval", "exclusion", "synth"},
             "");
  RunConfig c;
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  read(j, "output_dir", c.output_dir);
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    check_keys(p, {"cohort", "kb_dir", "lexicon", "rules", "prompt_template"}, "paths");
    read(p, "cohort", c.cohort);
    read(p, "kb_dir", c.kb_dir);
    read(p, "lexicon", c.lexicon);
    read(p, "rules", c.rules);
    read(p, "prompt_template", c.prompt_template);
  }
  if (j.contains("horizons")) {
    c.horizons.clear();
    for (const auto& h : j.at("horizons")) {
      auto ph = parse_horizon(h.get<std::string>());
      if (!ph) throw ArgumentError("unknown horizon '" + h.get<std::string>() + "' (expected h48 or h72)");
      c.horizons.push_back(*ph);
    }
  }
  read(j, "k_folds", c.k_folds);
  if (j.contains("smote")) {
    const auto& s = j.at("smote");
    check_keys(s, {"trigger_ratio", "k_neighbors", "target_ratio"}, "smote");
    read(s, "trigger_ratio", c.smote.trigger_ratio);
    read(s, "k_neighbors", c.smote.k_neighbors);
    read(s, "target_ratio", c.smote.target_ratio);
  }
  if (j.contains("models")) {
    for (const auto& m : j.at("models")) {
      ModelSpec spec;
      const auto name = m.is_string() ? m.get<std::string>() : m.at("kind").get<std::string>();
      auto kind = parse_model_kind(name);
      if (!kind) throw ArgumentError("unknown model kind '" + name + "'");
      spec.kind = *kind;
      if (m.is_object()) {
        check_keys(m, {"kind", "hyperparams"}, "models[]");
        if (m.contains("hyperparams")) spec.hyperparams = m.at("hyperparams").get<Hyperparams>();
      }
      spec.validate();
      c.models.push_back(std::move(spec));
    }
  }
  read(j, "primary_model", c.primary_model);
  if (j.contains("fusion")) {
    const auto& f = j.at("fusion");
    check_keys(f, {"alpha", "beta", "decision_threshold", "band_mode", "calibrate"}, "fusion");
    read(f, "alpha", c.fusion.alpha);
    read(f, "beta", c.fusion.beta);
    read(f, "decision_threshold", c.fusion.decision_threshold);
    if (f.contains("band_mode")) c.fusion.band_mode = parse_band_mode(f.at("band_mode").get<std::string>());
    read(f, "calibrate", c.calibrate_band);
  }
  read(j, "llm_baseline", c.llm_baseline);
  if (j.contains("endpoint")) {
    const auto& e = j.at("endpoint");
    check_keys(e, {"mock", "base_url", "path", "model", "api_key_env", "max_parallel", "max_retries",
                   "initial_backoff_ms", "timeout_ms"},
               "endpoint");
    read(e, "mock", c.endpoint.mock);
    read(e, "base_url", c.endpoint.base_url);
    read(e, "path", c.endpoint.path);
    read(e, "model", c.endpoint.model);
    read(e, "api_key_env", c.endpoint.api_key_env);
    read(e, "max_parallel", c.endpoint.max_parallel);
    read(e, "max_retries", c.endpoint.retry.max_retries);
    if (e.contains("initial_backoff_ms"))
      c.endpoint.retry.initial_backoff = std::chrono::milliseconds(e.at("initial_backoff_ms").get<long long>());
    if (e.contains("timeout_ms")) c.endpoint.retry.request_timeout = std::chrono::milliseconds(e.at("timeout_ms").get<long long>());
  }
  if (j.contains("retrieval")) {
    const auto& r = j.at("retrieval");
    check_keys(r, {"k", "prompt_budget"}, "retrieval");
    read(r, "k", c.retrieval_k);
    read(r, "prompt_budget", c.prompt_budget);
  }
  if (j.contains("exclusion")) {
    const auto& x = j.at("exclusion");
    check_keys(x, {"max_missing", "min_pain_assessments"}, "exclusion");
    read(x, "max_missing", c.exclusion.max_missing);
    read(x, "min_pain_assessments", c.exclusion.min_pain_assessments);
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    check_keys(s, {"n_patients", "positive_rate_48", "positive_rate_72", "horizon_correlation", "effect_labs",
                   "effect_tiers", "effect_pain24", "noise", "note_signal_accuracy", "missing_field_rate",
                   "missing_dose_rate"},
               "synth");
    read(s, "n_patients", c.synth.n_patients);
    read(s, "positive_rate_48", c.synth.positive_rate_48);
    read(s, "positive_rate_72", c.synth.positive_rate_72);
    read(s, "horizon_correlation", c.synth.horizon_correlation);
    read(s, "effect_labs", c.synth.effect_labs);
    read(s, "effect_tiers", c.synth.effect_tiers);
    read(s, "effect_pain24", c.synth.effect_pain24);
    read(s, "noise", c.synth.noise);
    read(s, "note_signal_accuracy", c.synth.note_signal_accuracy);
    read(s, "missing_field_rate", c.synth.missing_field_rate);
    read(s, "missing_dose_rate", c.synth.missing_dose_rate);
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ArgumentError("config file " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline void validate(RunConfig& c) {
  (void)c.require_seed();
  if (c.models.empty()) c.models = default_model_specs();
  if (c.horizons.empty()) throw ArgumentError("at least one horizon is required");
  if (c.k_folds < 2) throw ArgumentError("k_folds must be at least 2");
  if (c.retrieval_k < 1) throw ArgumentError("retrieval.k must be at least 1");
  c.smote.validate();
  c.fusion.validate();
  for (const auto& p : {c.lexicon, c.rules})
    if (!p.empty() && !fs::exists(p)) throw IoError("configured file does not exist: " + p);
  if (c.prompt_template != "v1" && c.prompt_template != "v2" && c.prompt_template != "v3" && !fs::exists(c.prompt_template))
    throw IoError("prompt template not found: " + c.prompt_template);
}

/// Per-stage seeds all derive from the one run seed.
inline std::uint64_t stage_seed(const RunConfig& c, const std::string& stage) { return derive_seed(c.require_seed(), stage); }

// ---------------------------------------------------------------------------
// shared helpers

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

/// Appends one entry to the run manifest (the timestamp sidecar).
inline void record_manifest(const RunConfig& c, const std::string& command, const std::string& started,
                            const std::vector<std::string>& outputs) {
  fs::create_directories(c.out());
  const auto path = c.out() / "manifest.json";
  json m = json::object();
  if (std::ifstream in(path); in) {
    try {
      m = json::parse(in);
    } catch (const json::exception&) {
      m = json::object();
    }
  }
  if (!m.contains("runs")) m["runs"] = json::array();
  m["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  m["runs"].push_back({{"command", command}, {"started_at", started}, {"finished_at", utc_now()}, {"outputs", outputs}});
  std::ofstream(path) << m.dump(2) << '\n';
}

inline void require_file(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) throw IoError("missing upstream artifact " + p.string() + " (run `painfc " + producer + "` first)");
}

inline void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

inline json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  return json::parse(in);
}

inline std::string h_tag(Horizon h) { return std::string(to_string(h)); }

inline DrugLexicon lexicon_for(const RunConfig& c) { return c.lexicon.empty() ? default_lexicon() : load_lexicon(c.lexicon); }
inline RuleSet rules_for(const RunConfig& c) { return c.rules.empty() ? default_rule_set() : load_rule_set(c.rules); }
inline PromptTemplate template_for(const RunConfig& c) {
  if (c.prompt_template == "v1" || c.prompt_template == "v2" || c.prompt_template == "v3")
    return prompt_template_by_name(c.prompt_template);
  return load_prompt_template(c.prompt_template);
}

/// Cohort after exclusions, with window scores and dose profiles per patient.
struct Prepared {
  Cohort cohort;
  std::vector<RejectedLine> rejected;
  std::vector<Exclusion> excluded;
  std::map<std::string, PainWindowScores> scores;
  std::map<std::string, TierDoseProfile> profiles;
  std::vector<std::pair<std::string, std::size_t>> unmatched;  // patient, observation index
};

inline Prepared prepare(const RunConfig& c, const fs::path& cohort_path, const std::string& producer = "synth") {
  require_file(cohort_path, producer);
  auto ing = ingest_cohort(cohort_path.string());
  auto ex = apply_exclusions(ing.cohort, c.exclusion);
  Prepared p;
  p.rejected = std::move(ing.report);
  p.excluded = std::move(ex.excluded);
  p.cohort = std::move(ex.retained);
  const auto lex = lexicon_for(c);
  const auto rules = rules_for(c);
  for (auto& r : p.cohort.records) {
    r.medication_log = backfill_doses(sorted_by_time(std::move(r.medication_log)), &lex);
    auto er = extract_scores_detailed(r.pain_observations, rules);
    for (auto i : er.unmatched) p.unmatched.emplace_back(r.patient_id, i);
    p.scores[r.patient_id] = er.scores;
    p.profiles[r.patient_id] = build_profile(r.medication_log, lex);
  }
  return p;
}

inline std::string model_file_tag(Horizon h, ModelKind k) { return h_tag(h) + "_" + std::string(to_string(k)); }

/// A two-column-or-more CSV: header + rows of fields.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw SchemaError("table has no column '" + name + "'");
  }
};

inline Table read_table(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty table " + p.string());
  t.header = str::parse_csv_line(line);
  while (std::getline(in, line))
    if (!str::trim(line).empty()) t.rows.push_back(str::parse_csv_line(line));
  return t;
}

inline std::string fmt_rate(const Rate& r) {
  return r.value() ? str::fmt_fixed(*r.value(), 3) : std::string("NA");
}

inline void write_roc(const RocCurve& roc, const fs::path& p) {
  std::ostringstream s;
  s << "fpr,tpr,threshold\n";
  for (const auto& pt : roc.points)
    s << str::fmt_double(pt.fpr) << ',' << str::fmt_double(pt.tpr) << ','
      << (std::isfinite(pt.threshold) ? str::fmt_double(pt.threshold) : std::string(pt.threshold > 0 ? "inf" : "-inf"))
      << '\n';
  write_text(p, s.str());
}

// ---------------------------------------------------------------------------
// commands

inline std::vector<std::string> cmd_synth(const RunConfig& c) {
  auto sc = c.synth;
  sc.seed = stage_seed(c, "synth");
  auto res = generate(sc);
  res.cohort.provenance.source = "synth";
  fs::create_directories(c.out());
  const auto cohort_path = c.cohort_path();
  if (cohort_path.has_parent_path()) fs::create_directories(cohort_path.parent_path());
  write_cohort(res.cohort, cohort_path.string());
  write_latent_table(res.latent, (c.out() / "latent.csv").string());
  std::cout << "synth: wrote " << res.cohort.size() << " records to " << cohort_path.string() << '\n';
  return {cohort_path.string(), (c.out() / "latent.csv").string()};
}

inline std::vector<std::string> cmd_ingest(const RunConfig& c) {
  auto p = prepare(c, c.cohort_path());
  const auto dir = c.out() / "ingest";
  fs::create_directories(dir);
  write_cohort(p.cohort, (dir / "clean.jsonl").string());
  {
    std::ostringstream s;
    s << "line,reason\n";
    for (const auto& r : p.rejected) s << r.line_no << ',' << str::csv_field(r.reason) << '\n';
    write_text(dir / "rejected.csv", s.str());
  }
  write_exclusion_report(p.excluded, (dir / "exclusions.csv").string());
  {
    std::ostringstream s;
    s << "patient_id,observation_index\n";
    for (const auto& [id, i] : p.unmatched) s << str::csv_field(id) << ',' << i << '\n';
    write_text(dir / "unmatched.csv", s.str());
  }
  std::vector<std::string> outs{(dir / "clean.jsonl").string(), (dir / "rejected.csv").string(),
                                (dir / "exclusions.csv").string(), (dir / "unmatched.csv").string()};
  for (auto h : c.horizons) {
    auto a = assemble(p.cohort, p.scores, p.profiles, h);
    const auto f = dir / ("features_" + h_tag(h) + ".csv");
    std::ofstream out(f, std::ios::binary);
    write_matrix_csv(a.matrix, out);
    outs.push_back(f.string());
    std::cout << "ingest: " << h_tag(h) << " " << a.matrix.rows << " rows x " << a.matrix.cols << " features ("
              << a.matrix.count_positive() << " positive, " << a.dropped.size() << " without a label)\n";
  }
  std::cout << "ingest: " << p.cohort.size() << " retained, " << p.excluded.size() << " excluded, " << p.rejected.size()
            << " rejected lines\n";
  return outs;
}

inline std::vector<std::string> cmd_train(const RunConfig& c) {
  auto p = prepare(c, c.cohort_path());
  const auto tdir = c.out() / "train";
  const auto mdir = c.out() / "models";
  fs::create_directories(tdir);
  fs::create_directories(mdir);
  std::vector<std::string> outs;
  std::ostringstream summary;
  summary << "horizon,model,mean_auc,sd_auc,selected\n";
  for (auto h : c.horizons) {
    const auto a = assemble(p.cohort, p.scores, p.profiles, h);
    const auto& X = a.matrix;
    auto smote = c.smote;
    smote.seed = stage_seed(c, "smote/" + h_tag(h));
    const auto cv_seed = stage_seed(c, "cv/" + h_tag(h));
    std::vector<CvReport> reports;
    for (const auto& base : c.models) {
      auto spec = base;
      spec.seed = stage_seed(c, "model/" + h_tag(h) + "/" + std::string(to_string(spec.kind)));
      auto rep = cross_validate(spec, X, c.k_folds, smote, cv_seed);
      auto fitted = fit_pipeline(spec, X, smote);
      fitted.lab_codes = a.lab_codes;
      const auto tag = model_file_tag(h, spec.kind);
      write_text(tdir / ("cv_" + tag + ".json"), to_json(rep).dump(2) + "\n");
      write_text(mdir / (tag + ".json"), to_json(fitted).dump() + "\n");
      outs.push_back((tdir / ("cv_" + tag + ".json")).string());
      outs.push_back((mdir / (tag + ".json")).string());
      std::cout << "train: " << h_tag(h) << " " << to_string(spec.kind) << " CV AUC " << str::fmt_fixed(rep.mean_auc, 3)
                << " +/- " << str::fmt_fixed(rep.sd_auc, 3) << '\n';
      reports.push_back(std::move(rep));
    }
    std::size_t sel = 0;
    if (!c.primary_model.empty()) {
      const auto k = parse_model_kind(c.primary_model);
      bool found = false;
      for (std::size_t i = 0; i < reports.size(); ++i)
        if (k && reports[i].spec.kind == *k) sel = i, found = true;
      if (!found) throw ArgumentError("primary_model '" + c.primary_model + "' is not among the trained models");
    } else {
      for (std::size_t i = 1; i < reports.size(); ++i)
        if (reports[i].mean_auc > reports[sel].mean_auc) sel = i;
    }
    std::ostringstream oof;
    oof << "patient_id,label";
    for (const auto& r : reports) oof << ',' << to_string(r.spec.kind);
    oof << '\n';
    for (std::size_t i = 0; i < X.rows; ++i) {
      oof << str::csv_field(X.row_ids[i]) << ',' << int(X.labels[i]);
      for (const auto& r : reports) oof << ',' << str::fmt_double(r.oof_proba[i]);
      oof << '\n';
    }
    write_text(tdir / ("oof_" + h_tag(h) + ".csv"), oof.str());
    outs.push_back((tdir / ("oof_" + h_tag(h) + ".csv")).string());
    for (std::size_t i = 0; i < reports.size(); ++i)
      summary << h_tag(h) << ',' << to_string(reports[i].spec.kind) << ',' << str::fmt_double(reports[i].mean_auc) << ','
              << str::fmt_double(reports[i].sd_auc) << ',' << (i == sel ? 1 : 0) << '\n';
  }
  write_text(tdir / "summary.csv", summary.str());
  outs.push_back((tdir / "summary.csv").string());
  return outs;
}

/// Model selected by `train` for a horizon.
inline std::string selected_model(const RunConfig& c, Horizon h) {
  const auto path = c.out() / "train" / "summary.csv";
  require_file(path, "train");
  const auto t = read_table(path);
  for (const auto& r : t.rows)
    if (r.at(t.col("horizon")) == h_tag(h) && r.at(t.col("selected")) == "1") return r.at(t.col("model"));
  throw SchemaError("train summary has no selected model for " + h_tag(h));
}

struct ScoredRows {
  std::vector<std::string> ids;
  Labels labels;
  std::vector<double> scores;
};

inline ScoredRows read_oof(const RunConfig& c, Horizon h, const std::string& model) {
  const auto path = c.out() / "train" / ("oof_" + h_tag(h) + ".csv");
  require_file(path, "train");
  const auto t = read_table(path);
  const auto ci = t.col("patient_id"), cl = t.col("label"), cm = t.col(model);
  ScoredRows s;
  for (const auto& r : t.rows) {
    s.ids.push_back(r.at(ci));
    s.labels.push_back(r.at(cl) == "1" ? 1 : 0);
    s.scores.push_back(str::to_double(r.at(cm)).value_or(NAN));
  }
  return s;
}

inline std::vector<std::string> cmd_evaluate(const RunConfig& c) {
  const auto dir = c.out() / "eval";
  fs::create_directories(dir);
  std::vector<std::string> outs;
  std::ostringstream metrics;
  metrics << "horizon,model,auc,cv_mean_auc,cv_sd_auc,sensitivity,specificity,accuracy\n";
  auto p = prepare(c, c.cohort_path());
  for (auto h : c.horizons) {
    const auto oof_path = c.out() / "train" / ("oof_" + h_tag(h) + ".csv");
    require_file(oof_path, "train");
    const auto t = read_table(oof_path);
    for (std::size_t col = 2; col < t.header.size(); ++col) {
      const auto model = t.header[col];
      const auto s = read_oof(c, h, model);
      const auto roc = roc_auc(s.labels, s.scores);
      const auto m = sens_spec_acc(confusion(s.labels, threshold_predictions(s.scores, c.fusion.decision_threshold)));
      const auto cv = read_json(c.out() / "train" / ("cv_" + h_tag(h) + "_" + model + ".json"));
      metrics << h_tag(h) << ',' << model << ',' << str::fmt_fixed(roc.auc, 4) << ','
              << str::fmt_fixed(cv.at("mean_auc").get<double>(), 4) << ',' << str::fmt_fixed(cv.at("sd_auc").get<double>(), 4)
              << ',' << fmt_rate(m.sensitivity) << ',' << fmt_rate(m.specificity) << ',' << fmt_rate(m.accuracy) << '\n';
      const auto roc_path = dir / ("roc_" + h_tag(h) + "_" + model + ".csv");
      write_roc(roc, roc_path);
      outs.push_back(roc_path.string());
    }

    // group comparison of labs and categorical variables by the horizon label
    const auto a = assemble(p.cohort, p.scores, p.profiles, h);
    std::map<std::string, const PatientRecord*> by_id;
    for (const auto& r : p.cohort.records) by_id[r.patient_id] = &r;
    std::ostringstream labs;
    labs << "lab,negative_mean,negative_sd,negative_n,positive_mean,positive_sd,positive_n,t,df,p_value\n";
    for (const auto& code : a.lab_codes) {
      std::vector<double> neg, pos;
      for (std::size_t i = 0; i < a.matrix.rows; ++i) {
        const auto& rec = *by_id.at(a.matrix.row_ids[i]);
        if (auto it = rec.labs.find(code); it != rec.labs.end()) (a.matrix.labels[i] ? pos : neg).push_back(it->second);
      }
      if (neg.size() < 2 || pos.size() < 2) continue;
      const auto g = group_compare(neg, pos);
      labs << code << ',' << str::fmt_fixed(g.a.mean, 2) << ',' << str::fmt_fixed(g.a.sd, 2) << ',' << g.a.n << ','
           << str::fmt_fixed(g.b.mean, 2) << ',' << str::fmt_fixed(g.b.sd, 2) << ',' << g.b.n << ','
           << str::fmt_fixed(g.t, 4) << ',' << str::fmt_fixed(g.df, 2) << ',' << str::fmt_fixed(g.p_value, 4) << '\n';
    }
    write_text(dir / ("labs_" + h_tag(h) + ".csv"), labs.str());
    outs.push_back((dir / ("labs_" + h_tag(h) + ".csv")).string());

    std::ostringstream cat;
    cat << "variable,chi_square,df,p_value\n";
    auto categorical = [&](const std::string& name, auto level_of, std::size_t levels) {
      std::vector<std::vector<double>> table(levels, std::vector<double>(2, 0.0));
      for (std::size_t i = 0; i < a.matrix.rows; ++i)
        if (auto lv = level_of(*by_id.at(a.matrix.row_ids[i]))) table[*lv][a.matrix.labels[i]] += 1.0;
      std::erase_if(table, [](const auto& row) { return row[0] + row[1] == 0.0; });
      if (table.size() < 2 || std::all_of(table.begin(), table.end(), [](auto& r) { return r[0] == 0; }) ||
          std::all_of(table.begin(), table.end(), [](auto& r) { return r[1] == 0; }))
        return;
      const auto r = chi_square_independence(table);
      cat << name << ',' << str::fmt_fixed(r.statistic, 4) << ',' << str::fmt_double(r.df) << ','
          << str::fmt_fixed(r.p_value, 4) << '\n';
    };
    categorical("sex", [](const PatientRecord& r) -> std::optional<std::size_t> {
      return r.sex ? std::optional<std::size_t>(static_cast<std::size_t>(*r.sex)) : std::nullopt; }, 2);
    categorical("smoking", [](const PatientRecord& r) -> std::optional<std::size_t> {
      return r.smoking ? std::optional<std::size_t>(static_cast<std::size_t>(*r.smoking)) : std::nullopt; }, 3);
    categorical("pathology", [](const PatientRecord& r) -> std::optional<std::size_t> {
      return r.pathology ? std::optional<std::size_t>(static_cast<std::size_t>(*r.pathology)) : std::nullopt; }, 5);
    write_text(dir / ("categorical_" + h_tag(h) + ".csv"), cat.str());
    outs.push_back((dir / ("categorical_" + h_tag(h) + ".csv")).string());
  }
  write_text(dir / "metrics.csv", metrics.str());
  outs.push_back((dir / "metrics.csv").string());
  std::cout << "evaluate: wrote " << (dir / "metrics.csv").string() << '\n';
  return outs;
}

inline std::vector<std::string> cmd_rag_index(const RunConfig& c) {
  if (c.kb_dir.empty()) throw ArgumentError("rag-index needs paths.kb_dir (or --kb-dir)");
  if (!fs::is_directory(c.kb_dir)) throw IoError("knowledge-base directory not found: " + c.kb_dir);
  HashedNgramEmbedder emb;
  auto res = ingest_kb(c.kb_dir, emb);
  save_kb(res.kb, c.out() / "kb");
  std::cout << "rag-index: " << res.kb.docs.size() << " chunks indexed";
  if (!res.skipped.empty()) std::cout << ", " << res.skipped.size() << " files skipped";
  std::cout << '\n';
  return {(c.out() / "kb" / "manifest.json").string(), (c.out() / "kb" / "vectors.bin").string()};
}

/// p_ML per patient. For the training cohort these are the out-of-fold
/// probabilities of the selected model; `external_cohort` scores new records with
/// the model fit on the full training cohort.
inline std::vector<std::string> cmd_predict(const RunConfig& c, const std::string& external_cohort = {}) {
  const auto dir = c.out() / "predict";
  fs::create_directories(dir);
  std::vector<std::string> outs;
  for (auto h : c.horizons) {
    const auto model = selected_model(c, h);
    std::ostringstream s;
    s << "patient_id,label,p_ml,model,source\n";
    if (external_cohort.empty()) {
      const auto rows = read_oof(c, h, model);
      for (std::size_t i = 0; i < rows.ids.size(); ++i)
        s << str::csv_field(rows.ids[i]) << ',' << int(rows.labels[i]) << ',' << str::fmt_double(rows.scores[i]) << ','
          << model << ",out_of_fold\n";
    } else {
      const auto mpath = c.out() / "models" / (h_tag(h) + "_" + model + ".json");
      require_file(mpath, "train");
      const auto pipe = pipeline_from_json(read_json(mpath));
      auto p = prepare(c, external_cohort, "ingest");
      AssembleSpec as;
      as.lab_codes = pipe.lab_codes;
      as.require_label = false;
      const auto a = assemble(p.cohort, p.scores, p.profiles, h, as);
      const auto proba = pipe.predict(a.matrix);
      const std::set<std::string> unlabeled(a.unlabeled.begin(), a.unlabeled.end());
      for (std::size_t i = 0; i < a.matrix.rows; ++i)
        s << str::csv_field(a.matrix.row_ids[i]) << ','
          << (unlabeled.count(a.matrix.row_ids[i]) ? std::string{} : std::to_string(int(a.matrix.labels[i]))) << ','
          << str::fmt_double(proba[i]) << ',' << model << ",full_fit\n";
    }
    const auto path = dir / ("p_ml_" + h_tag(h) + ".csv");
    write_text(path, s.str());
    outs.push_back(path.string());
    std::cout << "predict: " << h_tag(h) << " using " << model << " -> " << path.string() << '\n';
  }
  return outs;
}

inline ScoredRows read_p_ml(const RunConfig& c, Horizon h) {
  const auto path = c.out() / "predict" / ("p_ml_" + h_tag(h) + ".csv");
  require_file(path, "predict");
  const auto t = read_table(path);
  ScoredRows s;
  for (const auto& r : t.rows) {
    s.ids.push_back(r.at(t.col("patient_id")));
    s.labels.push_back(r.at(t.col("label")) == "1" ? 1 : 0);
    s.scores.push_back(str::to_double(r.at(t.col("p_ml"))).value_or(NAN));
  }
  return s;
}

inline std::shared_ptr<ChatEndpoint> make_endpoint(const RunConfig& c) {
  if (c.endpoint.mock)
    return std::make_shared<MockEndpoint>([](const ChatRequest& r) { return mock_clinician_reply(r.messages.back().content); });
  auto cfg = c.endpoint;
  cfg.apply_environment();
  return std::make_shared<HttpChatEndpoint>(cfg);
}

struct FuseStats {
  std::size_t llm_calls = 0;
  std::size_t in_band = 0;
};

inline std::vector<std::string> cmd_fuse(const RunConfig& c, FuseStats* stats = nullptr,
                                         std::shared_ptr<ChatEndpoint> endpoint = nullptr) {
  const auto dir = c.out() / "fuse";
  fs::create_directories(dir);
  auto p = prepare(c, c.cohort_path());
  std::map<std::string, const PatientRecord*> by_id;
  for (const auto& r : p.cohort.records) by_id[r.patient_id] = &r;

  std::optional<KnowledgeBase> kb;
  if (fs::exists(c.out() / "kb" / "manifest.json")) {
    kb = load_kb(c.out() / "kb");
  } else {
    warn("no knowledge-base index under " + (c.out() / "kb").string() + "; prompts carry no retrieved context");
  }
  HashedNgramEmbedder emb;
  if (kb && kb->provider_id != emb.id())
    throw SchemaError("KB was built with embedding provider '" + kb->provider_id + "', expected '" + emb.id() + "'");
  if (!endpoint) endpoint = make_endpoint(c);
  AuditLog log((dir / "llm_log.jsonl").string());
  PromptConfig pc{template_for(c), c.prompt_budget};

  auto prompt_for = [&](const std::string& id, Horizon h) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw SchemaError("patient " + id + " from the p_ml table is not in the cohort");
    const auto& rec = *it->second;
    const auto& scores = p.scores.at(id);
    std::vector<RetrievedDoc> docs;
    if (kb && !kb->empty()) docs = resolve_docs(*kb, top_k(*kb, emb, patient_summary(rec, scores, h), c.retrieval_k));
    return build_prompt(rec, p.profiles.at(id), scores, docs, h, pc);
  };
  auto query = [&](const std::vector<std::size_t>& rows, const ScoredRows& s, Horizon h, const std::string& purpose) {
    std::vector<PromptBundle> prompts;
    std::vector<std::string> tags;
    for (auto i : rows) {
      prompts.push_back(prompt_for(s.ids[i], h));
      tags.push_back(purpose + "/" + h_tag(h) + "/" + s.ids[i]);
    }
    auto outcomes = complete_many(endpoint, prompts, c.endpoint.retry, c.endpoint.model, &log, c.endpoint.max_parallel,
                                  real_sleep, tags);
    std::map<std::size_t, LlmProbability> est;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (outcomes[j].response) {
        est[rows[j]] = parse_probability(*outcomes[j].response);
      } else {
        warn("LLM request for " + s.ids[rows[j]] + " failed: " + outcomes[j].error);
        est[rows[j]] = {TierMidpoints{}.failure_default, ProbabilityProvenance::parse_failure_default};
      }
    }
    if (stats) stats->llm_calls += rows.size();
    return est;
  };

  std::vector<std::string> outs;
  for (auto h : c.horizons) {
    const auto s = read_p_ml(c, h);
    auto fcfg = c.fusion;
    if (c.calibrate_band) {
      const auto band = calibrate_band(s.labels, s.scores);
      fcfg.alpha = band.alpha;
      fcfg.beta = band.beta;
      json bj{{"alpha", band.alpha}, {"beta", band.beta}, {"break_even_threshold", band.break_even_threshold},
              {"break_even_value", band.break_even_value}, {"fallback", band.fallback}, {"report", band.report}};
      write_text(dir / ("band_" + h_tag(h) + ".json"), bj.dump(2) + "\n");
      outs.push_back((dir / ("band_" + h_tag(h) + ".json")).string());
    }
    std::vector<std::size_t> in_band;
    for (std::size_t i = 0; i < s.ids.size(); ++i)
      if (fcfg.in_band(s.scores[i])) in_band.push_back(i);
    if (stats) stats->in_band += in_band.size();
    const auto est = query(in_band, s, h, "fusion");
    const auto decisions =
        fuse_cohort(s.ids, s.scores, [&](std::size_t i) { return est.at(i); }, fcfg);
    const auto audit_path = dir / ("audit_" + h_tag(h) + ".csv");
    write_fusion_audit(decisions, audit_path.string());
    outs.push_back(audit_path.string());
    std::cout << "fuse: " << h_tag(h) << " " << in_band.size() << " of " << s.ids.size() << " rows in band ("
              << str::fmt_double(fcfg.alpha) << ", " << str::fmt_double(fcfg.beta) << "); LLM queried for each\n";

    if (c.llm_baseline) {
      std::vector<std::size_t> all(s.ids.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      const auto base = query(all, s, h, "baseline");
      std::ostringstream o;
      o << "patient_id,label,p_llm,provenance\n";
      for (std::size_t i = 0; i < s.ids.size(); ++i)
        o << str::csv_field(s.ids[i]) << ',' << int(s.labels[i]) << ',' << str::fmt_double(base.at(i).p_llm) << ','
          << to_string(base.at(i).provenance) << '\n';
      write_text(dir / ("llm_only_" + h_tag(h) + ".csv"), o.str());
      outs.push_back((dir / ("llm_only_" + h_tag(h) + ".csv")).string());
    }
  }
  return outs;
}

inline std::vector<std::string> cmd_report(const RunConfig& c) {
  const auto dir = c.out() / "report";
  fs::create_directories(dir);
  std::vector<std::string> outs;
  std::ostringstream table, auc;
  table << "horizon,metric,ml_only,llm_only,ml_llm\n";
  auc << "horizon,system,auc\n";
  for (auto h : c.horizons) {
    ScoredRows ml;
    if (fs::exists(c.out() / "predict" / ("p_ml_" + h_tag(h) + ".csv"))) {
      ml = read_p_ml(c, h);
    } else {
      ml = read_oof(c, h, selected_model(c, h));
    }
    const double thr = c.fusion.decision_threshold;
    const auto m_ml = sens_spec_acc(confusion(ml.labels, threshold_predictions(ml.scores, thr)));
    std::map<std::string, std::uint8_t> label_of;
    for (std::size_t i = 0; i < ml.ids.size(); ++i) label_of[ml.ids[i]] = ml.labels[i];

    std::optional<SensSpecAcc> m_llm, m_hyb;
    auto emit_roc = [&](const std::string& system, const Labels& y, const std::vector<double>& sc) {
      const auto roc = roc_auc(y, sc);
      write_roc(roc, dir / ("roc_" + h_tag(h) + "_" + system + ".csv"));
      outs.push_back((dir / ("roc_" + h_tag(h) + "_" + system + ".csv")).string());
      auc << h_tag(h) << ',' << system << ',' << str::fmt_fixed(roc.auc, 4) << '\n';
    };
    emit_roc("ml_only", ml.labels, ml.scores);

    const auto llm_path = c.out() / "fuse" / ("llm_only_" + h_tag(h) + ".csv");
    if (fs::exists(llm_path)) {
      const auto t = read_table(llm_path);
      Labels y;
      std::vector<double> sc;
      for (const auto& r : t.rows) {
        y.push_back(label_of.at(r.at(t.col("patient_id"))));
        sc.push_back(str::to_double(r.at(t.col("p_llm"))).value_or(0.5));
      }
      m_llm = sens_spec_acc(confusion(y, threshold_predictions(sc, thr)));
      emit_roc("llm_only", y, sc);
    }
    const auto audit_path = c.out() / "fuse" / ("audit_" + h_tag(h) + ".csv");
    if (fs::exists(audit_path)) {
      const auto rows = read_fusion_audit(audit_path.string());
      Labels y, pred;
      std::vector<double> sc;
      for (const auto& d : rows) {
        y.push_back(label_of.at(d.patient_id));
        pred.push_back(d.predicted ? 1 : 0);
        sc.push_back(d.p_final);
      }
      m_hyb = sens_spec_acc(confusion(y, pred));
      emit_roc("ml_llm", y, sc);
    }
    auto cell = [](const std::optional<SensSpecAcc>& m, Rate SensSpecAcc::*f) { return m ? fmt_rate((*m).*f) : "NA"; };
    const std::optional<SensSpecAcc> mm = m_ml;
    for (auto [name, f] : {std::pair{"sensitivity", &SensSpecAcc::sensitivity}, std::pair{"specificity", &SensSpecAcc::specificity},
                           std::pair{"accuracy", &SensSpecAcc::accuracy}})
      table << h_tag(h) << ',' << name << ',' << cell(mm, f) << ',' << cell(m_llm, f) << ',' << cell(m_hyb, f) << '\n';
  }
  write_text(dir / "metrics.csv", table.str());
  write_text(dir / "auc.csv", auc.str());
  outs.push_back((dir / "metrics.csv").string());
  outs.push_back((dir / "auc.csv").string());
  std::cout << table.str();
  return outs;
}

}  // namespace painfc::cli
