// painfc: command-line front end for the pain-episode forecasting pipeline.

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "painfc/commands.hpp"

namespace {

using namespace painfc;
using namespace painfc::cli;

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out, cohort, kb_dir, lexicon, rules, prompt_template, primary_model;
  std::vector<std::string> horizons, models;
  std::size_t k_folds = 0;

  // synth
  std::size_t n = 0;
  double rate48 = 0, rate72 = 0, effect = 0, effect_labs = 0, effect_tiers = 0, effect_pain24 = 0, noise = 0,
         note_accuracy = 0;
  // fuse
  double alpha = 0, beta = 0, threshold = 0;
  std::string band_mode;
  bool calibrate = false, llm_baseline = false, mock = false, http = false;
  // predict
  std::string external_cohort;
};

template <typename T>
void override_if(const CLI::App& app, const char* name, T& dst, const T& v) {
  if (app.count(name)) dst = v;
}

RunConfig build_config(const CLI::App& app, const CLI::App& sub, const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (app.count("--seed")) c.seed = f.seed;
  override_if(app, "--out", c.output_dir, f.out);
  override_if(app, "--cohort", c.cohort, f.cohort);
  override_if(app, "--kb-dir", c.kb_dir, f.kb_dir);
  override_if(app, "--lexicon", c.lexicon, f.lexicon);
  override_if(app, "--rules", c.rules, f.rules);
  override_if(app, "--template", c.prompt_template, f.prompt_template);
  override_if(app, "--primary-model", c.primary_model, f.primary_model);
  override_if(app, "--k", c.k_folds, f.k_folds);
  if (app.count("--horizons")) {
    c.horizons.clear();
    for (const auto& h : f.horizons) {
      auto ph = parse_horizon(h);
      if (!ph) throw ArgumentError("unknown horizon '" + h + "' (expected h48 or h72)");
      c.horizons.push_back(*ph);
    }
  }
  if (app.count("--models")) {
    c.models.clear();
    for (const auto& m : f.models) {
      auto k = parse_model_kind(m);
      if (!k) throw ArgumentError("unknown model kind '" + m + "'");
      c.models.push_back({*k, {}, 0});
    }
  }
  if (sub.get_name() == "synth") {
    if (sub.count("--effect")) c.synth.effect_labs = c.synth.effect_tiers = c.synth.effect_pain24 = f.effect;
    override_if(sub, "--n", c.synth.n_patients, f.n);
    override_if(sub, "--rate48", c.synth.positive_rate_48, f.rate48);
    override_if(sub, "--rate72", c.synth.positive_rate_72, f.rate72);
    override_if(sub, "--effect-labs", c.synth.effect_labs, f.effect_labs);
    override_if(sub, "--effect-tiers", c.synth.effect_tiers, f.effect_tiers);
    override_if(sub, "--effect-pain24", c.synth.effect_pain24, f.effect_pain24);
    override_if(sub, "--noise", c.synth.noise, f.noise);
    override_if(sub, "--note-accuracy", c.synth.note_signal_accuracy, f.note_accuracy);
  }
  if (sub.get_name() == "fuse" || sub.get_name() == "run") {
    override_if(sub, "--alpha", c.fusion.alpha, f.alpha);
    override_if(sub, "--beta", c.fusion.beta, f.beta);
    override_if(sub, "--threshold", c.fusion.decision_threshold, f.threshold);
    if (sub.count("--band-mode")) c.fusion.band_mode = parse_band_mode(f.band_mode);
    if (sub.count("--calibrate")) c.calibrate_band = true;
    if (sub.count("--llm-baseline")) c.llm_baseline = true;
    if (sub.count("--mock")) c.endpoint.mock = true;
    if (sub.count("--http")) c.endpoint.mock = false;
  }
  validate(c);
  return c;
}

void add_fuse_flags(CLI::App* s, Flags& f) {
  s->add_option("--alpha", f.alpha, "Lower edge of the uncertainty band (exclusive)");
  s->add_option("--beta", f.beta, "Upper edge of the uncertainty band (exclusive)");
  s->add_option("--threshold", f.threshold, "Decision threshold on the fused probability");
  s->add_option("--band-mode", f.band_mode, "In-band combination: average | replace")->check(CLI::IsMember({"average", "replace"}));
  s->add_flag("--calibrate", f.calibrate, "Pick the band from the p_ML table's precision/recall break-even");
  s->add_flag("--llm-baseline", f.llm_baseline, "Also query the LLM for every row (LLM-only column of the report)");
  auto* mock = s->add_flag("--mock", f.mock, "Use the built-in mock clinician endpoint");
  s->add_flag("--http", f.http, "Use the configured HTTP chat-completion endpoint")->excludes(mock);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"painfc: pain-episode forecasting from EHR records with ML + LLM fusion"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("-c,--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "Run seed (required here or in the config)");
  app.add_option("-o,--out", f.out, "Run output directory");
  app.add_option("--cohort", f.cohort, "Record file (default: <out>/cohort.jsonl)");
  app.add_option("--kb-dir", f.kb_dir, "Directory of guideline text files for rag-index");
  app.add_option("--lexicon", f.lexicon, "Drug lexicon file");
  app.add_option("--rules", f.rules, "Pain extraction rule file");
  app.add_option("--template", f.prompt_template, "Prompt template: v1, v2, v3 or a template file");
  app.add_option("--horizons", f.horizons, "Horizons to run (h48 h72)");
  app.add_option("--models", f.models, "Model kinds to train");
  app.add_option("--primary-model", f.primary_model, "Model used for p_ML (default: best CV AUC)");
  app.add_option("--k", f.k_folds, "Cross-validation folds");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  synth->add_option("--n", f.n, "Number of patients");
  synth->add_option("--rate48", f.rate48, "48 h positive rate");
  synth->add_option("--rate72", f.rate72, "72 h positive rate");
  synth->add_option("--effect", f.effect, "Set every effect size");
  synth->add_option("--effect-labs", f.effect_labs, "Lab effect size");
  synth->add_option("--effect-tiers", f.effect_tiers, "Analgesic-tier effect size");
  synth->add_option("--effect-pain24", f.effect_pain24, "First-day pain effect size");
  synth->add_option("--noise", f.noise, "Lab noise multiplier");
  synth->add_option("--note-accuracy", f.note_accuracy, "Probability that a note's signal matches the label");

  auto* ingest = app.add_subcommand("ingest", "Validate records, apply exclusions, write features");
  auto* train = app.add_subcommand("train", "Cross-validate and fit every configured model");
  auto* evaluate = app.add_subcommand("evaluate", "Metrics, ROC points and group comparisons");
  auto* rag = app.add_subcommand("rag-index", "Embed and index the guideline knowledge base");
  auto* predict = app.add_subcommand("predict", "Write the p_ML table");
  predict->add_option("--external-cohort", f.external_cohort, "Score this record file with the full-fit model instead")
      ->check(CLI::ExistingFile);
  auto* fuse = app.add_subcommand("fuse", "Query the LLM for in-band rows and fuse");
  add_fuse_flags(fuse, f);
  auto* report = app.add_subcommand("report", "Sensitivity/specificity/accuracy table and ROC files");
  auto* run = app.add_subcommand("run", "ingest, train, evaluate, rag-index (if configured), predict, fuse, report");
  add_fuse_flags(run, f);

  CLI11_PARSE(app, argc, argv);
  try {
    CLI::App* sub = app.get_subcommands().front();
    auto c = build_config(app, *sub, f);
    const auto started = utc_now();
    std::vector<std::string> outs;
    auto add = [&](std::vector<std::string> v) { outs.insert(outs.end(), v.begin(), v.end()); };
    if (sub == synth) add(cmd_synth(c));
    else if (sub == ingest) add(cmd_ingest(c));
    else if (sub == train) add(cmd_train(c));
    else if (sub == evaluate) add(cmd_evaluate(c));
    else if (sub == rag) add(cmd_rag_index(c));
    else if (sub == predict) add(cmd_predict(c, f.external_cohort));
    else if (sub == fuse) add(cmd_fuse(c));
    else if (sub == report) add(cmd_report(c));
    else if (sub == run) {
      add(cmd_ingest(c));
      add(cmd_train(c));
      add(cmd_evaluate(c));
      if (!c.kb_dir.empty()) add(cmd_rag_index(c));
      add(cmd_predict(c));
      add(cmd_fuse(c));
      add(cmd_report(c));
    }
    record_manifest(c, sub->get_name(), started, outs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
