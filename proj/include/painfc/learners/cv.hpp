#pragma once

// Fold-local preprocessing, stratified cross-validation and the deployable pipeline
// (imputer + scaler + model) that the CLI saves and reloads.

#include <cmath>
#include <future>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "painfc/eval_metrics.hpp"
#include "painfc/feature_pipeline.hpp"
#include "painfc/learners/folds.hpp"
#include "painfc/learners/model.hpp"

namespace painfc {

/// Median imputation followed by standardization, both fit on training rows only.
/// Tree learners see the standardized values too; a per-column affine map with
/// positive scale leaves every axis-aligned partition, and thus the fitted tree, unchanged.
struct Preprocessor {
  MedianImputer imputer;
  Standardizer scaler;

  static Preprocessor fit(const FeatureMatrix& raw) {
    Preprocessor p;
    p.imputer = MedianImputer::fit(raw);
    p.scaler = Standardizer::fit(p.imputer.apply(raw));
    return p;
  }
  [[nodiscard]] FeatureMatrix apply(const FeatureMatrix& raw) const { return scaler.apply(imputer.apply(raw)); }
};

struct FittedPipeline {
  Preprocessor prep;
  TrainedModel model;
  std::vector<std::string> input_columns;  // raw assembled column names expected at predict time
  std::vector<std::string> lab_codes;
  bool smote_applied = false;

  [[nodiscard]] std::vector<double> predict(const FeatureMatrix& raw) const {
    if (raw.names() != input_columns) throw SchemaError("pipeline: input columns differ from the training layout");
    return predict_proba(model, prep.apply(raw));
  }
};

/// Preprocess, rebalance when the SMOTE trigger fires, and fit.
inline FittedPipeline fit_pipeline(const ModelSpec& spec, const FeatureMatrix& raw, const SmoteConfig& smote) {
  FittedPipeline fp;
  fp.input_columns = raw.names();
  fp.prep = Preprocessor::fit(raw);
  auto train = fp.prep.apply(raw);
  auto rs = smote_resample(train, smote);
  fp.smote_applied = rs.resampled;
  fp.model = fit(spec, rs.matrix);
  fp.model.meta.smote_applied = rs.resampled;
  return fp;
}

inline nlohmann::json to_json(const FittedPipeline& p) {
  nlohmann::json j;
  j["format"] = "painfc-pipeline";
  j["version"] = 1;
  j["input_columns"] = p.input_columns;
  j["lab_codes"] = p.lab_codes;
  j["smote_applied"] = p.smote_applied;
  j["imputer"] = {{"kept", p.prep.imputer.kept}, {"medians", p.prep.imputer.medians}, {"dropped", p.prep.imputer.dropped}};
  j["scaler"] = {{"mean", p.prep.scaler.mean}, {"scale", p.prep.scaler.scale}};
  j["model"] = to_json(p.model);
  return j;
}

inline FittedPipeline pipeline_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "painfc-pipeline" || j.value("version", 0) != 1)
    throw SchemaError("not a painfc pipeline artifact (or unsupported version)");
  FittedPipeline p;
  p.input_columns = j.at("input_columns").get<std::vector<std::string>>();
  p.lab_codes = j.at("lab_codes").get<std::vector<std::string>>();
  p.smote_applied = j.at("smote_applied").get<bool>();
  p.prep.imputer.kept = j.at("imputer").at("kept").get<std::vector<std::string>>();
  p.prep.imputer.medians = j.at("imputer").at("medians").get<std::vector<double>>();
  p.prep.imputer.dropped = j.at("imputer").at("dropped").get<std::vector<std::string>>();
  p.prep.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
  p.prep.scaler.scale = j.at("scaler").at("scale").get<std::vector<double>>();
  p.model = model_from_json(j.at("model"));
  return p;
}

// ---------------------------------------------------------------------------

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
  bool resampled = false;
  std::size_t n_synthetic = 0;
  std::size_t scored_synthetic = 0;  // synthetic rows among the scored rows; always 0
  double auc = 0.0;
  SensSpecAcc at_half;
  std::vector<double> validation_proba;
  std::map<std::string, double> importance;  // empty when the kind has none
};

struct CvReport {
  ModelSpec spec;
  std::size_t k = 0;
  std::vector<FoldResult> folds;
  double mean_auc = 0.0;
  double sd_auc = 0.0;  // sample SD across folds
  std::vector<double> oof_proba;  // one out-of-fold probability per input row
  std::map<std::string, double> importance;  // fold mean
};

struct CvOptions {
  bool parallel = false;
};

/// Stratified k-fold CV. Within each fold: preprocessing is fit on training rows,
/// SMOTE (when triggered) touches training rows only, validation rows are scored untouched.
inline CvReport cross_validate(const ModelSpec& spec, const FeatureMatrix& raw, std::size_t k, const SmoteConfig& smote,
                               std::uint64_t seed, CvOptions opts = {}) {
  spec.validate();
  smote.validate();
  const auto splits = stratified_kfold(raw.labels, k, seed);

  auto run_fold = [&](std::size_t f) {
    FoldResult r;
    r.fold = f;
    r.train_rows = splits[f].train;
    r.validation_rows = splits[f].validation;
    const auto train_raw = raw.select_rows(r.train_rows);
    const auto val_raw = raw.select_rows(r.validation_rows);
    const auto prep = Preprocessor::fit(train_raw);
    auto fold_smote = smote;
    fold_smote.seed = derive_seed(smote.seed, f);
    auto rs = smote_resample(prep.apply(train_raw), fold_smote);
    r.resampled = rs.resampled;
    r.n_synthetic = rs.origins.size();
    auto fold_spec = spec;
    fold_spec.seed = derive_seed(spec.seed, f);
    auto model = fit(fold_spec, rs.matrix);
    model.meta.fold = static_cast<int>(f);
    model.meta.smote_applied = rs.resampled;
    const auto val = prep.apply(val_raw);
    r.scored_synthetic = static_cast<std::size_t>(std::count(val.synthetic.begin(), val.synthetic.end(), std::uint8_t{1}));
    r.validation_proba = predict_proba(model, val);
    r.auc = roc_auc(val.labels, r.validation_proba).auc;
    r.at_half = sens_spec_acc(confusion(val.labels, threshold_predictions(r.validation_proba, 0.5)));
    if (supports_importance(spec.kind)) r.importance = feature_importance(model);
    return r;
  };

  CvReport rep;
  rep.spec = spec;
  rep.k = k;
  if (opts.parallel) {
    std::vector<std::future<FoldResult>> futs;
    for (std::size_t f = 0; f < splits.size(); ++f) futs.push_back(std::async(std::launch::async, run_fold, f));
    for (auto& fu : futs) rep.folds.push_back(fu.get());
  } else {
    for (std::size_t f = 0; f < splits.size(); ++f) rep.folds.push_back(run_fold(f));
  }

  rep.oof_proba.assign(raw.rows, 0.0);
  double s = 0.0;
  for (const auto& fr : rep.folds) {
    s += fr.auc;
    for (std::size_t i = 0; i < fr.validation_rows.size(); ++i) rep.oof_proba[fr.validation_rows[i]] = fr.validation_proba[i];
    for (const auto& [name, v] : fr.importance) rep.importance[name] += v / static_cast<double>(rep.folds.size());
  }
  rep.mean_auc = s / static_cast<double>(rep.folds.size());
  double ss = 0.0;
  for (const auto& fr : rep.folds) ss += (fr.auc - rep.mean_auc) * (fr.auc - rep.mean_auc);
  rep.sd_auc = rep.folds.size() > 1 ? std::sqrt(ss / static_cast<double>(rep.folds.size() - 1)) : 0.0;
  return rep;
}

inline nlohmann::json to_json(const CvReport& r) {
  nlohmann::json j;
  j["model"] = to_string(r.spec.kind);
  j["hyperparams"] = r.spec.resolved();
  j["seed"] = r.spec.seed;
  j["k"] = r.k;
  j["mean_auc"] = r.mean_auc;
  j["sd_auc"] = r.sd_auc;
  auto& folds = j["folds"] = nlohmann::json::array();
  for (const auto& f : r.folds) {
    auto opt = [](const Rate& rt) { return rt.value() ? nlohmann::json(*rt.value()) : nlohmann::json(nullptr); };
    folds.push_back({{"fold", f.fold},
                     {"n_train", f.train_rows.size()},
                     {"n_validation", f.validation_rows.size()},
                     {"resampled", f.resampled},
                     {"n_synthetic", f.n_synthetic},
                     {"scored_synthetic", f.scored_synthetic},
                     {"auc", f.auc},
                     {"sensitivity", opt(f.at_half.sensitivity)},
                     {"specificity", opt(f.at_half.specificity)},
                     {"accuracy", opt(f.at_half.accuracy)}});
  }
  j["importance"] = r.importance;
  return j;
}

}  // namespace painfc
