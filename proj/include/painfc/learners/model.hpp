#pragma once

// The classifier zoo behind one value type, TrainedModel.

#include <cmath>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "painfc/errors.hpp"
#include "painfc/feature_pipeline.hpp"
#include "painfc/learners/folds.hpp"
#include "painfc/learners/logistic.hpp"
#include "painfc/learners/spec.hpp"
#include "painfc/learners/tree.hpp"

namespace painfc {

struct TreeEnsembleParams {
  std::vector<Tree> trees;
  bool boosted = false;        // true: sigmoid(base_score + learning_rate * sum); false: mean of leaf frequencies
  double base_score = 0.0;
  double learning_rate = 1.0;
  std::vector<double> importance;  // normalized mean decrease in impurity
};

struct TrainedModel;

/// Out-of-fold bookkeeping of a stacking fit, kept so leakage can be audited.
struct StackingAudit {
  std::vector<std::vector<std::size_t>> fold_train_rows;  // per inner fold, rows the base models were fit on
  std::vector<std::size_t> fold_of_row;                   // inner fold that scored each training row
  std::vector<std::vector<double>> meta_features;         // per training row, one out-of-fold probability per base
};

struct StackingParams {
  std::vector<TrainedModel> bases;  // refit on the full training set
  LogisticParams meta;
  StackingAudit audit;
};

struct TrainingMeta {
  int fold = -1;  // -1: fit on the whole matrix
  bool smote_applied = false;
  std::size_t n_rows = 0;
  std::size_t n_synthetic = 0;
};

struct TrainedModel {
  ModelSpec spec;
  std::vector<std::string> feature_names;
  std::variant<LogisticParams, TreeEnsembleParams, StackingParams> params;
  TrainingMeta meta;
};

namespace detail {

inline std::size_t sqrt_features(std::size_t d) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));
}

inline TreeGrowConfig grow_config(const ModelSpec& s, std::size_t d) {
  TreeGrowConfig c;
  c.max_depth = static_cast<std::size_t>(s.param("max_depth"));
  c.min_samples_leaf = static_cast<std::size_t>(s.param("min_samples_leaf"));
  c.max_features = static_cast<std::size_t>(s.param("max_features"));
  if (c.max_features == 0 && (s.kind == ModelKind::random_forest || s.kind == ModelKind::extra_trees))
    c.max_features = sqrt_features(d);
  c.random_thresholds = s.kind == ModelKind::extra_trees;
  return c;
}

inline std::vector<double> label_targets(const FeatureMatrix& X) {
  std::vector<double> y(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) y[i] = X.labels[i] ? 1.0 : 0.0;
  return y;
}

inline TreeEnsembleParams fit_forest(const ModelSpec& s, const FeatureMatrix& X) {
  const auto y = label_targets(X);
  const auto cfg = grow_config(s, X.cols);
  const auto n_trees = s.kind == ModelKind::decision_tree ? std::size_t{1} : static_cast<std::size_t>(s.param("n_trees"));
  const bool bootstrap = s.kind != ModelKind::decision_tree && s.param("bootstrap") != 0.0;
  TreeEnsembleParams p;
  p.importance.assign(X.cols, 0.0);
  Rng rng(derive_seed(s.seed, to_string(s.kind)));
  TreeGrower grower(X, y, cfg, rng);
  for (std::size_t t = 0; t < n_trees; ++t) {
    std::vector<std::size_t> idx(X.rows);
    if (bootstrap) {
      for (auto& i : idx) i = uniform_index(rng, X.rows);
    } else {
      std::iota(idx.begin(), idx.end(), std::size_t{0});
    }
    grower.reset_importance();
    p.trees.push_back(grower.grow(std::move(idx)));
    const auto imp = normalized(grower.raw_importance());
    for (std::size_t j = 0; j < X.cols; ++j) p.importance[j] += imp[j];
  }
  p.importance = normalized(std::move(p.importance));
  return p;
}

/// Stagewise log-loss boosting: each stage fits a regression tree to y - p and sets
/// leaf values by one Newton step, sum(r) / sum(p (1 - p)).
inline TreeEnsembleParams fit_boosting(const ModelSpec& s, const FeatureMatrix& X) {
  const auto y = label_targets(X);
  const double lr = s.param("learning_rate");
  const auto n_trees = static_cast<std::size_t>(s.param("n_trees"));
  TreeEnsembleParams p;
  p.boosted = true;
  p.learning_rate = lr;
  p.base_score = detail::prevalence_logit(X);
  p.importance.assign(X.cols, 0.0);

  std::vector<double> F(X.rows, p.base_score), resid(X.rows);
  Rng rng(derive_seed(s.seed, "gradient_boosting"));
  TreeGrower grower(X, resid, grow_config(s, X.cols), rng);
  std::vector<std::size_t> all(X.rows);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t t = 0; t < n_trees; ++t) {
    for (std::size_t i = 0; i < X.rows; ++i) resid[i] = y[i] - sigmoid(F[i]);
    grower.reset_importance();
    Tree tree = grower.grow(all);
    std::vector<double> num(tree.nodes.size(), 0.0), den(tree.nodes.size(), 0.0);
    std::vector<std::size_t> leaf(X.rows);
    for (std::size_t i = 0; i < X.rows; ++i) {
      leaf[i] = tree.leaf_of(X.row(i));
      const double q = sigmoid(F[i]);
      num[leaf[i]] += resid[i];
      den[leaf[i]] += q * (1.0 - q);
    }
    for (std::size_t n = 0; n < tree.nodes.size(); ++n)
      if (tree.nodes[n].feature < 0) tree.nodes[n].value = den[n] > 1e-12 ? num[n] / den[n] : 0.0;
    for (std::size_t i = 0; i < X.rows; ++i) F[i] += lr * tree.nodes[leaf[i]].value;
    const auto imp = grower.raw_importance();
    for (std::size_t j = 0; j < X.cols; ++j) p.importance[j] += imp[j];
    p.trees.push_back(std::move(tree));
  }
  p.importance = normalized(std::move(p.importance));
  return p;
}

inline double predict_row(const TrainedModel& m, std::span<const double> x);

}  // namespace detail

inline TrainedModel fit(const ModelSpec& spec, const FeatureMatrix& train);

namespace detail {

inline std::vector<ModelSpec> stacking_bases(const ModelSpec& s) {
  const double n_trees = s.param("base_n_trees");
  return {{ModelKind::logistic, {}, derive_seed(s.seed, "stack/logistic")},
          {ModelKind::random_forest, {{"n_trees", n_trees}}, derive_seed(s.seed, "stack/random_forest")},
          {ModelKind::gradient_boosting, {{"n_trees", n_trees}}, derive_seed(s.seed, "stack/gradient_boosting")}};
}

inline StackingParams fit_stacking(const ModelSpec& s, const FeatureMatrix& X) {
  const auto bases = stacking_bases(s);
  const std::size_t pos = X.count_positive(), neg = X.rows - pos;
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(s.param("inner_folds")), std::min(pos, neg));
  if (k < 2) throw FitError("stacking needs at least two rows of each class");
  const auto folds = stratified_kfold(X.labels, k, derive_seed(s.seed, "stack/folds"));

  StackingParams p;
  p.audit.fold_of_row.assign(X.rows, 0);
  p.audit.meta_features.assign(X.rows, std::vector<double>(bases.size(), 0.0));
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto train = X.select_rows(folds[f].train);
    p.audit.fold_train_rows.push_back(folds[f].train);
    for (std::size_t b = 0; b < bases.size(); ++b) {
      const auto m = fit(bases[b], train);
      for (auto r : folds[f].validation) p.audit.meta_features[r][b] = predict_row(m, X.row(r));
    }
    for (auto r : folds[f].validation) p.audit.fold_of_row[r] = f;
  }
  FeatureMatrix meta;
  meta.cols = bases.size();
  for (const auto& b : bases) meta.columns.push_back({std::string("p_") + std::string(to_string(b.kind)), ColumnKind::continuous, "stacking", {}});
  for (std::size_t r = 0; r < X.rows; ++r) meta.push_row(p.audit.meta_features[r], X.labels[r], X.row_ids[r]);
  p.meta = fit_logistic_l2(meta, 1e-4, 200, 1e-8);
  for (const auto& b : bases) p.bases.push_back(fit(b, X));
  return p;
}

inline double predict_row(const TrainedModel& m, std::span<const double> x) {
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LogisticParams>) {
          return sigmoid(linear_score(x, p));
        } else if constexpr (std::is_same_v<P, TreeEnsembleParams>) {
          if (p.boosted) {
            double f = p.base_score;
            for (const auto& t : p.trees) f += p.learning_rate * t.predict(x);
            return sigmoid(f);
          }
          double s = 0.0;
          for (const auto& t : p.trees) s += t.predict(x);
          return s / static_cast<double>(p.trees.size());
        } else {
          std::vector<double> z;
          for (const auto& b : p.bases) z.push_back(predict_row(b, x));
          return sigmoid(linear_score(z, p.meta));
        }
      },
      m.params);
}

}  // namespace detail

/// Trains `spec` on a finite matrix containing both classes.
inline TrainedModel fit(const ModelSpec& spec, const FeatureMatrix& train) {
  spec.validate();
  if (train.rows == 0) throw FitError("fit: empty training set");
  if (!train.all_finite()) throw FitError("fit: training matrix has absent or non-finite entries (impute first)");
  const auto pos = train.count_positive();
  if (pos == 0 || pos == train.rows) throw FitError("fit: training set contains a single class");

  TrainedModel m;
  m.spec = spec;
  m.feature_names = train.names();
  m.meta.n_rows = train.rows;
  m.meta.n_synthetic = static_cast<std::size_t>(std::count(train.synthetic.begin(), train.synthetic.end(), std::uint8_t{1}));
  switch (spec.kind) {
    case ModelKind::logistic:
      m.params = fit_logistic_l2(train, spec.param("l2"), static_cast<int>(spec.param("max_iter")), spec.param("tol"));
      break;
    case ModelKind::logistic_l1:
      m.params = fit_logistic_l1(train, spec.param("l1"), spec.param("l2"), static_cast<int>(spec.param("max_iter")),
                                 spec.param("tol"));
      break;
    case ModelKind::decision_tree:
    case ModelKind::random_forest:
    case ModelKind::extra_trees:
      m.params = detail::fit_forest(spec, train);
      break;
    case ModelKind::gradient_boosting:
      m.params = detail::fit_boosting(spec, train);
      break;
    case ModelKind::stacking:
      m.params = detail::fit_stacking(spec, train);
      break;
  }
  return m;
}

inline std::vector<double> predict_proba(const TrainedModel& model, const FeatureMatrix& rows) {
  if (rows.names() != model.feature_names) throw SchemaError("predict_proba: feature names differ from the fit-time layout");
  std::vector<double> out(rows.rows);
  for (std::size_t r = 0; r < rows.rows; ++r) out[r] = std::clamp(detail::predict_row(model, rows.row(r)), 0.0, 1.0);
  return out;
}

/// MDI for tree kinds (sums to 1), |weight| for logistic kinds.
inline std::map<std::string, double> feature_importance(const TrainedModel& model) {
  std::map<std::string, double> out;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LogisticParams>) {
          for (std::size_t j = 0; j < model.feature_names.size(); ++j) out[model.feature_names[j]] = std::fabs(p.weights[j]);
        } else if constexpr (std::is_same_v<P, TreeEnsembleParams>) {
          for (std::size_t j = 0; j < model.feature_names.size(); ++j) out[model.feature_names[j]] = p.importance[j];
        } else {
          throw CapabilityError("feature_importance: not available for stacking models");
        }
      },
      model.params);
  return out;
}

inline bool supports_importance(ModelKind k) { return k != ModelKind::stacking; }

// ---------------------------------------------------------------------------
// persistence

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const TrainedModel& m);

namespace detail {

inline nlohmann::json tree_json(const Tree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.samples});
  return nodes;
}

inline Tree tree_from_json(const nlohmann::json& j) {
  Tree t;
  for (const auto& n : j) t.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                                             n.at(3).get<int>(), n.at(4).get<double>(), n.at(5).get<double>()});
  return t;
}

inline nlohmann::json logistic_json(const LogisticParams& p) {
  return {{"weights", p.weights}, {"intercept", p.intercept}, {"iterations", p.iterations}, {"gradient_norm", p.gradient_norm}};
}

inline LogisticParams logistic_from_json(const nlohmann::json& j) {
  LogisticParams p;
  p.weights = j.at("weights").get<std::vector<double>>();
  p.intercept = j.at("intercept").get<double>();
  p.iterations = j.value("iterations", 0);
  p.gradient_norm = j.value("gradient_norm", 0.0);
  return p;
}

}  // namespace detail

inline TrainedModel model_from_json(const nlohmann::json& j);

inline nlohmann::json to_json(const TrainedModel& m) {
  nlohmann::json j;
  j["format"] = "painfc-model";
  j["version"] = kModelFormatVersion;
  j["kind"] = to_string(m.spec.kind);
  j["hyperparams"] = m.spec.resolved();
  j["seed"] = m.spec.seed;
  j["feature_names"] = m.feature_names;
  j["training"] = {{"fold", m.meta.fold}, {"smote_applied", m.meta.smote_applied}, {"n_rows", m.meta.n_rows},
                   {"n_synthetic", m.meta.n_synthetic}};
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LogisticParams>) {
          j["params"] = detail::logistic_json(p);
        } else if constexpr (std::is_same_v<P, TreeEnsembleParams>) {
          nlohmann::json trees = nlohmann::json::array();
          for (const auto& t : p.trees) trees.push_back(detail::tree_json(t));
          j["params"] = {{"boosted", p.boosted}, {"base_score", p.base_score}, {"learning_rate", p.learning_rate},
                         {"importance", p.importance}, {"trees", std::move(trees)}};
        } else {
          nlohmann::json bases = nlohmann::json::array();
          for (const auto& b : p.bases) bases.push_back(to_json(b));
          j["params"] = {{"meta", detail::logistic_json(p.meta)}, {"bases", std::move(bases)}};
        }
      },
      m.params);
  return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "painfc-model") throw SchemaError("not a painfc model artifact");
  if (j.value("version", 0) != kModelFormatVersion)
    throw SchemaError("unsupported model artifact version " + std::to_string(j.value("version", 0)));
  TrainedModel m;
  const auto kind = parse_model_kind(j.at("kind").get<std::string>());
  if (!kind) throw SchemaError("unknown model kind in artifact");
  m.spec.kind = *kind;
  m.spec.hyperparams = j.at("hyperparams").get<Hyperparams>();
  m.spec.seed = j.at("seed").get<std::uint64_t>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  const auto& tr = j.at("training");
  m.meta = {tr.at("fold").get<int>(), tr.at("smote_applied").get<bool>(), tr.at("n_rows").get<std::size_t>(),
            tr.at("n_synthetic").get<std::size_t>()};
  const auto& p = j.at("params");
  if (m.spec.kind == ModelKind::logistic || m.spec.kind == ModelKind::logistic_l1) {
    m.params = detail::logistic_from_json(p);
  } else if (m.spec.kind == ModelKind::stacking) {
    StackingParams s;
    s.meta = detail::logistic_from_json(p.at("meta"));
    for (const auto& b : p.at("bases")) s.bases.push_back(model_from_json(b));
    m.params = std::move(s);
  } else {
    TreeEnsembleParams t;
    t.boosted = p.at("boosted").get<bool>();
    t.base_score = p.at("base_score").get<double>();
    t.learning_rate = p.at("learning_rate").get<double>();
    t.importance = p.at("importance").get<std::vector<double>>();
    for (const auto& tj : p.at("trees")) t.trees.push_back(detail::tree_from_json(tj));
    m.params = std::move(t);
  }
  return m;
}

}  // namespace painfc
