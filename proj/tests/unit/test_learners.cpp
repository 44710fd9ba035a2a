#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "painfc/learners.hpp"

using namespace painfc;

namespace {

FeatureMatrix matrix(const std::vector<std::vector<double>>& rows, const std::vector<std::uint8_t>& labels) {
  FeatureMatrix m;
  m.cols = rows.empty() ? 0 : rows[0].size();
  for (std::size_t c = 0; c < m.cols; ++c) m.columns.push_back({"x" + std::to_string(c + 1), ColumnKind::continuous, "test", {}});
  for (std::size_t r = 0; r < rows.size(); ++r) m.push_row(rows[r], labels[r], "r" + std::to_string(r));
  return m;
}

// label = [x1 > 0], with a margin around zero
FeatureMatrix separable(std::size_t n, std::uint64_t seed, std::size_t d = 2) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(d);
    for (auto& v : x) v = standard_normal(rng);
    const bool pos = i % 2 == 0;
    x[0] = (pos ? 1.0 : -1.0) * (0.5 + std::fabs(x[0]));
    rows.push_back(x);
    labels.push_back(pos ? 1 : 0);
  }
  return matrix(rows, labels);
}

double accuracy(const std::vector<double>& p, const Labels& y) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += (p[i] >= 0.5) == (y[i] == 1);
  return static_cast<double>(ok) / static_cast<double>(p.size());
}

TrainedModel stump_model(std::size_t n_features, int split_feature) {
  TrainedModel m;
  m.spec.kind = ModelKind::decision_tree;
  for (std::size_t j = 0; j < n_features; ++j) m.feature_names.push_back("x" + std::to_string(j + 1));
  TreeEnsembleParams p;
  Tree t;
  t.nodes = {{split_feature, 0.0, 1, 2, 0.0, 10}, {-1, 0.0, -1, -1, 0.2, 5}, {-1, 0.0, -1, -1, 0.8, 5}};
  p.trees.push_back(t);
  p.importance.assign(n_features, 0.0);
  p.importance[static_cast<std::size_t>(split_feature)] = 1.0;
  m.params = p;
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(Kfold, OnePositivePerFold) {
  Labels y{1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  auto folds = stratified_kfold(y, 5, 11);
  ASSERT_EQ(folds.size(), 5u);
  for (const auto& f : folds) {
    std::size_t pos = 0;
    for (auto i : f.validation) pos += y[i];
    EXPECT_EQ(pos, 1u);
  }
}

TEST(Kfold, SingleClassRejected) {
  Labels y(6, 1);
  EXPECT_THROW(stratified_kfold(y, 2, 1), StratificationError);
}

TEST(Kfold, TooFewOfOneClassRejected) {
  Labels y{1, 1, 0, 0, 0, 0, 0};
  EXPECT_THROW(stratified_kfold(y, 3, 1), StratificationError);
}

TEST(Kfold, PartitionAndProportionality) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t n = 30 + seed * 3;
    Labels y(n);
    for (auto& v : y) v = bernoulli(rng, 0.35);
    const std::size_t pos_total = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    if (pos_total < 5 || n - pos_total < 5) continue;
    auto folds = stratified_kfold(y, 5, seed);
    std::vector<int> seen(n, 0);
    for (const auto& f : folds) {
      for (auto i : f.validation) ++seen[i];
      EXPECT_EQ(f.train.size() + f.validation.size(), n);
      std::size_t pos = 0;
      for (auto i : f.validation) pos += y[i];
      const double ideal = static_cast<double>(pos_total) * static_cast<double>(f.validation.size()) / static_cast<double>(n);
      EXPECT_LE(std::fabs(static_cast<double>(pos) - ideal), 1.0 + 1e-9);
      std::set<std::size_t> tr(f.train.begin(), f.train.end());
      for (auto i : f.validation) EXPECT_FALSE(tr.count(i));
    }
    for (auto s : seen) EXPECT_EQ(s, 1);
  }
}

TEST(Kfold, SeedDeterministic) {
  Labels y{1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 1};
  auto a = stratified_kfold(y, 3, 5), b = stratified_kfold(y, 3, 5);
  for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(a[f].validation, b[f].validation);
}

// ---------------------------------------------------------------------------

TEST(Fit, LogisticSeparableAccuracyOne) {
  auto X = separable(60, 3);
  for (auto kind : {ModelKind::logistic, ModelKind::logistic_l1}) {
    auto m = fit({kind, {}, 1}, X);
    EXPECT_EQ(accuracy(predict_proba(m, X), X.labels), 1.0) << to_string(kind);
  }
}

TEST(Fit, ConstantFeaturesGivePrevalence) {
  std::vector<std::vector<double>> rows(40, {1.0, -2.0});
  Labels y(40, 0);
  for (std::size_t i = 0; i < 13; ++i) y[i] = 1;
  auto X = matrix(rows, y);
  for (auto kind : {ModelKind::logistic, ModelKind::logistic_l1}) {
    auto m = fit({kind, {}, 1}, X);
    for (double p : predict_proba(m, X)) EXPECT_NEAR(p, 13.0 / 40.0, 1e-6) << to_string(kind);
  }
}

TEST(Fit, SingleTreeForestMemorizes) {
  Rng rng(5);
  std::vector<std::vector<double>> rows;
  Labels y;
  for (int i = 0; i < 50; ++i) {
    rows.push_back({standard_normal(rng), standard_normal(rng)});
    y.push_back(bernoulli(rng, 0.5));
  }
  y[0] = 1;
  y[1] = 0;
  auto X = matrix(rows, y);
  auto m = fit({ModelKind::random_forest, {{"n_trees", 1}, {"bootstrap", 0}, {"max_features", 2}}, 4}, X);
  EXPECT_EQ(accuracy(predict_proba(m, X), y), 1.0);
}

TEST(Fit, SingleClassRejected) {
  auto X = matrix({{0.0}, {1.0}}, {1, 1});
  for (auto kind : kAllModelKinds) EXPECT_THROW(fit({kind, {}, 1}, X), FitError) << to_string(kind);
}

TEST(Fit, NonFiniteRejected) {
  auto X = matrix({{0.0}, {kAbsent}}, {1, 0});
  EXPECT_THROW(fit({ModelKind::logistic, {}, 1}, X), FitError);
}

TEST(Fit, BadHyperparamsRejected) {
  auto X = separable(20, 1);
  EXPECT_THROW(fit({ModelKind::random_forest, {{"n_trees", 0}}, 1}, X), ArgumentError);
  EXPECT_THROW(fit({ModelKind::gradient_boosting, {{"learning_rate", 0}}, 1}, X), ArgumentError);
  EXPECT_THROW(fit({ModelKind::logistic, {{"n_trees", 5}}, 1}, X), ArgumentError);
}

TEST(Fit, EveryKindDeterministicAndBounded) {
  auto X = separable(40, 9, 3);
  for (auto kind : kAllModelKinds) {
    ModelSpec spec{kind, {}, 17};
    if (kind == ModelKind::stacking) spec.hyperparams = {{"base_n_trees", 10}};
    else if (is_tree_kind(kind) && kind != ModelKind::decision_tree) spec.hyperparams = {{"n_trees", 20}};
    auto a = predict_proba(fit(spec, X), X);
    auto b = predict_proba(fit(spec, X), X);
    EXPECT_EQ(a, b) << to_string(kind);
    for (double p : a) {
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
    EXPECT_GE(accuracy(a, X.labels), 0.9) << to_string(kind);
  }
}

// ---------------------------------------------------------------------------

TEST(Predict, ZeroLogisticIsHalf) {
  TrainedModel m;
  m.spec.kind = ModelKind::logistic;
  m.feature_names = {"x1", "x2"};
  m.params = LogisticParams{{0.0, 0.0}, 0.0, 0, 0.0};
  for (double p : predict_proba(m, matrix({{3.0, -7.0}, {100.0, 2.0}}, {0, 1}))) EXPECT_EQ(p, 0.5);
}

TEST(Predict, UnanimousForestIsOne) {
  TrainedModel m;
  m.spec.kind = ModelKind::random_forest;
  m.feature_names = {"x1"};
  TreeEnsembleParams p;
  Tree leaf;
  leaf.nodes = {{-1, 0.0, -1, -1, 1.0, 3}};
  p.trees = {leaf, leaf, leaf};
  p.importance = {0.0};
  m.params = p;
  EXPECT_EQ(predict_proba(m, matrix({{4.0}}, {0}))[0], 1.0);
}

TEST(Predict, HandBuiltStump) {
  auto m = stump_model(2, 0);
  auto p = predict_proba(m, matrix({{1.0, 0.0}, {-1.0, 0.0}, {0.0, 5.0}}, {0, 0, 0}));
  EXPECT_DOUBLE_EQ(p[0], 0.8);
  EXPECT_DOUBLE_EQ(p[1], 0.2);
  EXPECT_DOUBLE_EQ(p[2], 0.2);  // x1 <= 0 goes left
}

TEST(Predict, FeatureMismatchIsSchemaError) {
  auto m = stump_model(2, 0);
  auto X = matrix({{1.0, 0.0}}, {0});
  X.columns[1].name = "other";
  EXPECT_THROW(predict_proba(m, X), SchemaError);
}

TEST(Predict, LogisticMonotoneInLinearScore) {
  auto X = separable(50, 2);
  auto m = fit({ModelKind::logistic, {}, 1}, X);
  const auto& w = std::get<LogisticParams>(m.params);
  auto p = predict_proba(m, X);
  std::vector<std::size_t> idx(X.rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return linear_score(X.row(a), w) < linear_score(X.row(b), w); });
  for (std::size_t k = 1; k < idx.size(); ++k) EXPECT_LE(p[idx[k - 1]], p[idx[k]]);
}

// ---------------------------------------------------------------------------

TEST(Importance, StumpAllOnSplitFeature) {
  auto imp = feature_importance(stump_model(4, 2));
  EXPECT_EQ(imp.at("x3"), 1.0);
  EXPECT_EQ(imp.at("x1"), 0.0);
  EXPECT_EQ(imp.at("x2"), 0.0);
  EXPECT_EQ(imp.at("x4"), 0.0);
}

TEST(Importance, FittedStumpAllOnSignal) {
  auto X = matrix({{5, 0, -1}, {3, 0, 1}, {1, 0, -3}, {2, 0, 4}}, {1, 1, 0, 0});
  auto m = fit({ModelKind::decision_tree, {{"max_depth", 1}}, 1}, X);
  auto imp = feature_importance(m);
  EXPECT_DOUBLE_EQ(imp.at("x1"), 1.0);
}

TEST(Importance, TreeEnsemblesSumToOne) {
  auto X = separable(40, 4, 4);
  for (auto kind : {ModelKind::decision_tree, ModelKind::random_forest, ModelKind::extra_trees, ModelKind::gradient_boosting}) {
    auto imp = feature_importance(fit({kind, {{"max_features", 0}}, 3}, X));
    double s = 0;
    for (const auto& [k, v] : imp) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9) << to_string(kind);
  }
}

TEST(Importance, NoiseFeatureBelowUniformShare) {
  // x1 carries the label, x2 and x3 are noise; average over 20 seeds.
  const std::size_t n_features = 3;
  double noise = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(1000 + s);
    std::vector<std::vector<double>> rows;
    Labels y;
    for (int i = 0; i < 80; ++i) {
      const double x1 = standard_normal(rng);
      rows.push_back({x1, standard_normal(rng), standard_normal(rng)});
      y.push_back(x1 + 0.5 * standard_normal(rng) > 0);
    }
    auto m = fit({ModelKind::random_forest, {{"n_trees", 30}}, static_cast<std::uint64_t>(s)}, matrix(rows, y));
    noise += feature_importance(m).at("x2");
  }
  EXPECT_LT(noise / seeds, 1.0 / n_features);
}

TEST(Importance, LogisticUsesAbsoluteWeights) {
  auto X = separable(40, 8);
  auto m = fit({ModelKind::logistic, {}, 1}, X);
  const auto& p = std::get<LogisticParams>(m.params);
  auto imp = feature_importance(m);
  EXPECT_DOUBLE_EQ(imp.at("x1"), std::fabs(p.weights[0]));
}

TEST(Importance, StackingIsCapabilityError) {
  auto m = fit({ModelKind::stacking, {{"base_n_trees", 5}}, 1}, separable(30, 1));
  EXPECT_THROW(feature_importance(m), CapabilityError);
}

// ---------------------------------------------------------------------------

TEST(Oracle, LogisticGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::size_t n = 15, d = 3;
    std::vector<std::vector<double>> rows;
    Labels y;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x(d);
      for (auto& v : x) v = standard_normal(rng);
      rows.push_back(x);
      y.push_back(bernoulli(rng, 0.5));
    }
    auto X = matrix(rows, y);
    std::vector<double> w(d);
    for (auto& v : w) v = standard_normal(rng);
    const double b = standard_normal(rng), l2 = 0.1;
    const auto g = logistic_objective(X, w, b, l2);
    const double h = 1e-6;
    auto rel = [](double a, double e) { return std::fabs(a - e) / std::max(1.0, std::fabs(e)); };
    for (std::size_t j = 0; j < d; ++j) {
      auto wp = w, wm = w;
      wp[j] += h;
      wm[j] -= h;
      const double fd = (logistic_objective(X, wp, b, l2).loss - logistic_objective(X, wm, b, l2).loss) / (2 * h);
      EXPECT_LT(rel(g.grad_w[j], fd), 1e-5);
    }
    const double fdb = (logistic_objective(X, w, b + h, l2).loss - logistic_objective(X, w, b - h, l2).loss) / (2 * h);
    EXPECT_LT(rel(g.grad_b, fdb), 1e-5);
  }
}

TEST(Oracle, LogisticConvergesToGradientTolerance) {
  auto X = matrix({{0.1, 1}, {0.5, -1}, {-0.3, 0.2}, {1.2, 0.4}, {-1.1, -0.7}, {0.2, 0.9}}, {1, 0, 0, 1, 0, 1});
  auto p = fit_logistic_l2(X, 0.01, 200, 1e-8);
  const auto g = logistic_objective(X, p.weights, p.intercept, 0.01);
  double m = std::fabs(g.grad_b);
  for (double v : g.grad_w) m = std::max(m, std::fabs(v));
  EXPECT_LT(m, 1e-7);
}

namespace {

struct BruteSplit {
  std::size_t feature;
  double threshold;
  double impurity;
};

// Weighted Gini over every feature and every midpoint between distinct sorted values;
// ties resolved by lowest feature, then lowest threshold.
BruteSplit brute_force_gini(const FeatureMatrix& X) {
  BruteSplit best{0, 0, std::numeric_limits<double>::infinity()};
  auto gini = [](double n, double p) { return n > 0 ? n * (1 - (p / n) * (p / n) - (1 - p / n) * (1 - p / n)) : 0.0; };
  for (std::size_t f = 0; f < X.cols; ++f) {
    std::set<double> vals;
    for (std::size_t r = 0; r < X.rows; ++r) vals.insert(X.at(r, f));
    for (auto it = vals.begin(); std::next(it) != vals.end(); ++it) {
      const double thr = (*it + *std::next(it)) / 2;
      double nl = 0, pl = 0, nr = 0, pr = 0;
      for (std::size_t r = 0; r < X.rows; ++r) {
        if (X.at(r, f) <= thr) {
          ++nl;
          pl += X.labels[r];
        } else {
          ++nr;
          pr += X.labels[r];
        }
      }
      const double imp = gini(nl, pl) + gini(nr, pr);
      if (imp < best.impurity - 1e-12) best = {f, thr, imp};
    }
  }
  return best;
}

}  // namespace

TEST(Oracle, RootSplitMatchesBruteForceGini) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(seed);
    const std::size_t n = 10 + seed % 40, d = 1 + seed % 4;
    std::vector<std::vector<double>> rows;
    Labels y;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x(d);
      for (auto& v : x) v = std::round(standard_normal(rng) * 4) / 4;  // coarse grid: ties in values
      rows.push_back(x);
      y.push_back(bernoulli(rng, 0.4 + 0.1 * (x[0] > 0)));
    }
    y[0] = 1;
    y[1] = 0;
    auto X = matrix(rows, y);
    auto oracle = brute_force_gini(X);
    if (!std::isfinite(oracle.impurity)) continue;
    auto m = fit({ModelKind::decision_tree, {{"max_depth", 1}}, 1}, X);
    const auto& root = std::get<TreeEnsembleParams>(m.params).trees[0].nodes[0];
    ASSERT_GE(root.feature, 0) << "seed " << seed;
    EXPECT_EQ(static_cast<std::size_t>(root.feature), oracle.feature) << "seed " << seed;
    EXPECT_DOUBLE_EQ(root.threshold, oracle.threshold) << "seed " << seed;
  }
}

// ---------------------------------------------------------------------------

TEST(CrossValidate, SeparableHighAuc) {
  auto X = separable(50, 21);
  for (auto kind : {ModelKind::logistic, ModelKind::random_forest}) {
    ModelSpec spec{kind, {}, 3};
    if (kind == ModelKind::random_forest) spec.hyperparams = {{"n_trees", 50}};
    auto rep = cross_validate(spec, X, 5, SmoteConfig{}, 3);
    EXPECT_EQ(rep.folds.size(), 5u);
    EXPECT_GE(rep.mean_auc, 0.95) << to_string(kind);
    for (const auto& f : rep.folds) {
      EXPECT_GE(f.auc, 0.0);
      EXPECT_LE(f.auc, 1.0);
    }
  }
}

TEST(CrossValidate, SameSeedIdenticalReport) {
  auto X = separable(40, 2, 3);
  ModelSpec spec{ModelKind::extra_trees, {{"n_trees", 20}}, 8};
  auto a = cross_validate(spec, X, 5, SmoteConfig{}, 4);
  auto b = cross_validate(spec, X, 5, SmoteConfig{}, 4, CvOptions{true});
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(a.oof_proba, b.oof_proba);
}

TEST(CrossValidate, SmoteTriggeredOnEveryFoldAndNeverScored) {
  // 12 positives vs 60 negatives: ratio 0.2 < 0.3
  Rng rng(12);
  std::vector<std::vector<double>> rows;
  Labels y;
  for (int i = 0; i < 72; ++i) {
    const bool pos = i < 12;
    rows.push_back({standard_normal(rng) + (pos ? 1.0 : 0.0), standard_normal(rng)});
    y.push_back(pos);
  }
  auto X = matrix(rows, y);
  auto rep = cross_validate({ModelKind::logistic, {}, 1}, X, 5, SmoteConfig{}, 6);
  ASSERT_EQ(rep.folds.size(), 5u);
  std::vector<int> scored(X.rows, 0);
  for (const auto& f : rep.folds) {
    EXPECT_TRUE(f.resampled);
    EXPECT_GT(f.n_synthetic, 0u);
    EXPECT_EQ(f.scored_synthetic, 0u);
    EXPECT_EQ(f.validation_proba.size(), f.validation_rows.size());
    for (auto r : f.validation_rows) ++scored[r];
    std::set<std::size_t> tr(f.train_rows.begin(), f.train_rows.end());
    for (auto r : f.validation_rows) EXPECT_FALSE(tr.count(r));
  }
  for (int s : scored) EXPECT_EQ(s, 1);
  EXPECT_EQ(to_json(rep)["folds"][0]["resampled"], true);
}

TEST(Stacking, MetaFeaturesStrictlyOutOfFold) {
  auto X = separable(40, 14, 3);
  auto m = fit({ModelKind::stacking, {{"base_n_trees", 10}}, 2}, X);
  const auto& audit = std::get<StackingParams>(m.params).audit;
  ASSERT_EQ(audit.fold_of_row.size(), X.rows);
  for (std::size_t r = 0; r < X.rows; ++r) {
    const auto& train = audit.fold_train_rows[audit.fold_of_row[r]];
    EXPECT_FALSE(std::binary_search(train.begin(), train.end(), r)) << "row " << r << " scored by a model trained on it";
  }
}

TEST(Persistence, ModelJsonRoundTrip) {
  auto X = separable(30, 5, 2);
  for (auto kind : kAllModelKinds) {
    ModelSpec spec{kind, {}, 9};
    if (kind == ModelKind::stacking) spec.hyperparams = {{"base_n_trees", 5}};
    else if (is_tree_kind(kind) && kind != ModelKind::decision_tree) spec.hyperparams = {{"n_trees", 5}};
    auto m = fit(spec, X);
    auto back = model_from_json(nlohmann::json::parse(to_json(m).dump()));
    EXPECT_EQ(predict_proba(m, X), predict_proba(back, X)) << to_string(kind);
    EXPECT_EQ(back.feature_names, m.feature_names);
  }
}

TEST(Persistence, PipelineRoundTrip) {
  auto X = separable(30, 6, 2);
  X.at(3, 1) = kAbsent;
  auto p = fit_pipeline({ModelKind::logistic, {}, 1}, X, SmoteConfig{});
  auto back = pipeline_from_json(nlohmann::json::parse(to_json(p).dump()));
  EXPECT_EQ(p.predict(X), back.predict(X));
}

TEST(Persistence, WrongFormatRejected) {
  EXPECT_THROW(model_from_json(nlohmann::json{{"format", "other"}}), SchemaError);
}
