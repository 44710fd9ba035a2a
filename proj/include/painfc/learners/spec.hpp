#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "painfc/errors.hpp"

namespace painfc {

enum class ModelKind { logistic, logistic_l1, decision_tree, random_forest, extra_trees, gradient_boosting, stacking };

inline constexpr ModelKind kAllModelKinds[] = {ModelKind::logistic,      ModelKind::logistic_l1,
                                               ModelKind::decision_tree, ModelKind::random_forest,
                                               ModelKind::extra_trees,   ModelKind::gradient_boosting,
                                               ModelKind::stacking};

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::logistic: return "logistic";
    case ModelKind::logistic_l1: return "logistic_l1";
    case ModelKind::decision_tree: return "decision_tree";
    case ModelKind::random_forest: return "random_forest";
    case ModelKind::extra_trees: return "extra_trees";
    case ModelKind::gradient_boosting: return "gradient_boosting";
    default: return "stacking";
  }
}

inline std::optional<ModelKind> parse_model_kind(std::string_view s) {
  for (auto k : kAllModelKinds)
    if (s == to_string(k)) return k;
  if (s == "lasso") return ModelKind::logistic_l1;
  return std::nullopt;
}

inline bool is_tree_kind(ModelKind k) {
  return k == ModelKind::decision_tree || k == ModelKind::random_forest || k == ModelKind::extra_trees ||
         k == ModelKind::gradient_boosting;
}

using Hyperparams = std::map<std::string, double>;

/// Defaults per kind. max_depth 0 and max_features 0 mean "unlimited" / "kind default".
inline Hyperparams default_hyperparams(ModelKind k) {
  switch (k) {
    case ModelKind::logistic: return {{"l2", 1e-4}, {"max_iter", 200}, {"tol", 1e-8}};
    case ModelKind::logistic_l1: return {{"l1", 1e-2}, {"l2", 0.0}, {"max_iter", 20000}, {"tol", 1e-7}};
    case ModelKind::decision_tree: return {{"max_depth", 0}, {"min_samples_leaf", 1}, {"max_features", 0}};
    case ModelKind::random_forest:
      return {{"n_trees", 200}, {"max_depth", 0}, {"min_samples_leaf", 1}, {"max_features", 0}, {"bootstrap", 1}};
    case ModelKind::extra_trees:
      return {{"n_trees", 200}, {"max_depth", 0}, {"min_samples_leaf", 1}, {"max_features", 0}, {"bootstrap", 0}};
    case ModelKind::gradient_boosting:
      return {{"n_trees", 200}, {"max_depth", 3}, {"learning_rate", 0.1}, {"min_samples_leaf", 1}, {"max_features", 0}};
    default: return {{"inner_folds", 5}, {"base_n_trees", 100}};
  }
}

struct ModelSpec {
  ModelKind kind = ModelKind::logistic;
  Hyperparams hyperparams;  // overrides on top of the kind defaults
  std::uint64_t seed = 0;

  [[nodiscard]] double param(const std::string& name) const {
    if (auto it = hyperparams.find(name); it != hyperparams.end()) return it->second;
    const auto d = default_hyperparams(kind);
    if (auto it = d.find(name); it != d.end()) return it->second;
    throw ArgumentError("hyperparameter '" + name + "' is not defined for " + std::string(to_string(kind)));
  }

  /// Effective hyperparameters (defaults merged with overrides).
  [[nodiscard]] Hyperparams resolved() const {
    auto h = default_hyperparams(kind);
    for (const auto& [k, v] : hyperparams) h[k] = v;
    return h;
  }

  void validate() const {
    const auto defaults = default_hyperparams(kind);
    for (const auto& [k, v] : hyperparams) {
      if (!defaults.count(k)) throw ArgumentError("unknown hyperparameter '" + k + "' for " + std::string(to_string(kind)));
      if (!std::isfinite(v)) throw ArgumentError("hyperparameter '" + k + "' is not finite");
    }
    auto at_least = [&](const char* name, double lo) {
      if (defaults.count(name) && param(name) < lo)
        throw ArgumentError(std::string("hyperparameter ") + name + " must be >= " + std::to_string(lo));
    };
    at_least("n_trees", 1);
    at_least("max_depth", 0);
    at_least("min_samples_leaf", 1);
    at_least("max_features", 0);
    at_least("max_iter", 1);
    at_least("l2", 0);
    at_least("l1", 0);
    at_least("inner_folds", 2);
    at_least("base_n_trees", 1);
    if (defaults.count("learning_rate") && !(param("learning_rate") > 0))
      throw ArgumentError("learning_rate must be > 0");
    if (defaults.count("tol") && !(param("tol") > 0)) throw ArgumentError("tol must be > 0");
  }
};

}  // namespace painfc
