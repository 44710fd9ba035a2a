#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "painfc/errors.hpp"
#include "painfc/random.hpp"

namespace painfc {

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Stratified k-fold: each class is shuffled, then positives followed by negatives are
/// dealt round-robin with one running counter, so fold sizes and per-fold class counts
/// each differ by at most one. Index lists come back sorted.
inline std::vector<FoldSplit> stratified_kfold(std::span<const std::uint8_t> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("stratified_kfold: k must be >= 2");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  if (pos.size() < k || neg.size() < k)
    throw StratificationError("stratified_kfold: each class needs at least k=" + std::to_string(k) + " members (have " +
                              std::to_string(pos.size()) + " positive, " + std::to_string(neg.size()) + " negative)");
  Rng rng(derive_seed(seed, "kfold"));
  shuffle(pos, rng);
  shuffle(neg, rng);
  std::vector<std::size_t> fold_of(labels.size());
  std::size_t counter = 0;
  for (auto i : pos) fold_of[i] = counter++ % k;
  for (auto i : neg) fold_of[i] = counter++ % k;

  std::vector<FoldSplit> folds(k);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t f = 0; f < k; ++f) (fold_of[i] == f ? folds[f].validation : folds[f].train).push_back(i);
  return folds;
}

}  // namespace painfc
