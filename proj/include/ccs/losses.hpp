#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "ccs/errors.hpp"
#include "ccs/tensor.hpp"

namespace ccs {

inline constexpr double kProbFloor = 1e-12;

/// Mean negative log-likelihood over positions with mask != 0.
template <typename T>
Tensor<T> mle_loss(const std::vector<Tensor<T>>& step_dists, const std::vector<int>& targets,
                   const std::vector<int>& mask) {
  if (step_dists.size() != targets.size() || targets.size() != mask.size()) {
    throw DimensionError("mle_loss: " + std::to_string(step_dists.size()) + " distributions, " +
                         std::to_string(targets.size()) + " targets, " +
                         std::to_string(mask.size()) + " mask entries");
  }
  std::vector<Tensor<T>> nll;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (!mask[t]) continue;
    nll.push_back(pick(step_dists[t], targets[t]));
  }
  if (nll.empty()) throw DataError("mle_loss: every position is masked");
  auto logp = log(concat(nll), static_cast<T>(kProbFloor));
  return scale(mean(logp), T(-1));
}

/// Indices of the K largest entries; ties go to the lower index.
template <typename T>
std::vector<int> topk_indices(std::span<const T> values, std::size_t k) {
  std::vector<int> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(),
                    [&](int a, int b) { return values[a] > values[b] || (values[a] == values[b] && a < b); });
  idx.resize(k);
  return idx;
}

/// Probability-weighted sum of the embeddings of the K most likely tokens.
/// The selection is constant; gradients flow to the selected probabilities and
/// embedding rows.
template <typename T>
Tensor<T> step_embedding(const Tensor<T>& dist, const Tensor<T>& embedding, std::size_t k) {
  if (dist.rank() != 1 || embedding.rank() != 2 || embedding.dim(0) != dist.size()) {
    throw DimensionError("step_embedding: distribution " + shape_str(dist.shape()) +
                         " vs embedding " + shape_str(embedding.shape()));
  }
  if (k < 1 || k > dist.size()) {
    throw ConfigError("top-k must be in [1, " + std::to_string(dist.size()) + "], got " +
                      std::to_string(k));
  }
  const auto idx = topk_indices(dist.data(), k);
  auto weights = gather(dist, idx);
  auto rows = embedding_lookup(embedding, idx);  // [k, d]
  return matmul(transpose(rows), weights);
}

/// -log softmax(W_g^T mean_t E_t)[gold]. `classifier` is [d_emb, labels].
template <typename T>
Tensor<T> emotion_loss(const std::vector<Tensor<T>>& step_dists, const Tensor<T>& embedding,
                       const Tensor<T>& classifier, int gold, std::size_t k) {
  if (step_dists.empty()) throw DataError("emotion_loss needs at least one decoding step");
  if (gold < 0 || static_cast<std::size_t>(gold) >= classifier.dim(1)) {
    throw DataError("gold emotion " + std::to_string(gold) + " outside " +
                    std::to_string(classifier.dim(1)) + " labels");
  }
  std::vector<Tensor<T>> steps;
  for (const auto& d : step_dists) steps.push_back(step_embedding(d, embedding, k));
  auto avg = scale(sum_rows(stack(steps)), T(1) / static_cast<T>(steps.size()));
  auto logits = matmul(transpose(classifier), avg);
  return cross_entropy(log_softmax(logits), gold);
}

/// Emotion distribution G(E|Y) for inspection.
template <typename T>
Tensor<T> emotion_distribution(const std::vector<Tensor<T>>& step_dists,
                               const Tensor<T>& embedding, const Tensor<T>& classifier,
                               std::size_t k) {
  std::vector<Tensor<T>> steps;
  for (const auto& d : step_dists) steps.push_back(step_embedding(d, embedding, k));
  auto avg = scale(sum_rows(stack(steps)), T(1) / static_cast<T>(steps.size()));
  return softmax(matmul(transpose(classifier), avg));
}

struct LossReport {
  double mle = 0.0;
  double emo = 0.0;
  double total = 0.0;
  std::size_t tokens = 0;
};

/// total = mle + xi * emo
inline LossReport total_loss(double mle, double emo, double xi, std::size_t tokens = 0) {
  return {mle, emo, mle + xi * emo, tokens};
}

}  // namespace ccs
