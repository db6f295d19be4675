#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "openadapt/model.hpp"
#include "openadapt/tensor.hpp"

namespace openadapt {

struct LossConfig {
  double lambda = 0.01;  // orthogonality weight
  double alpha = 0.1;    // label smoothing
  double T = 0.1;        // flattening temperature

  void validate() const;
};

// (1-alpha)·onehot(y) + alpha/K.
Tensor smoothed_labels(std::size_t y, std::size_t classes, double alpha);

// ‖W1ᵀ W2‖_F.
Tensor orth_penalty(const Tensor& w1, const Tensor& w2);

// Smoothed cross-entropy averaged over samples and over both heads, plus
// lambda·orth_penalty(W1, W2). Runs the model in train mode.
Tensor source_loss(TwoHeadModel& model, const Tensor& x, std::span<const std::size_t> labels,
                   const LossConfig& cfg);

// p_i^T / Σ p^T. T = 1 returns p unchanged; T = 0 is uniform over the support
// of p (0^0 taken as 0). The result carries no gradient.
Tensor flatten(const Tensor& p, double T);

// Localized mutual information, to be maximized: per head, the batch mean of
// Σ p log p minus KL(Q ‖ Flatten(Q, T)) with Q the batch-mean prediction,
// averaged over the two heads. Flatten(Q, T) is held constant.
Tensor lmi_loss(const Tensor& p1, const Tensor& p2, double T);

// Flatten(Q, T) for each head's batch-mean prediction, as constants.
struct LmiTargets {
  Tensor q1;  // 1 × K
  Tensor q2;
};
LmiTargets lmi_targets(const Tensor& p1, const Tensor& p2, double T);
// Same objective against explicitly supplied flattened targets.
Tensor lmi_loss(const Tensor& p1, const Tensor& p2, const LmiTargets& targets);

// Uniform-target cross-entropy -(1/K) Σ log p averaged over rows and heads.
// Minimum log K at uniform rows.
Tensor unk_loss(const Tensor& p1, const Tensor& p2);

// L_unk over the `minus` rows minus L_lmi over the `plus` rows of already
// computed head probabilities. An empty side contributes zero.
Tensor target_loss(const HeadProbs& probs, std::span<const std::size_t> plus,
                   std::span<const std::size_t> minus, const LossConfig& cfg);

// Same objective from raw inputs: both batches go through one train-mode
// forward pass (plus rows first) and are split afterwards.
Tensor target_loss(TwoHeadModel& model, const Tensor& x_plus, const Tensor& x_minus,
                   const LossConfig& cfg);

}  // namespace openadapt
