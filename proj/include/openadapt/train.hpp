#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "openadapt/datagen.hpp"
#include "openadapt/losses.hpp"
#include "openadapt/model.hpp"
#include "openadapt/scoring.hpp"

namespace openadapt {

struct OptimConfig {
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  std::size_t max_iters = 600;
  std::size_t batch_size = 64;
  // Multiplier on lr for the bottleneck layer, bn and heads ("new" layers).
  double new_layer_lr_mult = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Thrown when a loss turns NaN/Inf; the trainer stops at that iteration.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// lr0 · (1 + 10 p)^(-0.75), p = progress in [0, 1].
double lr_schedule(double lr0, double progress);

struct SgdState {
  std::vector<std::vector<double>> velocity;
};

// v <- momentum·v + grad + weight_decay·param ; param <- param - lr·v.
void sgd_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, SgdState& state,
              const OptimConfig& cfg, std::span<const double> lr);

struct TrainRecord {
  std::size_t iteration = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::size_t n_plus = 0;   // adaptation only
  std::size_t n_minus = 0;  // adaptation only
  bool updated = true;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::uint64_t final_checksum = 0;
  // Adaptation: an epoch in which every batch fell entirely inside the band.
  bool degenerate_band = false;
  std::vector<std::string> header;  // "key=value" lines exported as comments

  std::string to_csv() const;
};

// Minimizes the smoothed two-head cross-entropy plus orthogonality penalty
// over class-balanced batches. `source.y` must index the model's classes via
// source.label_set.
TrainLog train_source(TwoHeadModel& model, const DatasetBundle& source, const LossConfig& loss_cfg,
                      const OptimConfig& optim_cfg);

struct AdaptOptions {
  ScoreKind score = ScoreKind::inner_product;
  // Re-estimate w0 from the current model every `reestimate_every`
  // iterations (0 = never, keep the band fixed).
  std::size_t reestimate_every = 0;
  double slack_ratio = kDefaultSlackRatio;
};

// Fine-tunes the feature module on unlabeled target inputs with the heads
// frozen. Each iteration scores a uniform batch, splits it by `band`, and
// minimizes L_unk(minus) - L_lmi(plus).
TrainLog adapt_target(TwoHeadModel& model, const Tensor& target_x, ThresholdBand band,
                      const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                      const AdaptOptions& options = {});

}  // namespace openadapt
