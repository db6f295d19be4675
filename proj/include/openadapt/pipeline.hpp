#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "openadapt/checkpoint.hpp"
#include "openadapt/config.hpp"
#include "openadapt/datagen.hpp"
#include "openadapt/eval.hpp"
#include "openadapt/train.hpp"

namespace openadapt {

// Per-seed substreams: "data", "init-features", "init-head1", "init-head2",
// "mixup"; the trainers derive "batching" from the run seed themselves.
std::pair<DatasetBundle, DatasetBundle> make_data(const RunConfig& cfg, std::uint64_t seed);

struct SourceStage {
  Checkpoint checkpoint;
  TrainLog log;
};

SourceStage run_source_stage(const RunConfig& cfg, const DatasetBundle& source, std::uint64_t seed);

struct BandChoice {
  ThresholdBand band;
  bool estimated = false;  // false: fixed by config or rejection disabled
};

// Fixed w0 when configured (or 0 for pda/closed), otherwise the mixup
// estimate of `model` on the target inputs.
BandChoice choose_band(const RunConfig& cfg, const TwoHeadModel& model, const Tensor& target_x,
                       std::uint64_t seed);

struct AdaptStage {
  Checkpoint checkpoint;  // stage "adapted", band recorded
  TrainLog log;
  BandChoice band;
  std::string score_dump;  // adapted model's target scores, tagged by band
};

AdaptStage run_adapt_stage(const RunConfig& cfg, const Checkpoint& source, const Tensor& target_x,
                           std::uint64_t seed);

// w0 precedence: explicit argument, then the checkpoint's band, then
// choose_band on the checkpoint's model.
AdaptationReport run_eval_stage(const RunConfig& cfg, const Checkpoint& checkpoint,
                                const DatasetBundle& target, std::uint64_t seed,
                                std::optional<double> w0 = std::nullopt);

struct SeedResult {
  std::uint64_t seed = 0;
  double w0 = 0.0;
  AdaptationReport before;  // source model, same w0
  AdaptationReport after;
};

// gen -> train-source -> adapt -> eval, entirely in memory.
SeedResult run_seed(const RunConfig& cfg, std::uint64_t seed);

enum class SweepAxis { unknown_classes, rho_ratio, T, score_kind };

SweepAxis parse_sweep_axis(std::string_view name);
std::string_view sweep_axis_name(SweepAxis axis);

// Copy of `base` with one axis set to `value` (parsed for that axis).
RunConfig apply_sweep_value(const RunConfig& base, SweepAxis axis, std::string_view value);

struct SweepRow {
  std::string value;
  double mean_hos = 0.0;
  std::vector<double> hos;  // one per seed, in cfg.seeds order
};

std::vector<SweepRow> run_sweep(const RunConfig& base, SweepAxis axis,
                                const std::vector<std::string>& values);

// "value,mean_hos,hos_s<seed>,..."
std::string format_sweep(const std::vector<SweepRow>& rows, const std::vector<std::uint64_t>& seeds);

// Default values per axis: unknown classes 1..5, the slack-ratio grid,
// T in {0, 0.1, ..., 1} and every score kind.
std::vector<std::string> default_sweep_values(SweepAxis axis);

}  // namespace openadapt
