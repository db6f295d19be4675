#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "openadapt/model.hpp"

namespace openadapt {

// Known/unknown/ignored partition of target scores: plus is w > w0 + rho,
// minus is w < w0 - rho, everything else (ties included) is ignored.
struct ThresholdBand {
  double w0 = 0.0;
  double rho = 0.0;

  void validate() const;
};

enum class ScoreKind { inner_product, l2_distance, cosine_distance, mean_entropy };

ScoreKind parse_score_kind(std::string_view name);
std::string_view score_kind_name(ScoreKind kind);

// Informative consistency score ⟨p1, p2⟩. Lies in [0, 1] for simplex inputs.
double iscore(std::span<const double> p1, std::span<const double> p2);

// Ablation scores, all oriented so that higher means "more likely known":
// l2 -> -‖p1 - p2‖, cosine -> cosine similarity, mean_entropy -> -(H1 + H2)/2.
double alt_score(ScoreKind kind, std::span<const double> p1, std::span<const double> p2);

// One score per row of the head outputs.
std::vector<double> score_rows(const HeadProbs& probs, ScoreKind kind = ScoreKind::inner_product);

// Mean score of `pairs` 0.5/0.5 input-space mixtures of distinct random
// target samples, scored by the model in eval mode.
double estimate_threshold(const TwoHeadModel& model, const Tensor& target_x, std::size_t pairs,
                          std::uint64_t seed, ScoreKind kind = ScoreKind::inner_product);

struct Partition {
  std::vector<std::size_t> plus;
  std::vector<std::size_t> minus;
  std::vector<std::size_t> band;
};

Partition partition(std::span<const double> scores, const ThresholdBand& band);

inline constexpr double kDefaultSlackRatio = 0.1;
inline constexpr std::array<double, 6> kSlackRatioGrid{0.00, 0.01, 0.05, 0.1, 0.2, 0.5};

double slack_from_threshold(double w0, double ratio = kDefaultSlackRatio);

// Delimited score dump: header "index,score,tag", tag one of "+", "-", "band".
struct ScoreRecord {
  std::size_t index = 0;
  double score = 0.0;
  std::string tag;
};

std::string format_score_dump(std::span<const double> scores, const Partition& part);
std::vector<ScoreRecord> parse_score_dump(std::string_view text);

}  // namespace openadapt
