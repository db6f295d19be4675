#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "openadapt/datagen.hpp"
#include "openadapt/model.hpp"
#include "openadapt/scoring.hpp"

namespace openadapt {

inline constexpr int kUnknownClass = -1;

// Model-index prediction, or kUnknownClass when the score (⟨p1, p2⟩ by
// default) is below w0. Otherwise the argmax of the mean of the two heads,
// lowest index on ties.
int classify(std::span<const double> p1, std::span<const double> p2, double w0,
             ScoreKind kind = ScoreKind::inner_product);
int classify(const TwoHeadModel& model, const Tensor& x, double w0,
             ScoreKind kind = ScoreKind::inner_product);

// Harmonic mean 2ab/(a+b) in percent; 0 when both are 0.
double hos(double acc_kn, double acc_ukn);

struct ScoreHistogram {
  std::size_t bins = 0;              // equal-width over [0, 1]
  std::vector<std::size_t> known;    // ground-truth known samples
  std::vector<std::size_t> unknown;  // ground-truth unknown samples

  double bin_center(std::size_t b) const;
  std::string known_csv() const;
  std::string unknown_csv() const;
};

ScoreHistogram score_histogram(std::span<const double> scores, const std::vector<bool>& is_known,
                               std::size_t bins);
ScoreHistogram score_histogram(const TwoHeadModel& model, const DatasetBundle& target,
                               std::span<const int> class_ids, std::size_t bins);

struct ClassAccuracy {
  int label = 0;
  std::size_t count = 0;
  double accuracy = 0.0;  // percent
};

struct AdaptationReport {
  // Absent when the target has no known (resp. unknown) samples.
  std::optional<double> acc_kn;
  std::optional<double> acc_ukn;
  std::optional<double> hos;
  std::vector<ClassAccuracy> per_class;
  // Rows = truth, cols = prediction, over labels = class_ids + "unknown".
  std::vector<int> confusion_labels;
  std::vector<std::vector<std::size_t>> confusion;
  ScoreHistogram histogram;
  double w0 = 0.0;
  std::size_t n_known = 0;
  std::size_t n_unknown = 0;
  double mean_known_score = 0.0;
  double mean_unknown_score = 0.0;
  std::string config_fingerprint;

  std::string to_json() const;
};

inline constexpr int kReportSchemaVersion = 1;

// Metrics from ground truth and predictions. `class_ids` maps model indices
// to global ids; predictions are model indices or kUnknownClass.
AdaptationReport summarize(std::span<const int> truth, std::span<const int> predicted,
                           std::span<const int> class_ids);

// Classifies every target sample with `w0` and summarizes. Known set is the
// intersection of class_ids with the target's label set. `kind` drives the
// rejection only; histogram and mean scores always use ⟨p1, p2⟩.
AdaptationReport evaluate(const TwoHeadModel& model, const DatasetBundle& target, double w0,
                          std::span<const int> class_ids, std::size_t bins = 20,
                          ScoreKind kind = ScoreKind::inner_product);

// Validates a serialized report: required keys, accuracies in [0, 100] and
// hos consistent with acc_kn/acc_ukn within 1e-9. Returns an empty string
// when valid, otherwise the first problem found.
std::string check_report_json(const std::string& json_text);

struct LemmaProbePoint {
  double threshold = 0.0;
  double mean_distance = 0.0;
  std::size_t probes = 0;  // probes passing the threshold
};

struct LemmaProbeResult {
  std::vector<LemmaProbePoint> points;
  bool top_threshold_empty = false;
};

// Mean over random probe features z with ‖softmax(Wᵀz)‖₂ >= t of the minimum
// cosine distance from z to the well-trained source features
// (‖softmax(Wᵀz)‖₂ >= well_trained).
LemmaProbeResult lemma_probe(const Tensor& w, const Tensor& source_feats,
                             std::span<const double> thresholds, std::size_t n_probes,
                             std::uint64_t seed, double well_trained = 0.95);

struct LemmaProbeSetup {
  Tensor w;             // d × K
  Tensor source_feats;  // Ns × d
};

// d = 4, K = 3 Gaussian weights and random-radius source features.
LemmaProbeSetup default_probe_setup(std::uint64_t seed);

double softmax_norm(const Tensor& w, std::span<const double> z);
double cosine_distance(std::span<const double> a, std::span<const double> b);

}  // namespace openadapt
