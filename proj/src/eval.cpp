#include "openadapt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "openadapt/rng.hpp"
#include "openadapt/scoring.hpp"
#include "openadapt/text_io.hpp"

namespace openadapt {

int classify(std::span<const double> p1, std::span<const double> p2, double w0, ScoreKind kind) {
  if (alt_score(kind, p1, p2) < w0) return kUnknownClass;
  int best = 0;
  double best_v = p1[0] + p2[0];
  for (std::size_t k = 1; k < p1.size(); ++k) {
    const double v = p1[k] + p2[k];
    if (v > best_v) {
      best_v = v;
      best = static_cast<int>(k);
    }
  }
  return best;
}

int classify(const TwoHeadModel& model, const Tensor& x, double w0, ScoreKind kind) {
  const Tensor row = x.rank() == 1 ? Tensor::from({1, x.size()}, {x.data().begin(), x.data().end()}) : x;
  const HeadProbs probs = model.infer(row);
  return classify(probs.p1.data(), probs.p2.data(), w0, kind);
}

double hos(double acc_kn, double acc_ukn) {
  if (acc_kn + acc_ukn == 0.0) return 0.0;
  return 2.0 * acc_kn * acc_ukn / (acc_kn + acc_ukn);
}

// ---------------------------------------------------------------- histogram

double ScoreHistogram::bin_center(std::size_t b) const {
  return (static_cast<double>(b) + 0.5) / static_cast<double>(bins);
}

namespace {
std::string histogram_csv(const ScoreHistogram& h, const std::vector<std::size_t>& counts) {
  std::ostringstream os;
  os << "bin_center,count\n";
  for (std::size_t b = 0; b < h.bins; ++b) os << format_double(h.bin_center(b)) << ',' << counts[b] << '\n';
  return os.str();
}
}  // namespace

std::string ScoreHistogram::known_csv() const { return histogram_csv(*this, known); }
std::string ScoreHistogram::unknown_csv() const { return histogram_csv(*this, unknown); }

ScoreHistogram score_histogram(std::span<const double> scores, const std::vector<bool>& is_known,
                               std::size_t bins) {
  if (bins < 2) throw std::invalid_argument("score_histogram: need at least 2 bins");
  if (scores.size() != is_known.size()) throw std::invalid_argument("score_histogram: size mismatch");
  ScoreHistogram h{bins, std::vector<std::size_t>(bins, 0), std::vector<std::size_t>(bins, 0)};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(scores[i], 0.0, 1.0);
    const auto b = std::min(bins - 1, static_cast<std::size_t>(s * static_cast<double>(bins)));
    (is_known[i] ? h.known : h.unknown)[b] += 1;
  }
  return h;
}

namespace {

std::vector<bool> known_mask(const DatasetBundle& target, std::span<const int> class_ids) {
  const std::set<int> ids(class_ids.begin(), class_ids.end());
  std::vector<bool> mask(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) mask[i] = ids.count(target.y[i]) > 0;
  return mask;
}

}  // namespace

ScoreHistogram score_histogram(const TwoHeadModel& model, const DatasetBundle& target,
                               std::span<const int> class_ids, std::size_t bins) {
  const auto scores = score_rows(model.infer(target.x));
  return score_histogram(scores, known_mask(target, class_ids), bins);
}

// ---------------------------------------------------------------- report

AdaptationReport summarize(std::span<const int> truth, std::span<const int> predicted,
                           std::span<const int> class_ids) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("summarize: size mismatch");
  const std::size_t k = class_ids.size();
  std::map<int, std::size_t> index_of;
  for (std::size_t i = 0; i < k; ++i) index_of[class_ids[i]] = i;

  AdaptationReport rep;
  rep.confusion_labels.assign(class_ids.begin(), class_ids.end());
  rep.confusion_labels.push_back(kUnknownClass);
  rep.confusion.assign(k + 1, std::vector<std::size_t>(k + 1, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto it = index_of.find(truth[i]);
    const std::size_t row = it == index_of.end() ? k : it->second;
    const int p = predicted[i];
    if (p != kUnknownClass && (p < 0 || static_cast<std::size_t>(p) >= k)) {
      throw std::out_of_range("summarize: prediction outside model classes");
    }
    const std::size_t col = p == kUnknownClass ? k : static_cast<std::size_t>(p);
    rep.confusion[row][col] += 1;
  }

  double acc_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t count = 0;
    for (std::size_t col = 0; col <= k; ++col) count += rep.confusion[c][col];
    if (count == 0) continue;  // source-private class, absent from the target
    const double acc = 100.0 * static_cast<double>(rep.confusion[c][c]) / static_cast<double>(count);
    rep.per_class.push_back({class_ids[c], count, acc});
    rep.n_known += count;
    acc_sum += acc;
    ++present;
  }
  for (std::size_t col = 0; col <= k; ++col) rep.n_unknown += rep.confusion[k][col];

  if (present == 0 && rep.n_unknown == 0) {
    throw std::invalid_argument("evaluate: no known and no unknown samples");
  }
  if (present > 0) rep.acc_kn = acc_sum / static_cast<double>(present);
  if (rep.n_unknown > 0) {
    rep.acc_ukn = 100.0 * static_cast<double>(rep.confusion[k][k]) / static_cast<double>(rep.n_unknown);
  }
  if (rep.acc_kn && rep.acc_ukn) rep.hos = hos(*rep.acc_kn, *rep.acc_ukn);
  return rep;
}

AdaptationReport evaluate(const TwoHeadModel& model, const DatasetBundle& target, double w0,
                          std::span<const int> class_ids, std::size_t bins, ScoreKind kind) {
  if (class_ids.size() != model.classes()) {
    throw std::invalid_argument("evaluate: class id list does not match the model");
  }
  const HeadProbs probs = model.infer(target.x);
  const std::size_t k = model.classes();
  const auto scores = score_rows(probs);
  std::vector<int> predicted(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    predicted[i] =
        classify(probs.p1.data().subspan(i * k, k), probs.p2.data().subspan(i * k, k), w0, kind);
  }
  AdaptationReport rep = summarize(target.y, predicted, class_ids);
  rep.w0 = w0;

  const auto mask = known_mask(target, class_ids);
  double known_sum = 0.0, unknown_sum = 0.0;
  std::size_t known_n = 0, unknown_n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      known_sum += scores[i];
      ++known_n;
    } else {
      unknown_sum += scores[i];
      ++unknown_n;
    }
  }
  rep.mean_known_score = known_n ? known_sum / static_cast<double>(known_n) : 0.0;
  rep.mean_unknown_score = unknown_n ? unknown_sum / static_cast<double>(unknown_n) : 0.0;
  rep.histogram = score_histogram(scores, mask, bins);
  return rep;
}

std::string AdaptationReport::to_json() const {
  using nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  ordered_json j;
  j["schema"] = "openadapt-report";
  j["schema_version"] = kReportSchemaVersion;
  j["metrics"] = {{"acc_kn", opt(acc_kn)}, {"acc_ukn", opt(acc_ukn)}, {"hos", opt(hos)}};
  j["w0"] = w0;
  j["counts"] = {{"known", n_known}, {"unknown", n_unknown}};
  j["score_means"] = {
      {"known", n_known ? ordered_json(mean_known_score) : ordered_json(nullptr)},
      {"unknown", n_unknown ? ordered_json(mean_unknown_score) : ordered_json(nullptr)}};
  ordered_json classes = ordered_json::array();
  for (const ClassAccuracy& c : per_class) {
    classes.push_back({{"class", c.label}, {"count", c.count}, {"accuracy", c.accuracy}});
  }
  j["per_class"] = classes;
  ordered_json labels = ordered_json::array();
  for (int l : confusion_labels) labels.push_back(l == kUnknownClass ? ordered_json("unknown") : ordered_json(l));
  j["confusion"] = {{"labels", labels}, {"counts", confusion}};
  ordered_json edges = ordered_json::array();
  for (std::size_t b = 0; b <= histogram.bins; ++b) {
    edges.push_back(static_cast<double>(b) / static_cast<double>(histogram.bins));
  }
  j["histogram"] = {{"bins", histogram.bins},
                    {"edges", edges},
                    {"known", histogram.known},
                    {"unknown", histogram.unknown}};
  j["config_fingerprint"] = config_fingerprint;
  return j.dump(2) + "\n";
}

std::string check_report_json(const std::string& json_text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    return std::string("not JSON: ") + e.what();
  }
  if (j.value("schema", "") != "openadapt-report") return "schema tag missing";
  if (!j.contains("schema_version") || j["schema_version"] != kReportSchemaVersion) {
    return "unexpected schema_version";
  }
  for (const char* key : {"metrics", "per_class", "confusion", "histogram", "config_fingerprint", "w0"}) {
    if (!j.contains(key)) return std::string("missing key ") + key;
  }
  const json& m = j["metrics"];
  for (const char* key : {"acc_kn", "acc_ukn", "hos"}) {
    if (!m.contains(key)) return std::string("missing metric ") + key;
    if (!m[key].is_null() && !(m[key].is_number() && m[key] >= 0.0 && m[key] <= 100.0)) {
      return std::string("metric out of range: ") + key;
    }
  }
  if (!m["acc_kn"].is_null() && !m["acc_ukn"].is_null()) {
    if (m["hos"].is_null()) return "hos missing although both accuracies are present";
    const double expect = hos(m["acc_kn"].get<double>(), m["acc_ukn"].get<double>());
    if (std::abs(expect - m["hos"].get<double>()) > 1e-9) return "hos inconsistent with accuracies";
  }
  const json& h = j["histogram"];
  if (!h.contains("known") || !h.contains("unknown") || !h.contains("bins")) {
    return "histogram arrays missing";
  }
  return {};
}

// ---------------------------------------------------------------- lemma probe

double softmax_norm(const Tensor& w, std::span<const double> z) {
  const Tensor p = softmax(matmul(Tensor::from({1, z.size()}, {z.begin(), z.end()}), w));
  double sq = 0.0;
  for (double v : p.data()) sq += v * v;
  return std::sqrt(sq);
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return 1.0 - ab / std::sqrt(aa * bb);
}

namespace {

// Isotropic direction times a uniform radius in [0, max_radius].
std::vector<double> random_feature(std::size_t d, double max_radius, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> radius(0.0, max_radius);
  std::vector<double> z(d);
  double norm = 0.0;
  for (double& v : z) {
    v = gauss(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  const double r = radius(rng);
  for (double& v : z) v *= r / norm;
  return z;
}

constexpr double kProbeRadius = 12.0;

}  // namespace

LemmaProbeResult lemma_probe(const Tensor& w, const Tensor& source_feats,
                             std::span<const double> thresholds, std::size_t n_probes,
                             std::uint64_t seed, double well_trained) {
  const std::size_t d = w.rows();
  if (source_feats.cols() != d) throw ShapeError("lemma_probe: feature width differs from W");

  std::vector<std::vector<double>> anchors;
  for (std::size_t i = 0; i < source_feats.rows(); ++i) {
    auto z = source_feats.data().subspan(i * d, d);
    if (softmax_norm(w, z) >= well_trained) anchors.emplace_back(z.begin(), z.end());
  }
  if (anchors.empty()) throw std::invalid_argument("lemma_probe: no well-trained source features");

  Rng rng(seed);
  std::vector<std::pair<double, double>> probes;  // (softmax norm, distance to Z_s)
  probes.reserve(n_probes);
  for (std::size_t i = 0; i < n_probes; ++i) {
    const auto z = random_feature(d, kProbeRadius, rng);
    double best = 2.0;
    for (const auto& a : anchors) best = std::min(best, cosine_distance(z, a));
    probes.emplace_back(softmax_norm(w, z), best);
  }

  LemmaProbeResult result;
  for (double t : thresholds) {
    LemmaProbePoint point{t, 0.0, 0};
    for (const auto& [norm, dist] : probes) {
      if (norm >= t) {
        point.mean_distance += dist;
        ++point.probes;
      }
    }
    if (point.probes) point.mean_distance /= static_cast<double>(point.probes);
    result.points.push_back(point);
  }
  result.top_threshold_empty = result.points.empty() || result.points.back().probes == 0;
  return result;
}

LemmaProbeSetup default_probe_setup(std::uint64_t seed) {
  constexpr std::size_t d = 4;
  constexpr std::size_t k = 3;
  constexpr std::size_t n_source = 4000;
  Rng rng = make_rng(seed, "lemma-weights");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> w(d * k);
  for (double& v : w) v = gauss(rng);
  Rng feat_rng = make_rng(seed, "lemma-source");
  std::vector<double> feats;
  feats.reserve(n_source * d);
  for (std::size_t i = 0; i < n_source; ++i) {
    const auto z = random_feature(d, kProbeRadius, feat_rng);
    feats.insert(feats.end(), z.begin(), z.end());
  }
  return {Tensor::from({d, k}, std::move(w)), Tensor::from({n_source, d}, std::move(feats))};
}

}  // namespace openadapt
