#include "openadapt/scoring.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "openadapt/rng.hpp"
#include "openadapt/text_io.hpp"

namespace openadapt {

void ThresholdBand::validate() const {
  if (!std::isfinite(w0)) throw std::invalid_argument("threshold w0 must be finite");
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw std::invalid_argument("slack rho must be >= 0");
}

ScoreKind parse_score_kind(std::string_view name) {
  if (name == "inner_product") return ScoreKind::inner_product;
  if (name == "l2_distance") return ScoreKind::l2_distance;
  if (name == "cosine_distance") return ScoreKind::cosine_distance;
  if (name == "mean_entropy") return ScoreKind::mean_entropy;
  throw std::invalid_argument("unknown score kind '" + std::string(name) + "'");
}

std::string_view score_kind_name(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::inner_product: return "inner_product";
    case ScoreKind::l2_distance: return "l2_distance";
    case ScoreKind::cosine_distance: return "cosine_distance";
    case ScoreKind::mean_entropy: return "mean_entropy";
  }
  throw std::invalid_argument("unknown score kind");
}

double iscore(std::span<const double> p1, std::span<const double> p2) {
  if (p1.size() != p2.size()) throw std::invalid_argument("iscore: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < p1.size(); ++k) s += p1[k] * p2[k];
  return s;
}

namespace {
double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}
}  // namespace

double alt_score(ScoreKind kind, std::span<const double> p1, std::span<const double> p2) {
  if (p1.size() != p2.size()) throw std::invalid_argument("alt_score: length mismatch");
  switch (kind) {
    case ScoreKind::inner_product: return iscore(p1, p2);
    case ScoreKind::l2_distance: {
      double sq = 0.0;
      for (std::size_t k = 0; k < p1.size(); ++k) sq += (p1[k] - p2[k]) * (p1[k] - p2[k]);
      return -std::sqrt(sq);
    }
    case ScoreKind::cosine_distance: {
      const double n1 = std::sqrt(iscore(p1, p1));
      const double n2 = std::sqrt(iscore(p2, p2));
      return iscore(p1, p2) / (n1 * n2);
    }
    case ScoreKind::mean_entropy: return -0.5 * (entropy(p1) + entropy(p2));
  }
  throw std::invalid_argument("alt_score: unknown score kind");
}

std::vector<double> score_rows(const HeadProbs& probs, ScoreKind kind) {
  const std::size_t n = probs.p1.rows();
  const std::size_t k = probs.p1.cols();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = alt_score(kind, probs.p1.data().subspan(i * k, k), probs.p2.data().subspan(i * k, k));
  }
  return out;
}

double estimate_threshold(const TwoHeadModel& model, const Tensor& target_x, std::size_t pairs,
                          std::uint64_t seed, ScoreKind kind) {
  if (target_x.rank() != 2 || target_x.rows() < 2) {
    throw std::invalid_argument("estimate_threshold: need at least two target samples");
  }
  if (pairs == 0) throw std::invalid_argument("estimate_threshold: pairs must be >= 1");
  const std::size_t n = target_x.rows();
  const std::size_t dim = target_x.cols();
  const auto x = target_x.data();

  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick_i(0, n - 1);
  std::uniform_int_distribution<std::size_t> pick_j(0, n - 2);
  std::vector<double> mixed(pairs * dim);
  for (std::size_t p = 0; p < pairs; ++p) {
    const std::size_t i = pick_i(rng);
    std::size_t j = pick_j(rng);
    if (j >= i) ++j;
    for (std::size_t c = 0; c < dim; ++c) {
      mixed[p * dim + c] = 0.5 * x[i * dim + c] + 0.5 * x[j * dim + c];
    }
  }
  const auto scores = score_rows(model.infer(Tensor::from({pairs, dim}, std::move(mixed))), kind);
  double total = 0.0;
  for (double s : scores) total += s;
  return total / static_cast<double>(pairs);
}

Partition partition(std::span<const double> scores, const ThresholdBand& band) {
  Partition out;
  const double hi = band.w0 + band.rho;
  const double lo = band.w0 - band.rho;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > hi) {
      out.plus.push_back(i);
    } else if (scores[i] < lo) {
      out.minus.push_back(i);
    } else {
      out.band.push_back(i);
    }
  }
  return out;
}

double slack_from_threshold(double w0, double ratio) {
  if (!(w0 >= 0.0) || !(ratio >= 0.0)) {
    throw std::invalid_argument("slack_from_threshold: w0 and ratio must be >= 0");
  }
  return ratio * w0;
}

std::string format_score_dump(std::span<const double> scores, const Partition& part) {
  std::vector<const char*> tags(scores.size(), "band");
  for (std::size_t i : part.plus) tags.at(i) = "+";
  for (std::size_t i : part.minus) tags.at(i) = "-";
  std::ostringstream os;
  os << "index,score,tag\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    os << i << ',' << format_double(scores[i]) << ',' << tags[i] << '\n';
  }
  return os.str();
}

std::vector<ScoreRecord> parse_score_dump(std::string_view text) {
  auto lines = split(text, '\n');
  if (lines.empty() || trim(lines[0]) != "index,score,tag") {
    throw FormatError("score dump: missing header");
  }
  std::vector<ScoreRecord> out;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    if (trim(lines[l]).empty()) continue;
    auto f = split(trim(lines[l]), ',');
    if (f.size() != 3) throw FormatError("score dump: malformed line " + std::to_string(l + 1));
    const std::string tag(f[2]);
    if (tag != "+" && tag != "-" && tag != "band") throw FormatError("score dump: bad tag " + tag);
    out.push_back({static_cast<std::size_t>(parse_int(f[0])), parse_double(f[1]), tag});
  }
  return out;
}

}  // namespace openadapt
