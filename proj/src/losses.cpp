#include "openadapt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace openadapt {

void LossConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in [0, 1)");
  if (!(T >= 0.0 && T <= 1.0)) throw std::invalid_argument("T must lie in [0, 1]");
}

Tensor smoothed_labels(std::size_t y, std::size_t classes, double alpha) {
  if (y >= classes) {
    throw std::out_of_range("label " + std::to_string(y) + " outside [0, " +
                            std::to_string(classes) + ")");
  }
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in [0, 1)");
  const double base = alpha / static_cast<double>(classes);
  std::vector<double> q(classes, base);
  q[y] = (1.0 - alpha) + base;
  return Tensor::from({classes}, std::move(q));
}

Tensor orth_penalty(const Tensor& w1, const Tensor& w2) {
  if (w1.shape() != w2.shape()) {
    throw ShapeError("orth_penalty: head shapes differ: " + shape_string(w1.shape()) + " vs " +
                     shape_string(w2.shape()));
  }
  return frobenius_norm(matmul(transpose(w1), w2));
}

namespace {

Tensor cross_entropy(const Tensor& targets, const Tensor& p) {
  return scale(sum(mul(targets, log(p))), -1.0 / static_cast<double>(p.rows()));
}

Tensor batch_mean(const Tensor& p) {
  const double inv_b = 1.0 / static_cast<double>(p.rows());
  return matmul(Tensor::full({1, p.rows()}, inv_b), p);
}

Tensor head_lmi(const Tensor& p, const Tensor& qhat) {
  Tensor negentropy = scale(sum(mul(p, log(p))), 1.0 / static_cast<double>(p.rows()));
  Tensor q = batch_mean(p);
  Tensor kl = sub(dot(q, log(q)), dot(q, log(qhat)));
  return sub(negentropy, kl);
}

Tensor head_unk(const Tensor& p) {
  const double k = static_cast<double>(p.cols());
  return scale(sum(log(p)), -1.0 / (k * static_cast<double>(p.rows())));
}

void require_pair(const Tensor& p1, const Tensor& p2, const char* op) {
  if (p1.shape() != p2.shape() || p1.rank() != 2) {
    throw ShapeError(std::string(op) + ": head outputs must be equal-shaped matrices, got " +
                     shape_string(p1.shape()) + " and " + shape_string(p2.shape()));
  }
  if (p1.rows() == 0) throw std::invalid_argument(std::string(op) + ": empty batch");
}

}  // namespace

Tensor source_loss(TwoHeadModel& model, const Tensor& x, std::span<const std::size_t> labels,
                   const LossConfig& cfg) {
  if (labels.empty() || x.rank() != 2 || labels.size() != x.rows()) {
    throw std::invalid_argument("source_loss: need one label per input row");
  }
  const std::size_t k = model.classes();
  std::vector<double> q;
  q.reserve(labels.size() * k);
  for (std::size_t y : labels) {
    Tensor row = smoothed_labels(y, k, cfg.alpha);
    q.insert(q.end(), row.data().begin(), row.data().end());
  }
  const Tensor targets = Tensor::from({labels.size(), k}, std::move(q));
  HeadProbs probs = model.forward_probs(x, Mode::train);
  Tensor ce = scale(add(cross_entropy(targets, probs.p1), cross_entropy(targets, probs.p2)), 0.5);
  if (cfg.lambda == 0.0) return ce;
  return add(ce, scale(orth_penalty(model.head1(), model.head2()), cfg.lambda));
}

Tensor flatten(const Tensor& p, double T) {
  if (!(T >= 0.0 && T <= 1.0)) throw std::invalid_argument("flatten: T must lie in [0, 1]");
  const auto v = p.data();
  double total = 0.0;
  bool any_positive = false;
  for (double x : v) {
    if (x < 0.0) throw std::invalid_argument("flatten: negative probability");
    any_positive = any_positive || x > 0.0;
    total += x;
  }
  if (!any_positive) throw std::invalid_argument("flatten: all-zero distribution");
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("flatten: input not on the simplex");

  if (T == 1.0) return p.detach();
  std::vector<double> out(v.size());
  if (T == 0.0) {
    const double support = static_cast<double>(
        std::count_if(v.begin(), v.end(), [](double x) { return x > 0.0; }));
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? 1.0 / support : 0.0;
    return Tensor::from(p.shape(), std::move(out));
  }
  const Tensor powered = pow(p.detach(), T);
  const double norm = std::accumulate(powered.data().begin(), powered.data().end(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = powered[i] / norm;
  return Tensor::from(p.shape(), std::move(out));
}

LmiTargets lmi_targets(const Tensor& p1, const Tensor& p2, double T) {
  require_pair(p1, p2, "lmi_targets");
  return {flatten(batch_mean(p1).detach(), T), flatten(batch_mean(p2).detach(), T)};
}

Tensor lmi_loss(const Tensor& p1, const Tensor& p2, const LmiTargets& targets) {
  require_pair(p1, p2, "lmi_loss");
  if (targets.q1.size() != p1.cols() || targets.q2.size() != p2.cols()) {
    throw ShapeError("lmi_loss: flattened targets must have one entry per class");
  }
  return scale(add(head_lmi(p1, targets.q1), head_lmi(p2, targets.q2)), 0.5);
}

Tensor lmi_loss(const Tensor& p1, const Tensor& p2, double T) {
  return lmi_loss(p1, p2, lmi_targets(p1, p2, T));
}

Tensor unk_loss(const Tensor& p1, const Tensor& p2) {
  require_pair(p1, p2, "unk_loss");
  return scale(add(head_unk(p1), head_unk(p2)), 0.5);
}

Tensor target_loss(const HeadProbs& probs, std::span<const std::size_t> plus,
                   std::span<const std::size_t> minus, const LossConfig& cfg) {
  if (plus.empty() && minus.empty()) {
    throw std::invalid_argument("target_loss: both score bands are empty");
  }
  Tensor total = Tensor::scalar(0.0);
  if (!minus.empty()) {
    total = unk_loss(select_rows(probs.p1, minus), select_rows(probs.p2, minus));
  }
  if (!plus.empty()) {
    Tensor lmi = lmi_loss(select_rows(probs.p1, plus), select_rows(probs.p2, plus), cfg.T);
    total = minus.empty() ? scale(lmi, -1.0) : sub(total, lmi);
  }
  return total;
}

Tensor target_loss(TwoHeadModel& model, const Tensor& x_plus, const Tensor& x_minus,
                   const LossConfig& cfg) {
  const std::size_t n_plus = x_plus.size() == 0 ? 0 : x_plus.rows();
  const std::size_t n_minus = x_minus.size() == 0 ? 0 : x_minus.rows();
  if (n_plus + n_minus == 0) throw std::invalid_argument("target_loss: both score bands are empty");
  const std::size_t width = n_plus ? x_plus.cols() : x_minus.cols();
  std::vector<double> stacked;
  stacked.reserve((n_plus + n_minus) * width);
  if (n_plus) stacked.insert(stacked.end(), x_plus.data().begin(), x_plus.data().end());
  if (n_minus) {
    if (x_minus.cols() != width) throw ShapeError("target_loss: batch widths differ");
    stacked.insert(stacked.end(), x_minus.data().begin(), x_minus.data().end());
  }
  HeadProbs probs = model.forward_probs(Tensor::from({n_plus + n_minus, width}, std::move(stacked)),
                                        Mode::train);
  std::vector<std::size_t> plus(n_plus), minus(n_minus);
  std::iota(plus.begin(), plus.end(), std::size_t{0});
  std::iota(minus.begin(), minus.end(), n_plus);
  return target_loss(probs, plus, minus, cfg);
}

}  // namespace openadapt
