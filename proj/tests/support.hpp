// Random generators and scalar-loop reference implementations shared by the
// unit and acceptance tests. The reference code never touches the tape.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "openadapt/losses.hpp"
#include "openadapt/model.hpp"
#include "openadapt/rng.hpp"
#include "openadapt/tensor.hpp"

namespace testsupport {

using Matrix = std::vector<std::vector<double>>;

inline openadapt::Tensor random_tensor(openadapt::Shape shape, openadapt::Rng& rng, double lo = -1.0,
                                  double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(openadapt::shape_numel(shape));
  for (double& x : v) x = u(rng);
  return openadapt::Tensor::from(std::move(shape), std::move(v));
}

// Strictly positive simplex point; `peaked` makes one coordinate dominate.
inline std::vector<double> random_simplex(std::size_t k, openadapt::Rng& rng, bool peaked = false) {
  std::gamma_distribution<double> g(peaked ? 0.3 : 1.0, 1.0);
  std::vector<double> p(k);
  double s = 0.0;
  for (double& x : p) {
    x = g(rng) + 1e-9;
    s += x;
  }
  for (double& x : p) x /= s;
  return p;
}

inline openadapt::Tensor random_simplex_rows(std::size_t rows, std::size_t k, openadapt::Rng& rng) {
  std::vector<double> v;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto p = random_simplex(k, rng, r % 2 == 1);
    v.insert(v.end(), p.begin(), p.end());
  }
  return openadapt::Tensor::from({rows, k}, std::move(v));
}

inline Matrix to_matrix(const openadapt::Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  }
  return m;
}

// Small model with randomized bn affine parameters so every parameter matters.
inline openadapt::TwoHeadModel random_model(openadapt::Rng& rng, std::size_t in, std::vector<std::size_t> hidden,
                                       std::size_t bottleneck, std::size_t classes) {
  openadapt::Architecture arch{in, std::move(hidden), bottleneck, classes};
  openadapt::TwoHeadModel model(arch, {rng(), rng(), rng()});
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double& g : model.bn().gamma.mutable_data()) g = 1.0 + u(rng);
  for (double& b : model.bn().beta.mutable_data()) b = u(rng);
  for (auto& layer : model.layers()) {
    for (double& b : layer.bias.mutable_data()) b = 0.2 * u(rng);
  }
  return model;
}

inline std::vector<double> softmax_ref(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    p[k] = std::exp(z[k] - m);
    s += p[k];
  }
  for (double& x : p) x /= s;
  return p;
}

// Train-mode forward pass written out loop by loop from the raw parameters.
inline std::pair<Matrix, Matrix> forward_train_ref(const openadapt::TwoHeadModel& model,
                                                   const openadapt::Tensor& x) {
  Matrix h = to_matrix(x);
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Matrix w = to_matrix(layers[l].weight);
    const auto b = layers[l].bias.data();
    Matrix next(h.size(), std::vector<double>(w[0].size()));
    for (std::size_t r = 0; r < h.size(); ++r) {
      for (std::size_t j = 0; j < w[0].size(); ++j) {
        double acc = b[j];
        for (std::size_t i = 0; i < w.size(); ++i) acc += h[r][i] * w[i][j];
        next[r][j] = (l + 1 < layers.size()) ? std::max(acc, 0.0) : acc;
      }
    }
    h = std::move(next);
  }
  const std::size_t n = h.size();
  const std::size_t d = h[0].size();
  const auto gamma = model.bn().gamma.data();
  const auto beta = model.bn().beta.data();
  for (std::size_t j = 0; j < d; ++j) {
    double mu = 0.0;
    for (std::size_t r = 0; r < n; ++r) mu += h[r][j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (h[r][j] - mu) * (h[r][j] - mu);
    var /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      h[r][j] = gamma[j] * (h[r][j] - mu) / std::sqrt(var + model.bn().eps) + beta[j];
    }
  }
  auto head = [&](const openadapt::Tensor& w_t) {
    const Matrix w = to_matrix(w_t);
    Matrix p(n);
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> z(w[0].size(), 0.0);
      for (std::size_t k = 0; k < z.size(); ++k) {
        for (std::size_t j = 0; j < d; ++j) z[k] += h[r][j] * w[j][k];
      }
      p[r] = softmax_ref(z);
    }
    return p;
  };
  return {head(model.head1()), head(model.head2())};
}

inline double clamped_log(double v) { return std::log(std::max(v, openadapt::kLogClamp)); }

inline double orth_ref(const openadapt::Tensor& w1, const openadapt::Tensor& w2) {
  const Matrix a = to_matrix(w1);
  const Matrix b = to_matrix(w2);
  double sq = 0.0;
  for (std::size_t i = 0; i < a[0].size(); ++i) {
    for (std::size_t j = 0; j < b[0].size(); ++j) {
      double e = 0.0;
      for (std::size_t r = 0; r < a.size(); ++r) e += a[r][i] * b[r][j];
      sq += e * e;
    }
  }
  return std::sqrt(sq);
}

inline double source_loss_ref(const Matrix& p1, const Matrix& p2, const std::vector<std::size_t>& y,
                              double alpha, double lambda, double orth) {
  const std::size_t k = p1[0].size();
  double total = 0.0;
  for (const Matrix* p : {&p1, &p2}) {
    double head = 0.0;
    for (std::size_t r = 0; r < p->size(); ++r) {
      for (std::size_t c = 0; c < k; ++c) {
        const double q = (c == y[r] ? 1.0 - alpha : 0.0) + alpha / static_cast<double>(k);
        head -= q * clamped_log((*p)[r][c]);
      }
    }
    total += head / static_cast<double>(p->size());
  }
  return total / 2.0 + lambda * orth;
}

inline double lmi_head_ref(const Matrix& p, double T) {
  const std::size_t n = p.size();
  const std::size_t k = p[0].size();
  double neg_ent = 0.0;
  std::vector<double> q(k, 0.0);
  for (const auto& row : p) {
    for (std::size_t c = 0; c < k; ++c) {
      neg_ent += row[c] * clamped_log(row[c]);
      q[c] += row[c] / static_cast<double>(n);
    }
  }
  neg_ent /= static_cast<double>(n);
  std::vector<double> qh(k);
  double s = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    qh[c] = (T == 0.0) ? (q[c] > 0.0 ? 1.0 : 0.0) : std::pow(q[c], T);
    s += qh[c];
  }
  double kl = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    qh[c] /= s;
    kl += q[c] * (clamped_log(q[c]) - clamped_log(qh[c]));
  }
  return neg_ent - kl;
}

inline double unk_head_ref(const Matrix& p) {
  const std::size_t k = p[0].size();
  double total = 0.0;
  for (const auto& row : p) {
    for (double v : row) total -= clamped_log(v) / static_cast<double>(k);
  }
  return total / static_cast<double>(p.size());
}

inline Matrix pick(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out;
  for (std::size_t i : idx) out.push_back(m[i]);
  return out;
}

inline double target_loss_ref(const Matrix& p1, const Matrix& p2, const std::vector<std::size_t>& plus,
                              const std::vector<std::size_t>& minus, double T) {
  double unk = 0.0;
  double lmi = 0.0;
  if (!minus.empty()) unk = 0.5 * (unk_head_ref(pick(p1, minus)) + unk_head_ref(pick(p2, minus)));
  if (!plus.empty()) lmi = 0.5 * (lmi_head_ref(pick(p1, plus), T) + lmi_head_ref(pick(p2, plus), T));
  return unk - lmi;
}

inline double entropy_ref(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace testsupport
