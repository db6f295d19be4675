#include "openadapt/model.hpp"

#include <cmath>
#include <stdexcept>

#include "openadapt/rng.hpp"

namespace openadapt {

namespace {

Tensor uniform_init(std::size_t in, std::size_t out, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(in * out);
  for (double& v : w) v = dist(rng);
  return Tensor::from({in, out}, std::move(w));
}

Tensor normal_init(std::size_t in, std::size_t out, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> w(in * out);
  for (double& v : w) v = dist(rng);
  return Tensor::from({in, out}, std::move(w));
}

Tensor copy_param(const Tensor& t) {
  Tensor c = t.detach();
  if (t.requires_grad()) c.set_requires_grad(true);
  return c;
}

}  // namespace

Tensor broadcast_rows(const Tensor& row, std::size_t m) {
  return matmul(Tensor::full({m, 1}, 1.0), row);
}

Tensor select_rows(const Tensor& m, std::span<const std::size_t> indices) {
  const std::size_t n = m.rows();
  std::vector<double> sel(indices.size() * n, 0.0);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= n) throw std::out_of_range("select_rows: index out of range");
    sel[r * n + indices[r]] = 1.0;
  }
  return matmul(Tensor::from({indices.size(), n}, std::move(sel)), m);
}

TwoHeadModel::TwoHeadModel(const Architecture& arch, const InitSeeds& seeds) : arch_(arch) {
  if (arch.input_dim == 0 || arch.bottleneck == 0 || arch.classes == 0) {
    throw std::invalid_argument("TwoHeadModel: zero-sized dimension");
  }
  Rng rng(seeds.features);
  std::size_t in = arch.input_dim;
  std::vector<std::size_t> widths = arch.hidden;
  widths.push_back(arch.bottleneck);
  for (std::size_t out : widths) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in));  // He-uniform
    Linear layer{uniform_init(in, out, bound, rng), Tensor::zeros({1, out})};
    layer.weight.set_requires_grad(true);
    layer.bias.set_requires_grad(true);
    layers_.push_back(std::move(layer));
    in = out;
  }
  const std::size_t d = arch.bottleneck;
  bn_.gamma = Tensor::full({1, d}, 1.0);
  bn_.beta = Tensor::zeros({1, d});
  bn_.gamma.set_requires_grad(true);
  bn_.beta.set_requires_grad(true);
  bn_.running_mean.assign(d, 0.0);
  bn_.running_var.assign(d, 1.0);

  // Heads share a distribution but not a stream.
  const double head_std = std::sqrt(2.0 / static_cast<double>(d + arch.classes));
  Rng rng1(seeds.head1);
  Rng rng2(seeds.head2);
  head1_ = normal_init(d, arch.classes, head_std, rng1);
  head2_ = normal_init(d, arch.classes, head_std, rng2);
  head1_.set_requires_grad(true);
  head2_.set_requires_grad(true);
}

Tensor TwoHeadModel::trunk(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != arch_.input_dim) {
    throw ShapeError("TwoHeadModel: expected input of width " + std::to_string(arch_.input_dim) +
                     ", got " + shape_string(x.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = add(matmul(h, layers_[i].weight), layers_[i].bias);
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

Tensor TwoHeadModel::normalize_train(const Tensor& z) {
  const std::size_t b = z.rows();
  const std::size_t d = z.cols();
  if (b < 2) throw std::invalid_argument("batch norm in train mode needs a batch of at least 2");
  const double inv_b = 1.0 / static_cast<double>(b);
  const Tensor avg = Tensor::full({1, b}, inv_b);

  Tensor mu = matmul(avg, z);
  Tensor centered = sub(z, broadcast_rows(mu, b));
  Tensor var = matmul(avg, mul(centered, centered));
  Tensor inv_std = pow(add(var, Tensor::full({1, d}, bn_.eps)), -0.5);
  Tensor xhat = mul(centered, broadcast_rows(inv_std, b));
  Tensor out = add(mul(xhat, broadcast_rows(bn_.gamma, b)), bn_.beta);

  const double m = bn_.momentum;
  const double unbias = static_cast<double>(b) / static_cast<double>(b - 1);
  for (std::size_t j = 0; j < d; ++j) {
    bn_.running_mean[j] = (1.0 - m) * bn_.running_mean[j] + m * mu[j];
    bn_.running_var[j] = (1.0 - m) * bn_.running_var[j] + m * var[j] * unbias;
  }
  return out;
}

Tensor TwoHeadModel::normalize_eval(const Tensor& z) const {
  const std::size_t b = z.rows();
  const std::size_t d = z.cols();
  std::vector<double> shift(d), inv_std(d);
  for (std::size_t j = 0; j < d; ++j) {
    shift[j] = -bn_.running_mean[j];
    inv_std[j] = 1.0 / std::sqrt(bn_.running_var[j] + bn_.eps);
  }
  Tensor centered = add(z, Tensor::from({1, d}, std::move(shift)));
  Tensor xhat = mul(centered, broadcast_rows(Tensor::from({1, d}, std::move(inv_std)), b));
  return add(mul(xhat, broadcast_rows(bn_.gamma, b)), bn_.beta);
}

HeadProbs TwoHeadModel::heads(const Tensor& z) const {
  return {softmax(matmul(z, head1_)), softmax(matmul(z, head2_))};
}

Tensor TwoHeadModel::features(const Tensor& x, Mode mode) {
  Tensor z = trunk(x);
  return mode == Mode::train ? normalize_train(z) : normalize_eval(z);
}

Tensor TwoHeadModel::features_eval(const Tensor& x) const { return normalize_eval(trunk(x)); }

HeadProbs TwoHeadModel::forward_probs(const Tensor& x, Mode mode) {
  return heads(features(x, mode));
}

HeadProbs TwoHeadModel::infer(const Tensor& x) const { return heads(features_eval(x)); }

std::vector<Tensor> TwoHeadModel::feature_parameters() const {
  std::vector<Tensor> out;
  for (const Linear& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  out.push_back(bn_.gamma);
  out.push_back(bn_.beta);
  return out;
}

std::vector<Tensor> TwoHeadModel::parameters() const {
  std::vector<Tensor> out = feature_parameters();
  out.push_back(head1_);
  out.push_back(head2_);
  return out;
}

TwoHeadModel TwoHeadModel::clone() const {
  TwoHeadModel c = *this;
  for (Linear& l : c.layers_) {
    l.weight = copy_param(l.weight);
    l.bias = copy_param(l.bias);
  }
  c.bn_.gamma = copy_param(bn_.gamma);
  c.bn_.beta = copy_param(bn_.beta);
  c.head1_ = copy_param(head1_);
  c.head2_ = copy_param(head2_);
  return c;
}

}  // namespace openadapt
