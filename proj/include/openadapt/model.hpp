#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "openadapt/tensor.hpp"

namespace openadapt {

enum class Mode { train, eval };

struct Architecture {
  std::size_t input_dim = 8;
  std::vector<std::size_t> hidden{64};
  std::size_t bottleneck = 32;
  std::size_t classes = 4;
};

struct InitSeeds {
  std::uint64_t features = 0;
  std::uint64_t head1 = 1;
  std::uint64_t head2 = 2;
};

struct Linear {
  Tensor weight;  // in × out
  Tensor bias;    // 1 × out
};

// Batch normalization over the bottleneck features.
struct BatchNorm {
  Tensor gamma;  // 1 × d
  Tensor beta;   // 1 × d
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

struct HeadProbs {
  Tensor p1;  // B × K
  Tensor p2;  // B × K
};

// Feature module g (affine+ReLU hidden layers, affine bottleneck, batch norm)
// followed by two bias-free linear heads sharing the bottleneck features.
class TwoHeadModel {
 public:
  TwoHeadModel(const Architecture& arch, const InitSeeds& seeds);

  const Architecture& architecture() const { return arch_; }
  std::size_t classes() const { return arch_.classes; }
  std::size_t bottleneck() const { return arch_.bottleneck; }

  // Train mode uses batch statistics (B >= 2) and updates the running ones.
  HeadProbs forward_probs(const Tensor& x, Mode mode);
  // Eval-mode forward; never mutates the model, safe to share across threads.
  HeadProbs infer(const Tensor& x) const;
  Tensor features(const Tensor& x, Mode mode);
  Tensor features_eval(const Tensor& x) const;

  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }
  BatchNorm& bn() { return bn_; }
  const BatchNorm& bn() const { return bn_; }
  Tensor& head1() { return head1_; }
  Tensor& head2() { return head2_; }
  const Tensor& head1() const { return head1_; }
  const Tensor& head2() const { return head2_; }

  // Layer weights/biases then bn gamma/beta.
  std::vector<Tensor> feature_parameters() const;
  std::vector<Tensor> head_parameters() const { return {head1_, head2_}; }
  std::vector<Tensor> parameters() const;

  // Deep copy: the clone shares no storage with this model.
  TwoHeadModel clone() const;

 private:
  Tensor trunk(const Tensor& x) const;
  Tensor normalize_train(const Tensor& z);
  Tensor normalize_eval(const Tensor& z) const;
  HeadProbs heads(const Tensor& z) const;

  Architecture arch_;
  std::vector<Linear> layers_;  // hidden layers then bottleneck
  BatchNorm bn_;
  Tensor head1_;
  Tensor head2_;
};

// m×n matrix whose rows all equal the 1×n `row` (differentiable w.r.t. row).
Tensor broadcast_rows(const Tensor& row, std::size_t m);
// Rows of `m` picked by `indices`, in order (differentiable w.r.t. m).
Tensor select_rows(const Tensor& m, std::span<const std::size_t> indices);

}  // namespace openadapt
