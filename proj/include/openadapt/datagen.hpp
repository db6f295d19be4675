#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "openadapt/rng.hpp"
#include "openadapt/tensor.hpp"

namespace openadapt {

enum class Domain { source, target };
enum class Scenario { osda, opda, pda, closed };

std::string_view domain_name(Domain d);
Domain parse_domain(std::string_view name);
std::string_view scenario_name(Scenario s);
Scenario parse_scenario(std::string_view name);

// Class counts. Global class ids: shared first, then source-private, then
// target-private.
struct SplitSpec {
  std::size_t shared = 4;
  std::size_t src_private = 0;
  std::size_t tgt_private = 3;

  void validate() const;
  Scenario scenario() const;
  std::size_t total() const { return shared + src_private + tgt_private; }
  std::vector<int> source_labels() const;
  std::vector<int> target_labels() const;
};

// Default class split for each scenario.
SplitSpec default_split(Scenario s);

// Target domain = affine image of the source domain: rotation in the plane of
// the first two coordinates, per-axis scale, then translation.
struct ShiftSpec {
  double rotation = std::numbers::pi / 8.0;
  std::vector<double> translation{0.5, 0.5};  // zero-padded to dims
  std::vector<double> scale;                  // empty or dims entries; empty = unit
  double noise_sigma = 0.35;
  double class_sep = 2.0;
  std::size_t dims = 8;
  std::size_t per_class_n = 100;

  void validate() const;
  // Applies the shift to one dims-long point in place.
  void apply(std::span<double> point) const;
};

struct DatasetBundle {
  Tensor x;                  // N × D
  std::vector<int> y;        // global class ids; evaluation only for targets
  std::vector<int> label_set;
  Domain domain = Domain::source;

  std::size_t size() const { return y.size(); }
  std::size_t dims() const { return x.cols(); }
  // What adaptation code is allowed to see.
  const Tensor& unlabeled() const { return x; }
  void validate() const;
};

bool bitwise_equal(const DatasetBundle& a, const DatasetBundle& b);

// Source classes sit evenly spaced on a radius-class_sep circle in the first
// two coordinates; the seed picks the ring phase. Target-private class i sits
// at class_sep along coordinate 2 + i, the same distance from the origin and
// equidistant from every source prototype. Requires dims >= 2 + tgt_private.
std::vector<std::vector<double>> class_prototypes(const SplitSpec& split, const ShiftSpec& shift,
                                                  std::uint64_t seed);

std::pair<DatasetBundle, DatasetBundle> generate(const SplitSpec& split, const ShiftSpec& shift,
                                                 std::uint64_t seed);

// Text format:
//   openadapt-dataset v1 dims=<D> n=<N> domain=<source|target> labels=<id>,<id>,...
//   <x_0>,...,<x_{D-1}>,<label>          (N rows)
std::string format_dataset(const DatasetBundle& bundle);
DatasetBundle parse_dataset(std::string_view text);
void save_dataset(const DatasetBundle& bundle, const std::string& path);
DatasetBundle load_dataset(const std::string& path);

struct Batch {
  Tensor x;
  std::vector<std::size_t> indices;  // rows of the bundle
};

// Cycles through per-class shuffled index lists; per-class counts in a batch
// differ by at most one, and the classes receiving the extra sample rotate.
class ClassBalancedSampler {
 public:
  ClassBalancedSampler(const DatasetBundle& bundle, std::size_t batch_size, std::uint64_t seed);
  Batch next();

 private:
  const DatasetBundle* bundle_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::vector<std::size_t>> per_class_;
  std::vector<std::size_t> cursor_;
  std::size_t rotation_ = 0;
};

// Uniform batches without replacement within an epoch (reshuffled each epoch).
class UniformSampler {
 public:
  UniformSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();
  std::size_t epoch_length() const;

 private:
  std::size_t n_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

}  // namespace openadapt
