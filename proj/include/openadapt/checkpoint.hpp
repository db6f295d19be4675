#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "openadapt/losses.hpp"
#include "openadapt/model.hpp"

namespace openadapt {

// Model plus the metadata needed to resume, adapt or evaluate it.
//
// Text container, one item per line, numbers in shortest round-trip form:
//
//   openadapt-checkpoint v1
//   stage source|adapted
//   architecture <input_dim> <bottleneck> <classes> hidden <n> <w1> ... <wn>
//   class_ids <id_0> ... <id_{K-1}>
//   loss <lambda> <alpha> <T>
//   bn <momentum> <eps>
//   band none | band <w0> <rho>
//   tensor <name> <rows> <cols>      followed by <rows> lines of <cols> values
//   ...
//   end
//
// Tensor order: layer.<i>.weight, layer.<i>.bias for every affine layer,
// bn.gamma, bn.beta, bn.running_mean, bn.running_var (1 × d), head.1, head.2.
struct Checkpoint {
  TwoHeadModel model;
  LossConfig loss;
  std::vector<int> class_ids;  // model output index -> global class id
  std::optional<double> w0;
  std::optional<double> rho;
  std::string stage = "source";
};

inline constexpr std::string_view kCheckpointMagic = "openadapt-checkpoint v1";

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a over the bit patterns of every parameter and running statistic.
std::uint64_t model_checksum(const TwoHeadModel& model);

}  // namespace openadapt
