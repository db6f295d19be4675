#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "openadapt/datagen.hpp"
#include "openadapt/losses.hpp"
#include "openadapt/model.hpp"
#include "openadapt/scoring.hpp"
#include "openadapt/train.hpp"

namespace openadapt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Everything that determines a run. Defaults: osda split, 600 source and
// 600 adaptation iterations.
struct RunConfig {
  Scenario scenario = Scenario::osda;
  SplitSpec split = default_split(Scenario::osda);
  ShiftSpec shift;
  std::vector<std::size_t> hidden{64};
  std::size_t bottleneck = 32;
  LossConfig loss;
  OptimConfig source_optim;
  OptimConfig adapt_optim;

  // Band overrides. Without fixed_w0 the threshold comes from mixup
  // estimation; without fixed_rho, rho = rho_ratio · w0.
  std::optional<double> fixed_w0;
  std::optional<double> fixed_rho;
  double rho_ratio = kDefaultSlackRatio;
  ScoreKind score = ScoreKind::inner_product;
  std::size_t mixup_pairs = 0;  // 0 = one pair per target sample
  std::size_t reestimate_every = 0;
  std::size_t hist_bins = 20;

  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "out";

  // pda and closed runs have no unknown classes: w0 = rho = 0.
  bool rejection_enabled() const;
  Architecture architecture() const;  // classes = number of source classes
  void validate() const;

  // One "key = value" line per field in a fixed order (out_dir excluded).
  // Parsing the canonical text gives back an equal config.
  std::string canonical() const;
  // 16 hex digits of a 64-bit FNV-1a hash over canonical().
  std::string fingerprint() const;
};

using ConfigMap = std::map<std::string, std::string>;

// "key = value" lines; '#' starts a comment. Unknown or repeated keys throw.
ConfigMap parse_config_text(std::string_view text);

// Builds a config from defaults plus `values`. "scenario" is applied first
// so that explicit split sizes override the scenario's default split.
RunConfig config_from_map(const ConfigMap& values);

RunConfig load_config(const std::string& path);

// Keys accepted in config files, in canonical order.
const std::vector<std::string>& config_keys();

}  // namespace openadapt
