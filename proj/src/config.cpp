#include "openadapt/config.hpp"

#include <cstdio>
#include <sstream>

#include "openadapt/text_io.hpp"

namespace openadapt {

namespace {

const std::vector<std::string> kKeys = {
    "scenario",    "shared",        "src_private", "tgt_private",  "dims",
    "per_class_n", "noise_sigma",   "class_sep",   "rotation",     "translation",
    "scale",       "hidden",        "bottleneck",  "lambda",       "alpha",
    "T",           "source_lr0",    "source_iters", "adapt_lr0",   "adapt_iters",
    "momentum",    "weight_decay",  "batch_size",  "new_layer_lr_mult",
    "w0",          "rho",           "rho_ratio",   "score",        "mixup_pairs",
    "reestimate_every", "hist_bins", "seeds",      "out",
};

std::size_t to_count(const std::string& key, std::string_view v) {
  const long long n = parse_int(v);
  if (n < 0) throw ConfigError(key + ": expected a non-negative integer, got '" + std::string(v) + "'");
  return static_cast<std::size_t>(n);
}

std::vector<double> to_reals(std::string_view v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (std::string_view part : split(v, ',')) out.push_back(parse_double(trim(part)));
  return out;
}

std::string join_reals(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += format_double(xs[i]);
  }
  return out;
}

template <typename T>
std::string join_counts(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

std::optional<double> to_optional(std::string_view v) {
  if (trim(v) == "auto") return std::nullopt;
  return parse_double(trim(v));
}

void apply(RunConfig& c, const std::string& key, const std::string& raw) {
  const std::string_view v = trim(raw);
  if (key == "scenario") {
    c.scenario = parse_scenario(v);
    c.split = default_split(c.scenario);
  } else if (key == "shared") {
    c.split.shared = to_count(key, v);
  } else if (key == "src_private") {
    c.split.src_private = to_count(key, v);
  } else if (key == "tgt_private") {
    c.split.tgt_private = to_count(key, v);
  } else if (key == "dims") {
    c.shift.dims = to_count(key, v);
  } else if (key == "per_class_n") {
    c.shift.per_class_n = to_count(key, v);
  } else if (key == "noise_sigma") {
    c.shift.noise_sigma = parse_double(v);
  } else if (key == "class_sep") {
    c.shift.class_sep = parse_double(v);
  } else if (key == "rotation") {
    c.shift.rotation = parse_double(v);
  } else if (key == "translation") {
    c.shift.translation = to_reals(v);
  } else if (key == "scale") {
    c.shift.scale = to_reals(v);
  } else if (key == "hidden") {
    c.hidden.clear();
    if (!v.empty()) {
      for (std::string_view part : split(v, ',')) c.hidden.push_back(to_count(key, trim(part)));
    }
  } else if (key == "bottleneck") {
    c.bottleneck = to_count(key, v);
  } else if (key == "lambda") {
    c.loss.lambda = parse_double(v);
  } else if (key == "alpha") {
    c.loss.alpha = parse_double(v);
  } else if (key == "T") {
    c.loss.T = parse_double(v);
  } else if (key == "source_lr0") {
    c.source_optim.lr0 = parse_double(v);
  } else if (key == "source_iters") {
    c.source_optim.max_iters = to_count(key, v);
  } else if (key == "adapt_lr0") {
    c.adapt_optim.lr0 = parse_double(v);
  } else if (key == "adapt_iters") {
    c.adapt_optim.max_iters = to_count(key, v);
  } else if (key == "momentum") {
    c.source_optim.momentum = c.adapt_optim.momentum = parse_double(v);
  } else if (key == "weight_decay") {
    c.source_optim.weight_decay = c.adapt_optim.weight_decay = parse_double(v);
  } else if (key == "batch_size") {
    c.source_optim.batch_size = c.adapt_optim.batch_size = to_count(key, v);
  } else if (key == "new_layer_lr_mult") {
    c.source_optim.new_layer_lr_mult = c.adapt_optim.new_layer_lr_mult = parse_double(v);
  } else if (key == "w0") {
    c.fixed_w0 = to_optional(v);
  } else if (key == "rho") {
    c.fixed_rho = to_optional(v);
  } else if (key == "rho_ratio") {
    c.rho_ratio = parse_double(v);
  } else if (key == "score") {
    c.score = parse_score_kind(v);
  } else if (key == "mixup_pairs") {
    c.mixup_pairs = to_count(key, v);
  } else if (key == "reestimate_every") {
    c.reestimate_every = to_count(key, v);
  } else if (key == "hist_bins") {
    c.hist_bins = to_count(key, v);
  } else if (key == "seeds") {
    c.seeds.clear();
    for (std::string_view part : split(v, ',')) {
      const long long s = parse_int(trim(part));
      if (s < 0) throw ConfigError("seeds: negative seed");
      c.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  } else if (key == "out") {
    c.out_dir = std::string(v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace

const std::vector<std::string>& config_keys() { return kKeys; }

bool RunConfig::rejection_enabled() const {
  return scenario == Scenario::osda || scenario == Scenario::opda;
}

Architecture RunConfig::architecture() const {
  Architecture a;
  a.input_dim = shift.dims;
  a.hidden = hidden;
  a.bottleneck = bottleneck;
  a.classes = split.shared + split.src_private;
  return a;
}

void RunConfig::validate() const {
  try {
    split.validate();
    shift.validate();
    loss.validate();
    source_optim.validate();
    adapt_optim.validate();
    class_prototypes(split, shift, 0);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (split.scenario() != scenario) {
    throw ConfigError("split (" + std::to_string(split.shared) + "," +
                      std::to_string(split.src_private) + "," + std::to_string(split.tgt_private) +
                      ") is not a " + std::string(scenario_name(scenario)) + " split");
  }
  if (bottleneck == 0) throw ConfigError("bottleneck must be > 0");
  for (std::size_t w : hidden) {
    if (w == 0) throw ConfigError("hidden widths must be > 0");
  }
  if (source_optim.max_iters == 0) throw ConfigError("source_iters must be > 0");
  if (fixed_w0 && !std::isfinite(*fixed_w0)) throw ConfigError("w0 must be finite");
  if (fixed_rho && !(*fixed_rho >= 0.0)) throw ConfigError("rho must be >= 0");
  if (!(rho_ratio >= 0.0)) throw ConfigError("rho_ratio must be >= 0");
  if (hist_bins < 2) throw ConfigError("hist_bins must be >= 2");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  auto line = [&](const std::string& k, const std::string& v) { os << k << " = " << v << '\n'; };
  line("scenario", std::string(scenario_name(scenario)));
  line("shared", std::to_string(split.shared));
  line("src_private", std::to_string(split.src_private));
  line("tgt_private", std::to_string(split.tgt_private));
  line("dims", std::to_string(shift.dims));
  line("per_class_n", std::to_string(shift.per_class_n));
  line("noise_sigma", format_double(shift.noise_sigma));
  line("class_sep", format_double(shift.class_sep));
  line("rotation", format_double(shift.rotation));
  line("translation", join_reals(shift.translation));
  line("scale", join_reals(shift.scale));
  line("hidden", join_counts(hidden));
  line("bottleneck", std::to_string(bottleneck));
  line("lambda", format_double(loss.lambda));
  line("alpha", format_double(loss.alpha));
  line("T", format_double(loss.T));
  line("source_lr0", format_double(source_optim.lr0));
  line("source_iters", std::to_string(source_optim.max_iters));
  line("adapt_lr0", format_double(adapt_optim.lr0));
  line("adapt_iters", std::to_string(adapt_optim.max_iters));
  line("momentum", format_double(source_optim.momentum));
  line("weight_decay", format_double(source_optim.weight_decay));
  line("batch_size", std::to_string(source_optim.batch_size));
  line("new_layer_lr_mult", format_double(source_optim.new_layer_lr_mult));
  line("w0", fixed_w0 ? format_double(*fixed_w0) : "auto");
  line("rho", fixed_rho ? format_double(*fixed_rho) : "auto");
  line("rho_ratio", format_double(rho_ratio));
  line("score", std::string(score_kind_name(score)));
  line("mixup_pairs", std::to_string(mixup_pairs));
  line("reestimate_every", std::to_string(reestimate_every));
  line("hist_bins", std::to_string(hist_bins));
  line("seeds", join_counts(seeds));
  return os.str();
}

std::string RunConfig::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  std::size_t line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (!out.emplace(key, std::string(trim(line.substr(eq + 1)))).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    }
  }
  return out;
}

RunConfig config_from_map(const ConfigMap& values) {
  RunConfig c;
  try {
    if (const auto it = values.find("scenario"); it != values.end()) apply(c, it->first, it->second);
    for (const auto& [key, value] : values) {
      if (key != "scenario") apply(c, key, value);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (!c.rejection_enabled()) {
    c.fixed_w0 = 0.0;
    c.fixed_rho = 0.0;
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return config_from_map(parse_config_text(text));
}

}  // namespace openadapt
