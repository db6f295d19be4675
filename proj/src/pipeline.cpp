#include "openadapt/pipeline.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "openadapt/rng.hpp"
#include "openadapt/text_io.hpp"

namespace openadapt {

std::pair<DatasetBundle, DatasetBundle> make_data(const RunConfig& cfg, std::uint64_t seed) {
  return generate(cfg.split, cfg.shift, derive_seed(seed, "data"));
}

SourceStage run_source_stage(const RunConfig& cfg, const DatasetBundle& source, std::uint64_t seed) {
  Architecture arch = cfg.architecture();
  if (source.dims() != arch.input_dim) {
    throw std::invalid_argument("source data has " + std::to_string(source.dims()) +
                                " dims, config expects " + std::to_string(arch.input_dim));
  }
  arch.classes = source.label_set.size();
  const InitSeeds init{derive_seed(seed, "init-features"), derive_seed(seed, "init-head1"),
                       derive_seed(seed, "init-head2")};
  SourceStage out{Checkpoint{TwoHeadModel(arch, init), cfg.loss, source.label_set, {}, {}, "source"},
                  {}};
  OptimConfig optim = cfg.source_optim;
  optim.seed = seed;
  out.log = train_source(out.checkpoint.model, source, cfg.loss, optim);
  out.log.header.insert(out.log.header.begin(), "config=" + cfg.fingerprint());
  out.log.header.insert(out.log.header.begin() + 1, "seed=" + std::to_string(seed));
  return out;
}

BandChoice choose_band(const RunConfig& cfg, const TwoHeadModel& model, const Tensor& target_x,
                       std::uint64_t seed) {
  BandChoice out;
  if (!cfg.rejection_enabled()) {
    out.band = {0.0, 0.0};
    return out;
  }
  if (cfg.fixed_w0) {
    out.band.w0 = *cfg.fixed_w0;
  } else {
    const std::size_t pairs = cfg.mixup_pairs ? cfg.mixup_pairs : target_x.rows();
    out.band.w0 = estimate_threshold(model, target_x, pairs, derive_seed(seed, "mixup"), cfg.score);
    out.estimated = true;
  }
  out.band.rho = cfg.fixed_rho ? *cfg.fixed_rho
                               : slack_from_threshold(std::abs(out.band.w0), cfg.rho_ratio);
  return out;
}

AdaptStage run_adapt_stage(const RunConfig& cfg, const Checkpoint& source, const Tensor& target_x,
                           std::uint64_t seed) {
  Checkpoint adapted = source;
  adapted.model = source.model.clone();
  adapted.stage = "adapted";
  AdaptStage out{std::move(adapted), {}, {}, {}};
  out.band = choose_band(cfg, source.model, target_x, seed);

  OptimConfig optim = cfg.adapt_optim;
  optim.seed = seed;
  AdaptOptions options;
  options.score = cfg.score;
  options.reestimate_every = cfg.reestimate_every;
  options.slack_ratio = cfg.rho_ratio;
  out.log = adapt_target(out.checkpoint.model, target_x, out.band.band, cfg.loss, optim, options);

  std::vector<std::string> header{"config=" + cfg.fingerprint(), "seed=" + std::to_string(seed),
                                  std::string("rejection=") +
                                      (cfg.rejection_enabled() ? "enabled" : "disabled"),
                                  std::string("w0_source=") +
                                      (out.band.estimated ? "mixup" : "fixed")};
  out.log.header.insert(out.log.header.begin(), header.begin(), header.end());

  out.checkpoint.w0 = out.band.band.w0;
  out.checkpoint.rho = out.band.band.rho;

  const auto scores = score_rows(out.checkpoint.model.infer(target_x), cfg.score);
  out.score_dump = format_score_dump(scores, partition(scores, out.band.band));
  return out;
}

AdaptationReport run_eval_stage(const RunConfig& cfg, const Checkpoint& checkpoint,
                                const DatasetBundle& target, std::uint64_t seed,
                                std::optional<double> w0) {
  double threshold = 0.0;
  if (w0) {
    threshold = *w0;
  } else if (checkpoint.w0) {
    threshold = *checkpoint.w0;
  } else {
    threshold = choose_band(cfg, checkpoint.model, target.x, seed).band.w0;
  }
  AdaptationReport report =
      evaluate(checkpoint.model, target, threshold, checkpoint.class_ids, cfg.hist_bins, cfg.score);
  report.config_fingerprint = cfg.fingerprint();
  return report;
}

SeedResult run_seed(const RunConfig& cfg, std::uint64_t seed) {
  const auto [source, target] = make_data(cfg, seed);
  const SourceStage src = run_source_stage(cfg, source, seed);
  const AdaptStage adapted = run_adapt_stage(cfg, src.checkpoint, target.x, seed);
  SeedResult out;
  out.seed = seed;
  out.w0 = adapted.band.band.w0;
  out.before = run_eval_stage(cfg, src.checkpoint, target, seed, out.w0);
  out.after = run_eval_stage(cfg, adapted.checkpoint, target, seed, out.w0);
  return out;
}

// ---------------------------------------------------------------- sweeps

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "unknown_classes") return SweepAxis::unknown_classes;
  if (name == "rho_ratio") return SweepAxis::rho_ratio;
  if (name == "T") return SweepAxis::T;
  if (name == "score_kind") return SweepAxis::score_kind;
  throw ConfigError("unknown sweep axis '" + std::string(name) +
                    "' (expected unknown_classes, rho_ratio, T or score_kind)");
}

std::string_view sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::unknown_classes: return "unknown_classes";
    case SweepAxis::rho_ratio: return "rho_ratio";
    case SweepAxis::T: return "T";
    case SweepAxis::score_kind: return "score_kind";
  }
  return "";
}

RunConfig apply_sweep_value(const RunConfig& base, SweepAxis axis, std::string_view value) {
  ConfigMap m = parse_config_text(base.canonical());
  m["out"] = base.out_dir;
  switch (axis) {
    case SweepAxis::unknown_classes: m["tgt_private"] = std::string(value); break;
    case SweepAxis::rho_ratio: m["rho_ratio"] = std::string(value); break;
    case SweepAxis::T: m["T"] = std::string(value); break;
    case SweepAxis::score_kind: m["score"] = std::string(value); break;
  }
  return config_from_map(m);
}

std::vector<SweepRow> run_sweep(const RunConfig& base, SweepAxis axis,
                                const std::vector<std::string>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<RunConfig> configs;
  for (const std::string& v : values) configs.push_back(apply_sweep_value(base, axis, v));

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    SweepRow row{values[i], 0.0, {}};
    for (std::uint64_t seed : configs[i].seeds) {
      const SeedResult r = run_seed(configs[i], seed);
      // pda/closed reports carry no hos; fall back to known accuracy.
      row.hos.push_back(r.after.hos ? *r.after.hos : r.after.acc_kn.value_or(0.0));
    }
    double sum = 0.0;
    for (double h : row.hos) sum += h;
    row.mean_hos = sum / static_cast<double>(row.hos.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_sweep(const std::vector<SweepRow>& rows, const std::vector<std::uint64_t>& seeds) {
  std::ostringstream os;
  os << "value,mean_hos";
  for (std::uint64_t s : seeds) os << ",hos_s" << s;
  os << '\n';
  for (const SweepRow& r : rows) {
    os << r.value << ',' << format_double(r.mean_hos);
    for (double h : r.hos) os << ',' << format_double(h);
    os << '\n';
  }
  return os.str();
}

std::vector<std::string> default_sweep_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::unknown_classes: return {"1", "2", "3", "4", "5"};
    case SweepAxis::rho_ratio: {
      std::vector<std::string> out;
      for (double r : kSlackRatioGrid) out.push_back(format_double(r));
      return out;
    }
    case SweepAxis::T: {
      std::vector<std::string> out;
      for (int i = 0; i <= 10; ++i) out.push_back(format_double(i / 10.0));
      return out;
    }
    case SweepAxis::score_kind:
      return {"inner_product", "l2_distance", "cosine_distance", "mean_entropy"};
  }
  return {};
}

}  // namespace openadapt
