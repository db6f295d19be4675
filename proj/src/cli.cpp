#include "openadapt/cli.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "openadapt/checkpoint.hpp"
#include "openadapt/config.hpp"
#include "openadapt/pipeline.hpp"
#include "openadapt/text_io.hpp"
#include "openadapt/train.hpp"

namespace openadapt {

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  std::optional<double> w0;
  std::optional<double> rho_ratio;
  std::string score;
  std::string scenario;
  std::optional<double> lambda;
  std::optional<double> T;
  std::vector<std::string> sets;  // raw key=value overrides
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key = value config file");
  cmd->add_option("--seed", f.seeds, "run seed (repeatable)");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_option("--w0", f.w0, "fixed threshold (skips mixup estimation)");
  cmd->add_option("--rho-ratio", f.rho_ratio, "slack as a fraction of w0");
  cmd->add_option("--score", f.score, "inner_product|l2_distance|cosine_distance|mean_entropy");
  cmd->add_option("--scenario", f.scenario, "osda|opda|pda|closed");
  cmd->add_option("--lambda", f.lambda, "orthogonality weight");
  cmd->add_option("--T", f.T, "flattening temperature");
  cmd->add_option("--set", f.sets, "any config key as key=value (repeatable)");
}

RunConfig resolve_config(const CommonFlags& f) {
  ConfigMap m;
  if (!f.config_path.empty()) m = parse_config_text(read_file(f.config_path));
  for (const std::string& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key(trim(std::string_view(kv).substr(0, eq)));
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("--set: unknown key '" + key + "'");
    }
    m[key] = std::string(trim(std::string_view(kv).substr(eq + 1)));
  }
  if (!f.scenario.empty()) {
    // A new scenario brings its own split unless the split is given too.
    if (m.count("scenario") && m["scenario"] != f.scenario) {
      m.erase("shared");
      m.erase("src_private");
      m.erase("tgt_private");
    }
    m["scenario"] = f.scenario;
  }
  if (!f.seeds.empty()) {
    std::string s;
    for (std::size_t i = 0; i < f.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(f.seeds[i]);
    m["seeds"] = s;
  }
  if (!f.out_dir.empty()) m["out"] = f.out_dir;
  if (f.w0) m["w0"] = format_double(*f.w0);
  if (f.rho_ratio) m["rho_ratio"] = format_double(*f.rho_ratio);
  if (!f.score.empty()) m["score"] = f.score;
  if (f.lambda) m["lambda"] = format_double(*f.lambda);
  if (f.T) m["T"] = format_double(*f.T);
  return config_from_map(m);
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

std::string seeded(const std::string& stem, std::uint64_t seed, const std::string& ext) {
  return stem + "_s" + std::to_string(seed) + ext;
}

// Explicit path if given, otherwise the file an earlier stage wrote for `seed`.
std::string input_path(const std::string& explicit_path, const RunConfig& cfg,
                       const std::string& stem, std::uint64_t seed, const std::string& ext) {
  return explicit_path.empty() ? out_path(cfg, seeded(stem, seed, ext)) : explicit_path;
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + cfg.out_dir + ": " + ec.message());
}

void require_file(const std::string& path, const char* what) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError(std::string(what) + " not found: " + path);
  }
}

std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : "n/a"; }

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Source-free open-set adaptation on synthetic shift benchmarks", "openadapt"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, adapt_f, eval_f, sweep_f;
  std::string train_source_path, adapt_ckpt, adapt_target, eval_ckpt, eval_target, eval_tag;
  std::string sweep_axis;
  std::vector<std::string> sweep_values;

  auto* gen = app.add_subcommand("gen", "write source and target datasets per seed");
  add_common(gen, gen_f);
  auto* train = app.add_subcommand("train-source", "train the two-head source model");
  add_common(train, train_f);
  train->add_option("--source", train_source_path, "labeled source dataset");
  auto* adapt = app.add_subcommand("adapt", "adapt a source checkpoint to unlabeled target data");
  add_common(adapt, adapt_f);
  adapt->add_option("--checkpoint", adapt_ckpt, "source checkpoint");
  adapt->add_option("--target", adapt_target, "target dataset (labels unused)");
  auto* eval = app.add_subcommand("eval", "score a checkpoint on labeled target data");
  add_common(eval, eval_f);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate");
  eval->add_option("--target", eval_target, "labeled target dataset");
  eval->add_option("--tag", eval_tag, "name inserted into the report file names");
  auto* sweep = app.add_subcommand("sweep", "full pipeline over values of one axis");
  add_common(sweep, sweep_f);
  sweep->add_option("--axis", sweep_axis, "unknown_classes|rho_ratio|T|score_kind")->required();
  sweep->add_option("--values", sweep_values, "axis values (default grid when omitted)")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "openadapt: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (gen->parsed()) {
      const RunConfig cfg = resolve_config(gen_f);
      ensure_out_dir(cfg);
      for (std::uint64_t seed : cfg.seeds) {
        const auto [source, target] = make_data(cfg, seed);
        save_dataset(source, out_path(cfg, seeded("source", seed, ".txt")));
        save_dataset(target, out_path(cfg, seeded("target", seed, ".txt")));
        out << "seed " << seed << ": " << source.size() << " source, " << target.size()
            << " target samples\n";
      }
    } else if (train->parsed()) {
      const RunConfig cfg = resolve_config(train_f);
      ensure_out_dir(cfg);
      for (std::uint64_t seed : cfg.seeds) {
        const std::string path = input_path(train_source_path, cfg, "source", seed, ".txt");
        require_file(path, "source dataset");
        const DatasetBundle source = load_dataset(path);
        const SourceStage stage = run_source_stage(cfg, source, seed);
        save_checkpoint(stage.checkpoint, out_path(cfg, seeded("source_model", seed, ".ckpt")));
        write_file(out_path(cfg, seeded("source_log", seed, ".csv")), stage.log.to_csv());
        out << "seed " << seed << ": final loss " << format_double(stage.log.records.back().loss)
            << '\n';
      }
    } else if (adapt->parsed()) {
      const RunConfig cfg = resolve_config(adapt_f);
      ensure_out_dir(cfg);
      for (std::uint64_t seed : cfg.seeds) {
        const std::string ckpt_path = input_path(adapt_ckpt, cfg, "source_model", seed, ".ckpt");
        const std::string target_path = input_path(adapt_target, cfg, "target", seed, ".txt");
        require_file(ckpt_path, "checkpoint");
        require_file(target_path, "target dataset");
        const Checkpoint source = load_checkpoint(ckpt_path);
        const DatasetBundle target = load_dataset(target_path);
        const AdaptStage stage = run_adapt_stage(cfg, source, target.x, seed);
        save_checkpoint(stage.checkpoint, out_path(cfg, seeded("adapted_model", seed, ".ckpt")));
        write_file(out_path(cfg, seeded("scores", seed, ".csv")), stage.score_dump);
        write_file(out_path(cfg, seeded("adapt_log", seed, ".csv")), stage.log.to_csv());
        out << "seed " << seed << ": w0 " << format_double(stage.band.band.w0) << ", rho "
            << format_double(stage.band.band.rho)
            << (stage.log.degenerate_band ? " (warning: an epoch had no updates)" : "") << '\n';
      }
    } else if (eval->parsed()) {
      const RunConfig cfg = resolve_config(eval_f);
      ensure_out_dir(cfg);
      const std::string tag = eval_tag.empty() ? "" : "_" + eval_tag;
      for (std::uint64_t seed : cfg.seeds) {
        const std::string ckpt_path = input_path(eval_ckpt, cfg, "adapted_model", seed, ".ckpt");
        const std::string target_path = input_path(eval_target, cfg, "target", seed, ".txt");
        require_file(ckpt_path, "checkpoint");
        require_file(target_path, "target dataset");
        const Checkpoint ckpt = load_checkpoint(ckpt_path);
        const DatasetBundle target = load_dataset(target_path);
        std::optional<double> w0 = eval_f.w0;
        if (!cfg.rejection_enabled()) w0 = 0.0;
        const AdaptationReport report = run_eval_stage(cfg, ckpt, target, seed, w0);
        write_file(out_path(cfg, seeded("report" + tag, seed, ".json")), report.to_json());
        write_file(out_path(cfg, seeded("hist_known" + tag, seed, ".csv")),
                   report.histogram.known_csv());
        write_file(out_path(cfg, seeded("hist_unknown" + tag, seed, ".csv")),
                   report.histogram.unknown_csv());
        out << "seed " << seed << ": acc_kn " << fmt_opt(report.acc_kn) << ", acc_ukn "
            << fmt_opt(report.acc_ukn) << ", hos " << fmt_opt(report.hos) << '\n';
      }
    } else if (sweep->parsed()) {
      const RunConfig cfg = resolve_config(sweep_f);
      ensure_out_dir(cfg);
      const SweepAxis axis = parse_sweep_axis(sweep_axis);
      const auto values = sweep_values.empty() ? default_sweep_values(axis) : sweep_values;
      const auto rows = run_sweep(cfg, axis, values);
      const std::string path = out_path(cfg, "sweep_" + std::string(sweep_axis_name(axis)) + ".csv");
      write_file(path, format_sweep(rows, cfg.seeds));
      for (const SweepRow& r : rows) out << r.value << ": mean hos " << format_double(r.mean_hos) << '\n';
    }
  } catch (const NonFiniteLoss& e) {
    err << "openadapt: " << e.what() << '\n';
    return kExitNonFinite;
  } catch (const std::exception& e) {
    err << "openadapt: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

}  // namespace openadapt
