// l1ae: dataset generation, training, sweep evaluation and export.
//
// Exit codes: 0 success, 1 usage or config error, 2 numerical failure, 3 I/O error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifdef L1AE_CLI11_SPLIT
#include <CLI/CLI.hpp>
#else
#include "CLI11.hpp"
#endif

#include "l1ae/config.hpp"
#include "l1ae/io.hpp"
#include "l1ae/trainer.hpp"

namespace fs = std::filesystem;
using namespace l1ae;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string profile = "paper";
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string m_list;
  std::string kinds_list;
};

void add_common(CLI::App* app, CommonOptions& o, bool sweep_filters) {
  app->add_option("--config", o.config_path, "JSON experiment config (overlays the profile)");
  app->add_option("--profile", o.profile, "Built-in defaults")->check(CLI::IsMember({"paper", "ci"}));
  app->add_option("--seed", o.seed, "Global seed, overrides the config");
  app->add_option("--out", o.out_dir, "Output directory");
  if (sweep_filters) {
    app->add_option("--m", o.m_list, "Comma-separated measurement counts, e.g. 20,25");
    app->add_option("--kinds", o.kinds_list, "Comma-separated kinds: learned,gaussian,bernoulli,...");
  }
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig cfg = o.config_path.empty() ? profile_config(o.profile) : load_config(o.config_path, o.profile);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
  if (!o.m_list.empty()) cfg.m_values = parse_m_list(o.m_list);
  if (!o.kinds_list.empty()) cfg.kinds = parse_kind_list(o.kinds_list);
  cfg.validate();
  return cfg;
}

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  return dir;
}

fs::path dataset_path(const ExperimentConfig& cfg, const std::string& flag) {
  return flag.empty() ? fs::path(cfg.output_dir) / "dataset.bcsl" : fs::path(flag);
}

fs::path checkpoint_path(const fs::path& dir, std::size_t m) { return dir / ("l1ae_m" + std::to_string(m) + ".bcsw"); }

ChannelDataset load_matching_dataset(const fs::path& path, const ExperimentConfig& cfg) {
  LoadedDataset loaded = load_dataset(path.string());
  if (loaded.data.dimension() != cfg.input_dim()) {
    throw ConfigError("dataset " + path.string() + " has vectors of length " + std::to_string(loaded.data.dimension()) +
                      " but the config expects " + std::to_string(cfg.input_dim()));
  }
  return std::move(loaded.data);
}

int cmd_gen_data(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  const fs::path out = ensure_dir(cfg.output_dir) / "dataset.bcsl";
  const ChannelDataset data = generate_dataset(cfg.channel_config(), cfg.num_samples, cfg.split, cfg.floor, cfg.zero_tol);
  save_dataset(out.string(), data, to_json(cfg).dump());
  std::printf("wrote %s: n=%zu N=%zu P=%zu split=%zu/%zu/%zu\n", out.c_str(), data.size(), data.config.num_antennas,
              data.config.num_paths, data.n_train, data.n_dev, data.n_test);
  return 0;
}

int cmd_train(const CommonOptions& o, const std::string& dataset_flag, bool quiet) {
  const ExperimentConfig cfg = resolve(o);
  const ChannelDataset data = load_matching_dataset(dataset_path(cfg, dataset_flag), cfg);
  const fs::path dir = ensure_dir(fs::path(cfg.output_dir) / "checkpoints");
  const std::string echo = to_json(cfg).dump();
  const TrainConfig tc = cfg.train_config();
  for (std::size_t m : cfg.m_values) {
    auto log = [&](const EpochRecord& r) {
      if (quiet || (r.epoch % 50 != 0 && r.epoch != tc.max_epochs)) return;
      std::fprintf(stderr, "m=%zu epoch %zu train %.6g dev %.6g (%.2fs)\n", m, r.epoch, r.train_loss, r.dev_loss,
                   r.seconds);
    };
    auto [model, report] = train(data, m, tc, log);
    save_checkpoint(checkpoint_path(dir, m).string(), model, cfg.seed, echo);
    save_matrix((dir / ("learned_m" + std::to_string(m) + ".bcsm")).string(), extract_matrix(model, cfg.seed), echo);
    write_training_csv((fs::path(cfg.output_dir) / ("train_m" + std::to_string(m) + ".csv")).string(), report);
    std::printf("m=%zu: best epoch %zu, dev loss %.6g (initial %.6g), alpha %.6g, %.1fs\n", m, report.best_epoch,
                report.best_dev_loss, report.initial_dev_loss, model.alpha, report.total_seconds);
  }
  return 0;
}

int cmd_sweep(const CommonOptions& o, const std::string& dataset_flag, const std::string& checkpoint_dir) {
  const ExperimentConfig cfg = resolve(o);
  const ChannelDataset data = load_matching_dataset(dataset_path(cfg, dataset_flag), cfg);
  const fs::path ckpt = checkpoint_dir.empty() ? fs::path(cfg.output_dir) / "checkpoints" : fs::path(checkpoint_dir);

  SweepPlan plan;
  plan.m_values = cfg.m_values;
  plan.kinds = cfg.kinds;
  plan.seeds = cfg.baseline_seeds;
  plan.phase_shifter_q = cfg.phase_shifter_q;
  if (std::find(cfg.kinds.begin(), cfg.kinds.end(), MatrixKind::Learned) != cfg.kinds.end()) {
    for (std::size_t m : cfg.m_values) {
      const fs::path p = checkpoint_path(ckpt, m);
      if (!fs::exists(p)) continue; // reported as a gap by the sweep
      const LoadedCheckpoint c = load_checkpoint(p.string());
      plan.learned[m].push_back(extract_matrix(c.model, c.seed));
    }
  }

  const RowMatrix test = data.test();
  const SweepReport report = run_sweep(test, plan, cfg.recovery, cfg.metrics);
  const fs::path out = ensure_dir(cfg.output_dir);
  write_sweep_csv((out / "sweep.csv").string(), report);
  write_json((out / "sweep.json").string(), sweep_json(report, to_json(cfg)));
  for (auto metric : {FigureMetric::ExactRecovery, FigureMetric::Nrse, FigureMetric::EffectiveRate})
    write_figure_csv((out / ("figure_" + std::string(to_string(metric)) + ".csv")).string(), report, metric);

  std::printf("%-16s %4s %9s %9s %9s %8s\n", "kind", "m", "p", "nrse", "R_e", "seconds");
  int exit_code = 0;
  for (const auto& r : report.rows) {
    if (r.errored) {
      std::printf("%-16s %4zu  error: %s\n", std::string(to_string(r.kind)).c_str(), r.m, r.diagnostic.c_str());
      if (exit_code == 0) exit_code = static_cast<int>(r.error);
      continue;
    }
    std::printf("%-16s %4zu %9.4f %9.4g %9.4f %8.1f%s%s\n", std::string(to_string(r.kind)).c_str(), r.m, r.p, r.nrse,
                r.effective_rate, r.seconds, r.diagnostic.empty() ? "" : "  ", r.diagnostic.c_str());
  }
  for (const auto& v : report.monotonicity_violations) std::printf("monotonicity: %s\n", v.c_str());
  return exit_code;
}

int cmd_export(const std::string& input, const std::string& format, std::string output) {
  const std::string magic = peek_magic(input);
  if (output.empty()) output = fs::path(input).replace_extension(format).string();
  if (magic == kDatasetMagic) {
    const LoadedDataset d = load_dataset(input);
    if (format == "csv") write_dataset_csv(output, d.data);
    else write_json(output, dataset_json(d.data, d.config_echo));
  } else if (magic == kMatrixMagic) {
    const LoadedMatrix m = load_matrix(input);
    if (format == "csv") write_matrix_csv(output, m.matrix.data);
    else write_json(output, matrix_json(m.matrix, m.config_echo));
  } else if (magic == kCheckpointMagic) {
    const LoadedCheckpoint c = load_checkpoint(input);
    if (format == "csv") write_matrix_csv(output, c.model.phi);
    else write_json(output, checkpoint_json(c.model, c.seed, c.config_echo));
  } else {
    throw IoError(input + ": unrecognised magic '" + magic + "'");
  }
  std::printf("wrote %s\n", output.c_str());
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned measurement matrices for sparse beamspace channels"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, sweep_opts, export_opts;
  std::string train_dataset, sweep_dataset, sweep_ckpt, export_input, export_format = "csv", export_output;
  bool quiet = false;

  auto* gen = app.add_subcommand("gen-data", "Generate and split a channel dataset (BCSL)");
  add_common(gen, gen_opts, false);

  auto* tr = app.add_subcommand("train", "Train one model per m and write BCSW checkpoints");
  add_common(tr, train_opts, true);
  tr->add_option("--dataset", train_dataset, "Dataset file (default OUT/dataset.bcsl)");
  tr->add_flag("--quiet", quiet, "No per-epoch progress");

  auto* sw = app.add_subcommand("sweep", "Evaluate learned and baseline matrices on the test split");
  add_common(sw, sweep_opts, true);
  sw->add_option("--dataset", sweep_dataset, "Dataset file (default OUT/dataset.bcsl)");
  sw->add_option("--checkpoints", sweep_ckpt, "Checkpoint directory (default OUT/checkpoints)");

  auto* ex = app.add_subcommand("export", "Convert a BCSL/BCSM/BCSW file to CSV or JSON");
  ex->add_option("input", export_input, "Binary file")->required();
  ex->add_option("--format", export_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  ex->add_option("--out", export_output, "Output file (default: input with the format's extension)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_opts);
    if (tr->parsed()) return cmd_train(train_opts, train_dataset, quiet);
    if (sw->parsed()) return cmd_sweep(sweep_opts, sweep_dataset, sweep_ckpt);
    if (ex->parsed()) return cmd_export(export_input, export_format, export_output);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
