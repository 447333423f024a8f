// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdio>
#include <map>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "modalbridge/checkpoint.hpp"
#include "modalbridge/cli.hpp"
#include "modalbridge/data.hpp"
#include "modalbridge/digest.hpp"

namespace modalbridge::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Usage and configuration problems; reported before any work starts.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void refuse_existing(const fs::path& path, bool force) {
  if (fs::exists(path) && !force) {
    throw UsageError("refusing to overwrite existing " + path.string() + " (pass --force)");
  }
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw UsageError("cannot create output directory " + dir.string() +
                     (ec ? ": " + ec.message() : ""));
  }
}

bool same_generator(const GeneratorConfig& a, const GeneratorConfig& b) {
  return a.seed == b.seed && a.num_source_classes == b.num_source_classes &&
         a.num_target_classes == b.num_target_classes && a.counts.source == b.counts.source &&
         a.counts.unlabeled == b.counts.unlabeled && a.counts.labeled == b.counts.labeled &&
         a.counts.eval == b.counts.eval && a.min_frames == b.min_frames &&
         a.max_frames == b.max_frames && a.canvas == b.canvas && a.joints == b.joints &&
         a.clip_len == b.clip_len;
}

// Loads the dataset for a run, generating it when asked. A dataset on disk
// must have been produced from the same `data` section.
DatasetSplit prepare_dataset(const TransferConfig& config, const fs::path& dir, bool generate_it,
                             bool force) {
  const bool present = fs::exists(dir / "manifest.json");
  if (present) {
    DatasetSplit split = load_dataset(dir);
    if (same_generator(split.config, config.data)) return split;
    if (!generate_it || !force) {
      throw UsageError("dataset at " + dir.string() +
                       " was generated from a different data section" +
                       (generate_it ? " (pass --force to regenerate)" : ""));
    }
  } else if (!generate_it) {
    throw UsageError("no dataset at " + dir.string() + " (pass --generate or --data)");
  }
  ensure_directory(dir);
  DatasetSplit split = generate(config.data);
  save_dataset(split, dir);
  return split;
}

ordered_json file_entry(const fs::path& root, const fs::path& relative) {
  return {{"path", relative.generic_string()}, {"sha256", file_sha256(root / relative)}};
}

void write_text(const fs::path& root, const fs::path& relative, const std::string& text) {
  fs::create_directories((root / relative).parent_path());
  write_file(root / relative, text);
}

std::vector<MetricsRecord> all_records(const GridResult& grid) {
  std::vector<MetricsRecord> out;
  for (const auto& s : grid.seeds) out.insert(out.end(), s.records.begin(), s.records.end());
  return out;
}

ordered_json config_json(const TransferConfig& config) {
  ordered_json j = ordered_json::object();
  const KeyValues kv = config_to_key_values(config);
  for (const auto& key : config_keys()) j[key] = kv.at(key);
  return j;
}

std::vector<fs::path> write_plots(const fs::path& root, const GridResult& grid) {
  std::vector<fs::path> written;
  for (const auto& s : grid.seeds) {
    std::map<std::string, Series> loss;
    std::map<std::string, Series> accuracy;
    for (const auto& r : s.records) {
      if (r.phase.rfind("eval", 0) == 0) continue;
      auto& ls = loss[r.phase];
      ls.name = r.phase;
      ls.points.emplace_back(static_cast<double>(r.epoch), r.loss);
      if (r.accuracy) {
        auto& as = accuracy[r.phase];
        as.name = r.phase;
        as.points.emplace_back(static_cast<double>(r.epoch), *r.accuracy);
      }
    }
    auto values = [](const std::map<std::string, Series>& m) {
      std::vector<Series> v;
      for (const auto& [_, s] : m) v.push_back(s);
      return v;
    };
    const fs::path loss_path = fs::path("plots") / fmt::format("seed{}_loss.svg", s.seed);
    write_text(root, loss_path,
               line_chart_svg(fmt::format("seed {} loss", s.seed), "epoch", "loss", values(loss)));
    written.push_back(loss_path);
    const fs::path acc_path = fs::path("plots") / fmt::format("seed{}_accuracy.svg", s.seed);
    write_text(root, acc_path,
               line_chart_svg(fmt::format("seed {} training accuracy", s.seed), "epoch",
                              "accuracy", values(accuracy)));
    written.push_back(acc_path);
  }
  return written;
}

struct RunArtifacts {
  ordered_json checkpoints = ordered_json::array();
  ordered_json metrics = ordered_json::array();
  ordered_json plots = ordered_json::array();
  ordered_json files = ordered_json::array();
};

ordered_json summary_json(const TransferConfig& config, const GridResult& grid,
                          const std::string& status,
                          const std::vector<std::pair<std::uint64_t, std::string>>& failures,
                          const std::string& dataset_digest, const ordered_json& checkpoints) {
  ordered_json j;
  j["status"] = status;
  j["mean"] = grid.mean;
  j["variance"] = grid.variance;
  ordered_json finals = ordered_json::array();
  for (const auto& s : grid.seeds) {
    finals.push_back({{"seed", s.seed}, {"accuracy", s.final_accuracy}});
  }
  j["finals"] = finals;
  ordered_json failed = ordered_json::array();
  for (const auto& [seed, message] : failures) failed.push_back({{"seed", seed}, {"error", message}});
  j["failures"] = failed;
  j["config"] = config_json(config);
  j["dataset_digest"] = dataset_digest;
  j["checkpoints"] = checkpoints;
  return j;
}

// Writes metrics, plots, summary and (optionally) checkpoints for one grid
// into `root`, returning the manifest sections.
RunArtifacts write_grid_outputs(const fs::path& root, const TransferConfig& config,
                                const GridResult& grid, const std::string& status,
                                const std::vector<std::pair<std::uint64_t, std::string>>& failures,
                                const std::string& dataset_digest, bool with_checkpoints) {
  RunArtifacts a;
  write_text(root, "config.cfg", config_echo(config));
  a.files.push_back(file_entry(root, "config.cfg"));

  if (with_checkpoints) {
    std::error_code ec;
    fs::remove_all(root / "checkpoints", ec);
    for (const auto& s : grid.seeds) {
      for (const auto& [name, ckpt] : s.checkpoints) {
        const fs::path rel = fs::path("checkpoints") / fmt::format("seed{}", s.seed) / (name + ".ckpt");
        fs::create_directories((root / rel).parent_path());
        save_checkpoint(root / rel, ckpt);
        ordered_json entry = file_entry(root, rel);
        entry["seed"] = s.seed;
        entry["phase"] = name;
        a.checkpoints.push_back(entry);
      }
    }
  }

  write_text(root, "metrics.csv", metrics_csv(all_records(grid)));
  a.metrics.push_back(file_entry(root, "metrics.csv"));

  {
    std::error_code ec;
    fs::remove_all(root / "plots", ec);
  }
  for (const auto& p : write_plots(root, grid)) a.plots.push_back(file_entry(root, p));

  const ordered_json summary =
      summary_json(config, grid, status, failures, dataset_digest, a.checkpoints);
  write_text(root, "summary.json", summary.dump(2) + "\n");
  a.metrics.push_back(file_entry(root, "summary.json"));
  return a;
}

void write_manifest(const fs::path& root, const std::string& command, const std::string& status,
                    const TransferConfig& config, const std::string& dataset_digest,
                    const RunArtifacts& a) {
  ordered_json m;
  m["command"] = command;
  m["status"] = status;
  m["code_version"] = code_version();
  m["config"] = config_echo(config);
  m["dataset_digest"] = dataset_digest;
  m["checkpoints"] = a.checkpoints;
  m["metrics"] = a.metrics;
  m["plots"] = a.plots;
  m["files"] = a.files;
  write_text(root, "manifest.json", m.dump(2) + "\n");
}

struct GridOutcome {
  GridResult grid;
  std::vector<std::pair<std::uint64_t, std::string>> failures;
};

GridOutcome run_grid_keep_partial(const TransferConfig& config, const DatasetSplit& split,
                                  std::size_t jobs) {
  GridOutcome out;
  try {
    out.grid = run_experiment_grid(config, split, jobs);
  } catch (const GridError& e) {
    out.grid = e.partial;
    out.failures = e.failures;
  }
  return out;
}

template <typename Fn>
int guarded(const char* command, Fn&& fn) {
  try {
    return fn();
  } catch (const UsageError& e) {
    fmt::print(stderr, "{}: error: {}\n", command, e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    fmt::print(stderr, "{}: config error: {}\n", command, e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(stderr, "{}: failed: {}\n", command, e.what());
    return kExitFailed;
  }
}

TransferConfig apply_overrides(TransferConfig config, const Options& options, bool seed_is_data) {
  KeyValues kv = config_to_key_values(config);
  if (options.seed) kv[seed_is_data ? "data.seed" : "run.seeds"] = std::to_string(*options.seed);
  if (options.baseline) kv["run.baseline"] = *options.baseline;
  return resolve_config(kv);
}

}  // namespace

TransferConfig effective_config(const Options& options) {
  if (options.config.empty()) throw UsageError("--config is required");
  return apply_overrides(load_config(options.config), options, false);
}

int cmd_generate(const Options& options) {
  return guarded("generate", [&] {
    if (options.config.empty()) throw UsageError("--config is required");
    if (options.out.empty()) throw UsageError("--out is required");
    const TransferConfig config = apply_overrides(load_config(options.config), options, true);
    refuse_existing(options.out / "manifest.json", options.force);
    ensure_directory(options.out);
    const DatasetSplit split = generate(config.data);
    save_dataset(split, options.out);
    fmt::print("dataset {} written to {}\n", dataset_digest(split), options.out.string());
    return kExitOk;
  });
}

int cmd_run(const Options& options) {
  return guarded("run", [&] {
    if (options.out.empty()) throw UsageError("--out is required");
    const TransferConfig config = effective_config(options);
    refuse_existing(options.out / "manifest.json", options.force);
    ensure_directory(options.out);
    const DatasetSplit split = prepare_dataset(config, options.data.value_or(options.out / "dataset"),
                                               options.generate, options.force);
    const std::string digest = dataset_digest(split);

    const GridOutcome outcome = run_grid_keep_partial(config, split, options.jobs);
    const std::string status = outcome.failures.empty() ? "completed" : "failed";
    const RunArtifacts artifacts = write_grid_outputs(options.out, config, outcome.grid, status,
                                                      outcome.failures, digest, true);
    write_manifest(options.out, "run", status, config, digest, artifacts);
    for (const auto& [seed, message] : outcome.failures) {
      fmt::print(stderr, "run: seed {} failed: {}\n", seed, message);
    }
    fmt::print("{}: mean {:.4f} variance {:.6f} over {} seed(s)\n", status, outcome.grid.mean,
               outcome.grid.variance, outcome.grid.seeds.size());
    return outcome.failures.empty() ? kExitOk : kExitFailed;
  });
}

int cmd_ablate(const Options& options) {
  return guarded("ablate", [&] {
    if (options.out.empty()) throw UsageError("--out is required");
    if (options.grid.empty()) throw UsageError("--grid is required");
    const TransferConfig base = effective_config(options);
    const auto axes = parse_grid_spec(read_file(options.grid));
    const auto cells = expand_grid(axes);
    std::vector<TransferConfig> configs;
    for (const auto& cell : cells) {
      try {
        configs.push_back(cell_config(base, cell));
      } catch (const std::exception& e) {
        std::string label;
        for (const auto& [axis, value] : cell) label += (label.empty() ? "" : ", ") + axis + "=" + value;
        throw ConfigError("grid cell {" + label + "}: " + e.what());
      }
    }
    refuse_existing(options.out / "manifest.json", options.force);
    ensure_directory(options.out);
    const DatasetSplit split = prepare_dataset(base, options.data.value_or(options.out / "dataset"),
                                               options.generate, options.force);
    const std::string digest = dataset_digest(split);

    RunArtifacts all;
    std::string table_csv = "cell";
    std::string header = "| cell |";
    std::string rule = "|---|";
    for (const auto& axis : axes) {
      table_csv += "," + axis.name;
      header += " " + axis.name + " |";
      rule += "---|";
    }
    table_csv += ",mean,variance,seeds,status\n";
    std::string table_md = header + " accuracy (%) mean ± variance |\n" + rule + "---|\n";
    bool any_failed = false;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const GridOutcome outcome = run_grid_keep_partial(configs[i], split, options.jobs);
      const std::string status = outcome.failures.empty() ? "completed" : "failed";
      any_failed = any_failed || !outcome.failures.empty();
      const fs::path cell_dir = fs::path("cells") / fmt::format("{:03d}", i);
      const RunArtifacts a = write_grid_outputs(options.out / cell_dir, configs[i], outcome.grid,
                                                status, outcome.failures, digest, false);
      for (const auto* section : {&a.metrics, &a.plots, &a.files}) {
        auto& target = section == &a.metrics ? all.metrics : section == &a.plots ? all.plots : all.files;
        for (auto entry : *section) {
          entry["path"] = (cell_dir / entry["path"].get<std::string>()).generic_string();
          target.push_back(entry);
        }
      }
      table_csv += fmt::format("{:03d}", i);
      table_md += fmt::format("| {:03d} |", i);
      for (const auto& [axis, value] : cells[i]) {
        table_csv += "," + value;
        table_md += " " + value + " |";
      }
      table_csv += fmt::format(",{},{},{},{}\n", outcome.grid.mean, outcome.grid.variance,
                               outcome.grid.seeds.size(), status);
      table_md += fmt::format(" {:.2f} ± {:.2f}{} |\n", 100.0 * outcome.grid.mean,
                              1e4 * outcome.grid.variance, status == "completed" ? "" : " (failed)");
      fmt::print("cell {:03d}/{:03d}: mean {:.4f}\n", i + 1, cells.size(), outcome.grid.mean);
    }
    write_text(options.out, "table.csv", table_csv);
    write_text(options.out, "table.md", table_md);
    write_text(options.out, "config.cfg", config_echo(base));
    all.metrics.push_back(file_entry(options.out, "table.csv"));
    all.metrics.push_back(file_entry(options.out, "table.md"));
    all.files.push_back(file_entry(options.out, "config.cfg"));
    const std::string status = any_failed ? "failed" : "completed";
    write_manifest(options.out, "ablate", status, base, digest, all);
    return any_failed ? kExitFailed : kExitOk;
  });
}

int cmd_eval(const Options& options) {
  return guarded("eval", [&] {
    if (options.checkpoint.empty()) throw UsageError("--checkpoint is required");
    if (!options.data) throw UsageError("--data is required");
    if (!options.out.empty()) refuse_existing(options.out, options.force);
    const Checkpoint ckpt = load_checkpoint(options.checkpoint);
    Classifier classifier;
    classifier.net = network_from_checkpoint(ckpt);
    const auto meta = [&](const std::string& key) {
      const auto it = ckpt.meta.find(key);
      if (it == ckpt.meta.end()) {
        throw UsageError("checkpoint has no '" + key + "' entry; pass a classifier checkpoint");
      }
      return it->second;
    };
    classifier.modality = parse_modality(meta("modality"));
    classifier.input_channels = std::stoull(meta("input_channels"));
    for (const auto& c : [&] {
           std::vector<std::string> parts;
           std::string text = meta("classes");
           std::size_t pos = 0;
           while (pos <= text.size()) {
             const std::size_t comma = std::min(text.find(',', pos), text.size());
             parts.push_back(text.substr(pos, comma - pos));
             pos = comma + 1;
           }
           return parts;
         }()) {
      classifier.classes.push_back(std::stoi(c));
    }
    const DatasetSplit split = load_dataset(*options.data);
    const auto clip = ckpt.meta.find("arch.clip_len");
    const std::size_t clip_len = clip != ckpt.meta.end() ? std::stoull(clip->second) : split.config.clip_len;
    const double accuracy = evaluate(classifier, split.target_eval, eval_mode_for(classifier.modality),
                                     clip_len, split.config.canvas);
    ordered_json j;
    j["accuracy"] = accuracy;
    j["videos"] = split.target_eval.size();
    j["modality"] = std::string(to_string(classifier.modality));
    j["checkpoint_sha256"] = file_sha256(options.checkpoint);
    j["dataset_digest"] = dataset_digest(split);
    const std::string text = j.dump(2) + "\n";
    if (!options.out.empty()) {
      if (options.out.has_parent_path()) fs::create_directories(options.out.parent_path());
      write_file(options.out, text);
    }
    fmt::print("{}", text);
    return kExitOk;
  });
}

int main(int argc, char** argv) {
  CLI::App app{"modalbridge: cross-modal feature-supervised transfer experiments"};
  app.require_subcommand(1);
  Options options;
  std::string config, out, data, grid, checkpoint;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", config, "experiment config file")->check(CLI::ExistingFile);
    auto* o = sub->add_option("--out", out, "output directory");
    if (needs_out) o->required();
    sub->add_option("--seed", seed, "override seed");
    sub->add_option("--jobs", options.jobs, "parallel seeds")->check(CLI::PositiveNumber);
    sub->add_flag("--force", options.force, "overwrite existing outputs");
  };
  auto* gen = app.add_subcommand("generate", "render the synthetic paired dataset");
  common(gen, true);
  gen->get_option("--config")->required();
  auto* run = app.add_subcommand("run", "run the full protocol over all configured seeds");
  common(run, true);
  run->get_option("--config")->required();
  run->add_option("--data", data, "dataset directory (default <out>/dataset)");
  run->add_option("--baseline", options.baseline, "from_scratch | modality_pretrain | feature_supervised");
  run->add_flag("--generate", options.generate, "generate the dataset if missing");
  auto* abl = app.add_subcommand("ablate", "run one grid per ablation cell and tabulate");
  common(abl, true);
  abl->get_option("--config")->required();
  abl->add_option("--grid", grid, "ablation axes file")->required()->check(CLI::ExistingFile);
  abl->add_option("--data", data, "dataset directory (default <out>/dataset)");
  abl->add_option("--baseline", options.baseline, "baseline for every cell");
  abl->add_flag("--generate", options.generate, "generate the dataset if missing");
  auto* ev = app.add_subcommand("eval", "evaluate a classifier checkpoint on the eval split");
  common(ev, false);
  ev->add_option("--checkpoint", checkpoint, "classifier checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data, "dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  options.config = config;
  options.out = out;
  if (!data.empty()) options.data = data;
  options.grid = grid;
  options.checkpoint = checkpoint;
  for (auto* sub : {gen, run, abl, ev}) {
    if (sub->parsed() && sub->count("--seed") > 0) options.seed = seed;
  }
  if (gen->parsed()) return cmd_generate(options);
  if (run->parsed()) return cmd_run(options);
  if (abl->parsed()) return cmd_ablate(options);
  return cmd_eval(options);
}

}  // namespace modalbridge::cli
