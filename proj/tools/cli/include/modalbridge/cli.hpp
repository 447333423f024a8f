// SPDX-License-Identifier: Apache-2.0
//
// Command layer behind the `modalbridge` executable. Every command writes
// into a fresh output location and refuses to overwrite existing results
// unless `force` is set. Exit codes: 0 success, 1 run failure, 2 usage or
// configuration error.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "modalbridge/config.hpp"
#include "modalbridge/pipeline.hpp"

namespace modalbridge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitUsage = 2;

struct Options {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::filesystem::path> data;  // dataset directory; run defaults to <out>/dataset
  std::optional<std::uint64_t> seed;          // generate: data seed; run/ablate: single run seed
  std::size_t jobs = 1;
  bool force = false;
  std::optional<std::string> baseline;
  bool generate = false;
  std::filesystem::path grid;        // ablate
  std::filesystem::path checkpoint;  // eval
};

int cmd_generate(const Options& options);
int cmd_run(const Options& options);
int cmd_ablate(const Options& options);
int cmd_eval(const Options& options);

// Parses argv and dispatches; usage errors print to stderr.
int main(int argc, char** argv);

// --- artifacts ------------------------------------------------------------

std::string code_version();

// Config after applying command-line overrides, validated.
TransferConfig effective_config(const Options& options);

// phase,epoch,seed,loss,accuracy,ms with shortest round-trip floats.
std::string metrics_csv(const std::vector<MetricsRecord>& records);

struct MetricsRow {
  std::string phase;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  double loss = 0.0;
  std::optional<double> accuracy;
  double ms = 0.0;
};
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

// Standalone SVG line chart; one polyline per series.
struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series);

// Checks that every file referenced by <dir>/manifest.json exists and
// matches its recorded digest. Returns problems, empty when consistent.
std::vector<std::string> verify_manifest(const std::filesystem::path& dir);

// One ablation axis assignment, e.g. {"loss", "mse"}.
struct AblationAxis {
  std::string name;  // source_modality | loss | granularity | k
  std::vector<std::string> values;
};
std::vector<AblationAxis> parse_grid_spec(const std::string& text);
// Cartesian product in axis order, last axis fastest.
std::vector<std::vector<std::pair<std::string, std::string>>> expand_grid(
    const std::vector<AblationAxis>& axes);
// Applies one cell's assignments to a base config and validates the result.
TransferConfig cell_config(const TransferConfig& base,
                           const std::vector<std::pair<std::string, std::string>>& cell);

}  // namespace modalbridge::cli
