// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: a flat `key = value` file with dotted sections,
// `#` comments and blank lines. Every key is checked against a fixed schema;
// unknown keys, duplicates, and missing required keys are hard errors.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "modalbridge/data.hpp"
#include "modalbridge/nets.hpp"
#include "modalbridge/optim.hpp"
#include "modalbridge/transfer.hpp"

namespace modalbridge {

enum class Baseline { kFromScratch, kModalityPretrain, kFeatureSupervised };
Baseline parse_baseline(std::string_view text);
std::string_view to_string(Baseline b);

// Source side of an experiment: a single teacher modality, or two students
// (one per teacher) fused at inference.
enum class SourceChoice { kRgb, kFlow, kTwoStream };
SourceChoice parse_source(std::string_view text);
std::string_view to_string(SourceChoice s);
std::vector<Modality> source_modalities(SourceChoice s);

struct PhaseSettings {
  std::size_t epochs = 0;
  std::size_t batch = 8;
  SgdSettings sgd;
  std::size_t lr_step = 0;  // multiply lr by 0.1 every lr_step epochs; 0 disables
};

struct ModelSettings {
  std::size_t clip_len = 8;
  std::size_t teacher_width = 64;
  std::size_t student_width = 64;
  std::size_t base_channels = 8;
  std::size_t blocks = 3;
  std::size_t skeleton_base_channels = 16;
  std::size_t skeleton_blocks = 3;
  std::size_t temporal_kernel = 5;
};

struct TransferConfig {
  std::string preset = "desk";
  GeneratorConfig data;
  ModelSettings model;
  SourceChoice source = SourceChoice::kFlow;
  Modality target = Modality::kDepth;
  Granularity granularity = Granularity::kCombined;
  FeatureLoss loss = FeatureLoss::kCosine;
  PhaseSettings teacher;
  PhaseSettings transfer;
  PhaseSettings finetune;
  FreezePolicy freeze = FreezePolicy::kHeadPlusLastBlock;
  std::size_t k = 2;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  Baseline baseline = Baseline::kFeatureSupervised;
};

using KeyValues = std::map<std::string, std::string>;

// Syntax only: `key = value` lines. Throws ConfigError with a line number.
KeyValues parse_key_values(const std::string& text);

// Schema check, defaults (preset aware), derived values and invariants.
TransferConfig resolve_config(const KeyValues& values);
TransferConfig parse_config(const std::string& text);
TransferConfig load_config(const std::filesystem::path& path);

// Canonical `key = value` text with every key resolved; parsing it back
// yields a config whose echo is byte-identical.
std::string config_echo(const TransferConfig& config);
KeyValues config_to_key_values(const TransferConfig& config);

// Keys accepted by the schema, in echo order.
std::vector<std::string> config_keys();

// Defaults after preset resolution; `data.seed` must still be supplied.
TransferConfig default_config(Modality target = Modality::kDepth, const std::string& preset = "desk");

}  // namespace modalbridge
