// SPDX-License-Identifier: Apache-2.0
#include "modalbridge/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include "modalbridge/checkpoint.hpp"

namespace modalbridge {

Baseline parse_baseline(std::string_view text) {
  if (text == "from_scratch") return Baseline::kFromScratch;
  if (text == "modality_pretrain") return Baseline::kModalityPretrain;
  if (text == "feature_supervised") return Baseline::kFeatureSupervised;
  throw ConfigError("unknown baseline '" + std::string(text) +
                    "' (expected from_scratch, modality_pretrain or feature_supervised)");
}

std::string_view to_string(Baseline b) {
  switch (b) {
    case Baseline::kFromScratch: return "from_scratch";
    case Baseline::kModalityPretrain: return "modality_pretrain";
    case Baseline::kFeatureSupervised: return "feature_supervised";
  }
  return "?";
}

SourceChoice parse_source(std::string_view text) {
  if (text == "rgb") return SourceChoice::kRgb;
  if (text == "flow") return SourceChoice::kFlow;
  if (text == "two_stream") return SourceChoice::kTwoStream;
  throw ConfigError("unknown source modality '" + std::string(text) +
                    "' (expected rgb, flow or two_stream)");
}

std::string_view to_string(SourceChoice s) {
  switch (s) {
    case SourceChoice::kRgb: return "rgb";
    case SourceChoice::kFlow: return "flow";
    case SourceChoice::kTwoStream: return "two_stream";
  }
  return "?";
}

std::vector<Modality> source_modalities(SourceChoice s) {
  switch (s) {
    case SourceChoice::kRgb: return {Modality::kRgb};
    case SourceChoice::kFlow: return {Modality::kFlow};
    case SourceChoice::kTwoStream: return {Modality::kRgb, Modality::kFlow};
  }
  return {};
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw ConfigError("config key '" + key + "': invalid value '" + value + "' (" + what + ")");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "expected a non-negative integer");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

float to_float(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const float f = std::stof(v, &used);
    if (used != v.size()) bad_value(key, v, "expected a number");
    return f;
  } catch (const std::logic_error&) {
    bad_value(key, v, "expected a number");
  }
}

std::vector<std::uint64_t> to_seed_list(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_u64(key, trim(item)));
  if (out.empty()) bad_value(key, v, "expected a comma separated list of seeds");
  return out;
}

std::string fmt_float(float f) { return fmt::format("{}", f); }

template <typename Fn>
auto wrap_enum(const std::string& key, const std::string& v, Fn parse) {
  try {
    return parse(v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

struct Field {
  std::string key;
  bool required;
  std::function<std::string(const TransferConfig&)> get;
  std::function<void(TransferConfig&, const std::string&)> set;
};

template <typename Getter>
Field count_field(std::string key, Getter ref) {
  return {key, false, [ref](const TransferConfig& c) { return std::to_string(ref(const_cast<TransferConfig&>(c))); },
          [ref, key](TransferConfig& c, const std::string& v) { ref(c) = to_size(key, v); }};
}

template <typename Getter>
Field float_field(std::string key, Getter ref) {
  return {key, false, [ref](const TransferConfig& c) { return fmt_float(ref(const_cast<TransferConfig&>(c))); },
          [ref, key](TransferConfig& c, const std::string& v) { ref(c) = to_float(key, v); }};
}

void add_phase(std::vector<Field>& fields, const std::string& name,
               PhaseSettings TransferConfig::*phase) {
  fields.push_back(count_field(name + ".epochs", [phase](TransferConfig& c) -> std::size_t& { return (c.*phase).epochs; }));
  fields.push_back(count_field(name + ".batch", [phase](TransferConfig& c) -> std::size_t& { return (c.*phase).batch; }));
  fields.push_back(float_field(name + ".lr", [phase](TransferConfig& c) -> float& { return (c.*phase).sgd.lr; }));
  fields.push_back(float_field(name + ".momentum", [phase](TransferConfig& c) -> float& { return (c.*phase).sgd.momentum; }));
  fields.push_back(float_field(name + ".weight_decay", [phase](TransferConfig& c) -> float& { return (c.*phase).sgd.weight_decay; }));
  fields.push_back(count_field(name + ".lr_step", [phase](TransferConfig& c) -> std::size_t& { return (c.*phase).lr_step; }));
}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back({"preset", false, [](const TransferConfig& c) { return c.preset; },
                 [](TransferConfig& c, const std::string& v) {
                   if (v != "desk" && v != "paper_scale") bad_value("preset", v, "expected desk or paper_scale");
                   c.preset = v;
                 }});
    f.push_back({"data.seed", true, [](const TransferConfig& c) { return std::to_string(c.data.seed); },
                 [](TransferConfig& c, const std::string& v) { c.data.seed = to_u64("data.seed", v); }});
    f.push_back(count_field("data.num_source_classes", [](TransferConfig& c) -> std::size_t& { return c.data.num_source_classes; }));
    f.push_back(count_field("data.num_target_classes", [](TransferConfig& c) -> std::size_t& { return c.data.num_target_classes; }));
    f.push_back(count_field("data.source_per_class", [](TransferConfig& c) -> std::size_t& { return c.data.counts.source; }));
    f.push_back(count_field("data.unlabeled_per_class", [](TransferConfig& c) -> std::size_t& { return c.data.counts.unlabeled; }));
    f.push_back(count_field("data.labeled_per_class", [](TransferConfig& c) -> std::size_t& { return c.data.counts.labeled; }));
    f.push_back(count_field("data.eval_per_class", [](TransferConfig& c) -> std::size_t& { return c.data.counts.eval; }));
    f.push_back(count_field("data.min_frames", [](TransferConfig& c) -> std::size_t& { return c.data.min_frames; }));
    f.push_back(count_field("data.max_frames", [](TransferConfig& c) -> std::size_t& { return c.data.max_frames; }));
    f.push_back(count_field("data.canvas", [](TransferConfig& c) -> std::size_t& { return c.data.canvas; }));
    f.push_back(count_field("data.joints", [](TransferConfig& c) -> std::size_t& { return c.data.joints; }));
    f.push_back(count_field("model.clip_len", [](TransferConfig& c) -> std::size_t& { return c.model.clip_len; }));
    f.push_back(count_field("model.teacher_width", [](TransferConfig& c) -> std::size_t& { return c.model.teacher_width; }));
    f.push_back(count_field("model.student_width", [](TransferConfig& c) -> std::size_t& { return c.model.student_width; }));
    f.push_back(count_field("model.base_channels", [](TransferConfig& c) -> std::size_t& { return c.model.base_channels; }));
    f.push_back(count_field("model.blocks", [](TransferConfig& c) -> std::size_t& { return c.model.blocks; }));
    f.push_back(count_field("model.skeleton_base_channels", [](TransferConfig& c) -> std::size_t& { return c.model.skeleton_base_channels; }));
    f.push_back(count_field("model.skeleton_blocks", [](TransferConfig& c) -> std::size_t& { return c.model.skeleton_blocks; }));
    f.push_back(count_field("model.temporal_kernel", [](TransferConfig& c) -> std::size_t& { return c.model.temporal_kernel; }));
    f.push_back({"transfer.source_modality", false,
                 [](const TransferConfig& c) { return std::string(to_string(c.source)); },
                 [](TransferConfig& c, const std::string& v) { c.source = wrap_enum("transfer.source_modality", v, parse_source); }});
    f.push_back({"transfer.target_modality", false,
                 [](const TransferConfig& c) { return std::string(to_string(c.target)); },
                 [](TransferConfig& c, const std::string& v) {
                   c.target = wrap_enum("transfer.target_modality", v, parse_modality);
                   if (c.target != Modality::kDepth && c.target != Modality::kSkeleton) {
                     bad_value("transfer.target_modality", v, "expected depth or skeleton");
                   }
                 }});
    f.push_back({"transfer.granularity", false,
                 [](const TransferConfig& c) { return std::string(to_string(c.granularity)); },
                 [](TransferConfig& c, const std::string& v) { c.granularity = wrap_enum("transfer.granularity", v, parse_granularity); }});
    f.push_back({"transfer.loss", false, [](const TransferConfig& c) { return std::string(to_string(c.loss)); },
                 [](TransferConfig& c, const std::string& v) { c.loss = wrap_enum("transfer.loss", v, parse_feature_loss); }});
    add_phase(f, "teacher", &TransferConfig::teacher);
    add_phase(f, "transfer", &TransferConfig::transfer);
    add_phase(f, "finetune", &TransferConfig::finetune);
    f.push_back({"finetune.freeze", false, [](const TransferConfig& c) { return std::string(to_string(c.freeze)); },
                 [](TransferConfig& c, const std::string& v) { c.freeze = wrap_enum("finetune.freeze", v, parse_freeze_policy); }});
    f.push_back(count_field("run.k", [](TransferConfig& c) -> std::size_t& { return c.k; }));
    f.push_back({"run.seeds", false,
                 [](const TransferConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.seeds.size(); ++i) out += (i ? "," : "") + std::to_string(c.seeds[i]);
                   return out;
                 },
                 [](TransferConfig& c, const std::string& v) { c.seeds = to_seed_list("run.seeds", v); }});
    f.push_back({"run.baseline", false, [](const TransferConfig& c) { return std::string(to_string(c.baseline)); },
                 [](TransferConfig& c, const std::string& v) { c.baseline = wrap_enum("run.baseline", v, parse_baseline); }});
    return f;
  }();
  return fields;
}

void validate(const TransferConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid config: " + msg); };
  if (c.target == Modality::kSkeleton) {
    if (c.granularity != Granularity::kVideoToVideo) fail("skeleton target requires transfer.granularity = video_to_video");
    if (c.freeze != FreezePolicy::kAllLayers) fail("skeleton target requires finetune.freeze = all_layers");
    if (c.baseline == Baseline::kModalityPretrain) fail("modality_pretrain baseline needs a clip (depth) student");
  }
  check_granularity(c.granularity, c.target);
  if (c.seeds.empty()) fail("run.seeds must list at least one seed");
  if (c.k == 0 || c.k > c.data.counts.labeled) {
    fail("run.k must be in [1, data.labeled_per_class=" + std::to_string(c.data.counts.labeled) + "]");
  }
  if (c.model.clip_len == 0 || c.data.min_frames < c.model.clip_len) {
    fail("data.min_frames must be >= model.clip_len");
  }
  if (c.data.max_frames < c.data.min_frames) fail("data.max_frames must be >= data.min_frames");
  for (const PhaseSettings* p : {&c.teacher, &c.transfer, &c.finetune}) {
    if (p->batch == 0) fail("batch sizes must be >= 1");
    if (!(p->sgd.lr > 0.0f)) fail("learning rates must be positive");
  }
  if (c.model.blocks == 0 || c.model.skeleton_blocks == 0) fail("block counts must be >= 1");
  if (c.model.temporal_kernel % 2 == 0) fail("model.temporal_kernel must be odd");
}

}  // namespace

TransferConfig default_config(Modality target, const std::string& preset) {
  TransferConfig c;
  c.preset = preset;
  c.target = target;
  const bool skeleton = target == Modality::kSkeleton;
  c.granularity = skeleton ? Granularity::kVideoToVideo : Granularity::kCombined;
  c.freeze = skeleton ? FreezePolicy::kAllLayers : FreezePolicy::kHeadPlusLastBlock;

  c.teacher = {30, 8, {0.01f, 0.9f, 1e-3f}, 0};
  c.transfer = {40, 8, {0.01f, 0.9f, skeleton ? 1e-5f : 1e-3f}, 20};
  c.finetune = {20, 8, {0.01f, 0.9f, skeleton ? 1e-5f : 1e-3f}, 0};

  if (preset == "paper_scale") {
    c.model.clip_len = 16;
    c.data.min_frames = 32;
    c.data.max_frames = 80;
    c.transfer = skeleton ? PhaseSettings{120, 100, {0.1f, 0.9f, 1e-5f}, 0}
                          : PhaseSettings{400, 128, {0.1f, 0.9f, 1e-3f}, 0};
    c.finetune = skeleton ? PhaseSettings{70, 100, {0.1f, 0.9f, 1e-5f}, 0}
                          : PhaseSettings{100, 128, {0.1f, 0.9f, 1e-3f}, 0};
  } else if (preset != "desk") {
    throw ConfigError("unknown preset '" + preset + "'");
  }
  c.data.clip_len = c.model.clip_len;
  return c;
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("config line " + std::to_string(number) + ": empty key or value");
    }
    if (!out.emplace(key, value).second) {
      throw ConfigError("config line " + std::to_string(number) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

TransferConfig resolve_config(const KeyValues& values) {
  std::set<std::string> known;
  for (const auto& f : schema()) known.insert(f.key);
  std::vector<std::string> unknown;
  for (const auto& [k, v] : values) {
    if (!known.count(k)) unknown.push_back(k);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config key(s):";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  std::vector<std::string> missing;
  for (const auto& f : schema()) {
    if (f.required && !values.count(f.key)) missing.push_back(f.key);
  }
  if (!missing.empty()) {
    std::string msg = "missing required config key(s):";
    for (const auto& k : missing) msg += " " + k;
    throw ConfigError(msg);
  }

  // Target modality and preset pick the defaults, so they are read first.
  TransferConfig probe;
  for (const auto& f : schema()) {
    auto it = values.find(f.key);
    if (f.key == "transfer.target_modality" && it != values.end()) f.set(probe, it->second);
  }
  std::string preset = "desk";
  if (auto it = values.find("preset"); it != values.end()) preset = it->second;
  if (preset != "desk" && preset != "paper_scale") bad_value("preset", preset, "expected desk or paper_scale");

  TransferConfig c = default_config(probe.target, preset);
  for (const auto& f : schema()) {
    if (auto it = values.find(f.key); it != values.end()) f.set(c, it->second);
  }
  c.data.clip_len = c.model.clip_len;
  validate(c);
  return c;
}

TransferConfig parse_config(const std::string& text) { return resolve_config(parse_key_values(text)); }

TransferConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

KeyValues config_to_key_values(const TransferConfig& config) {
  KeyValues out;
  for (const auto& f : schema()) out[f.key] = f.get(config);
  return out;
}

std::string config_echo(const TransferConfig& config) {
  std::string out;
  for (const auto& f : schema()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : schema()) out.push_back(f.key);
  return out;
}

}  // namespace modalbridge
