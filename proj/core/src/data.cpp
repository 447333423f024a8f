// SPDX-License-Identifier: Apache-2.0
#include "modalbridge/data.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numbers>
#include <random>
#include <sstream>

#include "modalbridge/checkpoint.hpp"
#include "modalbridge/digest.hpp"
#include "modalbridge/random.hpp"

namespace modalbridge {

namespace {

constexpr Modality kAllModalities[] = {Modality::kRgb, Modality::kFlow, Modality::kDepth,
                                       Modality::kSkeleton};

struct Vec2 {
  double x, y;
};

// Stick figure offsets from the torso, in canvas pixels at scale 1.
constexpr Vec2 kHeadOffset{0.0, -2.5};
constexpr Vec2 kShoulderOffset{1.2, -1.5};
constexpr Vec2 kFootOffset{0.8, 2.5};
constexpr double kArmLength = 1.8;

}  // namespace

Modality parse_modality(std::string_view text) {
  for (Modality m : kAllModalities) {
    if (to_string(m) == text) return m;
  }
  throw std::invalid_argument("unknown modality '" + std::string(text) + "'");
}

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::kRgb: return "rgb";
    case Modality::kFlow: return "flow";
    case Modality::kDepth: return "depth";
    case Modality::kSkeleton: return "skeleton";
  }
  return "?";
}

std::size_t modality_channels(Modality m) {
  switch (m) {
    case Modality::kRgb: return 3;
    case Modality::kFlow: return 2;
    case Modality::kDepth: return 1;
    case Modality::kSkeleton: return 2;
  }
  return 0;
}

bool is_clip_modality(Modality m) { return m != Modality::kSkeleton; }

const Tensor& PairedVideo::stream(Modality m) const {
  switch (m) {
    case Modality::kRgb: return rgb;
    case Modality::kFlow: return flow;
    case Modality::kDepth: return depth;
    case Modality::kSkeleton: return skeleton;
  }
  throw std::invalid_argument("bad modality");
}

ClassMotion class_motion(int class_id, std::size_t total_classes) {
  const std::size_t directions = (total_classes + 1) / 2;
  const auto c = static_cast<std::size_t>(class_id);
  return {std::numbers::pi * static_cast<double>(c / 2) / static_cast<double>(directions),
          c % 2 == 0 ? 0.785 : 1.571};
}

PairedVideo render_video(const GeneratorConfig& config, int class_id, std::uint64_t sample_seed,
                         std::string id) {
  Rng rng(sample_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t s = config.canvas;
  const std::size_t t_count =
      config.min_frames + static_cast<std::size_t>(rng() % (config.max_frames - config.min_frames + 1));
  const ClassMotion motion =
      class_motion(class_id, config.num_source_classes + config.num_target_classes);
  const double half = static_cast<double>(s) / 2.0;
  const double phase = uniform(0.0, 2.0 * std::numbers::pi);
  const double amplitude = uniform(0.18, 0.28) * static_cast<double>(s);
  const Vec2 origin{half + uniform(-1.5, 1.5), half + uniform(-1.5, 1.5)};
  const Vec2 axis{std::cos(motion.direction), std::sin(motion.direction)};

  // Per-sample appearance nuisance.
  const double sigma = uniform(1.2, 2.2);
  const double color[3] = {uniform(0.3, 1.0), uniform(0.3, 1.0), uniform(0.3, 1.0)};
  const double bg_level = uniform(0.05, 0.35);
  const double depth_radius = uniform(5.0, 8.0);
  const double body_scale = uniform(0.8, 1.2) * static_cast<double>(s) / 16.0;
  std::vector<double> background(3 * s * s);
  for (double& v : background) v = bg_level * unit(rng);

  std::vector<Vec2> centre(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    const double offset = amplitude * std::sin(motion.frequency * static_cast<double>(t) + phase);
    centre[t] = {origin.x + offset * axis.x, origin.y + offset * axis.y};
  }

  std::vector<float> rgb(3 * t_count * s * s);
  std::vector<float> depth(t_count * s * s);
  for (std::size_t t = 0; t < t_count; ++t) {
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        const double dx = static_cast<double>(x) - centre[t].x;
        const double dy = static_cast<double>(y) - centre[t].y;
        const double d2 = dx * dx + dy * dy;
        const double blob = std::exp(-d2 / (2.0 * sigma * sigma));
        for (std::size_t c = 0; c < 3; ++c) {
          rgb[((c * t_count + t) * s + y) * s + x] = static_cast<float>(
              background[(c * s + y) * s + x] + color[c] * blob + 0.02 * noise(rng));
        }
        depth[(t * s + y) * s + x] = static_cast<float>(
            std::clamp(1.0 - std::sqrt(d2) / depth_radius + 0.02 * noise(rng), 0.0, 1.0));
      }
    }
  }

  std::vector<float> flow(2 * t_count * s * s, 0.0f);
  for (std::size_t t = 0; t + 1 < t_count; ++t) {
    for (std::size_t p = 0; p < s * s; ++p) {
      float d = 0.0f;
      for (std::size_t c = 0; c < 3; ++c) {
        d += rgb[(c * t_count + t + 1) * s * s + p] - rgb[(c * t_count + t) * s * s + p];
      }
      d /= 3.0f;
      flow[(0 * t_count + t) * s * s + p] = std::max(d, 0.0f);
      flow[(1 * t_count + t) * s * s + p] = std::max(-d, 0.0f);
    }
  }

  const std::size_t j_count = config.joints;
  std::vector<float> skeleton(j_count * t_count * 2);
  const double limit = static_cast<double>(s);
  for (std::size_t t = 0; t < t_count; ++t) {
    const double swing = motion.frequency * static_cast<double>(t) + phase;
    const Vec2 p = centre[t];
    std::vector<Vec2> joints(j_count, p);
    auto at = [&](std::size_t j, Vec2 v) {
      if (j < j_count) joints[j] = v;
    };
    at(1, {p.x + body_scale * kHeadOffset.x, p.y + body_scale * kHeadOffset.y});
    for (int side = 0; side < 2; ++side) {
      const double sign = side == 0 ? -1.0 : 1.0;
      const Vec2 shoulder{p.x + sign * body_scale * kShoulderOffset.x,
                          p.y + body_scale * kShoulderOffset.y};
      const double arm = sign * (0.6 + 0.5 * std::sin(swing));
      at(2 + side, shoulder);
      at(4 + side, {shoulder.x + body_scale * kArmLength * std::sin(arm),
                    shoulder.y + body_scale * kArmLength * std::cos(arm)});
      at(6 + side, {p.x + sign * body_scale * kFootOffset.x +
                        0.4 * body_scale * std::sin(swing + sign * std::numbers::pi / 2),
                    p.y + body_scale * kFootOffset.y});
    }
    // Joints beyond the 8-joint template follow the torso.
    for (std::size_t j = 0; j < j_count; ++j) {
      const double jx = std::clamp(joints[j].x + 0.05 * noise(rng), 0.0, limit);
      const double jy = std::clamp(joints[j].y + 0.05 * noise(rng), 0.0, limit);
      skeleton[(j * t_count + t) * 2 + 0] = static_cast<float>(jx);
      skeleton[(j * t_count + t) * 2 + 1] = static_cast<float>(jy);
    }
  }

  PairedVideo v;
  v.id = std::move(id);
  v.frames = t_count;
  v.label = class_id;
  v.rgb = Tensor::from({3, t_count, s, s}, std::move(rgb));
  v.flow = Tensor::from({2, t_count, s, s}, std::move(flow));
  v.depth = Tensor::from({1, t_count, s, s}, std::move(depth));
  v.skeleton = Tensor::from({j_count, t_count, 2}, std::move(skeleton));
  return v;
}

DatasetSplit generate(const GeneratorConfig& config) {
  if (config.num_source_classes < 2 || config.num_target_classes < 2) {
    throw DataError("generate: need at least 2 source and 2 target classes");
  }
  const PerClassCounts& c = config.counts;
  if (c.source < 1 || c.unlabeled < 1 || c.labeled < 1 || c.eval < 1) {
    throw DataError("generate: per-class counts must be >= 1 for every split (source=" +
                    std::to_string(c.source) + ", unlabeled=" + std::to_string(c.unlabeled) +
                    ", labeled=" + std::to_string(c.labeled) + ", eval=" + std::to_string(c.eval) +
                    ")");
  }
  if (config.min_frames < config.clip_len || config.max_frames < config.min_frames) {
    throw DataError("generate: frame range [" + std::to_string(config.min_frames) + "," +
                    std::to_string(config.max_frames) + "] incompatible with clip_len " +
                    std::to_string(config.clip_len));
  }
  if (config.canvas < 4 || config.joints < 2) throw DataError("generate: canvas or joints too small");

  DatasetSplit split;
  split.config = config;
  const int s_count = static_cast<int>(config.num_source_classes);
  const int u_count = static_cast<int>(config.num_target_classes);
  for (int k = 0; k < s_count; ++k) split.source_classes.push_back(k);
  for (int k = 0; k < u_count; ++k) split.target_classes.push_back(s_count + k);

  auto fill = [&](std::vector<PairedVideo>& out, const std::vector<int>& classes,
                  std::size_t per_class, std::string_view tag, char prefix, bool keep_label) {
    std::size_t index = 0;
    for (std::size_t r = 0; r < per_class; ++r) {
      for (int cls : classes) {
        char id[32];
        std::snprintf(id, sizeof id, "%c%05zu", prefix, index);
        PairedVideo v = render_video(config, cls, derive_seed(config.seed, tag, index), id);
        if (!keep_label) v.label.reset();
        out.push_back(std::move(v));
        ++index;
      }
    }
  };
  fill(split.source_train, split.source_classes, c.source, "source", 'S', true);
  fill(split.target_unlabeled, split.target_classes, c.unlabeled, "unlabeled", 'U', false);
  fill(split.target_labeled, split.target_classes, c.labeled, "labeled", 'L', true);
  fill(split.target_eval, split.target_classes, c.eval, "eval", 'E', true);
  return split;
}

DatasetSplit generate(std::uint64_t seed, std::size_t num_source_classes,
                      std::size_t num_target_classes, const PerClassCounts& counts) {
  GeneratorConfig config;
  config.seed = seed;
  config.num_source_classes = num_source_classes;
  config.num_target_classes = num_target_classes;
  config.counts = counts;
  return generate(config);
}

UnlabeledPairs strip_labels(const std::vector<PairedVideo>& videos) { return UnlabeledPairs(videos); }
UnlabeledPairs strip_labels(const DatasetSplit& split) { return UnlabeledPairs(split.target_unlabeled); }

std::vector<PairedVideo> sample_few_labels(const DatasetSplit& split, std::size_t k,
                                           std::uint64_t seed) {
  if (k == 0) throw DataError("sample_few_labels: k must be >= 1");
  Rng rng(derive_seed(seed, "few_labels"));
  std::vector<PairedVideo> out;
  for (int cls : split.target_classes) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < split.target_labeled.size(); ++i) {
      if (split.target_labeled[i].label == cls) pool.push_back(i);
    }
    if (pool.size() < k) {
      throw DataError("sample_few_labels: class " + std::to_string(cls) + " has " +
                      std::to_string(pool.size()) + " labeled examples, need " + std::to_string(k));
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    for (std::size_t i : pool) out.push_back(split.target_labeled[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t num_clips(std::size_t total_frames, std::size_t clip_len) {
  if (clip_len == 0) throw DataError("num_clips: clip_len must be >= 1");
  if (total_frames < clip_len) {
    throw DataError("num_clips: video has " + std::to_string(total_frames) +
                    " frames, shorter than clip_len " + std::to_string(clip_len));
  }
  return total_frames / clip_len;
}

Tensor extract_clip(const Tensor& stream, std::size_t index, std::size_t clip_len) {
  if (stream.rank() != 4) throw ShapeError("extract_clip: expected [C,T,H,W], got " + shape_str(stream.shape()));
  const std::size_t c = stream.dim(0), t = stream.dim(1), plane = stream.dim(2) * stream.dim(3);
  if (index >= num_clips(t, clip_len)) {
    throw DataError("extract_clip: clip " + std::to_string(index) + " out of range for " +
                    std::to_string(t) + " frames");
  }
  const auto src = stream.data();
  std::vector<float> out(c * clip_len * plane);
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::copy_n(src.data() + (ch * t + index * clip_len) * plane, clip_len * plane,
                out.data() + ch * clip_len * plane);
  }
  return Tensor::from({c, clip_len, stream.dim(2), stream.dim(3)}, std::move(out));
}

Tensor stack(const std::vector<Tensor>& items) {
  if (items.empty()) throw ShapeError("stack: no inputs");
  const Shape& shape = items.front().shape();
  std::vector<float> out;
  out.reserve(items.size() * items.front().numel());
  for (const auto& t : items) {
    if (t.shape() != shape) throw ShapeError("stack: incompatible shapes " + shape_str(shape) + " and " + shape_str(t.shape()));
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  Shape full{items.size()};
  full.insert(full.end(), shape.begin(), shape.end());
  return Tensor::from(std::move(full), std::move(out));
}

Tensor replicate_channels(const Tensor& batch, std::size_t channels) {
  if (batch.rank() < 2 || batch.dim(1) != 1) {
    throw ShapeError("replicate_channels: expected single-channel batch, got " + shape_str(batch.shape()));
  }
  const std::size_t n = batch.dim(0);
  const std::size_t volume = batch.numel() / n;
  const auto src = batch.data();
  std::vector<float> out(n * channels * volume);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t c = 0; c < channels; ++c)
      std::copy_n(src.data() + s * volume, volume, out.data() + (s * channels + c) * volume);
  Shape shape = batch.shape();
  shape[1] = channels;
  return Tensor::from(std::move(shape), std::move(out));
}

NetInput skeleton_batch(const std::vector<const Tensor*>& skeletons, std::size_t canvas) {
  if (skeletons.empty()) throw ShapeError("skeleton_batch: no inputs");
  const std::size_t j = skeletons.front()->dim(0);
  std::size_t t_max = 0;
  for (const Tensor* sk : skeletons) {
    if (sk->rank() != 3 || sk->dim(0) != j || sk->dim(2) != 2) {
      throw ShapeError("skeleton_batch: expected [J,T,2], got " + shape_str(sk->shape()));
    }
    t_max = std::max(t_max, sk->dim(1));
  }
  const std::size_t n = skeletons.size();
  const float half = static_cast<float>(canvas) / 2.0f;
  std::vector<float> out(n * 2 * t_max * j, 0.0f);
  NetInput input;
  for (std::size_t s = 0; s < n; ++s) {
    const Tensor& sk = *skeletons[s];
    const std::size_t t_count = sk.dim(1);
    const auto d = sk.data();
    for (std::size_t jj = 0; jj < j; ++jj)
      for (std::size_t t = 0; t < t_count; ++t)
        for (std::size_t c = 0; c < 2; ++c)
          out[((s * 2 + c) * t_max + t) * j + jj] = (d[(jj * t_count + t) * 2 + c] - half) / half;
    input.valid_frames.push_back(t_count);
  }
  input.x = Tensor::from({n, 2, t_max, j}, std::move(out));
  return input;
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

struct SplitRef {
  const char* name;
  std::vector<PairedVideo> DatasetSplit::*member;
};

constexpr SplitRef kSplits[] = {{"source_train", &DatasetSplit::source_train},
                                {"target_unlabeled", &DatasetSplit::target_unlabeled},
                                {"target_labeled", &DatasetSplit::target_labeled},
                                {"target_eval", &DatasetSplit::target_eval}};

std::string stream_file(Modality m) { return std::string(to_string(m)) + ".bin"; }

std::string encode_stream(const DatasetSplit& split, Modality m) {
  Checkpoint ckpt;
  ckpt.meta["stream"] = std::string(to_string(m));
  for (const auto& ref : kSplits) {
    for (const auto& v : split.*ref.member) ckpt.tensors.push_back({v.id, v.stream(m)});
  }
  return encode_checkpoint(ckpt);
}

json generator_json(const GeneratorConfig& c) {
  return {{"seed", c.seed},
          {"num_source_classes", c.num_source_classes},
          {"num_target_classes", c.num_target_classes},
          {"per_class", {{"source", c.counts.source}, {"unlabeled", c.counts.unlabeled},
                         {"labeled", c.counts.labeled}, {"eval", c.counts.eval}}},
          {"min_frames", c.min_frames},
          {"max_frames", c.max_frames},
          {"canvas", c.canvas},
          {"joints", c.joints},
          {"clip_len", c.clip_len}};
}

GeneratorConfig generator_from_json(const json& j) {
  GeneratorConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.num_source_classes = j.at("num_source_classes").get<std::size_t>();
  c.num_target_classes = j.at("num_target_classes").get<std::size_t>();
  const json& pc = j.at("per_class");
  c.counts = {pc.at("source").get<std::size_t>(), pc.at("unlabeled").get<std::size_t>(),
              pc.at("labeled").get<std::size_t>(), pc.at("eval").get<std::size_t>()};
  c.min_frames = j.at("min_frames").get<std::size_t>();
  c.max_frames = j.at("max_frames").get<std::size_t>();
  c.canvas = j.at("canvas").get<std::size_t>();
  c.joints = j.at("joints").get<std::size_t>();
  c.clip_len = j.at("clip_len").get<std::size_t>();
  return c;
}

json sample_table(const DatasetSplit& split) {
  json samples = json::array();
  for (const auto& ref : kSplits) {
    for (const auto& v : split.*ref.member) {
      samples.push_back({{"id", v.id},
                         {"split", ref.name},
                         {"label", v.label ? json(*v.label) : json(nullptr)},
                         {"frames", v.frames}});
    }
  }
  return samples;
}

std::string digest_from_parts(const json& generator, const json& samples,
                              const std::vector<std::string>& stream_digests) {
  Sha256 h;
  h.update(generator.dump());
  h.update(samples.dump());
  for (const auto& d : stream_digests) h.update(d);
  return h.hex();
}

}  // namespace

std::string dataset_digest(const DatasetSplit& split) {
  std::vector<std::string> digests;
  for (Modality m : kAllModalities) digests.push_back(sha256_hex(encode_stream(split, m)));
  return digest_from_parts(generator_json(split.config), sample_table(split), digests);
}

void save_dataset(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json streams = json::object();
  std::vector<std::string> digests;
  for (Modality m : kAllModalities) {
    const std::string bytes = encode_stream(split, m);
    write_file(dir / stream_file(m), bytes);
    digests.push_back(sha256_hex(bytes));
    streams[std::string(to_string(m))] = {{"file", stream_file(m)}, {"sha256", digests.back()}};
  }
  const json generator = generator_json(split.config);
  const json samples = sample_table(split);
  json classes = {{"source", split.source_classes}, {"target", split.target_classes}};
  json manifest = {{"format", "modalbridge-dataset"},
                   {"version", 1},
                   {"seed", split.config.seed},
                   {"generator", generator},
                   {"classes", classes},
                   {"samples", samples},
                   {"streams", streams},
                   {"content_digest", digest_from_parts(generator, samples, digests)}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

DatasetSplit load_dataset(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw DataError("load_dataset: malformed manifest in " + dir.string() + ": " + e.what());
  }
  DatasetSplit split;
  split.config = generator_from_json(manifest.at("generator"));
  split.source_classes = manifest.at("classes").at("source").get<std::vector<int>>();
  split.target_classes = manifest.at("classes").at("target").get<std::vector<int>>();

  std::vector<Checkpoint> streams;
  for (Modality m : kAllModalities) {
    const json& entry = manifest.at("streams").at(std::string(to_string(m)));
    const std::string bytes = read_file(dir / entry.at("file").get<std::string>());
    if (sha256_hex(bytes) != entry.at("sha256").get<std::string>()) {
      throw DataError("load_dataset: digest mismatch for " + entry.at("file").get<std::string>());
    }
    streams.push_back(decode_checkpoint(bytes));
  }
  std::size_t cursor = 0;
  for (const json& s : manifest.at("samples")) {
    PairedVideo v;
    v.id = s.at("id").get<std::string>();
    v.frames = s.at("frames").get<std::size_t>();
    if (!s.at("label").is_null()) v.label = s.at("label").get<int>();
    for (std::size_t k = 0; k < streams.size(); ++k) {
      const NamedTensor& nt = streams[k].tensors.at(cursor);
      if (nt.name != v.id) throw DataError("load_dataset: stream order mismatch at " + v.id);
      switch (kAllModalities[k]) {
        case Modality::kRgb: v.rgb = nt.tensor; break;
        case Modality::kFlow: v.flow = nt.tensor; break;
        case Modality::kDepth: v.depth = nt.tensor; break;
        case Modality::kSkeleton: v.skeleton = nt.tensor; break;
      }
    }
    ++cursor;
    const std::string which = s.at("split").get<std::string>();
    bool placed = false;
    for (const auto& ref : kSplits) {
      if (which == ref.name) {
        (split.*ref.member).push_back(std::move(v));
        placed = true;
        break;
      }
    }
    if (!placed) throw DataError("load_dataset: unknown split '" + which + "'");
  }
  if (dataset_digest(split) != manifest.at("content_digest").get<std::string>()) {
    throw DataError("load_dataset: content digest mismatch in " + dir.string());
  }
  return split;
}

}  // namespace modalbridge
