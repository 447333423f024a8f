// SPDX-License-Identifier: Apache-2.0
//
// Synthetic paired-modality action data.
//
// Every sample is rendered from one latent motion: a blob (or skeleton
// torso) oscillating along a class-specific direction at a class-specific
// frequency. Appearance (colour, size, background texture) is randomized
// per sample, so the class is carried by motion, not looks.
//
// Streams, all with the same frame count T:
//   rgb      [3,T,S,S]  coloured gaussian blob over a static textured background
//   flow     [2,T,S,S]  channel-mean frame difference d(t) = mean_c(rgb(t+1) - rgb(t)),
//                       split into max(d,0) and max(-d,0); zero at t = T-1
//   depth    [1,T,S,S]  clamped proximity 1 - r/R to the blob centre, zero background
//   skeleton [J,T,2]    joint coordinates on the S x S canvas
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modalbridge/nets.hpp"
#include "modalbridge/tensor.hpp"

namespace modalbridge {

enum class Modality { kRgb, kFlow, kDepth, kSkeleton };

Modality parse_modality(std::string_view text);
std::string_view to_string(Modality m);
// Channels a network sees for this modality (coordinates for skeletons).
std::size_t modality_channels(Modality m);
bool is_clip_modality(Modality m);

struct PairedVideo {
  std::string id;
  std::size_t frames = 0;
  std::optional<int> label;  // global class id
  Tensor rgb;
  Tensor flow;
  Tensor depth;
  Tensor skeleton;

  const Tensor& stream(Modality m) const;
};

struct PerClassCounts {
  std::size_t source = 60;     // labeled source-class videos
  std::size_t unlabeled = 30;  // target-class pairs, labels stripped
  std::size_t labeled = 10;    // target-class labeled pool
  std::size_t eval = 20;       // target-class evaluation videos
};

struct GeneratorConfig {
  std::uint64_t seed = 0;
  std::size_t num_source_classes = 6;
  std::size_t num_target_classes = 4;
  PerClassCounts counts;
  std::size_t min_frames = 16;
  std::size_t max_frames = 40;
  std::size_t canvas = 16;
  std::size_t joints = 8;
  std::size_t clip_len = 8;
};

struct DatasetSplit {
  GeneratorConfig config;
  std::vector<int> source_classes;  // global ids [0, S)
  std::vector<int> target_classes;  // global ids [S, S+U)
  std::vector<PairedVideo> source_train;
  std::vector<PairedVideo> target_unlabeled;
  std::vector<PairedVideo> target_labeled;
  std::vector<PairedVideo> target_eval;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

DatasetSplit generate(const GeneratorConfig& config);
DatasetSplit generate(std::uint64_t seed, std::size_t num_source_classes,
                      std::size_t num_target_classes, const PerClassCounts& counts);

// Motion parameters behind a class id: direction (radians) and angular
// frequency (radians per frame).
struct ClassMotion {
  double direction;
  double frequency;
};
ClassMotion class_motion(int class_id, std::size_t total_classes);

// Renders one video of the given class; deterministic in `sample_seed`.
PairedVideo render_video(const GeneratorConfig& config, int class_id, std::uint64_t sample_seed,
                         std::string id);

// Read-only view of paired streams with no access to labels.
class UnlabeledPairs {
 public:
  explicit UnlabeledPairs(const std::vector<PairedVideo>& videos) : videos_(&videos) {}

  std::size_t size() const { return videos_->size(); }
  const std::string& id(std::size_t i) const { return videos_->at(i).id; }
  std::size_t frames(std::size_t i) const { return videos_->at(i).frames; }
  const Tensor& stream(std::size_t i, Modality m) const { return videos_->at(i).stream(m); }

 private:
  const std::vector<PairedVideo>* videos_;
};

UnlabeledPairs strip_labels(const std::vector<PairedVideo>& videos);
UnlabeledPairs strip_labels(const DatasetSplit& split);

// Exactly k videos per target class, drawn without replacement.
std::vector<PairedVideo> sample_few_labels(const DatasetSplit& split, std::size_t k,
                                           std::uint64_t seed);

// --- batching -------------------------------------------------------------

std::size_t num_clips(std::size_t total_frames, std::size_t clip_len);

// [C,T,H,W] -> [C,clip_len,H,W], window `index` of the non-overlapping
// partition starting at frame 0.
Tensor extract_clip(const Tensor& stream, std::size_t index, std::size_t clip_len);

// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& items);

// Repeats a single-channel clip batch [N,1,...] to `channels` channels.
Tensor replicate_channels(const Tensor& batch, std::size_t channels);

// Skeletons [J,T,2] -> [N,2,T_max,J] with coordinates centred and scaled to
// roughly [-1,1]; shorter sequences are zero padded and flagged via
// valid_frames.
NetInput skeleton_batch(const std::vector<const Tensor*>& skeletons, std::size_t canvas);

// --- on-disk format ---------------------------------------------------------

// <dir>/manifest.json plus one checkpoint-format file per stream
// (rgb.bin, flow.bin, depth.bin, skeleton.bin) holding every sample's
// tensor under its id.
void save_dataset(const DatasetSplit& split, const std::filesystem::path& dir);
// Verifies per-file and content digests recorded in the manifest.
DatasetSplit load_dataset(const std::filesystem::path& dir);
std::string dataset_digest(const DatasetSplit& split);

}  // namespace modalbridge
