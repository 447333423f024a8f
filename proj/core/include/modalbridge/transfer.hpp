// SPDX-License-Identifier: Apache-2.0
//
// Feature-supervision objectives between a frozen teacher and a student.
//
//   clip_to_clip    d(student(target clip i), teacher(source clip i))
//   video_to_clip   d(student(target clip i), mean_j teacher(source clip j))
//   combined        clip_to_clip + video_to_clip on the same clip i
//   video_to_video  d(student(whole target sequence), mean_j teacher(source clip j))
//
// d is the cosine distance (or MSE for the loss ablation). Teacher
// features never carry gradient.
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "modalbridge/data.hpp"
#include "modalbridge/nets.hpp"
#include "modalbridge/random.hpp"

namespace modalbridge {

enum class Granularity { kClipToClip, kVideoToClip, kCombined, kVideoToVideo };
enum class FeatureLoss { kCosine, kMse };

Granularity parse_granularity(std::string_view text);
std::string_view to_string(Granularity g);
FeatureLoss parse_feature_loss(std::string_view text);
std::string_view to_string(FeatureLoss l);

bool uses_clip_student(Granularity g);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Throws ConfigError when the granularity cannot drive this target modality.
void check_granularity(Granularity g, Modality target);

inline constexpr float kCosineEpsilon = 1e-8f;

// 1 - a.b / (|a||b| + eps) over the last axis. [D] -> [1], [B,D] -> [B].
// Two all-zero rows give exactly 1 (and a logged warning).
Tensor cosine_distance(const Tensor& a, const Tensor& b);
// Mean squared difference over the last axis, same shapes as cosine_distance.
Tensor mse_distance(const Tensor& a, const Tensor& b);
Tensor feature_distance(FeatureLoss loss, const Tensor& a, const Tensor& b);

// Per-clip teacher features [N,D] for the non-overlapping clips of one stream.
Tensor teacher_clip_features(const Network& teacher, const Tensor& stream, std::size_t clip_len);
// Mean of the per-clip features, [D].
Tensor teacher_video_feature(const Network& teacher, const Tensor& stream, std::size_t clip_len);

// Teacher features for a set of paired videos, computed once. The teacher is
// frozen for the whole transfer phase, so these stay exact across epochs.
class TeacherFeatureCache {
 public:
  TeacherFeatureCache(const Network& teacher, const UnlabeledPairs& pairs, Modality source,
                      std::size_t clip_len);
  TeacherFeatureCache(const Network& teacher, const std::vector<const Tensor*>& streams,
                      std::size_t clip_len);

  std::size_t size() const { return clip_.size(); }
  std::size_t clip_count(std::size_t video) const { return clip_.at(video).dim(0); }
  // [D]
  Tensor clip_feature(std::size_t video, std::size_t clip) const;
  const Tensor& video_feature(std::size_t video) const { return video_.at(video); }

 private:
  std::vector<Tensor> clip_;   // [N_i, D]
  std::vector<Tensor> video_;  // [D]
};

// Teacher-side targets for a batch of B student features.
struct TransferTargets {
  Tensor clip;   // [B,D] or undefined
  Tensor video;  // [B,D] or undefined
};

// Mean over the batch of the granularity's objective; student_features is
// [B,D] already projected to the teacher width.
Tensor transfer_objective(Granularity g, FeatureLoss loss, const Tensor& student_features,
                          const TransferTargets& targets);

struct TransferSample {
  const Tensor* source = nullptr;  // teacher-modality stream
  const Tensor* target = nullptr;  // student-modality stream
  std::size_t frames = 0;
};

struct TransferContext {
  const Network* teacher = nullptr;
  const Network* student = nullptr;
  const FeatureProjection* projection = nullptr;  // null or identity -> no projection
  Modality target = Modality::kDepth;
  FeatureLoss loss = FeatureLoss::kCosine;
  std::size_t clip_len = 8;
  std::size_t canvas = 16;
};

// Single-sample objective. For clip granularities one window index is drawn
// uniformly from `clip_rng` and used on both streams.
Tensor transfer_loss(Granularity g, const TransferContext& ctx, const TransferSample& sample,
                     Rng& clip_rng);

// Same, with the clip index fixed by the caller.
Tensor transfer_loss_at(Granularity g, const TransferContext& ctx, const TransferSample& sample,
                        std::size_t clip_index);

// Builds the student's input for the given videos: one clip per video for
// clip modalities (indices[i] selects the window), the whole sequence for
// skeletons. `channels` > 1 replicates single-channel clips.
NetInput student_input(Modality target, const std::vector<const Tensor*>& streams,
                       const std::vector<std::size_t>& clip_indices, std::size_t clip_len,
                       std::size_t canvas, std::size_t channels = 0);

}  // namespace modalbridge
