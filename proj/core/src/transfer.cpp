// SPDX-License-Identifier: Apache-2.0
#include "modalbridge/transfer.hpp"

#include <spdlog/spdlog.h>

namespace modalbridge {

Granularity parse_granularity(std::string_view text) {
  if (text == "clip_to_clip") return Granularity::kClipToClip;
  if (text == "video_to_clip") return Granularity::kVideoToClip;
  if (text == "combined") return Granularity::kCombined;
  if (text == "video_to_video") return Granularity::kVideoToVideo;
  throw ConfigError("unknown granularity '" + std::string(text) + "'");
}

std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::kClipToClip: return "clip_to_clip";
    case Granularity::kVideoToClip: return "video_to_clip";
    case Granularity::kCombined: return "combined";
    case Granularity::kVideoToVideo: return "video_to_video";
  }
  return "?";
}

FeatureLoss parse_feature_loss(std::string_view text) {
  if (text == "cosine") return FeatureLoss::kCosine;
  if (text == "mse") return FeatureLoss::kMse;
  throw ConfigError("unknown loss '" + std::string(text) + "'");
}

std::string_view to_string(FeatureLoss l) { return l == FeatureLoss::kCosine ? "cosine" : "mse"; }

bool uses_clip_student(Granularity g) { return g != Granularity::kVideoToVideo; }

void check_granularity(Granularity g, Modality target) {
  if (uses_clip_student(g) != is_clip_modality(target)) {
    throw ConfigError("granularity " + std::string(to_string(g)) + " cannot train a " +
                      std::string(to_string(target)) + " student" +
                      (is_clip_modality(target) ? " (needs a clip granularity)"
                                                : " (only video_to_video consumes whole sequences)"));
  }
}

Tensor cosine_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("cosine_distance: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const Tensor na = l2_norm(a);
  const Tensor nb = l2_norm(b);
  for (std::size_t i = 0; i < na.numel(); ++i) {
    if (na.data()[i] == 0.0f && nb.data()[i] == 0.0f) {
      spdlog::warn("cosine_distance: both feature vectors are zero, distance defined as 1");
      break;
    }
  }
  const Tensor denom = add(mul(na, nb), Tensor::scalar(kCosineEpsilon));
  return sub(Tensor::scalar(1.0f), div(dot(a, b), denom));
}

Tensor mse_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse_distance: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const Tensor d = sub(a, b);
  return mean(mul(d, d), a.rank() - 1);
}

Tensor feature_distance(FeatureLoss loss, const Tensor& a, const Tensor& b) {
  return loss == FeatureLoss::kCosine ? cosine_distance(a, b) : mse_distance(a, b);
}

Tensor teacher_clip_features(const Network& teacher, const Tensor& stream, std::size_t clip_len) {
  NoGradGuard no_grad;
  const std::size_t n = num_clips(stream.dim(1), clip_len);
  std::vector<Tensor> clips;
  clips.reserve(n);
  for (std::size_t i = 0; i < n; ++i) clips.push_back(extract_clip(stream, i, clip_len));
  return teacher.forward_features({stack(clips), {}}).detach();
}

Tensor teacher_video_feature(const Network& teacher, const Tensor& stream, std::size_t clip_len) {
  NoGradGuard no_grad;
  return mean(teacher_clip_features(teacher, stream, clip_len), 0).detach();
}

TeacherFeatureCache::TeacherFeatureCache(const Network& teacher, const UnlabeledPairs& pairs,
                                         Modality source, std::size_t clip_len) {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    clip_.push_back(teacher_clip_features(teacher, pairs.stream(i, source), clip_len));
    NoGradGuard no_grad;
    video_.push_back(mean(clip_.back(), 0).detach());
  }
}

TeacherFeatureCache::TeacherFeatureCache(const Network& teacher,
                                         const std::vector<const Tensor*>& streams,
                                         std::size_t clip_len) {
  for (const Tensor* s : streams) {
    clip_.push_back(teacher_clip_features(teacher, *s, clip_len));
    NoGradGuard no_grad;
    video_.push_back(mean(clip_.back(), 0).detach());
  }
}

Tensor TeacherFeatureCache::clip_feature(std::size_t video, std::size_t clip) const {
  const Tensor& all = clip_.at(video);
  const std::size_t d = all.dim(1);
  if (clip >= all.dim(0)) throw DataError("teacher cache: clip index out of range");
  const auto src = all.data().subspan(clip * d, d);
  return Tensor::from({d}, std::vector<float>(src.begin(), src.end()));
}

Tensor transfer_objective(Granularity g, FeatureLoss loss, const Tensor& student_features,
                          const TransferTargets& targets) {
  auto term = [&](const Tensor& target, const char* what) {
    if (!target.defined()) {
      throw ConfigError(std::string("transfer_objective: missing teacher ") + what + " features");
    }
    return mean(feature_distance(loss, student_features, target.detach()), 0);
  };
  switch (g) {
    case Granularity::kClipToClip: return term(targets.clip, "clip");
    case Granularity::kVideoToClip:
    case Granularity::kVideoToVideo: return term(targets.video, "video");
    case Granularity::kCombined: return add(term(targets.clip, "clip"), term(targets.video, "video"));
  }
  throw ConfigError("transfer_objective: bad granularity");
}

NetInput student_input(Modality target, const std::vector<const Tensor*>& streams,
                       const std::vector<std::size_t>& clip_indices, std::size_t clip_len,
                       std::size_t canvas, std::size_t channels) {
  if (!is_clip_modality(target)) return skeleton_batch(streams, canvas);
  if (clip_indices.size() != streams.size()) {
    throw ShapeError("student_input: " + std::to_string(clip_indices.size()) +
                     " clip indices for " + std::to_string(streams.size()) + " videos");
  }
  std::vector<Tensor> clips;
  clips.reserve(streams.size());
  for (std::size_t i = 0; i < streams.size(); ++i) {
    clips.push_back(extract_clip(*streams[i], clip_indices[i], clip_len));
  }
  Tensor batch = stack(clips);
  if (channels > 1 && batch.dim(1) == 1) batch = replicate_channels(batch, channels);
  return {batch, {}};
}

Tensor transfer_loss_at(Granularity g, const TransferContext& ctx, const TransferSample& sample,
                        std::size_t clip_index) {
  check_granularity(g, ctx.target);
  if (!ctx.teacher || !ctx.student || !sample.source || !sample.target) {
    throw ConfigError("transfer_loss: incomplete context");
  }
  TransferTargets targets;
  {
    const Tensor clips = teacher_clip_features(*ctx.teacher, *sample.source, ctx.clip_len);
    NoGradGuard no_grad;
    const std::size_t d = clips.dim(1);
    if (g == Granularity::kClipToClip || g == Granularity::kCombined) {
      const auto row = clips.data().subspan(clip_index * d, d);
      targets.clip = Tensor::from({1, d}, std::vector<float>(row.begin(), row.end()));
    }
    if (g != Granularity::kClipToClip) targets.video = reshape(mean(clips, 0), {1, d}).detach();
  }
  const NetInput input =
      student_input(ctx.target, {sample.target}, {clip_index}, ctx.clip_len, ctx.canvas);
  Tensor features = ctx.student->forward_features(input);
  if (ctx.projection) features = ctx.projection->forward(features);
  return transfer_objective(g, ctx.loss, features, targets);
}

Tensor transfer_loss(Granularity g, const TransferContext& ctx, const TransferSample& sample,
                     Rng& clip_rng) {
  std::size_t index = 0;
  if (uses_clip_student(g)) {
    const std::size_t n = num_clips(sample.frames, ctx.clip_len);
    index = std::uniform_int_distribution<std::size_t>(0, n - 1)(clip_rng);
  }
  return transfer_loss_at(g, ctx, sample, index);
}

}  // namespace modalbridge
