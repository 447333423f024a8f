// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "modalbridge/checkpoint.hpp"
#include "modalbridge/config.hpp"

namespace modalbridge {
namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, MinimalFileResolvesDefaults) {
  const auto c = parse_config("data.seed = 4\n");
  EXPECT_EQ(c.data.seed, 4u);
  EXPECT_EQ(c.target, Modality::kDepth);
  EXPECT_EQ(c.granularity, Granularity::kCombined);
  EXPECT_EQ(c.freeze, FreezePolicy::kHeadPlusLastBlock);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3, 4, 5}));
  EXPECT_EQ(c.data.clip_len, c.model.clip_len);
}

TEST(Config, MissingSeedNamesTheKey) {
  const std::string msg = error_of("transfer.loss = mse\n");
  EXPECT_NE(msg.find("data.seed"), std::string::npos) << msg;
}

TEST(Config, SyntaxErrorsCarryLineNumbers) {
  EXPECT_NE(error_of("data.seed = 1\nnot a pair\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("data.seed = 1\ndata.seed = 2\n").find("duplicate"), std::string::npos);
  EXPECT_NE(error_of("data.seed =\n").find("line 1"), std::string::npos);
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
  EXPECT_NE(error_of("data.seed = 1\ntransfer.lrr = 0.1\n").find("transfer.lrr"), std::string::npos);
  EXPECT_NE(error_of("data.seed = 1\ntransfer.granularity = frame\n").find("transfer.granularity"), std::string::npos);
  EXPECT_NE(error_of("data.seed = x\n").find("data.seed"), std::string::npos);
  EXPECT_NE(error_of("data.seed = 1\nrun.seeds = 1,,2\n").find("run.seeds"), std::string::npos);
  EXPECT_FALSE(error_of("data.seed = 1\npreset = huge\n").empty());
}

TEST(Config, ValidationRules) {
  // Whole-sequence students only take the video-level objective.
  EXPECT_FALSE(error_of("data.seed = 1\ntransfer.target_modality = depth\ntransfer.granularity = video_to_video\n").empty());
  EXPECT_FALSE(error_of("data.seed = 1\ntransfer.target_modality = skeleton\ntransfer.granularity = clip_to_clip\n").empty());
  EXPECT_FALSE(error_of("data.seed = 1\ntransfer.target_modality = skeleton\nfinetune.freeze = head_plus_last_block\n").empty());
  EXPECT_FALSE(error_of("data.seed = 1\nrun.k = 0\n").empty());
  EXPECT_FALSE(error_of("data.seed = 1\nrun.k = 11\n").empty());
  EXPECT_FALSE(error_of("data.seed = 1\ndata.min_frames = 4\n").empty());
  EXPECT_FALSE(error_of("data.seed = 1\nteacher.lr = 0\n").empty());
  EXPECT_FALSE(error_of("data.seed = 1\nmodel.temporal_kernel = 4\n").empty());
}

TEST(Config, SkeletonTargetPicksSkeletonDefaults) {
  const auto c = parse_config("data.seed = 1\ntransfer.target_modality = skeleton\n");
  EXPECT_EQ(c.granularity, Granularity::kVideoToVideo);
  EXPECT_EQ(c.freeze, FreezePolicy::kAllLayers);
  EXPECT_FLOAT_EQ(c.transfer.sgd.weight_decay, 1e-5f);
  EXPECT_FLOAT_EQ(c.finetune.sgd.weight_decay, 1e-5f);
}

TEST(Config, EchoRoundTripsByteForByte) {
  const auto c = parse_config(fixtures::tiny_config_text());
  const std::string echo = config_echo(c);
  EXPECT_EQ(config_echo(parse_config(echo)), echo);
  const auto keys = config_keys();
  for (const auto& key : keys) EXPECT_NE(echo.find(key + " = "), std::string::npos) << key;
  EXPECT_EQ(config_to_key_values(c).size(), keys.size());
}

TEST(Config, ShippedConfigsLoad) {
  const auto depth = load_config(MODALBRIDGE_CONFIG_DIR "/default.cfg");
  EXPECT_EQ(depth.target, Modality::kDepth);
  EXPECT_EQ(depth.source, SourceChoice::kFlow);
  EXPECT_EQ(depth.k, 2u);
  const auto skeleton = load_config(MODALBRIDGE_CONFIG_DIR "/skeleton.cfg");
  EXPECT_EQ(skeleton.target, Modality::kSkeleton);
  EXPECT_THROW(load_config("/nonexistent/x.cfg"), ConfigError);
}

// Published training schedules for the two students.
TEST(Config, LargeScalePresetMatchesPublishedSchedules) {
  const auto depth = parse_config("preset = paper_scale\ndata.seed = 1\n");
  EXPECT_EQ(depth.model.clip_len, 16u);
  EXPECT_FLOAT_EQ(depth.transfer.sgd.lr, 0.1f);
  EXPECT_FLOAT_EQ(depth.transfer.sgd.momentum, 0.9f);
  EXPECT_FLOAT_EQ(depth.transfer.sgd.weight_decay, 0.001f);
  EXPECT_EQ(depth.transfer.batch, 128u);
  EXPECT_EQ(depth.transfer.epochs, 400u);
  EXPECT_EQ(depth.finetune.epochs, 100u);
  EXPECT_EQ(depth.freeze, FreezePolicy::kHeadPlusLastBlock);

  const auto skel = parse_config("preset = paper_scale\ndata.seed = 1\ntransfer.target_modality = skeleton\n");
  EXPECT_FLOAT_EQ(skel.transfer.sgd.lr, 0.1f);
  EXPECT_FLOAT_EQ(skel.transfer.sgd.momentum, 0.9f);
  EXPECT_FLOAT_EQ(skel.transfer.sgd.weight_decay, 0.00001f);
  EXPECT_EQ(skel.transfer.batch, 100u);
  EXPECT_EQ(skel.transfer.epochs, 120u);
  EXPECT_EQ(skel.finetune.epochs, 70u);
  EXPECT_EQ(skel.freeze, FreezePolicy::kAllLayers);
}

TEST(Config, SourceChoices) {
  EXPECT_EQ(source_modalities(SourceChoice::kTwoStream),
            (std::vector<Modality>{Modality::kRgb, Modality::kFlow}));
  EXPECT_EQ(parse_source("rgb"), SourceChoice::kRgb);
  EXPECT_THROW(parse_source("depth"), ConfigError);
  EXPECT_THROW(parse_baseline("imagenet"), ConfigError);
}

}  // namespace
}  // namespace modalbridge
