// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "modalbridge/transfer.hpp"
#include "oracle.hpp"

namespace modalbridge {
namespace {

float distance1(FeatureLoss loss, std::vector<float> a, std::vector<float> b) {
  const std::size_t d = a.size();
  return feature_distance(loss, Tensor::from({d}, std::move(a)), Tensor::from({d}, std::move(b))).item();
}

TEST(CosineDistance, Identities) {
  EXPECT_NEAR(distance1(FeatureLoss::kCosine, {1, 2, 3}, {1, 2, 3}), 0.0f, 1e-6f);
  EXPECT_NEAR(distance1(FeatureLoss::kCosine, {1, 2, 3}, {2, 4, 6}), 0.0f, 1e-6f);
  EXPECT_NEAR(distance1(FeatureLoss::kCosine, {1, 2, 3}, {-1, -2, -3}), 2.0f, 1e-6f);
  EXPECT_NEAR(distance1(FeatureLoss::kCosine, {1, 0}, {0, 5}), 1.0f, 1e-6f);
  EXPECT_EQ(distance1(FeatureLoss::kCosine, {0, 0, 0}, {0, 0, 0}), 1.0f);
  EXPECT_EQ(distance1(FeatureLoss::kCosine, {0, 0}, {3, 4}), 1.0f);
}

TEST(CosineDistance, BoundedAndMatchesOracleOnBatches) {
  std::mt19937_64 rng(5);
  for (std::size_t rows : {1u, 4u, 9u}) {
    const auto a = oracle::random_array({rows, 7}, rng);
    const auto b = oracle::random_array({rows, 7}, rng);
    const Tensor got = cosine_distance(oracle::to_tensor(a), oracle::to_tensor(b));
    const auto ref = oracle::ref_cosine_distance(a, b, 1e-8);
    ASSERT_EQ(got.shape(), Shape({rows}));
    for (std::size_t i = 0; i < rows; ++i) {
      EXPECT_NEAR(got.data()[i], ref.v[i], 1e-6);
      EXPECT_GE(got.data()[i], 0.0f);
      EXPECT_LE(got.data()[i], 2.0f);
    }
  }
  EXPECT_THROW(cosine_distance(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})), ShapeError);
}

TEST(MseDistance, MatchesHandValues) {
  EXPECT_FLOAT_EQ(distance1(FeatureLoss::kMse, {1, 2}, {1, 2}), 0.0f);
  EXPECT_FLOAT_EQ(distance1(FeatureLoss::kMse, {0, 0}, {1, 3}), 5.0f);
  const Tensor batch = mse_distance(Tensor::from({2, 2}, {0, 0, 1, 1}), Tensor::from({2, 2}, {2, 0, 1, 1}));
  EXPECT_FLOAT_EQ(batch.data()[0], 2.0f);
  EXPECT_FLOAT_EQ(batch.data()[1], 0.0f);
}

TEST(Granularity, TargetCompatibility) {
  EXPECT_NO_THROW(check_granularity(Granularity::kCombined, Modality::kDepth));
  EXPECT_NO_THROW(check_granularity(Granularity::kVideoToVideo, Modality::kSkeleton));
  EXPECT_THROW(check_granularity(Granularity::kVideoToVideo, Modality::kDepth), ConfigError);
  EXPECT_THROW(check_granularity(Granularity::kClipToClip, Modality::kSkeleton), ConfigError);
  EXPECT_THROW(parse_granularity("frame_to_frame"), ConfigError);
  EXPECT_THROW(parse_feature_loss("l1"), ConfigError);
  EXPECT_EQ(parse_granularity("video_to_clip"), Granularity::kVideoToClip);
}

TEST(TransferObjective, MissingTargetsAreAnError) {
  const Tensor s = Tensor::zeros({2, 3});
  TransferTargets only_clip{Tensor::zeros({2, 3}), Tensor{}};
  EXPECT_NO_THROW(transfer_objective(Granularity::kClipToClip, FeatureLoss::kCosine, s, only_clip));
  EXPECT_THROW(transfer_objective(Granularity::kCombined, FeatureLoss::kCosine, s, only_clip), ConfigError);
}

class TransferFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(13);
    Conv3dNetConfig t;
    t.in_channels = 2;
    t.clip_len = 4;
    t.height = t.width = 8;
    t.base_channels = 4;
    t.num_blocks = 2;
    t.feature_width = 6;
    teacher = std::make_unique<Conv3dNetLite>(t, rng);
    teacher->set_requires_grad(false);
    Conv3dNetConfig s = t;
    s.in_channels = 1;
    s.feature_width = 5;
    student = std::make_unique<Conv3dNetLite>(s, rng);
    projection = FeatureProjection(5, 6, rng);
    source = random_stream({2, 13, 8, 8}, rng);
    target = random_stream({1, 13, 8, 8}, rng);
    one_clip_source = random_stream({2, 4, 8, 8}, rng);
    one_clip_target = random_stream({1, 4, 8, 8}, rng);
  }

  static Tensor random_stream(Shape shape, Rng& rng) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<float> v(n);
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v));
  }

  TransferContext context() const {
    return {teacher.get(), student.get(), &projection, Modality::kDepth, FeatureLoss::kCosine, 4, 8};
  }

  std::unique_ptr<Network> teacher, student;
  FeatureProjection projection;
  Tensor source, target, one_clip_source, one_clip_target;
};

TEST_F(TransferFixture, CombinedIsSumOfPartsOnTheSameClip) {
  const TransferSample sample{&source, &target, 13};
  for (std::size_t clip = 0; clip < 3; ++clip) {
    const float c2c = transfer_loss_at(Granularity::kClipToClip, context(), sample, clip).item();
    const float v2c = transfer_loss_at(Granularity::kVideoToClip, context(), sample, clip).item();
    const float both = transfer_loss_at(Granularity::kCombined, context(), sample, clip).item();
    EXPECT_NEAR(both, c2c + v2c, 1e-6f);
  }
}

TEST_F(TransferFixture, SingleClipVideoCollapsesGranularities) {
  const TransferSample sample{&one_clip_source, &one_clip_target, 4};
  const float c2c = transfer_loss_at(Granularity::kClipToClip, context(), sample, 0).item();
  const float v2c = transfer_loss_at(Granularity::kVideoToClip, context(), sample, 0).item();
  const float both = transfer_loss_at(Granularity::kCombined, context(), sample, 0).item();
  EXPECT_NEAR(c2c, v2c, 1e-6f);
  EXPECT_NEAR(both, 2.0f * c2c, 1e-6f);
}

TEST_F(TransferFixture, VideoTargetIsMeanOfClipFeatures) {
  const Tensor clips = teacher_clip_features(*teacher, source, 4);
  ASSERT_EQ(clips.shape(), Shape({3, 6}));
  const Tensor video = teacher_video_feature(*teacher, source, 4);
  for (std::size_t d = 0; d < 6; ++d) {
    const float m = (clips.data()[d] + clips.data()[6 + d] + clips.data()[12 + d]) / 3.0f;
    EXPECT_NEAR(video.data()[d], m, 1e-6f);
  }
}

TEST_F(TransferFixture, CacheMatchesDirectTeacherFeatures) {
  const TeacherFeatureCache cache(*teacher, {&source, &one_clip_source}, 4);
  ASSERT_EQ(cache.size(), 2u);
  EXPECT_EQ(cache.clip_count(0), 3u);
  EXPECT_EQ(cache.clip_count(1), 1u);
  const Tensor clips = teacher_clip_features(*teacher, source, 4);
  for (std::size_t c = 0; c < 3; ++c) {
    const Tensor row = cache.clip_feature(0, c);
    for (std::size_t d = 0; d < 6; ++d) EXPECT_EQ(row.data()[d], clips.data()[c * 6 + d]);
  }
  const Tensor video = teacher_video_feature(*teacher, source, 4);
  for (std::size_t d = 0; d < 6; ++d) EXPECT_NEAR(cache.video_feature(0).data()[d], video.data()[d], 1e-6f);
  EXPECT_THROW(cache.clip_feature(1, 1), DataError);
}

TEST_F(TransferFixture, GradientReachesStudentAndProjectionOnly) {
  const TransferSample sample{&source, &target, 13};
  Tensor loss = transfer_loss_at(Granularity::kCombined, context(), sample, 1);
  loss.backward();
  for (const auto& p : student->backbone_parameters()) EXPECT_TRUE(p.value.has_grad()) << p.name;
  for (const auto& p : projection.parameters()) EXPECT_TRUE(p.value.has_grad()) << p.name;
  for (const auto& p : teacher->parameters()) EXPECT_FALSE(p.value.has_grad()) << p.name;
}

TEST_F(TransferFixture, RandomClipDrawStaysInRange) {
  const TransferSample sample{&source, &target, 13};
  Rng rng(1);
  std::vector<float> seen;
  for (int i = 0; i < 12; ++i) seen.push_back(transfer_loss(Granularity::kClipToClip, context(), sample, rng).item());
  std::vector<float> expected;
  for (std::size_t c = 0; c < 3; ++c)
    expected.push_back(transfer_loss_at(Granularity::kClipToClip, context(), sample, c).item());
  for (float v : seen) {
    EXPECT_TRUE(std::any_of(expected.begin(), expected.end(), [&](float e) { return std::abs(e - v) < 1e-6f; }));
  }
}

}  // namespace
}  // namespace modalbridge
