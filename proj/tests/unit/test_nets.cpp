// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "modalbridge/digest.hpp"
#include "modalbridge/nets.hpp"
#include "modalbridge/pipeline.hpp"

namespace modalbridge {
namespace {

Conv3dNetConfig small_conv() {
  Conv3dNetConfig c;
  c.in_channels = 2;
  c.clip_len = 4;
  c.height = 8;
  c.width = 8;
  c.base_channels = 4;
  c.num_blocks = 3;
  c.feature_width = 6;
  c.num_classes = 3;
  return c;
}

SkeletonNetConfig small_skeleton() {
  SkeletonNetConfig c;
  c.base_channels = 4;
  c.num_blocks = 2;
  c.temporal_kernel = 3;
  c.feature_width = 5;
  c.num_classes = 3;
  return c;
}

Tensor random_input(Shape shape, Rng& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::size_t count = 1;
  for (auto d : shape) count *= d;
  std::vector<float> v(count);
  for (auto& x : v) x = n(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

TEST(Conv3dNet, OutputShapes) {
  Rng rng(1);
  Conv3dNetLite net(small_conv(), rng);
  const NetInput in{random_input({5, 2, 4, 8, 8}, rng), {}};
  EXPECT_EQ(net.forward_features(in).shape(), Shape({5, 6}));
  EXPECT_EQ(net.forward_classify(in).shape(), Shape({5, 3}));
  EXPECT_THROW(net.forward_features({random_input({1, 3, 4, 8, 8}, rng), {}}), ShapeError);
}

TEST(Conv3dNet, FeaturesAreNonNegative) {
  Rng rng(2);
  Conv3dNetLite net(small_conv(), rng);
  const Tensor f = net.forward_features({random_input({3, 2, 4, 8, 8}, rng), {}});
  for (float v : f.data()) EXPECT_GE(v, 0.0f);
}

TEST(Networks, FreezePartitionCoversEveryParameterOnce) {
  Rng rng(3);
  Conv3dNetLite conv(small_conv(), rng);
  SkeletonGraphNetLite skel(small_skeleton(), rng);
  for (const Network* net : {static_cast<const Network*>(&conv), static_cast<const Network*>(&skel)}) {
    const std::string last = "block" + std::to_string(net->num_blocks() - 1);
    const auto all = net->parameters();
    for (FreezePolicy policy : {FreezePolicy::kHeadPlusLastBlock, FreezePolicy::kAllLayers}) {
      const auto part = split_parameters(*net, policy);
      EXPECT_EQ(part.frozen.size() + part.trainable.size(), all.size());
      std::set<std::string> names;
      for (const auto& p : part.frozen) names.insert(p.name);
      for (const auto& p : part.trainable) names.insert(p.name);
      EXPECT_EQ(names.size(), all.size());
      if (policy == FreezePolicy::kAllLayers) {
        EXPECT_TRUE(part.frozen.empty());
      } else {
        EXPECT_FALSE(part.frozen.empty());
        for (const auto& p : part.trainable) EXPECT_TRUE(p.group == "head" || p.group == last) << p.name;
        for (const auto& p : part.frozen) EXPECT_TRUE(p.group != "head" && p.group != last) << p.name;
      }
    }
  }
}

TEST(Networks, CloneIsIndependent) {
  Rng rng(4);
  Conv3dNetLite net(small_conv(), rng);
  auto copy = net.clone();
  EXPECT_EQ(parameter_digest(net), parameter_digest(*copy));
  copy->parameters().front().value.mutable_data()[0] += 1.0f;
  EXPECT_NE(parameter_digest(net), parameter_digest(*copy));
}

TEST(Networks, CheckpointRebuildsIdenticalNetwork) {
  Rng rng(5);
  Conv3dNetLite conv(small_conv(), rng);
  SkeletonGraphNetLite skel(small_skeleton(), rng);
  for (const Network* net : {static_cast<const Network*>(&conv), static_cast<const Network*>(&skel)}) {
    const auto rebuilt = network_from_checkpoint(decode_checkpoint(encode_checkpoint(net->to_checkpoint())));
    EXPECT_EQ(rebuilt->kind(), net->kind());
    EXPECT_EQ(rebuilt->architecture(), net->architecture());
    EXPECT_EQ(parameter_digest(*rebuilt), parameter_digest(*net));
  }
}

TEST(Networks, CheckpointIsASnapshot) {
  Rng rng(10);
  Conv3dNetLite net(small_conv(), rng);
  const Checkpoint saved = net.to_checkpoint();
  const std::string before = sha256_hex(encode_checkpoint(saved));
  net.parameters().front().value.mutable_data()[0] += 1.0f;
  EXPECT_EQ(sha256_hex(encode_checkpoint(saved)), before);
}

TEST(Networks, LoadParametersRejectsShapeMismatch) {
  Rng rng(6);
  Conv3dNetLite a(small_conv(), rng);
  auto cfg = small_conv();
  cfg.feature_width = 7;
  Conv3dNetLite b(cfg, rng);
  EXPECT_THROW(b.load_parameters(a.to_checkpoint()), ShapeError);
}

TEST(Networks, ResetHeadKeepsBackbone) {
  Rng rng(7);
  Conv3dNetLite net(small_conv(), rng);
  auto before = net.backbone_parameters();
  std::vector<std::vector<float>> values;
  for (const auto& p : before) values.emplace_back(p.value.data().begin(), p.value.data().end());
  net.reset_head(5, rng);
  EXPECT_EQ(net.num_classes(), 5u);
  const auto after = net.backbone_parameters();
  for (std::size_t i = 0; i < after.size(); ++i) {
    EXPECT_EQ(std::vector<float>(after[i].value.data().begin(), after[i].value.data().end()), values[i]);
  }
}

TEST(SkeletonNet, AdjacencyIsSymmetricWithSqrtDegreeEigenvector) {
  const auto edges = default_skeleton_edges();
  const std::size_t j = 8;
  const Tensor a = normalized_adjacency(j, edges);
  std::vector<double> degree(j, 1.0);
  for (auto [u, v] : edges) degree[u] += 1.0, degree[v] += 1.0;
  for (std::size_t r = 0; r < j; ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < j; ++c) {
      EXPECT_FLOAT_EQ(a.data()[r * j + c], a.data()[c * j + r]);
      dot += a.data()[r * j + c] * std::sqrt(degree[c]);
    }
    EXPECT_NEAR(dot, std::sqrt(degree[r]), 1e-5);
  }
  EXPECT_THROW(normalized_adjacency(3, {{0, 3}}), std::invalid_argument);
}

TEST(SkeletonNet, PaddingDoesNotChangeFeatures) {
  Rng rng(8);
  SkeletonGraphNetLite net(small_skeleton(), rng);
  const Tensor shortseq = random_input({1, 2, 6, 8}, rng);
  const Tensor alone = net.forward_features({shortseq, {6}});

  // Same sequence zero padded to 10 frames next to a full-length one.
  std::vector<float> padded(2 * 2 * 10 * 8, 0.0f);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t k = 0; k < 8; ++k)
        padded[(c * 10 + t) * 8 + k] = shortseq.data()[(c * 6 + t) * 8 + k];
  const Tensor other = random_input({1, 2, 10, 8}, rng);
  for (std::size_t i = 0; i < other.numel(); ++i) padded[2 * 10 * 8 + i] = other.data()[i];
  // Garbage beyond the valid length must be ignored too.
  padded[(0 * 10 + 8) * 8 + 3] = 50.0f;
  const Tensor both = net.forward_features({Tensor::from({2, 2, 10, 8}, padded), {6, 10}});
  for (std::size_t d = 0; d < 5; ++d) EXPECT_NEAR(both.data()[d], alone.data()[d], 1e-5);
  EXPECT_THROW(net.forward_features({shortseq, {7}}), ShapeError);
  EXPECT_THROW(net.forward_features({shortseq, {6, 6}}), ShapeError);
  // No valid_frames means every frame is valid.
  const Tensor implicit = net.forward_features({shortseq, {}});
  for (std::size_t d = 0; d < 5; ++d) EXPECT_EQ(implicit.data()[d], alone.data()[d]);
}

TEST(FeatureProjection, IdentityWhenWidthsAgree) {
  Rng rng(9);
  FeatureProjection same(6, 6, rng);
  EXPECT_TRUE(same.is_identity());
  EXPECT_TRUE(same.parameters().empty());
  FeatureProjection map(5, 6, rng);
  EXPECT_FALSE(map.is_identity());
  EXPECT_EQ(map.forward(Tensor::zeros({3, 5})).shape(), Shape({3, 6}));
}

TEST(FreezePolicy, ParsesKnownNames) {
  EXPECT_EQ(parse_freeze_policy("all_layers"), FreezePolicy::kAllLayers);
  EXPECT_EQ(parse_freeze_policy("head_plus_last_block"), FreezePolicy::kHeadPlusLastBlock);
  EXPECT_THROW(parse_freeze_policy("head_only"), std::invalid_argument);
}

}  // namespace
}  // namespace modalbridge
