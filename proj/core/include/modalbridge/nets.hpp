// SPDX-License-Identifier: Apache-2.0
//
// Network zoo: a residual 3D-convolutional clip network used for both the
// teacher and the depth student, and a spatio-temporal graph-convolution
// network for whole skeleton sequences. Both expose the activation right
// before the classification head as their feature vector.
#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "modalbridge/checkpoint.hpp"
#include "modalbridge/ops.hpp"
#include "modalbridge/random.hpp"
#include "modalbridge/tensor.hpp"

namespace modalbridge {

enum class FreezePolicy { kHeadPlusLastBlock, kAllLayers };

FreezePolicy parse_freeze_policy(std::string_view text);
std::string_view to_string(FreezePolicy policy);

// Batched network input. `valid_frames` is only consulted by sequence
// networks: frames at or beyond valid_frames[n] are padding for sample n.
struct NetInput {
  Tensor x;
  std::vector<std::size_t> valid_frames;
};

struct Parameter {
  std::string name;
  std::string group;  // "stem", "block<i>", "head", "projection"
  Tensor value;
};

// Kaiming fan-in normal weights (stored [in,out]), zero bias.
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);

  Tensor forward(const Tensor& x) const;
  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  Linear clone() const;

 private:
  Tensor weight_;
  Tensor bias_;
};

class Conv3dLayer {
 public:
  Conv3dLayer() = default;
  Conv3dLayer(std::size_t in, std::size_t out, std::array<std::size_t, 3> kernel,
              Conv3dOptions options, Rng& rng);

  Tensor forward(const Tensor& x) const { return conv3d(x, weight_, bias_, options_); }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  Conv3dLayer clone() const;

 private:
  Tensor weight_;
  Tensor bias_;
  Conv3dOptions options_;
};

class Network {
 public:
  virtual ~Network() = default;

  virtual std::string kind() const = 0;
  virtual Tensor forward_features(const NetInput& input) const = 0;
  virtual std::unique_ptr<Network> clone() const = 0;
  virtual std::size_t feature_width() const = 0;
  virtual std::size_t num_blocks() const = 0;
  // Constructor arguments as string tags, enough to rebuild the network.
  virtual std::map<std::string, std::string> architecture() const = 0;

  Tensor forward_classify(const NetInput& input) const;
  std::size_t num_classes() const { return head_.out_features(); }

  // Backbone parameters followed by the head.
  std::vector<Parameter> parameters() const;
  std::vector<Parameter> backbone_parameters() const;

  // Fresh classification head for a new label set.
  void reset_head(std::size_t num_classes, Rng& rng);
  Linear& head() { return head_; }
  const Linear& head() const { return head_; }

  void set_requires_grad(bool flag);

  Checkpoint to_checkpoint() const;
  // Copies values by parameter name; shapes must match exactly.
  void load_parameters(const Checkpoint& ckpt);

 protected:
  virtual void collect_backbone(std::vector<Parameter>& out) const = 0;
  Linear head_;
};

struct Conv3dNetConfig {
  std::size_t in_channels = 3;
  std::size_t clip_len = 8;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t base_channels = 8;
  std::size_t num_blocks = 3;
  std::size_t feature_width = 64;
  std::size_t num_classes = 2;
};

// stem conv (stride 1,2,2) -> relu -> B residual blocks -> global average pool.
// Block i: relu(conv(relu(conv(x))) + skip(x)); blocks after the first
// downsample by 2 where the extent allows. The last block has
// `feature_width` channels, earlier ones base_channels * 2^i.
class Conv3dNetLite final : public Network {
 public:
  Conv3dNetLite(const Conv3dNetConfig& config, Rng& rng);

  std::string kind() const override { return "conv3d"; }
  Tensor forward_features(const NetInput& input) const override;
  std::unique_ptr<Network> clone() const override;
  std::size_t feature_width() const override { return config_.feature_width; }
  std::size_t num_blocks() const override { return blocks_.size(); }
  std::map<std::string, std::string> architecture() const override;
  const Conv3dNetConfig& config() const { return config_; }

 protected:
  void collect_backbone(std::vector<Parameter>& out) const override;

 private:
  struct Block {
    Conv3dLayer conv1;
    Conv3dLayer conv2;
    Conv3dLayer skip;  // empty when the block preserves shape
    bool has_skip = false;
  };

  Conv3dNetLite() = default;

  Conv3dNetConfig config_;
  Conv3dLayer stem_;
  std::vector<Block> blocks_;
};

struct SkeletonNetConfig {
  std::size_t joints = 8;
  std::size_t coord_channels = 2;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // empty -> default_skeleton_edges()
  std::size_t base_channels = 16;
  std::size_t num_blocks = 3;
  std::size_t temporal_kernel = 5;
  std::size_t feature_width = 64;
  std::size_t num_classes = 2;
};

// Bones of the 8-joint synthetic skeleton (torso-rooted star with limbs).
std::vector<std::pair<std::size_t, std::size_t>> default_skeleton_edges();

// D^-1/2 (A + I) D^-1/2 for an undirected edge list, as a [J,J] tensor.
Tensor normalized_adjacency(std::size_t joints,
                            const std::vector<std::pair<std::size_t, std::size_t>>& edges);

// Input [N, coord_channels, T, J] with per-sample valid frame counts.
// Block: graph aggregation with the normalized adjacency, pointwise channel
// mixing, temporal conv over frames, relu. Padding frames are masked to
// zero before every temporal conv and pooling averages valid frames only.
class SkeletonGraphNetLite final : public Network {
 public:
  SkeletonGraphNetLite(const SkeletonNetConfig& config, Rng& rng);

  std::string kind() const override { return "skeleton_gcn"; }
  Tensor forward_features(const NetInput& input) const override;
  std::unique_ptr<Network> clone() const override;
  std::size_t feature_width() const override { return config_.feature_width; }
  std::size_t num_blocks() const override { return blocks_.size(); }
  std::map<std::string, std::string> architecture() const override;
  const Tensor& adjacency() const { return adjacency_; }
  const SkeletonNetConfig& config() const { return config_; }

 protected:
  void collect_backbone(std::vector<Parameter>& out) const override;

 private:
  struct Block {
    Conv3dLayer spatial;   // 1x1x1 channel mixing after graph aggregation
    Conv3dLayer temporal;  // (k,1,1) over frames
  };

  SkeletonGraphNetLite() = default;

  SkeletonNetConfig config_;
  Tensor adjacency_;
  std::vector<Block> blocks_;
};

// Maps student features (D_s) onto the teacher feature width (D_t).
class FeatureProjection {
 public:
  FeatureProjection() = default;
  // Identity when widths agree.
  FeatureProjection(std::size_t student_width, std::size_t teacher_width, Rng& rng);

  bool is_identity() const { return !linear_.weight().defined(); }
  Tensor forward(const Tensor& features) const;
  std::vector<Parameter> parameters() const;
  std::size_t out_width() const { return out_width_; }

 private:
  Linear linear_;
  std::size_t out_width_ = 0;
};

struct ParameterPartition {
  std::vector<Parameter> frozen;
  std::vector<Parameter> trainable;
};

ParameterPartition split_parameters(const Network& net, FreezePolicy policy);

std::vector<Tensor> tensors_of(const std::vector<Parameter>& params);

// SHA-256 over names, shapes and values of all parameters.
std::string parameter_digest(const Network& net);

}  // namespace modalbridge
