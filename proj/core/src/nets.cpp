// SPDX-License-Identifier: Apache-2.0
#include "modalbridge/nets.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "modalbridge/digest.hpp"

namespace modalbridge {

namespace {

Tensor kaiming(Shape shape, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  std::vector<float> values(shape_numel(shape));
  for (float& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor fresh_copy(const Tensor& t) { return t.defined() ? t.clone() : Tensor{}; }

[[noreturn]] void input_fail(const std::string& net, const std::string& expected,
                             const Shape& actual) {
  throw ShapeError(net + ": expected input " + expected + ", got " + shape_str(actual));
}

std::size_t downsampled(std::size_t extent, std::size_t stride) {
  return (extent + 2 - 3) / stride + 1;
}

}  // namespace

FreezePolicy parse_freeze_policy(std::string_view text) {
  if (text == "head_plus_last_block") return FreezePolicy::kHeadPlusLastBlock;
  if (text == "all_layers") return FreezePolicy::kAllLayers;
  throw std::invalid_argument("unknown freeze policy '" + std::string(text) +
                              "' (expected head_plus_last_block or all_layers)");
}

std::string_view to_string(FreezePolicy policy) {
  return policy == FreezePolicy::kHeadPlusLastBlock ? "head_plus_last_block" : "all_layers";
}

// ---------------------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight_(kaiming({in, out}, in, rng)), bias_(Tensor::zeros({out}, true)) {}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, weight_), bias_); }

Linear Linear::clone() const {
  Linear copy;
  copy.weight_ = fresh_copy(weight_);
  copy.bias_ = fresh_copy(bias_);
  return copy;
}

Conv3dLayer::Conv3dLayer(std::size_t in, std::size_t out, std::array<std::size_t, 3> kernel,
                         Conv3dOptions options, Rng& rng)
    : weight_(kaiming({out, in, kernel[0], kernel[1], kernel[2]},
                      in * kernel[0] * kernel[1] * kernel[2], rng)),
      bias_(Tensor::zeros({out}, true)),
      options_(options) {}

Conv3dLayer Conv3dLayer::clone() const {
  Conv3dLayer copy = *this;
  copy.weight_ = fresh_copy(weight_);
  copy.bias_ = fresh_copy(bias_);
  return copy;
}

// ---------------------------------------------------------------------------

Tensor Network::forward_classify(const NetInput& input) const {
  return head_.forward(forward_features(input));
}

std::vector<Parameter> Network::backbone_parameters() const {
  std::vector<Parameter> out;
  collect_backbone(out);
  return out;
}

std::vector<Parameter> Network::parameters() const {
  std::vector<Parameter> out = backbone_parameters();
  out.push_back({"head.weight", "head", head_.weight()});
  out.push_back({"head.bias", "head", head_.bias()});
  return out;
}

void Network::reset_head(std::size_t num_classes, Rng& rng) {
  head_ = Linear(feature_width(), num_classes, rng);
}

void Network::set_requires_grad(bool flag) {
  for (auto& p : parameters()) p.value.set_requires_grad(flag);
}

Checkpoint Network::to_checkpoint() const {
  Checkpoint ckpt;
  for (const auto& [key, value] : architecture()) ckpt.meta["arch." + key] = value;
  ckpt.meta["network"] = kind();
  ckpt.meta["num_classes"] = std::to_string(num_classes());
  // Snapshot: later training must not reach into a saved checkpoint.
  for (const auto& p : parameters()) ckpt.tensors.push_back({p.name, p.value.detach()});
  return ckpt;
}

void Network::load_parameters(const Checkpoint& ckpt) {
  for (auto& p : parameters()) {
    const Tensor& src = ckpt.at(p.name);
    if (src.shape() != p.value.shape()) {
      throw ShapeError("load_parameters: " + p.name + " expects " + shape_str(p.value.shape()) +
                       ", checkpoint has " + shape_str(src.shape()));
    }
    auto dst = p.value.mutable_data();
    std::copy(src.data().begin(), src.data().end(), dst.begin());
  }
}

// ---------------------------------------------------------------------------

Conv3dNetLite::Conv3dNetLite(const Conv3dNetConfig& config, Rng& rng) : config_(config) {
  if (config.num_blocks == 0) throw std::invalid_argument("conv3d net: num_blocks must be >= 1");
  Conv3dOptions stem_opt;
  stem_opt.stride = {1, 2, 2};
  stem_opt.padding = {1, 1, 1};
  stem_ = Conv3dLayer(config.in_channels, config.base_channels, {3, 3, 3}, stem_opt, rng);

  std::array<std::size_t, 3> extent{config.clip_len, downsampled(config.height, 2),
                                    downsampled(config.width, 2)};
  std::size_t channels = config.base_channels;
  for (std::size_t i = 0; i < config.num_blocks; ++i) {
    const std::size_t out = i + 1 == config.num_blocks ? config.feature_width
                                                        : config.base_channels << i;
    Conv3dOptions first;
    first.padding = {1, 1, 1};
    for (std::size_t d = 0; d < 3; ++d) {
      first.stride[d] = (i > 0 && extent[d] > 1) ? 2 : 1;
      extent[d] = downsampled(extent[d], first.stride[d]);
    }
    Conv3dOptions second;
    second.padding = {1, 1, 1};
    Block block;
    block.conv1 = Conv3dLayer(channels, out, {3, 3, 3}, first, rng);
    block.conv2 = Conv3dLayer(out, out, {3, 3, 3}, second, rng);
    if (out != channels || first.stride != std::array<std::size_t, 3>{1, 1, 1}) {
      Conv3dOptions proj;
      proj.stride = first.stride;
      block.skip = Conv3dLayer(channels, out, {1, 1, 1}, proj, rng);
      block.has_skip = true;
    }
    blocks_.push_back(std::move(block));
    channels = out;
  }
  head_ = Linear(config.feature_width, config.num_classes, rng);
}

Tensor Conv3dNetLite::forward_features(const NetInput& input) const {
  const Tensor& x = input.x;
  const std::string expected = "[N," + std::to_string(config_.in_channels) + "," +
                               std::to_string(config_.clip_len) + "," +
                               std::to_string(config_.height) + "," +
                               std::to_string(config_.width) + "]";
  if (x.rank() != 5 || x.dim(1) != config_.in_channels || x.dim(2) != config_.clip_len ||
      x.dim(3) != config_.height || x.dim(4) != config_.width) {
    input_fail("conv3d net", expected, x.shape());
  }
  Tensor h = relu(stem_.forward(x));
  for (const Block& b : blocks_) {
    Tensor y = b.conv2.forward(relu(b.conv1.forward(h)));
    h = relu(add(y, b.has_skip ? b.skip.forward(h) : h));
  }
  return global_avg_pool(h);
}

std::map<std::string, std::string> Conv3dNetLite::architecture() const {
  return {{"in_channels", std::to_string(config_.in_channels)},
          {"clip_len", std::to_string(config_.clip_len)},
          {"height", std::to_string(config_.height)},
          {"width", std::to_string(config_.width)},
          {"base_channels", std::to_string(config_.base_channels)},
          {"num_blocks", std::to_string(config_.num_blocks)},
          {"feature_width", std::to_string(config_.feature_width)}};
}

std::unique_ptr<Network> Conv3dNetLite::clone() const {
  std::unique_ptr<Conv3dNetLite> copy(new Conv3dNetLite(*this));
  copy->stem_ = stem_.clone();
  for (auto& b : copy->blocks_) {
    b.conv1 = b.conv1.clone();
    b.conv2 = b.conv2.clone();
    if (b.has_skip) b.skip = b.skip.clone();
  }
  copy->head_ = head_.clone();
  return copy;
}

void Conv3dNetLite::collect_backbone(std::vector<Parameter>& out) const {
  out.push_back({"stem.weight", "stem", stem_.weight()});
  out.push_back({"stem.bias", "stem", stem_.bias()});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string group = "block" + std::to_string(i);
    const Block& b = blocks_[i];
    out.push_back({group + ".conv1.weight", group, b.conv1.weight()});
    out.push_back({group + ".conv1.bias", group, b.conv1.bias()});
    out.push_back({group + ".conv2.weight", group, b.conv2.weight()});
    out.push_back({group + ".conv2.bias", group, b.conv2.bias()});
    if (b.has_skip) {
      out.push_back({group + ".skip.weight", group, b.skip.weight()});
      out.push_back({group + ".skip.bias", group, b.skip.bias()});
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::size_t, std::size_t>> default_skeleton_edges() {
  // 0 torso, 1 head, 2/3 shoulders, 4/5 hands, 6/7 feet
  return {{0, 1}, {0, 2}, {0, 3}, {2, 4}, {3, 5}, {0, 6}, {0, 7}};
}

Tensor normalized_adjacency(std::size_t joints,
                            const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<double> a(joints * joints, 0.0);
  for (std::size_t j = 0; j < joints; ++j) a[j * joints + j] = 1.0;
  for (auto [u, v] : edges) {
    if (u >= joints || v >= joints) {
      throw std::invalid_argument("skeleton edge (" + std::to_string(u) + "," + std::to_string(v) +
                                  ") outside " + std::to_string(joints) + " joints");
    }
    a[u * joints + v] = 1.0;
    a[v * joints + u] = 1.0;
  }
  std::vector<double> inv_sqrt_deg(joints, 0.0);
  for (std::size_t i = 0; i < joints; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < joints; ++j) deg += a[i * joints + j];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  std::vector<float> out(joints * joints);
  for (std::size_t i = 0; i < joints; ++i)
    for (std::size_t j = 0; j < joints; ++j)
      out[i * joints + j] = static_cast<float>(inv_sqrt_deg[i] * a[i * joints + j] * inv_sqrt_deg[j]);
  return Tensor::from({joints, joints}, std::move(out));
}

SkeletonGraphNetLite::SkeletonGraphNetLite(const SkeletonNetConfig& config, Rng& rng)
    : config_(config) {
  if (config_.edges.empty()) config_.edges = default_skeleton_edges();
  if (config_.num_blocks == 0) throw std::invalid_argument("skeleton net: num_blocks must be >= 1");
  if (config_.temporal_kernel % 2 == 0) {
    throw std::invalid_argument("skeleton net: temporal kernel must be odd");
  }
  adjacency_ = normalized_adjacency(config_.joints, config_.edges);
  std::size_t channels = config_.coord_channels;
  for (std::size_t i = 0; i < config_.num_blocks; ++i) {
    const std::size_t out = i + 1 == config_.num_blocks ? config_.feature_width
                                                         : config_.base_channels << i;
    Conv3dOptions temporal;
    temporal.padding = {config_.temporal_kernel / 2, 0, 0};
    Block b;
    b.spatial = Conv3dLayer(channels, out, {1, 1, 1}, {}, rng);
    b.temporal = Conv3dLayer(out, out, {config_.temporal_kernel, 1, 1}, temporal, rng);
    blocks_.push_back(std::move(b));
    channels = out;
  }
  head_ = Linear(config_.feature_width, config_.num_classes, rng);
}

Tensor SkeletonGraphNetLite::forward_features(const NetInput& input) const {
  const Tensor& x = input.x;
  const std::size_t j = config_.joints;
  if (x.rank() != 4 || x.dim(1) != config_.coord_channels || x.dim(3) != j || x.dim(2) < 2) {
    input_fail("skeleton net",
               "[N," + std::to_string(config_.coord_channels) + ",T>=2," + std::to_string(j) + "]",
               x.shape());
  }
  const std::size_t n = x.dim(0), t = x.dim(2);
  std::vector<std::size_t> valid = input.valid_frames;
  if (valid.empty()) valid.assign(n, t);
  if (valid.size() != n) {
    throw ShapeError("skeleton net: " + std::to_string(valid.size()) +
                     " valid_frames entries for batch of " + std::to_string(n));
  }
  std::vector<float> mask_values(n * t, 0.0f);
  std::vector<float> inv_count(n);
  for (std::size_t s = 0; s < n; ++s) {
    if (valid[s] < 2 || valid[s] > t) {
      throw ShapeError("skeleton net: valid frame count " + std::to_string(valid[s]) +
                       " outside [2," + std::to_string(t) + "]");
    }
    std::fill_n(mask_values.begin() + static_cast<std::ptrdiff_t>(s * t), valid[s], 1.0f);
    inv_count[s] = 1.0f / static_cast<float>(valid[s] * j);
  }
  const Tensor mask = Tensor::from({n, 1, t, 1, 1}, std::move(mask_values));

  Tensor h = mul(reshape(x, {n, config_.coord_channels, t, j, 1}), mask);
  std::size_t channels = config_.coord_channels;
  for (const Block& b : blocks_) {
    Tensor agg = matmul(reshape(h, {n * channels * t, j}), adjacency_);
    Tensor mixed = mul(b.spatial.forward(reshape(agg, {n, channels, t, j, 1})), mask);
    h = mul(relu(b.temporal.forward(mixed)), mask);
    channels = b.spatial.weight().dim(0);
  }
  Tensor pooled = sum(reshape(h, {n, channels, t * j}), 2);
  return mul(pooled, Tensor::from({n, 1}, std::move(inv_count)));
}

std::map<std::string, std::string> SkeletonGraphNetLite::architecture() const {
  std::string edges;
  for (auto [u, v] : config_.edges) {
    edges += (edges.empty() ? "" : ",") + std::to_string(u) + "-" + std::to_string(v);
  }
  return {{"joints", std::to_string(config_.joints)},
          {"coord_channels", std::to_string(config_.coord_channels)},
          {"edges", edges},
          {"base_channels", std::to_string(config_.base_channels)},
          {"num_blocks", std::to_string(config_.num_blocks)},
          {"temporal_kernel", std::to_string(config_.temporal_kernel)},
          {"feature_width", std::to_string(config_.feature_width)}};
}

std::unique_ptr<Network> SkeletonGraphNetLite::clone() const {
  std::unique_ptr<SkeletonGraphNetLite> copy(new SkeletonGraphNetLite(*this));
  for (auto& b : copy->blocks_) {
    b.spatial = b.spatial.clone();
    b.temporal = b.temporal.clone();
  }
  copy->adjacency_ = adjacency_.clone();
  copy->head_ = head_.clone();
  return copy;
}

void SkeletonGraphNetLite::collect_backbone(std::vector<Parameter>& out) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string group = "block" + std::to_string(i);
    out.push_back({group + ".spatial.weight", group, blocks_[i].spatial.weight()});
    out.push_back({group + ".spatial.bias", group, blocks_[i].spatial.bias()});
    out.push_back({group + ".temporal.weight", group, blocks_[i].temporal.weight()});
    out.push_back({group + ".temporal.bias", group, blocks_[i].temporal.bias()});
  }
}

// ---------------------------------------------------------------------------

FeatureProjection::FeatureProjection(std::size_t student_width, std::size_t teacher_width,
                                     Rng& rng)
    : out_width_(teacher_width) {
  if (student_width != teacher_width) linear_ = Linear(student_width, teacher_width, rng);
}

Tensor FeatureProjection::forward(const Tensor& features) const {
  return is_identity() ? features : linear_.forward(features);
}

std::vector<Parameter> FeatureProjection::parameters() const {
  if (is_identity()) return {};
  return {{"projection.weight", "projection", linear_.weight()},
          {"projection.bias", "projection", linear_.bias()}};
}

ParameterPartition split_parameters(const Network& net, FreezePolicy policy) {
  ParameterPartition part;
  const std::string last = "block" + std::to_string(net.num_blocks() - 1);
  for (auto& p : net.parameters()) {
    const bool train = policy == FreezePolicy::kAllLayers || p.group == "head" || p.group == last;
    (train ? part.trainable : part.frozen).push_back(std::move(p));
  }
  return part;
}

std::vector<Tensor> tensors_of(const std::vector<Parameter>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value);
  return out;
}

std::string parameter_digest(const Network& net) {
  Sha256 h;
  for (const auto& p : net.parameters()) {
    h.update(p.name);
    h.update(shape_str(p.value.shape()));
    const auto d = p.value.data();
    h.update(std::string_view(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(float)));
  }
  return h.hex();
}

}  // namespace modalbridge
