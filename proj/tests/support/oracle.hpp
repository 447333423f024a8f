// SPDX-License-Identifier: Apache-2.0
//
// Test-side oracles: naive double-precision reference implementations of
// every differentiable op, written without sharing code with the library,
// and a central-difference gradient checker built on them.
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "modalbridge/data.hpp"
#include "modalbridge/nets.hpp"
#include "modalbridge/ops.hpp"
#include "modalbridge/tensor.hpp"

namespace modalbridge::oracle {

struct Array {
  Shape shape;
  std::vector<double> v;

  std::size_t size() const { return v.size(); }
};

Array to_array(const Tensor& t);
Tensor to_tensor(const Array& a, bool requires_grad = false);

// --- reference forwards -------------------------------------------------------

Array ref_binary(const Array& a, const Array& b, const std::function<double(double, double)>& f);
Array ref_unary(const Array& a, const std::function<double(double)>& f);
Array ref_matmul(const Array& a, const Array& b);
Array ref_conv3d(const Array& x, const Array& w, const Array* bias,
                 std::array<std::size_t, 3> stride, std::array<std::size_t, 3> padding);
Array ref_max_pool3d(const Array& x, std::array<std::size_t, 3> kernel,
                     std::array<std::size_t, 3> stride);
Array ref_global_avg_pool(const Array& x);
Array ref_reduce(const Array& x, std::size_t axis, bool average);
Array ref_reduce_all(const Array& x, bool average);
Array ref_concat(const std::vector<Array>& parts, std::size_t axis);
Array ref_softmax(const Array& x);
Array ref_l2_norm(const Array& x);
Array ref_dot(const Array& a, const Array& b);
Array ref_cross_entropy(const Array& logits, const std::vector<int>& labels);
Array ref_cosine_distance(const Array& a, const Array& b, double eps);
Array ref_mse_distance(const Array& a, const Array& b);

// --- video-level aggregation ------------------------------------------------

// Per-video class probabilities computed one clip at a time, with the window
// slicing, channel replication, softmax and averaging done here in double.
// Clip streams use every non-overlapping window; skeletons use one pass over
// the whole sequence.
std::vector<std::vector<double>> ref_video_scores(const Network& net, Modality modality,
                                                  std::size_t input_channels,
                                                  const std::vector<PairedVideo>& videos,
                                                  std::size_t clip_len, std::size_t canvas);

// --- gradient checking --------------------------------------------------------

struct GradCase {
  std::string op;
  std::string shapes;
  double forward_error = 0.0;   // max |float forward - reference| / (1 + |reference|)
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  std::size_t inputs = 0;       // scalar inputs perturbed
};

using FloatFn = std::function<Tensor(const std::vector<Tensor>&)>;
using RefFn = std::function<Array(const std::vector<Array>&)>;

// Projects the output onto fixed random weights and compares the library's
// gradient of that scalar with central differences of the reference.
GradCase check_gradient(const std::string& op, const std::vector<Array>& inputs,
                        const FloatFn& fn, const RefFn& ref, std::mt19937_64& rng,
                        double step = 1e-6);

// Every differentiable op on at least three shapes each.
std::vector<GradCase> gradient_suite(std::uint64_t seed);

// Random helpers.
Array random_array(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);
// Values bounded away from zero by `margin` in magnitude.
Array random_nonzero(Shape shape, std::mt19937_64& rng, double margin, double hi = 1.0);
// Pairwise distinct values (no ties for max selections).
Array random_distinct(Shape shape, std::mt19937_64& rng);

}  // namespace modalbridge::oracle
