// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operation set. Every op validates shapes up front and
// throws ShapeError naming the op and the offending shapes.
//
// Elementwise binary ops broadcast numpy-style (trailing axes aligned,
// size-1 axes stretched). Reductions drop the reduced axis; reducing a
// rank-1 tensor yields shape [1].
#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "modalbridge/tensor.hpp"

namespace modalbridge {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

struct Conv3dOptions {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{0, 0, 0};
};

// input [N,C,T,H,W], weight [O,C,kt,kh,kw], bias [O] or undefined.
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Conv3dOptions& options = {});

// input [N,C,T,H,W]; no padding, windows must fit.
Tensor max_pool3d(const Tensor& input, std::array<std::size_t, 3> kernel,
                  std::array<std::size_t, 3> stride);
// [N,C,T,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& input);

Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);

Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

// Along the last axis.
Tensor softmax(const Tensor& x);
Tensor l2_norm(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);

// Mean negative log-likelihood of `labels` under softmax(logits).
// logits [N,K]; computed through a shifted log-sum-exp.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

}  // namespace modalbridge
