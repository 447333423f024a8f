// SPDX-License-Identifier: Apache-2.0
#include "modalbridge/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace modalbridge {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

[[noreturn]] void shape_fail(const char* op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  shape_fail(op, "incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_fail(op, "expected rank " + std::to_string(rank) + " input, got " +
                       shape_str(t.shape()));
  }
}

detail::Node& parent(detail::Node& self, std::size_t i) { return *self.parents[i]; }
bool wants_grad(detail::Node& self, std::size_t i) {
  return self.parents[i] && self.parents[i]->requires_grad;
}

// ---------------------------------------------------------------------------
// Broadcasting

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i + a.size() >= rank ? a[i + a.size() - rank] : 1;
    const std::size_t db = i + b.size() >= rank ? b[i + b.size() - rank] : 1;
    if (da != db && da != 1 && db != 1) shape_fail(op, a, b);
    out[i] = std::max(da, db);
  }
  return out;
}

// Offset into `in` for every element of `out` under broadcasting.
std::vector<std::size_t> broadcast_offsets(const Shape& out, const Shape& in) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> in_stride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t j = in.size() - 1 - k;
    const std::size_t i = rank - 1 - k;
    in_stride[i] = in[j] == 1 ? 0 : stride;
    stride *= in[j];
  }
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> offsets(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t e = 0; e < n; ++e) {
    offsets[e] = off;
    for (std::size_t i = rank; i-- > 0;) {
      ++idx[i];
      off += in_stride[i];
      if (idx[i] < out[i]) break;
      off -= in_stride[i] * idx[i];
      idx[i] = 0;
    }
  }
  return offsets;
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

Tensor binary(const char* op, BinaryKind kind, const Tensor& a, const Tensor& b) {
  const Shape out_shape = broadcast_shape(op, a.shape(), b.shape());
  const bool same = a.shape() == b.shape();
  const std::size_t n = shape_numel(out_shape);
  auto ao = same ? std::vector<std::size_t>{} : broadcast_offsets(out_shape, a.shape());
  auto bo = same ? std::vector<std::size_t>{} : broadcast_offsets(out_shape, b.shape());

  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<float> out(n);
  auto apply = [kind](float x, float y) {
    switch (kind) {
      case BinaryKind::kAdd: return x + y;
      case BinaryKind::kSub: return x - y;
      case BinaryKind::kMul: return x * y;
      case BinaryKind::kDiv: return x / y;
    }
    return 0.0f;
  };
  if (same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = apply(ad[i], bd[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = apply(ad[ao[i]], bd[bo[i]]);
  }

  return Tensor::make_result(
      out_shape, std::move(out), op, {a, b},
      [kind, same, ao = std::move(ao), bo = std::move(bo)](detail::Node& self) {
        const auto& g = self.grad;
        const std::size_t count = g.size();
        auto ia = [&](std::size_t i) { return same ? i : ao[i]; };
        auto ib = [&](std::size_t i) { return same ? i : bo[i]; };
        const auto& xa = parent(self, 0).data;
        const auto& xb = parent(self, 1).data;
        if (wants_grad(self, 0)) {
          auto& ga = parent(self, 0).ensure_grad();
          for (std::size_t i = 0; i < count; ++i) {
            float d = g[i];
            if (kind == BinaryKind::kMul) d *= xb[ib(i)];
            if (kind == BinaryKind::kDiv) d /= xb[ib(i)];
            ga[ia(i)] += d;
          }
        }
        if (wants_grad(self, 1)) {
          auto& gb = parent(self, 1).ensure_grad();
          for (std::size_t i = 0; i < count; ++i) {
            float d = g[i];
            if (kind == BinaryKind::kSub) d = -d;
            if (kind == BinaryKind::kMul) d *= xa[ia(i)];
            if (kind == BinaryKind::kDiv) {
              const float y = xb[ib(i)];
              d = -d * xa[ia(i)] / (y * y);
            }
            gb[ib(i)] += d;
          }
        }
      });
}

// Splits `shape` around `axis` into outer * extent * inner.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out = shape;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out.empty()) out.push_back(1);
  return out;
}

Tensor reduce_axis(const char* op, const Tensor& x, std::size_t axis, float factor) {
  if (axis >= x.rank()) {
    shape_fail(op, "axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  const auto xd = x.data();
  std::vector<float> out(s.outer * s.inner, 0.0f);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const float* src = xd.data() + (o * s.extent + e) * s.inner;
      float* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  if (factor != 1.0f) {
    for (float& v : out) v *= factor;
  }
  return Tensor::make_result(drop_axis(x.shape(), axis), std::move(out), op, {x},
                             [s, factor](detail::Node& self) {
                               auto& gx = parent(self, 0).ensure_grad();
                               for (std::size_t o = 0; o < s.outer; ++o) {
                                 const float* g = self.grad.data() + o * s.inner;
                                 for (std::size_t e = 0; e < s.extent; ++e) {
                                   float* dst = gx.data() + (o * s.extent + e) * s.inner;
                                   for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[i] * factor;
                                 }
                               }
                             });
}

// ---------------------------------------------------------------------------
// conv3d helpers

struct ConvGeometry {
  std::size_t n, c, t, h, w;
  std::size_t o, kt, kh, kw;
  std::size_t ot, oh, ow;
  Conv3dOptions opt;
  std::size_t ck() const { return c * kt * kh * kw; }
  std::size_t positions() const { return ot * oh * ow; }
  std::size_t in_volume() const { return c * t * h * w; }
  bool pointwise() const {
    return kt == 1 && kh == 1 && kw == 1 && opt.stride == std::array<std::size_t, 3>{1, 1, 1} &&
           opt.padding == std::array<std::size_t, 3>{0, 0, 0};
  }
};

std::size_t out_extent(const char* op, std::size_t in, std::size_t k, std::size_t stride,
                       std::size_t pad) {
  if (stride == 0) shape_fail(op, "stride must be positive");
  if (in + 2 * pad < k) {
    shape_fail(op, "kernel extent " + std::to_string(k) + " exceeds padded input extent " +
                       std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

void im2col(const float* x, const ConvGeometry& g, float* col) {
  const std::size_t p = g.positions();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    const float* xc = x + ci * g.t * g.h * g.w;
    for (std::size_t dt = 0; dt < g.kt; ++dt) {
      for (std::size_t dh = 0; dh < g.kh; ++dh) {
        for (std::size_t dw = 0; dw < g.kw; ++dw) {
          float* row = col + (((ci * g.kt + dt) * g.kh + dh) * g.kw + dw) * p;
          for (std::size_t ot = 0; ot < g.ot; ++ot) {
            const auto ti = static_cast<std::ptrdiff_t>(ot * g.opt.stride[0] + dt) -
                            static_cast<std::ptrdiff_t>(g.opt.padding[0]);
            for (std::size_t oh = 0; oh < g.oh; ++oh) {
              const auto hi = static_cast<std::ptrdiff_t>(oh * g.opt.stride[1] + dh) -
                              static_cast<std::ptrdiff_t>(g.opt.padding[1]);
              float* dst = row + (ot * g.oh + oh) * g.ow;
              if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(g.t) || hi < 0 ||
                  hi >= static_cast<std::ptrdiff_t>(g.h)) {
                std::fill(dst, dst + g.ow, 0.0f);
                continue;
              }
              const float* src = xc + (static_cast<std::size_t>(ti) * g.h + static_cast<std::size_t>(hi)) * g.w;
              for (std::size_t ow = 0; ow < g.ow; ++ow) {
                const auto wi = static_cast<std::ptrdiff_t>(ow * g.opt.stride[2] + dw) -
                                static_cast<std::ptrdiff_t>(g.opt.padding[2]);
                dst[ow] = (wi < 0 || wi >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0f : src[wi];
              }
            }
          }
        }
      }
    }
  }
}

void col2im(const float* col, const ConvGeometry& g, float* x) {
  const std::size_t p = g.positions();
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    float* xc = x + ci * g.t * g.h * g.w;
    for (std::size_t dt = 0; dt < g.kt; ++dt) {
      for (std::size_t dh = 0; dh < g.kh; ++dh) {
        for (std::size_t dw = 0; dw < g.kw; ++dw) {
          const float* row = col + (((ci * g.kt + dt) * g.kh + dh) * g.kw + dw) * p;
          for (std::size_t ot = 0; ot < g.ot; ++ot) {
            const auto ti = static_cast<std::ptrdiff_t>(ot * g.opt.stride[0] + dt) -
                            static_cast<std::ptrdiff_t>(g.opt.padding[0]);
            if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(g.t)) continue;
            for (std::size_t oh = 0; oh < g.oh; ++oh) {
              const auto hi = static_cast<std::ptrdiff_t>(oh * g.opt.stride[1] + dh) -
                              static_cast<std::ptrdiff_t>(g.opt.padding[1]);
              if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(g.h)) continue;
              const float* src = row + (ot * g.oh + oh) * g.ow;
              float* dst = xc + (static_cast<std::size_t>(ti) * g.h + static_cast<std::size_t>(hi)) * g.w;
              for (std::size_t ow = 0; ow < g.ow; ++ow) {
                const auto wi = static_cast<std::ptrdiff_t>(ow * g.opt.stride[2] + dw) -
                                static_cast<std::ptrdiff_t>(g.opt.padding[2]);
                if (wi >= 0 && wi < static_cast<std::ptrdiff_t>(g.w)) dst[wi] += src[ow];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinaryKind::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinaryKind::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinaryKind::kMul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary("div", BinaryKind::kDiv, a, b); }

Tensor scale(const Tensor& x, float factor) {
  std::vector<float> out(x.data().begin(), x.data().end());
  for (float& v : out) v *= factor;
  return Tensor::make_result(x.shape(), std::move(out), "scale", {x},
                             [factor](detail::Node& self) {
                               auto& gx = parent(self, 0).ensure_grad();
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * factor;
                             });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_fail("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(m * n);
  MatMap(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)).noalias() =
      ConstMatMap(a.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) *
      ConstMatMap(b.data().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  return Tensor::make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](detail::Node& self) {
    const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k),
               N = static_cast<Eigen::Index>(n);
    ConstMatMap g(self.grad.data(), M, N);
    if (wants_grad(self, 0)) {
      MatMap(parent(self, 0).ensure_grad().data(), M, K).noalias() +=
          g * ConstMatMap(parent(self, 1).data.data(), K, N).transpose();
    }
    if (wants_grad(self, 1)) {
      MatMap(parent(self, 1).ensure_grad().data(), K, N).noalias() +=
          ConstMatMap(parent(self, 0).data.data(), M, K).transpose() * g;
    }
  });
}

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Conv3dOptions& options) {
  require_rank("conv3d", input, 5);
  require_rank("conv3d", weight, 5);
  if (input.dim(1) != weight.dim(1)) {
    shape_fail("conv3d", "input channels of " + shape_str(input.shape()) +
                             " do not match weight " + shape_str(weight.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{weight.dim(0)}) {
    shape_fail("conv3d", weight.shape(), bias.shape());
  }
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.t = input.dim(2);
  g.h = input.dim(3);
  g.w = input.dim(4);
  g.o = weight.dim(0);
  g.kt = weight.dim(2);
  g.kh = weight.dim(3);
  g.kw = weight.dim(4);
  g.opt = options;
  g.ot = out_extent("conv3d", g.t, g.kt, options.stride[0], options.padding[0]);
  g.oh = out_extent("conv3d", g.h, g.kh, options.stride[1], options.padding[1]);
  g.ow = out_extent("conv3d", g.w, g.kw, options.stride[2], options.padding[2]);

  const auto P = static_cast<Eigen::Index>(g.positions());
  const auto CK = static_cast<Eigen::Index>(g.ck());
  const auto O = static_cast<Eigen::Index>(g.o);
  std::vector<float> out(g.n * g.o * g.positions());
  std::vector<float> col(g.pointwise() ? 0 : g.ck() * g.positions());
  ConstMatMap wmat(weight.data().data(), O, CK);
  for (std::size_t s = 0; s < g.n; ++s) {
    const float* x = input.data().data() + s * g.in_volume();
    const float* cp = x;
    if (!g.pointwise()) {
      im2col(x, g, col.data());
      cp = col.data();
    }
    MatMap y(out.data() + s * g.o * g.positions(), O, P);
    y.noalias() = wmat * ConstMatMap(cp, CK, P);
    if (bias.defined()) {
      const auto bd = bias.data();
      for (Eigen::Index r = 0; r < O; ++r) y.row(r).array() += bd[static_cast<std::size_t>(r)];
    }
  }

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return Tensor::make_result(
      {g.n, g.o, g.ot, g.oh, g.ow}, std::move(out), "conv3d", std::move(inputs),
      [g, has_bias](detail::Node& self) {
        const auto P = static_cast<Eigen::Index>(g.positions());
        const auto CK = static_cast<Eigen::Index>(g.ck());
        const auto O = static_cast<Eigen::Index>(g.o);
        const auto& xdata = parent(self, 0).data;
        const bool need_x = wants_grad(self, 0);
        const bool need_w = wants_grad(self, 1);
        std::vector<float> col(g.pointwise() ? 0 : g.ck() * g.positions());
        std::vector<float> dcol(g.pointwise() || !need_x ? 0 : g.ck() * g.positions());
        ConstMatMap wmat(parent(self, 1).data.data(), O, CK);
        for (std::size_t s = 0; s < g.n; ++s) {
          ConstMatMap dy(self.grad.data() + s * g.o * g.positions(), O, P);
          if (need_w) {
            const float* x = xdata.data() + s * g.in_volume();
            const float* cp = x;
            if (!g.pointwise()) {
              im2col(x, g, col.data());
              cp = col.data();
            }
            MatMap(parent(self, 1).ensure_grad().data(), O, CK).noalias() +=
                dy * ConstMatMap(cp, CK, P).transpose();
          }
          if (need_x) {
            float* gx = parent(self, 0).ensure_grad().data() + s * g.in_volume();
            if (g.pointwise()) {
              MatMap(gx, CK, P).noalias() += wmat.transpose() * dy;
            } else {
              MatMap(dcol.data(), CK, P).noalias() = wmat.transpose() * dy;
              col2im(dcol.data(), g, gx);
            }
          }
          if (has_bias && wants_grad(self, 2)) {
            auto& gb = parent(self, 2).ensure_grad();
            for (Eigen::Index r = 0; r < O; ++r) gb[static_cast<std::size_t>(r)] += dy.row(r).sum();
          }
        }
      });
}

Tensor max_pool3d(const Tensor& input, std::array<std::size_t, 3> kernel,
                  std::array<std::size_t, 3> stride) {
  require_rank("max_pool3d", input, 5);
  const std::size_t n = input.dim(0), c = input.dim(1), t = input.dim(2), h = input.dim(3),
                    w = input.dim(4);
  const std::size_t ot = out_extent("max_pool3d", t, kernel[0], stride[0], 0);
  const std::size_t oh = out_extent("max_pool3d", h, kernel[1], stride[1], 0);
  const std::size_t ow = out_extent("max_pool3d", w, kernel[2], stride[2], 0);
  const auto x = input.data();
  std::vector<float> out(n * c * ot * oh * ow);
  std::vector<std::size_t> arg(out.size());
  std::size_t e = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * t * h * w;
    for (std::size_t a = 0; a < ot; ++a) {
      for (std::size_t b = 0; b < oh; ++b) {
        for (std::size_t d = 0; d < ow; ++d, ++e) {
          float best = -std::numeric_limits<float>::infinity();
          std::size_t best_i = base;
          for (std::size_t i = 0; i < kernel[0]; ++i) {
            for (std::size_t j = 0; j < kernel[1]; ++j) {
              for (std::size_t k = 0; k < kernel[2]; ++k) {
                const std::size_t idx =
                    base + ((a * stride[0] + i) * h + b * stride[1] + j) * w + d * stride[2] + k;
                if (x[idx] > best) {
                  best = x[idx];
                  best_i = idx;
                }
              }
            }
          }
          out[e] = best;
          arg[e] = best_i;
        }
      }
    }
  }
  return Tensor::make_result({n, c, ot, oh, ow}, std::move(out), "max_pool3d", {input},
                             [arg = std::move(arg)](detail::Node& self) {
                               auto& gx = parent(self, 0).ensure_grad();
                               for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += self.grad[i];
                             });
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank("global_avg_pool", input, 5);
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t volume = input.dim(2) * input.dim(3) * input.dim(4);
  const auto x = input.data();
  std::vector<float> out(n * c);
  const float inv = 1.0f / static_cast<float>(volume);
  for (std::size_t p = 0; p < n * c; ++p) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < volume; ++i) acc += x[p * volume + i];
    out[p] = acc * inv;
  }
  return Tensor::make_result({n, c}, std::move(out), "global_avg_pool", {input},
                             [volume, inv](detail::Node& self) {
                               auto& gx = parent(self, 0).ensure_grad();
                               for (std::size_t p = 0; p < self.grad.size(); ++p) {
                                 const float g = self.grad[p] * inv;
                                 for (std::size_t i = 0; i < volume; ++i) gx[p * volume + i] += g;
                               }
                             });
}

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.data().begin(), x.data().end());
  for (float& v : out) v = v > 0.0f ? v : 0.0f;
  return Tensor::make_result(x.shape(), std::move(out), "relu", {x}, [](detail::Node& self) {
    auto& gx = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (self.data[i] > 0.0f) gx[i] += self.grad[i];
    }
  });
}

Tensor log(const Tensor& x) {
  std::vector<float> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(xd[i]);
  return Tensor::make_result(x.shape(), std::move(out), "log", {x}, [](detail::Node& self) {
    auto& gx = parent(self, 0).ensure_grad();
    const auto& xv = parent(self, 0).data;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] / xv[i];
  });
}

Tensor sum(const Tensor& x, std::size_t axis) { return reduce_axis("sum", x, axis, 1.0f); }

Tensor mean(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) return reduce_axis("mean", x, axis, 1.0f);
  return reduce_axis("mean", x, axis, 1.0f / static_cast<float>(x.dim(axis)));
}

Tensor sum_all(const Tensor& x) { return sum(reshape(x, {x.numel()}), 0); }
Tensor mean_all(const Tensor& x) { return mean(reshape(x, {x.numel()}), 0); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_fail("reshape", x.shape(), shape);
  if (shape == x.shape()) return x;
  std::vector<float> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), "reshape", {x},
                             [](detail::Node& self) {
                               auto& gx = parent(self, 0).ensure_grad();
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                             });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) shape_fail("concat", "axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) shape_fail("concat", first, s);
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const AxisSplit whole = split_at(out_shape, axis);
  std::vector<float> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    const std::size_t chunk = extents[k] * whole.inner;
    for (std::size_t o = 0; o < whole.outer; ++o) {
      std::copy_n(src.data() + o * chunk, chunk,
                  out.data() + o * whole.extent * whole.inner + offset * whole.inner);
    }
    offset += extents[k];
  }
  return Tensor::make_result(
      out_shape, std::move(out), "concat", parts, [whole, extents](detail::Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < extents.size(); ++k) {
          const std::size_t chunk = extents[k] * whole.inner;
          if (wants_grad(self, k)) {
            auto& gp = parent(self, k).ensure_grad();
            for (std::size_t o = 0; o < whole.outer; ++o) {
              const float* g = self.grad.data() + o * whole.extent * whole.inner + offset * whole.inner;
              for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += g[i];
            }
          }
          offset += extents[k];
        }
      });
}

Tensor softmax(const Tensor& x) {
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.numel() / k;
  const auto xd = x.data();
  std::vector<float> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = xd.data() + r * k;
    float* y = out.data() + r * k;
    const float top = *std::max_element(in, in + k);
    float total = 0.0f;
    for (std::size_t i = 0; i < k; ++i) total += (y[i] = std::exp(in[i] - top));
    for (std::size_t i = 0; i < k; ++i) y[i] /= total;
  }
  return Tensor::make_result(x.shape(), std::move(out), "softmax", {x}, [k, rows](detail::Node& self) {
    auto& gx = parent(self, 0).ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const float* y = self.data.data() + r * k;
      const float* g = self.grad.data() + r * k;
      float inner = 0.0f;
      for (std::size_t i = 0; i < k; ++i) inner += g[i] * y[i];
      for (std::size_t i = 0; i < k; ++i) gx[r * k + i] += y[i] * (g[i] - inner);
    }
  });
}

Tensor l2_norm(const Tensor& x) {
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.numel() / k;
  const auto xd = x.data();
  std::vector<float> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < k; ++i) acc += xd[r * k + i] * xd[r * k + i];
    out[r] = std::sqrt(acc);
  }
  return Tensor::make_result(drop_axis(x.shape(), x.rank() - 1), std::move(out), "l2_norm", {x},
                             [k, rows](detail::Node& self) {
                               auto& gx = parent(self, 0).ensure_grad();
                               const auto& xv = parent(self, 0).data;
                               for (std::size_t r = 0; r < rows; ++r) {
                                 // Zero subgradient at the origin.
                                 if (self.data[r] == 0.0f) continue;
                                 const float f = self.grad[r] / self.data[r];
                                 for (std::size_t i = 0; i < k; ++i) gx[r * k + i] += f * xv[r * k + i];
                               }
                             });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("dot", a.shape(), b.shape());
  const std::size_t k = a.shape().back();
  const std::size_t rows = a.numel() / k;
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<float> out(rows, 0.0f);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < k; ++i) out[r] += ad[r * k + i] * bd[r * k + i];
  }
  return Tensor::make_result(drop_axis(a.shape(), a.rank() - 1), std::move(out), "dot", {a, b},
                             [k, rows](detail::Node& self) {
                               const auto& av = parent(self, 0).data;
                               const auto& bv = parent(self, 1).data;
                               if (wants_grad(self, 0)) {
                                 auto& ga = parent(self, 0).ensure_grad();
                                 for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t i = 0; i < k; ++i)
                                     ga[r * k + i] += self.grad[r] * bv[r * k + i];
                               }
                               if (wants_grad(self, 1)) {
                                 auto& gb = parent(self, 1).ensure_grad();
                                 for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t i = 0; i < k; ++i)
                                     gb[r * k + i] += self.grad[r] * av[r * k + i];
                               }
                             });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    shape_fail("cross_entropy", "got " + std::to_string(labels.size()) + " labels for logits " +
                                    shape_str(logits.shape()));
  }
  const auto x = logits.data();
  std::vector<float> probs(n * k);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      shape_fail("cross_entropy", "label " + std::to_string(labels[r]) + " outside [0," +
                                      std::to_string(k) + ")");
    }
    const float* in = x.data() + r * k;
    const float top = *std::max_element(in, in + k);
    float z = 0.0f;
    for (std::size_t i = 0; i < k; ++i) z += (probs[r * k + i] = std::exp(in[i] - top));
    for (std::size_t i = 0; i < k; ++i) probs[r * k + i] /= z;
    total += std::log(z) + top - in[labels[r]];
  }
  const float loss = static_cast<float>(total / static_cast<double>(n));
  return Tensor::make_result({1}, {loss}, "cross_entropy", {logits},
                             [probs = std::move(probs), labels, n, k](detail::Node& self) {
                               auto& gx = parent(self, 0).ensure_grad();
                               const float g = self.grad[0] / static_cast<float>(n);
                               for (std::size_t r = 0; r < n; ++r) {
                                 for (std::size_t i = 0; i < k; ++i) {
                                   float d = probs[r * k + i];
                                   if (static_cast<int>(i) == labels[r]) d -= 1.0f;
                                   gx[r * k + i] += g * d;
                                 }
                               }
                             });
}

}  // namespace modalbridge
