/* Copyright 2026 The Sandglass Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SANDGLASS_OPS_HPP_
#define SANDGLASS_OPS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <Eigen/Core>

#include "sandglass/tensor.hpp"

namespace sandglass {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Counts multiply-accumulates actually executed by the conv kernels.
struct MacCounter {
  std::uint64_t macs = 0;
};

// "Same" padding along one axis: output = ceil(input / stride); when the total
// padding is odd the extra row/column goes after (bottom/right).
struct SamePadding {
  Index out = 0;
  Index before = 0;
  Index after = 0;
};

inline SamePadding same_padding(Index in, Index kernel, Index stride) {
  SamePadding p;
  p.out = (in + stride - 1) / stride;
  const Index total = std::max<Index>((p.out - 1) * stride + kernel - in, 0);
  p.before = total / 2;
  p.after = total - p.before;
  return p;
}

template <typename Scalar>
struct Conv2dParams {
  Tensor<Scalar> weight;  // (out_channels, in_channels / groups, k, k)
  Index groups = 1;
  Index stride = 1;

  Index out_channels() const { return weight.shape().n; }
  Index in_channels() const { return weight.shape().c * groups; }
  Index kernel() const { return weight.shape().h; }
  bool depthwise() const {
    return groups > 1 && groups == in_channels() && groups == out_channels();
  }
};

template <typename Scalar>
void validate_conv(const Shape& x, const Conv2dParams<Scalar>& p) {
  const Shape& w = p.weight.shape();
  if (p.weight.empty()) throw ConfigError("conv weight is empty");
  if (w.h != w.w) throw ConfigError("conv kernel must be square, got " + w.str());
  if (p.groups < 1 || w.n % p.groups != 0)
    throw ConfigError("out_channels " + std::to_string(w.n) +
                      " not divisible by groups " + std::to_string(p.groups));
  if (x.c != w.c * p.groups)
    throw ConfigError("input has " + std::to_string(x.c) +
                      " channels, conv expects " + std::to_string(w.c * p.groups));
  if (p.stride != 1 && p.stride != 2) throw ConfigError("stride must be 1 or 2");
}

template <typename Scalar>
Shape conv_output_shape(const Shape& x, const Conv2dParams<Scalar>& p) {
  return Shape{x.n, p.out_channels(), same_padding(x.h, p.kernel(), p.stride).out,
               same_padding(x.w, p.kernel(), p.stride).out};
}

namespace detail {

// Unfolds one group of one batch item into a (cin_g*k*k, oh*ow) matrix whose
// row order matches the flattened (ci, ky, kx) weight layout.
template <typename Scalar>
RowMatrix<Scalar> im2col(const Tensor<Scalar>& x, Index b, Index c0, Index cin_g,
                         Index k, Index stride, const SamePadding& py,
                         const SamePadding& px) {
  RowMatrix<Scalar> cols(cin_g * k * k, py.out * px.out);
  const Index h = x.height();
  const Index w = x.width();
  for (Index ci = 0; ci < cin_g; ++ci) {
    const auto plane = x.plane(b, c0 + ci);
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* row = cols.row((ci * k + ky) * k + kx).data();
        for (Index oy = 0; oy < py.out; ++oy) {
          const Index iy = oy * stride + ky - py.before;
          for (Index ox = 0; ox < px.out; ++ox) {
            const Index ix = ox * stride + kx - px.before;
            row[oy * px.out + ox] =
                (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane(iy, ix) : Scalar(0);
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatters column gradients back into grad_x.
template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& cols, Tensor<Scalar>& gx, Index b, Index c0,
                Index cin_g, Index k, Index stride, const SamePadding& py,
                const SamePadding& px) {
  const Index h = gx.height();
  const Index w = gx.width();
  for (Index ci = 0; ci < cin_g; ++ci) {
    auto plane = gx.plane(b, c0 + ci);
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* row = cols.row((ci * k + ky) * k + kx).data();
        for (Index oy = 0; oy < py.out; ++oy) {
          const Index iy = oy * stride + ky - py.before;
          if (iy < 0 || iy >= h) continue;
          for (Index ox = 0; ox < px.out; ++ox) {
            const Index ix = ox * stride + kx - px.before;
            if (ix >= 0 && ix < w) plane(iy, ix) += row[oy * px.out + ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void depthwise_forward(const Tensor<Scalar>& x, const Conv2dParams<Scalar>& p,
                       Tensor<Scalar>& y, const SamePadding& py, const SamePadding& px) {
  const Index k = p.kernel();
  const Index s = p.stride;
  const Index ph = x.height() + py.before + py.after;
  const Index pw = x.width() + px.before + px.after;
  RowMatrix<Scalar> padded = RowMatrix<Scalar>::Zero(ph, pw);
  for (Index b = 0; b < x.batch(); ++b) {
    for (Index c = 0; c < x.channels(); ++c) {
      padded.block(py.before, px.before, x.height(), x.width()) = x.plane(b, c);
      const Scalar* kw = p.weight.data() + c * k * k;
      auto out = y.plane(b, c);
      for (Index oy = 0; oy < py.out; ++oy) {
        for (Index ox = 0; ox < px.out; ++ox) {
          Scalar acc(0);
          for (Index ky = 0; ky < k; ++ky) {
            const Scalar* row = padded.row(oy * s + ky).data() + ox * s;
            for (Index kx = 0; kx < k; ++kx) acc += kw[ky * k + kx] * row[kx];
          }
          out(oy, ox) = acc;
        }
      }
    }
  }
}

}  // namespace detail

// Direct cross-correlation with "same" padding, no bias.
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& x, const Conv2dParams<Scalar>& p,
                              MacCounter* counter = nullptr) {
  validate_conv(x.shape(), p);
  const Index k = p.kernel();
  const SamePadding py = same_padding(x.height(), k, p.stride);
  const SamePadding px = same_padding(x.width(), k, p.stride);
  Tensor<Scalar> y(conv_output_shape(x.shape(), p));
  const Index cin_g = p.weight.shape().c;
  const Index og = p.out_channels() / p.groups;
  const Index positions = py.out * px.out;

  if (k == 1 && p.stride == 1 && p.groups == 1) {
    typename Tensor<Scalar>::ConstPlaneMap w(p.weight.data(), p.out_channels(),
                                             x.channels());
    for (Index b = 0; b < x.batch(); ++b)
      y.channel_matrix(b).noalias() = w * x.channel_matrix(b);
  } else if (p.depthwise()) {
    detail::depthwise_forward(x, p, y, py, px);
  } else {
    for (Index b = 0; b < x.batch(); ++b) {
      for (Index g = 0; g < p.groups; ++g) {
        const RowMatrix<Scalar> cols =
            detail::im2col(x, b, g * cin_g, cin_g, k, p.stride, py, px);
        typename Tensor<Scalar>::ConstPlaneMap wg(p.weight.data() + g * og * cin_g * k * k,
                                                  og, cin_g * k * k);
        typename Tensor<Scalar>::PlaneMap yg(y.data() + y.offset(b, g * og, 0, 0), og,
                                             positions);
        yg.noalias() = wg * cols;
      }
    }
  }
  if (counter)
    counter->macs += std::uint64_t(x.batch()) * std::uint64_t(p.out_channels()) *
                     std::uint64_t(cin_g * k * k) * std::uint64_t(positions);
  return y;
}

template <typename Scalar>
struct Conv2dGrads {
  Tensor<Scalar> grad_x;
  Tensor<Scalar> grad_weight;
};

// Vector-Jacobian product of conv2d_forward at input x.
template <typename Scalar>
Conv2dGrads<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Conv2dParams<Scalar>& p,
                                    const Tensor<Scalar>& grad_out) {
  validate_conv(x.shape(), p);
  if (grad_out.shape() != conv_output_shape(x.shape(), p))
    throw InternalError("conv2d_backward: grad_out " + grad_out.shape().str() +
                        " does not match recorded forward output " +
                        conv_output_shape(x.shape(), p).str());
  const Index k = p.kernel();
  const SamePadding py = same_padding(x.height(), k, p.stride);
  const SamePadding px = same_padding(x.width(), k, p.stride);
  const Index cin_g = p.weight.shape().c;
  const Index og = p.out_channels() / p.groups;
  const Index positions = py.out * px.out;

  Conv2dGrads<Scalar> g{Tensor<Scalar>(x.shape()), Tensor<Scalar>(p.weight.shape())};
  if (k == 1 && p.stride == 1 && p.groups == 1) {
    typename Tensor<Scalar>::ConstPlaneMap w(p.weight.data(), p.out_channels(),
                                             x.channels());
    typename Tensor<Scalar>::PlaneMap gw(g.grad_weight.data(), p.out_channels(),
                                         x.channels());
    for (Index b = 0; b < x.batch(); ++b) {
      gw.noalias() += grad_out.channel_matrix(b) * x.channel_matrix(b).transpose();
      g.grad_x.channel_matrix(b).noalias() = w.transpose() * grad_out.channel_matrix(b);
    }
    return g;
  }
  for (Index b = 0; b < x.batch(); ++b) {
    for (Index grp = 0; grp < p.groups; ++grp) {
      const RowMatrix<Scalar> cols =
          detail::im2col(x, b, grp * cin_g, cin_g, k, p.stride, py, px);
      const Index wofs = grp * og * cin_g * k * k;
      typename Tensor<Scalar>::ConstPlaneMap wg(p.weight.data() + wofs, og, cin_g * k * k);
      typename Tensor<Scalar>::PlaneMap gwg(g.grad_weight.data() + wofs, og,
                                            cin_g * k * k);
      typename Tensor<Scalar>::ConstPlaneMap go(
          grad_out.data() + grad_out.offset(b, grp * og, 0, 0), og, positions);
      gwg.noalias() += go * cols.transpose();
      const RowMatrix<Scalar> gcols = wg.transpose() * go;
      detail::col2im_add(gcols, g.grad_x, b, grp * cin_g, cin_g, k, p.stride, py, px);
    }
  }
  return g;
}

template <typename Scalar>
Tensor<Scalar> relu6_forward(const Tensor<Scalar>& x) {
  return Tensor<Scalar>(x.shape(),
                        x.flat().cwiseMax(Scalar(0)).cwiseMin(Scalar(6)).eval());
}

// Passes the gradient where 0 < x < 6.
template <typename Scalar>
Tensor<Scalar> relu6_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_out) {
  if (x.shape() != grad_out.shape()) throw InternalError("relu6_backward shape mismatch");
  Tensor<Scalar> g(x.shape());
  g.flat() = ((x.flat().array() > Scalar(0)) && (x.flat().array() < Scalar(6)))
                 .select(grad_out.flat(), Scalar(0));
  return g;
}

// Inference-mode batch norm: y = gamma * (x - mean) / sqrt(var + eps) + beta.
template <typename Scalar>
struct BatchNormParams {
  Vec<Scalar> gamma;
  Vec<Scalar> beta;
  Vec<Scalar> running_mean;
  Vec<Scalar> running_var;
  Scalar epsilon = Scalar(1e-5);

  static BatchNormParams identity(Index channels, Scalar eps = Scalar(1e-5)) {
    return {Vec<Scalar>::Ones(channels), Vec<Scalar>::Zero(channels),
            Vec<Scalar>::Zero(channels), Vec<Scalar>::Ones(channels), eps};
  }

  Index channels() const { return gamma.size(); }

  void validate(Index expected_channels) const {
    if (gamma.size() != expected_channels || beta.size() != expected_channels ||
        running_mean.size() != expected_channels || running_var.size() != expected_channels)
      throw ConfigError("batch norm vectors must have length " +
                        std::to_string(expected_channels));
    if ((running_var.array() < Scalar(0)).any())
      throw ConfigError("batch norm running_var must be non-negative");
  }

  template <typename Other>
  BatchNormParams<Other> cast() const {
    return {gamma.template cast<Other>(), beta.template cast<Other>(),
            running_mean.template cast<Other>(), running_var.template cast<Other>(),
            Other(epsilon)};
  }
};

template <typename Scalar>
Tensor<Scalar> batchnorm_forward(const Tensor<Scalar>& x, const BatchNormParams<Scalar>& p) {
  p.validate(x.channels());
  Tensor<Scalar> y(x.shape());
  for (Index c = 0; c < x.channels(); ++c) {
    const Scalar inv_std = Scalar(1) / std::sqrt(p.running_var[c] + p.epsilon);
    const Scalar gamma = p.gamma[c];
    const Scalar mean = p.running_mean[c];
    const Scalar beta = p.beta[c];
    for (Index b = 0; b < x.batch(); ++b)
      y.plane(b, c) =
          ((x.plane(b, c).array() - mean) * inv_std * gamma + beta).matrix();
  }
  return y;
}

template <typename Scalar>
struct BatchNormGrads {
  Tensor<Scalar> grad_x;
  Vec<Scalar> grad_gamma;
  Vec<Scalar> grad_beta;
};

template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const Tensor<Scalar>& x,
                                          const BatchNormParams<Scalar>& p,
                                          const Tensor<Scalar>& grad_out) {
  p.validate(x.channels());
  if (x.shape() != grad_out.shape())
    throw InternalError("batchnorm_backward shape mismatch");
  BatchNormGrads<Scalar> g{Tensor<Scalar>(x.shape()), Vec<Scalar>::Zero(x.channels()),
                           Vec<Scalar>::Zero(x.channels())};
  for (Index c = 0; c < x.channels(); ++c) {
    const Scalar inv_std = Scalar(1) / std::sqrt(p.running_var[c] + p.epsilon);
    for (Index b = 0; b < x.batch(); ++b) {
      const auto go = grad_out.plane(b, c).array();
      g.grad_x.plane(b, c) = (go * (p.gamma[c] * inv_std)).matrix();
      g.grad_gamma[c] += (go * (x.plane(b, c).array() - p.running_mean[c]) * inv_std).sum();
      g.grad_beta[c] += go.sum();
    }
  }
  return g;
}

template <typename Scalar>
Tensor<Scalar> global_avgpool(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(Shape{x.batch(), x.channels(), 1, 1});
  const Scalar area = Scalar(x.shape().plane());
  for (Index b = 0; b < x.batch(); ++b)
    for (Index c = 0; c < x.channels(); ++c) y(b, c, 0, 0) = x.plane(b, c).sum() / area;
  return y;
}

template <typename Scalar>
Tensor<Scalar> global_avgpool_backward(const Shape& x_shape, const Tensor<Scalar>& grad_out) {
  if (grad_out.shape() != Shape{x_shape.n, x_shape.c, 1, 1})
    throw InternalError("global_avgpool_backward shape mismatch");
  Tensor<Scalar> g(x_shape);
  const Scalar area = Scalar(x_shape.plane());
  for (Index b = 0; b < x_shape.n; ++b)
    for (Index c = 0; c < x_shape.c; ++c) g.plane(b, c).setConstant(grad_out(b, c, 0, 0) / area);
  return g;
}

// Number of leading channels that receive the shortcut: round-half-up of
// alpha * channels.
inline Index identity_channels(Index channels, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ConfigError("identity tensor multiplier must lie in [0, 1]");
  return std::clamp<Index>(Index(std::floor(alpha * double(channels) + 0.5)), 0, channels);
}

// out[:, :k] = residual[:, :k] + identity[:, :k]; out[:, k:] = residual[:, k:]
// with k = identity_channels(C, alpha).
template <typename Scalar>
Tensor<Scalar> partial_residual_add(const Tensor<Scalar>& residual,
                                    const Tensor<Scalar>& identity, double alpha) {
  if (residual.shape() != identity.shape())
    throw ShapeError("residual " + residual.shape().str() + " and identity " +
                     identity.shape().str() + " differ");
  const Index keep = identity_channels(residual.channels(), alpha);
  Tensor<Scalar> out = residual;
  const Index chunk = keep * residual.shape().plane();
  for (Index b = 0; b < residual.batch(); ++b) {
    const Index at = residual.offset(b, 0, 0, 0);
    out.flat().segment(at, chunk) += identity.flat().segment(at, chunk);
  }
  return out;
}

}  // namespace sandglass

#endif  // SANDGLASS_OPS_HPP_
