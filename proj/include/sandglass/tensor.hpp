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

#ifndef SANDGLASS_TENSOR_HPP_
#define SANDGLASS_TENSOR_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "sandglass/errors.hpp"

namespace sandglass {

using Index = std::int64_t;

// NCHW extent. A valid shape has every dimension >= 1.
struct Shape {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  Index numel() const { return n * c * h * w; }
  Index plane() const { return h * w; }
  std::array<Index, 4> dims() const { return {n, c, h, w}; }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }

  friend bool operator==(const Shape&, const Shape&) = default;
};

// Throws InvalidShapeError unless every dimension is >= 1 and the element
// count fits in an Index.
inline void validate_shape(const Shape& s) {
  Index total = 1;
  for (Index d : s.dims()) {
    if (d < 1) throw InvalidShapeError("dimension must be >= 1 in " + s.str());
    if (__builtin_mul_overflow(total, d, &total))
      throw InvalidShapeError("element count overflows in " + s.str());
  }
}

// Dense row-major NCHW tensor. Element (b, c, y, x) lives at
// ((b*C + c)*H + y)*W + x. A default-constructed tensor is empty.
template <typename Scalar>
class Tensor {
 public:
  using Scalar_ = Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstPlaneMap = Eigen::Map<const Eigen::Matrix<
      Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;

  explicit Tensor(const Shape& shape, Scalar value = Scalar(0)) : shape_(shape) {
    validate_shape(shape);
    data_ = Vector::Constant(shape.numel(), value);
  }

  Tensor(const Shape& shape, Vector data) : shape_(shape), data_(std::move(data)) {
    validate_shape(shape);
    if (data_.size() != shape.numel())
      throw ShapeError("buffer length " + std::to_string(data_.size()) +
                       " does not match shape " + shape.str());
  }

  const Shape& shape() const { return shape_; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Index channels() const { return shape_.c; }
  Index height() const { return shape_.h; }
  Index width() const { return shape_.w; }
  Index batch() const { return shape_.n; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> span() { return {data_.data(), std::size_t(data_.size())}; }
  std::span<const Scalar> span() const {
    return {data_.data(), std::size_t(data_.size())};
  }

  // Whole buffer as an Eigen vector, for expression-style elementwise math.
  Vector& flat() { return data_; }
  const Vector& flat() const { return data_; }

  Index offset(Index b, Index ch, Index y, Index x) const {
    return ((b * shape_.c + ch) * shape_.h + y) * shape_.w + x;
  }
  Scalar& operator()(Index b, Index ch, Index y, Index x) {
    return data_[offset(b, ch, y, x)];
  }
  Scalar operator()(Index b, Index ch, Index y, Index x) const {
    return data_[offset(b, ch, y, x)];
  }

  // One H x W plane as a row-major matrix view.
  PlaneMap plane(Index b, Index ch) {
    return PlaneMap(data() + offset(b, ch, 0, 0), shape_.h, shape_.w);
  }
  ConstPlaneMap plane(Index b, Index ch) const {
    return ConstPlaneMap(data() + offset(b, ch, 0, 0), shape_.h, shape_.w);
  }

  // Channels x (H*W) view of one batch item; the pointwise conv operand.
  PlaneMap channel_matrix(Index b) {
    return PlaneMap(data() + offset(b, 0, 0, 0), shape_.c, shape_.plane());
  }
  ConstPlaneMap channel_matrix(Index b) const {
    return ConstPlaneMap(data() + offset(b, 0, 0, 0), shape_.c, shape_.plane());
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_{};
  Vector data_{};
};

template <typename Scalar>
constexpr const char* dtype_name();
template <>
constexpr const char* dtype_name<float>() {
  return "f32";
}
template <>
constexpr const char* dtype_name<double>() {
  return "f64";
}

// splitmix64 state stepping feeding a Box-Muller transform. Stable across
// platforms for the integer stream; the normal stream relies on libm log/cos.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    // u1 in (0, 1] keeps the log finite.
    const double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct ConstantFill {
  double value = 0.0;
};

struct NormalFill {
  std::uint64_t seed = 0;
  double mean = 0.0;
  double stddev = 1.0;
};

using Fill = std::variant<ConstantFill, NormalFill>;

template <typename Scalar>
Tensor<Scalar> new_tensor(const Shape& shape, const Fill& fill = ConstantFill{}) {
  validate_shape(shape);
  if (const auto* c = std::get_if<ConstantFill>(&fill))
    return Tensor<Scalar>(shape, Scalar(c->value));
  const auto& nf = std::get<NormalFill>(fill);
  Tensor<Scalar> t(shape);
  Rng rng(nf.seed);
  for (Scalar& v : t.span()) v = Scalar(rng.normal(nf.mean, nf.stddev));
  return t;
}

// Fills an existing tensor from a shared generator; used where several
// tensors draw from one seeded stream.
template <typename Scalar>
void fill_normal(Tensor<Scalar>& t, Rng& rng, double mean, double stddev) {
  for (Scalar& v : t.span()) v = Scalar(rng.normal(mean, stddev));
}

template <typename Scalar>
Tensor<Scalar> slice_channels(const Tensor<Scalar>& t, Index lo, Index hi) {
  const Shape& s = t.shape();
  if (lo < 0 || hi > s.c || lo >= hi)
    throw RangeError("channel slice [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + ") out of range for " +
                     std::to_string(s.c) + " channels");
  Tensor<Scalar> out(Shape{s.n, hi - lo, s.h, s.w});
  const Index chunk = (hi - lo) * s.plane();
  for (Index b = 0; b < s.n; ++b)
    out.flat().segment(out.offset(b, 0, 0, 0), chunk) =
        t.flat().segment(t.offset(b, lo, 0, 0), chunk);
  return out;
}

template <typename Scalar>
Tensor<Scalar> concat_channels(std::span<const Tensor<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Shape s = parts.front().shape();
  Index total = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.n != s.n || ps.h != s.h || ps.w != s.w)
      throw ShapeError("concat shape mismatch: " + s.str() + " vs " + ps.str());
    total += ps.c;
  }
  s.c = total;
  Tensor<Scalar> out(s);
  for (Index b = 0; b < s.n; ++b) {
    Index ch = 0;
    for (const auto& p : parts) {
      const Index chunk = p.channels() * s.plane();
      out.flat().segment(out.offset(b, ch, 0, 0), chunk) =
          p.flat().segment(p.offset(b, 0, 0, 0), chunk);
      ch += p.channels();
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const std::array<Tensor<Scalar>, 2> parts{a, b};
  return concat_channels<Scalar>(std::span<const Tensor<Scalar>>(parts));
}

// Batch item `b` as a standalone (1, C, H, W) tensor.
template <typename Scalar>
Tensor<Scalar> batch_item(const Tensor<Scalar>& t, Index b) {
  const Shape& s = t.shape();
  if (b < 0 || b >= s.n) throw RangeError("batch index out of range");
  Shape one{1, s.c, s.h, s.w};
  typename Tensor<Scalar>::Vector v = t.flat().segment(b * one.numel(), one.numel());
  return Tensor<Scalar>(one, std::move(v));
}

}  // namespace sandglass

#endif  // SANDGLASS_TENSOR_HPP_
