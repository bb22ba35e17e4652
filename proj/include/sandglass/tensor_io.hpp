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

#ifndef SANDGLASS_TENSOR_IO_HPP_
#define SANDGLASS_TENSOR_IO_HPP_

#include <string>
#include <string_view>
#include <variant>

#include "sandglass/binary_io.hpp"
#include "sandglass/tensor.hpp"

namespace sandglass {

// ".nct" layout: "NCTENS01", a '\n'-terminated JSON header
// {"dtype":"f32"|"f64","shape":[n,c,h,w]}, then the little-endian payload.
inline constexpr std::string_view kTensorMagic = "NCTENS01";

struct TensorHeader {
  std::string dtype;
  Shape shape;
  std::size_t payload_offset = 0;
};

std::string encode_tensor_header(std::string_view dtype, const Shape& shape);

// Validates magic, header JSON and payload length against `bytes`.
TensorHeader parse_tensor_header(std::string_view bytes);

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

template <typename Scalar>
std::string encode_tensor(const Tensor<Scalar>& t) {
  std::string out = encode_tensor_header(dtype_name<Scalar>(), t.shape());
  detail::append_le<Scalar>(out, t.span());
  return out;
}

template <typename Scalar>
Tensor<Scalar> decode_tensor(std::string_view bytes) {
  const TensorHeader header = parse_tensor_header(bytes);
  if (header.dtype != dtype_name<Scalar>())
    throw FormatError("dtype mismatch: file holds " + header.dtype + ", expected " +
                          dtype_name<Scalar>(),
                      kTensorMagic.size());
  Tensor<Scalar> t(header.shape);
  detail::read_le<Scalar>(bytes, header.payload_offset, t.span());
  return t;
}

AnyTensor decode_any_tensor(std::string_view bytes);

template <typename Scalar>
void write_tensor(const Tensor<Scalar>& t, const std::string& path) {
  detail::write_file(path, encode_tensor(t));
}

template <typename Scalar>
Tensor<Scalar> read_tensor(const std::string& path) {
  return decode_tensor<Scalar>(detail::read_file(path));
}

AnyTensor read_any_tensor(const std::string& path);

}  // namespace sandglass

#endif  // SANDGLASS_TENSOR_IO_HPP_
