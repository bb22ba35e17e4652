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

#ifndef SANDGLASS_BINARY_IO_HPP_
#define SANDGLASS_BINARY_IO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>

#include "sandglass/errors.hpp"

namespace sandglass::detail {

template <typename T>
T byteswap(T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
    std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

// Appends scalars to `out` in little-endian order.
template <typename T>
void append_le(std::string& out, std::span<const T> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size_bytes());
  if constexpr (std::endian::native == std::endian::little) {
    if (!values.empty()) std::memcpy(out.data() + start, values.data(), values.size_bytes());
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      T v = byteswap(values[i]);
      std::memcpy(out.data() + start + i * sizeof(T), &v, sizeof(T));
    }
  }
}

// Reads values.size() little-endian scalars from bytes[offset, ...).
template <typename T>
void read_le(std::string_view bytes, std::size_t offset, std::span<T> values) {
  if (offset > bytes.size() || bytes.size() - offset < values.size_bytes())
    throw FormatError("truncated payload: need " +
                          std::to_string(values.size_bytes()) + " bytes, have " +
                          std::to_string(offset > bytes.size() ? 0 : bytes.size() - offset),
                      bytes.size());
  if (!values.empty()) std::memcpy(values.data(), bytes.data() + offset, values.size_bytes());
  if constexpr (std::endian::native != std::endian::little) {
    for (T& v : values) v = byteswap(v);
  }
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

// Splits "<8-byte magic><json line>\n<payload>"; returns the JSON text and
// sets payload_offset. Throws FormatError on magic or framing problems.
std::string_view split_framed_header(std::string_view bytes, std::string_view magic,
                                     std::size_t& payload_offset);

}  // namespace sandglass::detail

#endif  // SANDGLASS_BINARY_IO_HPP_
