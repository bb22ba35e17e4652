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

#include "sandglass/tensor_io.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sandglass {
namespace detail {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw Error("write to '" + path + "' failed");
}

std::string_view split_framed_header(std::string_view bytes, std::string_view magic,
                                     std::size_t& payload_offset) {
  if (bytes.size() < magic.size() || bytes.substr(0, magic.size()) != magic)
    throw FormatError("bad magic, expected \"" + std::string(magic) + "\"", 0);
  const std::size_t newline = bytes.find('\n', magic.size());
  if (newline == std::string_view::npos)
    throw FormatError("header line is not terminated by '\\n'", bytes.size());
  payload_offset = newline + 1;
  return bytes.substr(magic.size(), newline - magic.size());
}

}  // namespace detail

std::string encode_tensor_header(std::string_view dtype, const Shape& shape) {
  nlohmann::json header;
  header["dtype"] = dtype;
  header["shape"] = {shape.n, shape.c, shape.h, shape.w};
  std::string out(kTensorMagic);
  out += header.dump();
  out += '\n';
  return out;
}

TensorHeader parse_tensor_header(std::string_view bytes) {
  TensorHeader header;
  const std::string_view text =
      detail::split_framed_header(bytes, kTensorMagic, header.payload_offset);
  const std::size_t json_at = kTensorMagic.size();

  nlohmann::json j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object())
    throw FormatError("header is not a JSON object", json_at);
  if (!j.contains("dtype") || !j["dtype"].is_string())
    throw FormatError("header lacks string field \"dtype\"", json_at);
  header.dtype = j["dtype"].get<std::string>();
  if (header.dtype != "f32" && header.dtype != "f64")
    throw FormatError("unsupported dtype \"" + header.dtype + "\"", json_at);
  const auto& s = j.contains("shape") ? j["shape"] : nlohmann::json();
  if (!s.is_array() || s.size() != 4)
    throw FormatError("header field \"shape\" must be a 4-element array", json_at);
  std::array<Index, 4> dims{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!s[i].is_number_integer() || s[i].get<Index>() < 1)
      throw FormatError("shape entries must be positive integers", json_at);
    dims[i] = s[i].get<Index>();
  }
  header.shape = Shape{dims[0], dims[1], dims[2], dims[3]};
  try {
    validate_shape(header.shape);
  } catch (const InvalidShapeError& e) {
    throw FormatError(e.what(), json_at);
  }

  const std::size_t elem = header.dtype == "f32" ? 4 : 8;
  const std::size_t have = bytes.size() - header.payload_offset;
  const auto numel = std::size_t(header.shape.numel());
  if (numel > have / elem) {
    throw FormatError("truncated payload: header declares " + std::to_string(numel) +
                          " elements, payload holds " + std::to_string(have / elem),
                      bytes.size());
  }
  if (have != numel * elem)
    throw FormatError("trailing bytes after payload",
                      header.payload_offset + numel * elem);
  return header;
}

AnyTensor decode_any_tensor(std::string_view bytes) {
  const TensorHeader header = parse_tensor_header(bytes);
  if (header.dtype == "f32") return decode_tensor<float>(bytes);
  return decode_tensor<double>(bytes);
}

AnyTensor read_any_tensor(const std::string& path) {
  return decode_any_tensor(detail::read_file(path));
}

}  // namespace sandglass
