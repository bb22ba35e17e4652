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

#ifndef SANDGLASS_ERRORS_HPP_
#define SANDGLASS_ERRORS_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sandglass {

// Base of every error thrown by the library. The CLI maps these to exit 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A shape with a zero or overflowing dimension.
class InvalidShapeError : public Error {
 public:
  using Error::Error;
};

// Operand shapes that do not agree with each other.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class InternalError : public Error {
 public:
  using Error::Error;
};

class AnalysisError : public Error {
 public:
  using Error::Error;
};

// Binary file decoding failure; carries the byte offset where decoding stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// JSON schema violation; carries a JSON pointer to the offending value.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string pointer)
      : Error(what + " (at " + (pointer.empty() ? std::string("/") : pointer) +
              ")"),
        pointer_(std::move(pointer)) {}

  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace sandglass

#endif  // SANDGLASS_ERRORS_HPP_
