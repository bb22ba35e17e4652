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

#ifndef SANDGLASS_TESTS_TEST_UTIL_HPP_
#define SANDGLASS_TESTS_TEST_UTIL_HPP_

#include <cstdio>
#include <filesystem>
#include <string>

#include "oracles/conv_oracle.hpp"
#include "sandglass/tensor.hpp"

namespace sandglass::testing {

inline oracle::Array to_array(const Tensor<double>& t) {
  const Shape& s = t.shape();
  oracle::Array a({int(s.n), int(s.c), int(s.h), int(s.w)});
  for (Index b = 0; b < s.n; ++b)
    for (Index c = 0; c < s.c; ++c)
      for (Index y = 0; y < s.h; ++y)
        for (Index x = 0; x < s.w; ++x) a.at(int(b), int(c), int(y), int(x)) = t(b, c, y, x);
  return a;
}

inline double max_abs_diff(const Tensor<double>& t, const oracle::Array& a) {
  double worst = 0.0;
  const Shape& s = t.shape();
  for (Index b = 0; b < s.n; ++b)
    for (Index c = 0; c < s.c; ++c)
      for (Index y = 0; y < s.h; ++y)
        for (Index x = 0; x < s.w; ++x)
          worst = std::max(worst, std::abs(t(b, c, y, x) - a.at(int(b), int(c), int(y), int(x))));
  return worst;
}

template <typename Scalar = double>
Tensor<Scalar> random_tensor(const Shape& s, Rng& rng, double stddev = 1.0) {
  Tensor<Scalar> t(s);
  fill_normal(t, rng, 0.0, stddev);
  return t;
}

// Scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "sandglass-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace sandglass::testing

#endif  // SANDGLASS_TESTS_TEST_UTIL_HPP_
