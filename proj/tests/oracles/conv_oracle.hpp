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

// Reference implementations used only by tests. They share no code with the
// library: plain nested loops over std::vector, explicit bounds checks.

#ifndef SANDGLASS_TESTS_ORACLES_CONV_ORACLE_HPP_
#define SANDGLASS_TESTS_ORACLES_CONV_ORACLE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace oracle {

struct Dims {
  int n, c, h, w;
  std::size_t size() const { return std::size_t(n) * c * h * w; }
};

struct Array {
  Dims d;
  std::vector<double> v;

  explicit Array(Dims dims, double fill = 0.0) : d(dims), v(dims.size(), fill) {}

  double& at(int b, int ch, int y, int x) { return v.at(index(b, ch, y, x)); }
  double at(int b, int ch, int y, int x) const { return v.at(index(b, ch, y, x)); }

 private:
  std::size_t index(int b, int ch, int y, int x) const {
    if (b < 0 || b >= d.n || ch < 0 || ch >= d.c || y < 0 || y >= d.h || x < 0 || x >= d.w)
      throw std::out_of_range("oracle index");
    return ((std::size_t(b) * d.c + ch) * d.h + y) * d.w + x;
  }
};

// Output extent ceil(in / stride); total padding split with the odd pixel
// after (bottom/right).
inline int out_extent(int in, int stride) { return (in + stride - 1) / stride; }
inline int pad_before(int in, int k, int stride) {
  const int total = std::max((out_extent(in, stride) - 1) * stride + k - in, 0);
  return total / 2;
}

// Direct cross-correlation: out[b][o][oy][ox] = sum over (ci, ky, kx) of
// w[o][ci][ky][kx] * x[b][g*cin_g + ci][oy*s + ky - pt][ox*s + kx - pl].
inline Array conv2d(const Array& x, const Array& w, int groups, int stride,
                    std::uint64_t* macs = nullptr) {
  const int k = w.d.h;
  const int cout = w.d.n;
  const int cin_g = w.d.c;
  if (x.d.c != cin_g * groups || cout % groups != 0) throw std::invalid_argument("groups");
  const int cout_g = cout / groups;
  const int oh = out_extent(x.d.h, stride);
  const int ow = out_extent(x.d.w, stride);
  const int pt = pad_before(x.d.h, k, stride);
  const int pl = pad_before(x.d.w, k, stride);
  Array y({x.d.n, cout, oh, ow});
  for (int b = 0; b < x.d.n; ++b)
    for (int o = 0; o < cout; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const int g = o / cout_g;
          double acc = 0.0;
          for (int ci = 0; ci < cin_g; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                if (macs) ++*macs;
                const int iy = oy * stride + ky - pt;
                const int ix = ox * stride + kx - pl;
                if (iy < 0 || iy >= x.d.h || ix < 0 || ix >= x.d.w) continue;
                acc += w.at(o, ci, ky, kx) * x.at(b, g * cin_g + ci, iy, ix);
              }
          y.at(b, o, oy, ox) = acc;
        }
  return y;
}

inline Array batchnorm(const Array& x, const std::vector<double>& gamma,
                       const std::vector<double>& beta, const std::vector<double>& mean,
                       const std::vector<double>& var, double eps) {
  Array y(x.d);
  for (int b = 0; b < x.d.n; ++b)
    for (int c = 0; c < x.d.c; ++c)
      for (int i = 0; i < x.d.h; ++i)
        for (int j = 0; j < x.d.w; ++j)
          y.at(b, c, i, j) =
              gamma.at(c) * (x.at(b, c, i, j) - mean.at(c)) / std::sqrt(var.at(c) + eps) +
              beta.at(c);
  return y;
}

inline Array relu6(const Array& x) {
  Array y(x.d);
  for (std::size_t i = 0; i < x.v.size(); ++i) y.v[i] = std::min(std::max(x.v[i], 0.0), 6.0);
  return y;
}

}  // namespace oracle

#endif  // SANDGLASS_TESTS_ORACLES_CONV_ORACLE_HPP_
