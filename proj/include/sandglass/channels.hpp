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

#ifndef SANDGLASS_CHANNELS_HPP_
#define SANDGLASS_CHANNELS_HPP_

#include <algorithm>
#include <cmath>

#include "sandglass/tensor.hpp"

namespace sandglass {

// Rounds a scaled channel count to a multiple of `divisor`, never below
// `divisor` and never more than 10% below `raw`.
inline Index round_channels(double raw, Index divisor = 8) {
  if (!(raw > 0.0)) throw ConfigError("channel count must be positive");
  if (divisor < 1) throw ConfigError("channel divisor must be >= 1");
  const auto d = double(divisor);
  Index v = std::max<Index>(divisor, Index(std::floor(raw + d / 2.0) / d) * divisor);
  if (double(v) < 0.9 * raw) v += divisor;
  return v;
}

}  // namespace sandglass

#endif  // SANDGLASS_CHANNELS_HPP_
