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

#ifndef SANDGLASS_OBSERVER_HPP_
#define SANDGLASS_OBSERVER_HPP_

#include <cstdint>
#include <string>

#include "sandglass/tensor.hpp"

namespace sandglass {

// Hook into a forward pass. on_site() sees every activation site (network
// input, each conv unit after BN/activation, each residual add, the pooled
// features, the logits) in execution order and may rewrite the value in place.
template <typename Scalar>
class ForwardObserver {
 public:
  virtual ~ForwardObserver() = default;
  virtual void on_site(const std::string& /*site*/, Tensor<Scalar>& /*value*/) {}
  virtual void on_conv(const std::string& /*layer*/, std::uint64_t /*macs*/) {}
};

}  // namespace sandglass

#endif  // SANDGLASS_OBSERVER_HPP_
