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

#ifndef SANDGLASS_GRADCHECK_HPP_
#define SANDGLASS_GRADCHECK_HPP_

#include <cstdint>

#include "sandglass/blocks.hpp"
#include "sandglass/tape.hpp"

namespace sandglass {

struct BlockGradcheckOptions {
  Index spatial = 8;
  Index batch = 1;
  double step = 1e-5;
  double min_kink_distance = 1e-3;
  int max_draws = 1000;
};

struct BlockGradcheck {
  BlockGraph block;
  GradcheckResult result;
  std::uint64_t seed = 0;  // seed of the accepted draw
  int draws = 0;
};

// Batch norm with non-trivial affine and running statistics, so its
// gradient path is exercised.
inline void randomize_batchnorm(BlockWeights<double>& weights, Rng& rng) {
  for (auto& w : weights) {
    if (!w.bn) continue;
    for (Index c = 0; c < w.bn->channels(); ++c) {
      w.bn->gamma[c] = rng.uniform(0.5, 1.5);
      w.bn->beta[c] = rng.normal(0.0, 0.1);
      w.bn->running_mean[c] = rng.normal(0.0, 0.1);
      w.bn->running_var[c] = rng.uniform(0.5, 1.5);
    }
  }
}

// Input gradient of <block(x), probe> against central differences, in f64.
// Draws weights, input and probe from `seed`, re-drawing with seed + k until
// every ReLU6 input sits at least min_kink_distance from 0 and 6.
inline BlockGradcheck gradcheck_block(const BlockSpec& spec, std::uint64_t seed,
                                      const BlockGradcheckOptions& options = {}) {
  BlockGradcheck out{build_block(spec), {}, seed, 0};
  const Shape in{options.batch, spec.in_channels, options.spatial, options.spatial};
  const Shape y = out.block.output_shape(in);
  for (int draw = 0; draw < options.max_draws; ++draw) {
    const std::uint64_t s = seed + std::uint64_t(draw);
    Rng rng(s);
    BlockWeights<double> weights = init_block_weights<double>(out.block, rng);
    randomize_batchnorm(weights, rng);
    Tensor<double> x(in);
    fill_normal(x, rng, 0.0, 1.0);
    Tensor<double> probe(y);
    fill_normal(probe, rng, 0.0, 1.0);

    GradTape<double> tape;
    record_block(tape, out.block, weights, tape.input(x));
    out.draws = draw + 1;
    if (tape.min_kink_distance() < options.min_kink_distance) continue;

    const BlockGraph& block = out.block;
    Composite fn = [&block, &weights, &probe](GradTape<double>& t, GradTape<double>::Id id) {
      return t.dot(record_block(t, block, weights, id).output, probe);
    };
    out.seed = s;
    out.result = gradcheck_detailed(fn, x, options.step);
    return out;
  }
  throw NumericError("no draw kept every ReLU6 input " + std::to_string(options.min_kink_distance) +
                     " away from its kinks after " + std::to_string(options.max_draws) + " tries");
}

}  // namespace sandglass

#endif  // SANDGLASS_GRADCHECK_HPP_
