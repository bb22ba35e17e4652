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

#ifndef SANDGLASS_BLOCKS_HPP_
#define SANDGLASS_BLOCKS_HPP_

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sandglass/channels.hpp"
#include "sandglass/observer.hpp"
#include "sandglass/ops.hpp"
#include "sandglass/tape.hpp"

namespace sandglass {

enum class BlockFamily {
  kSandglass,
  kInvertedResidual,
  kInvertedResidual2dw,  // MobileNetV2 block with a second middle depthwise
  kVariantA,             // bottleneck with one depthwise inside the bottleneck
  kVariantB,             // bottleneck with two depthwise inside the bottleneck
  kVariantC,             // sandglass with the pointwise pair swapped
  kClassicBottleneck,    // ResNet-style 1x1 / 3x3 / 1x1
};

std::string_view to_string(BlockFamily family);
// Accepts the names produced by to_string; throws ConfigError otherwise.
BlockFamily parse_block_family(std::string_view name);

enum class Activation { kLinear, kReLU6 };
enum class ConvKind { kStandard, kDepthwise, kPointwise };

std::string_view to_string(Activation act);
std::string_view to_string(ConvKind kind);

struct ConvLayerSpec {
  std::string name;
  ConvKind kind = ConvKind::kStandard;
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 1;
  Index stride = 1;
  Index groups = 1;
  bool batchnorm = true;
  Activation activation = Activation::kLinear;

  Shape weight_shape() const { return {out_channels, in_channels / groups, kernel, kernel}; }
  Index fan_out() const { return (out_channels / groups) * kernel * kernel; }
  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

// Common description for every block family. `ratio` is the reduction ratio
// for bottleneck-style families and the expansion ratio for inverted-residual
// style ones (including variant C).
struct BlockSpec {
  BlockFamily family = BlockFamily::kSandglass;
  Index in_channels = 0;
  Index out_channels = 0;
  double ratio = 1.0;
  Index stride = 1;
  double alpha = 1.0;
  Index divisor = 8;

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct BlockGraph {
  BlockSpec spec;
  std::vector<ConvLayerSpec> layers;
  bool shortcut = false;

  Index in_channels() const { return spec.in_channels; }
  Index out_channels() const { return spec.out_channels; }
  Index stride() const { return spec.stride; }
  double alpha() const { return spec.alpha; }

  std::vector<Activation> activation_map() const;
  int relu6_count() const;
  // Widths of the depthwise layers, in order.
  std::vector<Index> depthwise_widths() const;
  Shape output_shape(const Shape& input) const;

  friend bool operator==(const BlockGraph&, const BlockGraph&) = default;
};

// Bottleneck width for reduce-style blocks: round_channels(M / t), widened to
// round_channels(ceil(N / 6), 16) whenever it would be narrower than N / 6.
Index bottleneck_channels(const BlockSpec& spec);

BlockGraph build_sandglass(const BlockSpec& spec);
BlockGraph build_inverted_residual(const BlockSpec& spec, bool second_depthwise = false);
BlockGraph build_variant(BlockFamily kind, const BlockSpec& spec);
BlockGraph build_classic_bottleneck(const BlockSpec& spec);
// Dispatches on spec.family.
BlockGraph build_block(const BlockSpec& spec);

template <typename Scalar>
struct ConvWeights {
  Tensor<Scalar> weight;
  std::optional<BatchNormParams<Scalar>> bn;

  template <typename Other>
  ConvWeights<Other> cast() const {
    ConvWeights<Other> out{weight.template cast<Other>(), std::nullopt};
    if (bn) out.bn = bn->template cast<Other>();
    return out;
  }
};

template <typename Scalar>
using BlockWeights = std::vector<ConvWeights<Scalar>>;

// Conv weights ~ N(0, sqrt(2 / fan_out)), batch norm at identity.
template <typename Scalar>
ConvWeights<Scalar> init_conv_weights(const ConvLayerSpec& layer, Rng& rng) {
  ConvWeights<Scalar> w{Tensor<Scalar>(layer.weight_shape()), std::nullopt};
  fill_normal(w.weight, rng, 0.0, std::sqrt(2.0 / double(layer.fan_out())));
  if (layer.batchnorm) w.bn = BatchNormParams<Scalar>::identity(layer.out_channels);
  return w;
}

template <typename Scalar>
BlockWeights<Scalar> init_block_weights(const BlockGraph& block, Rng& rng) {
  BlockWeights<Scalar> weights;
  for (const auto& layer : block.layers) weights.push_back(init_conv_weights<Scalar>(layer, rng));
  return weights;
}

// conv -> BN -> activation for one layer.
template <typename Scalar>
Tensor<Scalar> conv_unit_forward(const ConvLayerSpec& layer, const ConvWeights<Scalar>& w,
                                 const Tensor<Scalar>& x, const std::string& site,
                                 ForwardObserver<Scalar>* observer) {
  MacCounter counter;
  Tensor<Scalar> y = conv2d_forward(x, Conv2dParams<Scalar>{w.weight, layer.groups, layer.stride},
                                    observer ? &counter : nullptr);
  if (observer) observer->on_conv(site, counter.macs);
  if (layer.batchnorm) {
    if (!w.bn) throw ConfigError("layer " + site + " expects batch norm parameters");
    y = batchnorm_forward(y, *w.bn);
  }
  if (layer.activation == Activation::kReLU6) y = relu6_forward(y);
  if (observer) observer->on_site(site, y);
  return y;
}

template <typename Scalar>
Tensor<Scalar> block_forward(const BlockGraph& block, const BlockWeights<Scalar>& weights,
                             const Tensor<Scalar>& x, ForwardObserver<Scalar>* observer = nullptr,
                             const std::string& prefix = "") {
  if (x.channels() != block.in_channels())
    throw ShapeError("block expects " + std::to_string(block.in_channels()) +
                     " input channels, got " + std::to_string(x.channels()));
  if (weights.size() != block.layers.size())
    throw ConfigError("block weights do not match the block's layer count");
  Tensor<Scalar> y = x;
  for (std::size_t i = 0; i < block.layers.size(); ++i)
    y = conv_unit_forward(block.layers[i], weights[i], y, prefix + block.layers[i].name,
                          observer);
  if (block.shortcut) {
    y = partial_residual_add(y, x, block.alpha());
    if (observer) observer->on_site(prefix + "add", y);
  }
  return y;
}

// Tape ids for one conv unit's differentiable parameters.
struct LayerParamIds {
  std::size_t weight = 0;
  std::optional<std::size_t> gamma;
  std::optional<std::size_t> beta;
};

template <typename Scalar>
struct RecordedBlock {
  typename GradTape<Scalar>::Id output = 0;
  std::vector<LayerParamIds> params;
};

// Same computation as block_forward, recorded on a tape. Weights become tape
// inputs so their gradients are available after backward().
template <typename Scalar>
RecordedBlock<Scalar> record_block(GradTape<Scalar>& tape, const BlockGraph& block,
                                   const BlockWeights<Scalar>& weights,
                                   typename GradTape<Scalar>::Id x) {
  if (tape.value(x).channels() != block.in_channels())
    throw ShapeError("block expects " + std::to_string(block.in_channels()) +
                     " input channels, got " + std::to_string(tape.value(x).channels()));
  RecordedBlock<Scalar> rec;
  auto y = x;
  for (std::size_t i = 0; i < block.layers.size(); ++i) {
    const ConvLayerSpec& layer = block.layers[i];
    const ConvWeights<Scalar>& w = weights.at(i);
    LayerParamIds ids;
    ids.weight = tape.input(w.weight);
    y = tape.conv2d(y, ids.weight, layer.groups, layer.stride);
    if (layer.batchnorm) {
      const Shape vs{1, layer.out_channels, 1, 1};
      ids.gamma = tape.input(Tensor<Scalar>(vs, w.bn->gamma));
      ids.beta = tape.input(Tensor<Scalar>(vs, w.bn->beta));
      y = tape.batchnorm(y, *ids.gamma, *ids.beta, w.bn->running_mean, w.bn->running_var,
                         w.bn->epsilon);
    }
    if (layer.activation == Activation::kReLU6) y = tape.relu6(y);
    rec.params.push_back(ids);
  }
  if (block.shortcut) y = tape.partial_residual_add(y, x, block.alpha());
  rec.output = y;
  return rec;
}

}  // namespace sandglass

#endif  // SANDGLASS_BLOCKS_HPP_
