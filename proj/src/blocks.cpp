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

#include "sandglass/blocks.hpp"

#include <array>
#include <utility>

namespace sandglass {
namespace {

constexpr std::array<std::pair<BlockFamily, std::string_view>, 7> kFamilyNames{{
    {BlockFamily::kSandglass, "sandglass"},
    {BlockFamily::kInvertedResidual, "inverted"},
    {BlockFamily::kInvertedResidual2dw, "inverted-2dw"},
    {BlockFamily::kVariantA, "variant-a"},
    {BlockFamily::kVariantB, "variant-b"},
    {BlockFamily::kVariantC, "variant-c"},
    {BlockFamily::kClassicBottleneck, "classic"},
}};

// Public MobileNeXt code never lets the bottleneck drop below N / 6.
constexpr double kMinBottleneckRatio = 6.0;
constexpr Index kWidenedDivisor = 16;

ConvLayerSpec depthwise(std::string name, Index channels, Index stride, Activation act) {
  return {std::move(name), ConvKind::kDepthwise, channels, channels, 3, stride, channels, true,
          act};
}

ConvLayerSpec pointwise(std::string name, Index in, Index out, Activation act) {
  return {std::move(name), ConvKind::kPointwise, in, out, 1, 1, 1, true, act};
}

void validate(const BlockSpec& spec) {
  if (spec.in_channels < 1 || spec.out_channels < 1)
    throw ConfigError("block channel counts must be >= 1");
  if (spec.stride != 1 && spec.stride != 2) throw ConfigError("block stride must be 1 or 2");
  if (!(spec.ratio >= 1.0)) throw ConfigError("block ratio must be >= 1");
  if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0))
    throw ConfigError("identity tensor multiplier must lie in [0, 1]");
  if (spec.divisor < 1) throw ConfigError("channel divisor must be >= 1");
}

bool has_shortcut(const BlockSpec& spec) {
  return spec.stride == 1 && spec.in_channels == spec.out_channels;
}

Index expanded_channels(const BlockSpec& spec) {
  return Index(std::llround(double(spec.in_channels) * spec.ratio));
}

}  // namespace

std::string_view to_string(BlockFamily family) {
  for (const auto& [f, name] : kFamilyNames)
    if (f == family) return name;
  return "unknown";
}

BlockFamily parse_block_family(std::string_view name) {
  for (const auto& [f, n] : kFamilyNames)
    if (n == name) return f;
  throw ConfigError("unknown block family \"" + std::string(name) + "\"");
}

std::string_view to_string(Activation act) {
  return act == Activation::kReLU6 ? "relu6" : "linear";
}

std::string_view to_string(ConvKind kind) {
  switch (kind) {
    case ConvKind::kDepthwise:
      return "dwconv";
    case ConvKind::kPointwise:
      return "pwconv";
    case ConvKind::kStandard:
      break;
  }
  return "conv2d";
}

std::vector<Activation> BlockGraph::activation_map() const {
  std::vector<Activation> acts;
  for (const auto& l : layers) acts.push_back(l.activation);
  return acts;
}

int BlockGraph::relu6_count() const {
  int n = 0;
  for (const auto& l : layers) n += l.activation == Activation::kReLU6;
  return n;
}

std::vector<Index> BlockGraph::depthwise_widths() const {
  std::vector<Index> widths;
  for (const auto& l : layers)
    if (l.kind == ConvKind::kDepthwise) widths.push_back(l.out_channels);
  return widths;
}

Shape BlockGraph::output_shape(const Shape& input) const {
  if (input.c != in_channels())
    throw ShapeError("block expects " + std::to_string(in_channels()) + " channels, got " +
                     std::to_string(input.c));
  return {input.n, out_channels(), same_padding(input.h, 3, stride()).out,
          same_padding(input.w, 3, stride()).out};
}

Index bottleneck_channels(const BlockSpec& spec) {
  const double reduced = double(spec.in_channels) / spec.ratio;
  if (std::floor(reduced + 0.5) < 1.0)
    throw ConfigError("bottleneck width " + std::to_string(spec.in_channels) + "/" +
                      std::to_string(spec.ratio) + " rounds to 0");
  Index mid = round_channels(reduced, spec.divisor);
  const double floor_width = double(spec.out_channels) / kMinBottleneckRatio;
  if (double(mid) < floor_width) mid = round_channels(std::ceil(floor_width), kWidenedDivisor);
  return mid;
}

BlockGraph build_sandglass(const BlockSpec& in) {
  BlockSpec spec = in;
  spec.family = BlockFamily::kSandglass;
  validate(spec);
  const Index m = spec.in_channels;
  const Index n = spec.out_channels;
  const Index mid = bottleneck_channels(spec);
  BlockGraph g{spec, {}, has_shortcut(spec)};
  g.layers = {
      depthwise("dw1", m, 1, Activation::kReLU6),
      pointwise("reduce", m, mid, Activation::kLinear),
      pointwise("expand", mid, n, Activation::kReLU6),
      depthwise("dw2", n, spec.stride, Activation::kLinear),
  };
  return g;
}

BlockGraph build_inverted_residual(const BlockSpec& in, bool second_depthwise) {
  BlockSpec spec = in;
  spec.family =
      second_depthwise ? BlockFamily::kInvertedResidual2dw : BlockFamily::kInvertedResidual;
  validate(spec);
  const Index hidden = expanded_channels(spec);
  BlockGraph g{spec, {}, has_shortcut(spec)};
  if (spec.ratio != 1.0)
    g.layers.push_back(pointwise("expand", spec.in_channels, hidden, Activation::kReLU6));
  g.layers.push_back(depthwise("dw", hidden, spec.stride, Activation::kReLU6));
  if (second_depthwise) g.layers.push_back(depthwise("dw_extra", hidden, 1, Activation::kReLU6));
  g.layers.push_back(pointwise("project", hidden, spec.out_channels, Activation::kLinear));
  return g;
}

BlockGraph build_variant(BlockFamily kind, const BlockSpec& in) {
  BlockSpec spec = in;
  spec.family = kind;
  validate(spec);
  const Index m = spec.in_channels;
  const Index n = spec.out_channels;
  BlockGraph g{spec, {}, has_shortcut(spec)};
  switch (kind) {
    case BlockFamily::kVariantA: {
      const Index mid = bottleneck_channels(spec);
      g.layers = {
          pointwise("reduce", m, mid, Activation::kReLU6),
          depthwise("dw", mid, spec.stride, Activation::kReLU6),
          pointwise("expand", mid, n, Activation::kLinear),
      };
      break;
    }
    case BlockFamily::kVariantB: {
      const Index mid = bottleneck_channels(spec);
      g.layers = {
          pointwise("reduce", m, mid, Activation::kReLU6),
          depthwise("dw1", mid, 1, Activation::kLinear),
          depthwise("dw2", mid, spec.stride, Activation::kReLU6),
          pointwise("expand", mid, n, Activation::kLinear),
      };
      break;
    }
    case BlockFamily::kVariantC: {
      const Index hidden = expanded_channels(spec);
      g.layers = {
          depthwise("dw1", m, 1, Activation::kReLU6),
          pointwise("expand", m, hidden, Activation::kLinear),
          pointwise("reduce", hidden, n, Activation::kReLU6),
          depthwise("dw2", n, spec.stride, Activation::kLinear),
      };
      break;
    }
    default:
      throw ConfigError("build_variant expects variant-a, variant-b or variant-c");
  }
  return g;
}

BlockGraph build_classic_bottleneck(const BlockSpec& in) {
  BlockSpec spec = in;
  spec.family = BlockFamily::kClassicBottleneck;
  validate(spec);
  const Index mid = bottleneck_channels(spec);
  BlockGraph g{spec, {}, has_shortcut(spec)};
  g.layers = {
      pointwise("reduce", spec.in_channels, mid, Activation::kReLU6),
      {"conv", ConvKind::kStandard, mid, mid, 3, spec.stride, 1, true, Activation::kReLU6},
      pointwise("expand", mid, spec.out_channels, Activation::kLinear),
  };
  return g;
}

BlockGraph build_block(const BlockSpec& spec) {
  switch (spec.family) {
    case BlockFamily::kSandglass:
      return build_sandglass(spec);
    case BlockFamily::kInvertedResidual:
      return build_inverted_residual(spec, false);
    case BlockFamily::kInvertedResidual2dw:
      return build_inverted_residual(spec, true);
    case BlockFamily::kVariantA:
    case BlockFamily::kVariantB:
    case BlockFamily::kVariantC:
      return build_variant(spec.family, spec);
    case BlockFamily::kClassicBottleneck:
      return build_classic_bottleneck(spec);
  }
  throw ConfigError("unsupported block family");
}

}  // namespace sandglass
