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

#include "sandglass/model_zoo.hpp"

#include <array>
#include <utility>

namespace sandglass {
namespace {

constexpr std::array<std::pair<ModelFamily, std::string_view>, 6> kModelNames{{
    {ModelFamily::kMobileNeXt, "mobilenext"},
    {ModelFamily::kMobileNetV2, "mobilenetv2"},
    {ModelFamily::kMobileNetV2TwoDw, "mobilenetv2-2dw"},
    {ModelFamily::kVariantA, "variant-a"},
    {ModelFamily::kVariantB, "variant-b"},
    {ModelFamily::kVariantC, "variant-c"},
}};

constexpr Index kStemChannels = 32;
constexpr Index kHeadChannels = 1280;

std::vector<StageSpec> mobilenext_table(BlockFamily block) {
  // t, c, s, b
  return {
      {block, 2, 96, 2, 1},  {block, 6, 144, 1, 1}, {block, 6, 192, 2, 3},
      {block, 6, 288, 2, 3}, {block, 6, 384, 1, 4}, {block, 6, 576, 2, 4},
      {block, 6, 960, 1, 2}, {block, 6, 1280, 1, 1},
  };
}

std::vector<StageSpec> mobilenetv2_table(BlockFamily block) {
  return {
      {block, 1, 16, 1, 1}, {block, 6, 24, 2, 2}, {block, 6, 32, 2, 3},
      {block, 6, 64, 2, 4}, {block, 6, 96, 1, 3}, {block, 6, 160, 2, 3},
      {block, 6, 320, 1, 1},
  };
}

void validate(const ModelConfig& c) {
  if (!(c.width_multiplier > 0.0)) throw ConfigError("width multiplier must be positive");
  if (c.resolution < 1) throw ConfigError("resolution must be >= 1");
  if (c.num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0))
    throw ConfigError("identity tensor multiplier must lie in [0, 1]");
  if (c.divisor < 1) throw ConfigError("divisor must be >= 1");
  for (const auto& st : c.stages) {
    if (st.c < 1 || st.b < 1 || !(st.t >= 1.0) || (st.s != 1 && st.s != 2))
      throw ConfigError("invalid stage row (t, c, s, b)");
  }
}

ConvLayerSpec standard_conv(std::string name, Index in, Index out, Index k, Index stride,
                            bool bn, Activation act) {
  return {std::move(name), k == 1 ? ConvKind::kPointwise : ConvKind::kStandard,
          in, out, k, stride, 1, bn, act};
}

}  // namespace

std::string_view to_string(ModelFamily family) {
  for (const auto& [f, name] : kModelNames)
    if (f == family) return name;
  return "unknown";
}

ModelFamily parse_model_family(std::string_view name) {
  for (const auto& [f, n] : kModelNames)
    if (n == name) return f;
  throw ConfigError("unknown model family \"" + std::string(name) + "\"");
}

bool has_head_conv(ModelFamily family) {
  return family == ModelFamily::kMobileNetV2 || family == ModelFamily::kMobileNetV2TwoDw ||
         family == ModelFamily::kVariantC;
}

std::vector<StageSpec> default_stages(ModelFamily family) {
  switch (family) {
    case ModelFamily::kMobileNeXt:
      return mobilenext_table(BlockFamily::kSandglass);
    case ModelFamily::kVariantA:
      return mobilenext_table(BlockFamily::kVariantA);
    case ModelFamily::kVariantB:
      return mobilenext_table(BlockFamily::kVariantB);
    case ModelFamily::kMobileNetV2:
      return mobilenetv2_table(BlockFamily::kInvertedResidual);
    case ModelFamily::kMobileNetV2TwoDw:
      return mobilenetv2_table(BlockFamily::kInvertedResidual2dw);
    case ModelFamily::kVariantC:
      return mobilenetv2_table(BlockFamily::kVariantC);
  }
  throw ConfigError("unsupported model family");
}

std::vector<LayerEntry> ModelGraph::conv_layers() const {
  std::vector<LayerEntry> out;
  out.push_back({"stem", "stem", &stem, input_shape, stem_output});
  Shape in = stem_output;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string stage = "stage" + std::to_string(block_stage[i] + 1);
    for (const auto& layer : blocks[i].layers) {
      const SamePadding p = same_padding(in.h, layer.kernel, layer.stride);
      const Shape o{in.n, layer.out_channels, p.out, p.out};
      out.push_back({block_prefix(i) + layer.name, stage, &layer, in, o});
      in = o;
    }
  }
  if (head) {
    out.push_back({"head", "head", &*head, in, features});
    in = features;
  }
  out.push_back({"classifier", "head", &classifier, pooled, logits});
  return out;
}

ModelGraph build_model(const ModelConfig& config) {
  validate(config);
  ModelGraph g;
  g.config = config;
  if (g.config.stages.empty()) g.config.stages = default_stages(config.family);
  const ModelConfig& c = g.config;
  const double m = c.width_multiplier;
  const bool head = has_head_conv(c.family);

  const Index stem_width = round_channels(double(kStemChannels) * m, c.divisor);
  g.input_shape = {1, 3, c.resolution, c.resolution};
  g.stem = standard_conv("stem", 3, stem_width, 3, 2, true, Activation::kReLU6);
  const Index stem_hw = same_padding(c.resolution, 3, 2).out;
  g.stem_output = {1, stem_width, stem_hw, stem_hw};

  Shape current = g.stem_output;
  for (std::size_t si = 0; si < c.stages.size(); ++si) {
    const StageSpec& st = c.stages[si];
    // The widest feature layer is never scaled below its nominal width.
    const bool last_feature_stage = !head && si + 1 == c.stages.size();
    const double scale = last_feature_stage ? std::max(1.0, m) : m;
    const Index width = round_channels(double(st.c) * scale, c.divisor);
    for (Index r = 0; r < st.b; ++r) {
      BlockSpec spec;
      spec.family = st.block;
      spec.in_channels = current.c;
      spec.out_channels = width;
      spec.ratio = st.t;
      spec.stride = r == 0 ? st.s : 1;
      spec.alpha = st.block == BlockFamily::kSandglass ? c.alpha : 1.0;
      spec.divisor = c.divisor;
      g.blocks.push_back(build_block(spec));
      g.block_stage.push_back(Index(si));
      current = g.blocks.back().output_shape(current);
      g.block_outputs.push_back(current);
    }
    g.stage_outputs.push_back(current);
  }

  if (head) {
    const Index width = round_channels(double(kHeadChannels) * std::max(1.0, m), c.divisor);
    g.head = standard_conv("head", current.c, width, 1, 1, true, Activation::kReLU6);
    current = {current.n, width, current.h, current.w};
  }
  g.features = current;
  g.pooled = {current.n, current.c, 1, 1};
  g.classifier =
      standard_conv("classifier", current.c, c.num_classes, 1, 1, false, Activation::kLinear);
  g.logits = {current.n, c.num_classes, 1, 1};
  return g;
}

}  // namespace sandglass
