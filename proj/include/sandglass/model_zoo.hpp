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

#ifndef SANDGLASS_MODEL_ZOO_HPP_
#define SANDGLASS_MODEL_ZOO_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sandglass/blocks.hpp"

namespace sandglass {

enum class ModelFamily {
  kMobileNeXt,
  kMobileNetV2,
  kMobileNetV2TwoDw,
  kVariantA,
  kVariantB,
  kVariantC,
};

std::string_view to_string(ModelFamily family);
ModelFamily parse_model_family(std::string_view name);

// One row of a stage table: `b` blocks of family `block` with ratio `t`,
// nominal width `c` (before the width multiplier) and first-block stride `s`.
struct StageSpec {
  BlockFamily block = BlockFamily::kSandglass;
  double t = 6.0;
  Index c = 0;
  Index s = 1;
  Index b = 1;

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

struct ModelConfig {
  ModelFamily family = ModelFamily::kMobileNeXt;
  double width_multiplier = 1.0;
  Index resolution = 224;
  Index num_classes = 1000;
  double alpha = 1.0;
  Index divisor = 8;
  // Empty means "the family's standard table".
  std::vector<StageSpec> stages;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::vector<StageSpec> default_stages(ModelFamily family);

// True for families that end in a 1x1 conv to 1280 before pooling
// (MobileNetV2 style); MobileNeXt-style families end in a 1280-wide block.
bool has_head_conv(ModelFamily family);

// A conv layer of the resolved graph with its stable id and shapes.
struct LayerEntry {
  std::string id;     // "stem", "blocks.3.reduce", "head", "classifier"
  std::string stage;  // "stem", "stage1", ..., "head"
  const ConvLayerSpec* spec = nullptr;
  Shape input;
  Shape output;
};

struct ModelGraph {
  ModelConfig config;  // stages resolved to the concrete table
  ConvLayerSpec stem;
  std::vector<BlockGraph> blocks;
  std::vector<Index> block_stage;  // 0-based stage index per block
  std::optional<ConvLayerSpec> head;
  ConvLayerSpec classifier;

  // Shapes for batch 1.
  Shape input_shape;
  Shape stem_output;
  std::vector<Shape> block_outputs;
  std::vector<Shape> stage_outputs;
  Shape features;  // input to the pooling layer
  Shape pooled;
  Shape logits;

  std::vector<LayerEntry> conv_layers() const;
  std::string block_prefix(std::size_t i) const { return "blocks." + std::to_string(i) + "."; }

  friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

ModelGraph build_model(const ModelConfig& config);

template <typename Scalar>
struct ModelWeights {
  ConvWeights<Scalar> stem;
  std::vector<BlockWeights<Scalar>> blocks;
  std::optional<ConvWeights<Scalar>> head;
  ConvWeights<Scalar> classifier;

  // Every conv unit's weights in conv_layers() order.
  std::vector<ConvWeights<Scalar>*> slots() {
    std::vector<ConvWeights<Scalar>*> out{&stem};
    for (auto& b : blocks)
      for (auto& l : b) out.push_back(&l);
    if (head) out.push_back(&*head);
    out.push_back(&classifier);
    return out;
  }
  std::vector<const ConvWeights<Scalar>*> slots() const {
    std::vector<const ConvWeights<Scalar>*> out{&stem};
    for (const auto& b : blocks)
      for (const auto& l : b) out.push_back(&l);
    if (head) out.push_back(&*head);
    out.push_back(&classifier);
    return out;
  }

  template <typename Other>
  ModelWeights<Other> cast() const {
    ModelWeights<Other> out{stem.template cast<Other>(), {}, std::nullopt,
                            classifier.template cast<Other>()};
    for (const auto& b : blocks) {
      BlockWeights<Other> bw;
      for (const auto& l : b) bw.push_back(l.template cast<Other>());
      out.blocks.push_back(std::move(bw));
    }
    if (head) out.head = head->template cast<Other>();
    return out;
  }
};

// Conv weights ~ N(0, sqrt(2 / fan_out)) drawn in conv_layers() order from a
// single stream seeded by `seed`; batch norm gamma=1, beta=0, mean=0, var=1.
template <typename Scalar>
ModelWeights<Scalar> init_weights(const ModelGraph& g, std::uint64_t seed) {
  Rng rng(seed);
  ModelWeights<Scalar> w;
  w.stem = init_conv_weights<Scalar>(g.stem, rng);
  for (const auto& block : g.blocks) w.blocks.push_back(init_block_weights<Scalar>(block, rng));
  if (g.head) w.head = init_conv_weights<Scalar>(*g.head, rng);
  w.classifier = init_conv_weights<Scalar>(g.classifier, rng);
  return w;
}

// Logits of shape (n, num_classes, 1, 1) for input (n, 3, r, r).
template <typename Scalar>
Tensor<Scalar> model_forward(const ModelGraph& g, const ModelWeights<Scalar>& w,
                             const Tensor<Scalar>& x, ForwardObserver<Scalar>* observer = nullptr) {
  const Shape& s = x.shape();
  if (s.c != 3 || s.h != g.config.resolution || s.w != g.config.resolution)
    throw ShapeError("model expects input (n,3," + std::to_string(g.config.resolution) + "," +
                     std::to_string(g.config.resolution) + "), got " + s.str());
  if (w.blocks.size() != g.blocks.size() || w.head.has_value() != g.head.has_value())
    throw ConfigError("weights do not match the model graph");
  Tensor<Scalar> y = x;
  if (observer) observer->on_site("input", y);
  y = conv_unit_forward(g.stem, w.stem, y, "stem", observer);
  for (std::size_t i = 0; i < g.blocks.size(); ++i)
    y = block_forward(g.blocks[i], w.blocks[i], y, observer, g.block_prefix(i));
  if (g.head) y = conv_unit_forward(*g.head, *w.head, y, "head", observer);
  y = global_avgpool(y);
  if (observer) observer->on_site("pool", y);
  return conv_unit_forward(g.classifier, w.classifier, y, "classifier", observer);
}

// Model spec JSON:
// {"family","width_multiplier","resolution","num_classes","alpha","divisor",
//  "stages":[{"block","t","c","s","b"}...]}
std::string export_model_spec(const ModelGraph& g);
// Accepts a model spec or any document carrying one under "model". Throws
// ParseError with a JSON pointer on schema violations.
ModelGraph import_model_spec(std::string_view json_text);

// ".ncw" weights: "NCWGHT01", '\n'-terminated JSON manifest
// {"dtype":"f32","bn_epsilon":e,"tensors":[{"layer","role","shape","offset"}...]}
// then concatenated little-endian f32 payloads (offsets relative to payload).
inline constexpr std::string_view kWeightsMagic = "NCWGHT01";

std::string encode_weights(const ModelGraph& g, const ModelWeights<float>& w);
ModelWeights<float> decode_weights(const ModelGraph& g, std::string_view bytes);
void write_weights(const ModelGraph& g, const ModelWeights<float>& w, const std::string& path);
ModelWeights<float> read_weights(const ModelGraph& g, const std::string& path);

}  // namespace sandglass

#endif  // SANDGLASS_MODEL_ZOO_HPP_
