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

#include <gtest/gtest.h>

#include "sandglass/channels.hpp"
#include "sandglass/model_zoo.hpp"
#include "sandglass/tensor_io.hpp"
#include "test_util.hpp"

namespace sandglass {
namespace {

using testing::random_tensor;

ModelConfig config(ModelFamily f, double m = 1.0, Index r = 224, Index k = 1000, double a = 1.0) {
  ModelConfig c;
  c.family = f;
  c.width_multiplier = m;
  c.resolution = r;
  c.num_classes = k;
  c.alpha = a;
  return c;
}

ModelConfig toy_config() {
  ModelConfig c = config(ModelFamily::kMobileNeXt, 1.0, 32, 10);
  c.stages = {{BlockFamily::kSandglass, 2.0, 32, 1, 1}, {BlockFamily::kSandglass, 2.0, 64, 2, 1}};
  return c;
}

TEST(RoundChannelsTest, Examples) {
  EXPECT_EQ(round_channels(96), 96);
  EXPECT_EQ(round_channels(72), 72);
  EXPECT_EQ(round_channels(33.6), 32);
  EXPECT_EQ(round_channels(11.2), 16);
  EXPECT_EQ(round_channels(3.0), 8);
  EXPECT_EQ(round_channels(1280 * 1.4), 1792);
  EXPECT_THROW(round_channels(0.0), ConfigError);
  EXPECT_THROW(round_channels(8.0, 0), ConfigError);
}

TEST(RoundChannelsTest, NeverBelowDivisorNorNinetyPercent) {
  for (double raw = 0.5; raw < 500.0; raw += 0.37) {
    const Index v = round_channels(raw);
    EXPECT_GE(v, 8);
    EXPECT_EQ(v % 8, 0);
    EXPECT_GE(double(v), 0.9 * raw);
  }
}

TEST(ModelZooTest, MobileNeXtTableShapes) {
  const auto g = build_model(config(ModelFamily::kMobileNeXt));
  EXPECT_EQ(g.blocks.size(), 19u);
  EXPECT_EQ(g.stem_output, (Shape{1, 32, 112, 112}));
  const std::vector<Shape> expect{{1, 96, 56, 56},   {1, 144, 56, 56}, {1, 192, 28, 28},
                                  {1, 288, 14, 14},  {1, 384, 14, 14}, {1, 576, 7, 7},
                                  {1, 960, 7, 7},    {1, 1280, 7, 7}};
  EXPECT_EQ(g.stage_outputs, expect);
  EXPECT_EQ(g.pooled, (Shape{1, 1280, 1, 1}));
  EXPECT_EQ(g.logits, (Shape{1, 1000, 1, 1}));
  EXPECT_FALSE(g.head.has_value());
}

TEST(ModelZooTest, FirstBlockOfStageCarriesStride) {
  const auto g = build_model(config(ModelFamily::kMobileNeXt));
  Index prev = -1;
  for (std::size_t i = 0; i < g.blocks.size(); ++i) {
    const Index stage = g.block_stage[i];
    const Index s = g.config.stages[std::size_t(stage)].s;
    EXPECT_EQ(g.blocks[i].stride(), stage != prev ? s : 1) << "block " << i;
    prev = stage;
  }
}

TEST(ModelZooTest, NarrowStemAtSmallWidth) {
  EXPECT_EQ(build_model(config(ModelFamily::kMobileNeXt, 0.35)).stem.out_channels, 16);
  EXPECT_EQ(build_model(config(ModelFamily::kMobileNetV2, 0.5)).stem.out_channels, 16);
  EXPECT_EQ(build_model(config(ModelFamily::kMobileNeXt, 1.4)).stem.out_channels, 48);
}

TEST(ModelZooTest, MobileNetV2Baseline) {
  const auto g = build_model(config(ModelFamily::kMobileNetV2));
  EXPECT_EQ(g.blocks.size(), 17u);
  ASSERT_TRUE(g.head.has_value());
  EXPECT_EQ(g.head->out_channels, 1280);
  EXPECT_EQ(g.features, (Shape{1, 1280, 7, 7}));
  EXPECT_EQ(g.stage_outputs.back(), (Shape{1, 320, 7, 7}));
  EXPECT_EQ(build_model(config(ModelFamily::kMobileNetV2, 0.35)).head->out_channels, 1280);
  EXPECT_EQ(build_model(config(ModelFamily::kMobileNetV2, 1.4)).head->out_channels, 1792);
}

TEST(ModelZooTest, FamilyNames) {
  for (auto f : {ModelFamily::kMobileNeXt, ModelFamily::kMobileNetV2, ModelFamily::kMobileNetV2TwoDw,
                 ModelFamily::kVariantA, ModelFamily::kVariantB, ModelFamily::kVariantC})
    EXPECT_EQ(parse_model_family(to_string(f)), f);
  EXPECT_THROW(parse_model_family("resnet"), ConfigError);
}

TEST(ModelZooTest, InvalidConfigs) {
  EXPECT_THROW(build_model(config(ModelFamily::kMobileNeXt, 0.0)), ConfigError);
  EXPECT_THROW(build_model(config(ModelFamily::kMobileNeXt, 1.0, 0)), ConfigError);
  EXPECT_THROW(build_model(config(ModelFamily::kMobileNeXt, 1.0, 224, 0)), ConfigError);
  EXPECT_THROW(build_model(config(ModelFamily::kMobileNeXt, 1.0, 224, 10, -0.5)), ConfigError);
}

TEST(ModelZooTest, ToyResolutionHalvesByCeil) {
  auto c = config(ModelFamily::kMobileNeXt, 1.0, 33, 10);
  const auto g = build_model(c);
  EXPECT_EQ(g.stem_output.h, 17);
  EXPECT_EQ(g.stage_outputs[0].h, 9);
  EXPECT_EQ(g.stage_outputs[2].h, 5);
  EXPECT_EQ(g.stage_outputs.back().h, 2);
}

TEST(ModelZooTest, AlphaOnlyOnShortcutBlocksAndShapeInvariant) {
  const auto full = build_model(config(ModelFamily::kMobileNeXt));
  const auto half = build_model(config(ModelFamily::kMobileNeXt, 1.0, 224, 1000, 0.5));
  EXPECT_EQ(half.stage_outputs, full.stage_outputs);
  for (const auto& b : half.blocks) EXPECT_EQ(b.alpha(), 0.5);
  const auto v2 = build_model(config(ModelFamily::kMobileNetV2, 1.0, 224, 1000, 0.5));
  for (const auto& b : v2.blocks) EXPECT_EQ(b.alpha(), 1.0);
}

TEST(ModelForwardTest, LogitsShapeAndDeterminism) {
  const auto g = build_model(toy_config());
  const auto w = init_weights<float>(g, 5);
  Rng rng(6);
  const auto x = random_tensor<float>({3, 3, 32, 32}, rng);
  const auto a = model_forward(g, w, x);
  EXPECT_EQ(a.shape(), (Shape{3, 10, 1, 1}));
  EXPECT_EQ(model_forward(g, w, x), a);
  EXPECT_EQ(encode_tensor(model_forward(g, init_weights<float>(g, 5), x)), encode_tensor(a));
}

TEST(ModelForwardTest, FullSizeLogitsShape) {
  const auto g = build_model(config(ModelFamily::kMobileNeXt, 0.35));
  const auto y = model_forward(g, init_weights<float>(g, 1), Tensor<float>({1, 3, 224, 224}, 0.5f));
  EXPECT_EQ(y.shape(), (Shape{1, 1000, 1, 1}));
}

TEST(ModelForwardTest, ResolutionMismatchIsShapeError) {
  const auto g = build_model(toy_config());
  EXPECT_THROW(model_forward(g, init_weights<float>(g, 1), Tensor<float>({1, 3, 64, 64})),
               ShapeError);
  EXPECT_THROW(model_forward(g, init_weights<float>(g, 1), Tensor<float>({1, 4, 32, 32})),
               ShapeError);
}

TEST(ModelForwardTest, AlphaChangesValuesNotShapes) {
  auto c = toy_config();
  const auto g1 = build_model(c);
  c.alpha = 0.5;
  const auto g2 = build_model(c);
  const auto w = init_weights<float>(g1, 2);
  const Tensor<float> x({1, 3, 32, 32}, 0.3f);
  const auto a = model_forward(g1, w, x);
  const auto b = model_forward(g2, w, x);
  EXPECT_EQ(a.shape(), b.shape());
  EXPECT_FALSE(a == b);
}

TEST(InitWeightsTest, SeedDeterminesEverything) {
  const auto g = build_model(toy_config());
  const auto a = init_weights<float>(g, 42);
  const auto b = init_weights<float>(g, 42);
  const auto c = init_weights<float>(g, 43);
  EXPECT_EQ(encode_weights(g, a), encode_weights(g, b));
  EXPECT_NE(encode_weights(g, a), encode_weights(g, c));
  for (const auto* slot : a.slots())
    if (slot->bn) EXPECT_TRUE((slot->bn->gamma.array() == 1.0f).all());
}

TEST(ModelSpecTest, RoundTripAndStableExport) {
  for (auto f : {ModelFamily::kMobileNeXt, ModelFamily::kMobileNetV2, ModelFamily::kVariantC}) {
    const auto g = build_model(config(f, 0.75, 192, 100, 1.0));
    const std::string spec = export_model_spec(g);
    EXPECT_EQ(export_model_spec(g), spec);
    const auto back = import_model_spec(spec);
    EXPECT_EQ(back, g);
    EXPECT_EQ(export_model_spec(back), spec);
  }
  const auto toy = build_model(toy_config());
  EXPECT_EQ(import_model_spec(export_model_spec(toy)), toy);
}

TEST(ModelSpecTest, AcceptsNestedModelKey) {
  const auto g = build_model(toy_config());
  const std::string doc = "{\"layers\": [], \"model\": " + export_model_spec(g) + "}";
  EXPECT_EQ(import_model_spec(doc), g);
}

std::string pointer_of(const std::string& json) {
  try {
    import_model_spec(json);
  } catch (const ParseError& e) {
    return e.pointer();
  }
  return "<no error>";
}

TEST(ModelSpecTest, SchemaViolationsCarryPointers) {
  std::string spec = export_model_spec(build_model(toy_config()));
  auto replace = [&spec](const std::string& from, const std::string& to) {
    std::string s = spec;
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  EXPECT_EQ(pointer_of(replace("\"block\": \"sandglass\"", "\"block\": \"dense\"")),
            "/stages/0/block");
  EXPECT_EQ(pointer_of(replace("\"family\": \"mobilenext\"", "\"family\": 3")), "/family");
  EXPECT_EQ(pointer_of(replace("\"resolution\": 32", "\"resolution\": \"32\"")), "/resolution");
  EXPECT_EQ(pointer_of("[1, 2]"), "");
  EXPECT_THROW(import_model_spec("{not json"), ParseError);
}

TEST(WeightsFileTest, RoundTripAndForwardEquality) {
  const auto g = build_model(toy_config());
  auto w = init_weights<float>(g, 8);
  Rng rng(9);
  for (auto* slot : w.slots())
    if (slot->bn) {
      for (Index c = 0; c < slot->bn->channels(); ++c) {
        slot->bn->running_mean[c] = float(rng.normal(0.0, 0.1));
        slot->bn->running_var[c] = float(rng.uniform(0.5, 2.0));
      }
    }
  testing::TempDir dir;
  write_weights(g, w, dir.file("m.ncw"));
  const auto back = read_weights(g, dir.file("m.ncw"));
  EXPECT_EQ(encode_weights(g, back), encode_weights(g, w));
  const Tensor<float> x({1, 3, 32, 32}, 0.25f);
  EXPECT_EQ(model_forward(g, back, x), model_forward(g, w, x));
}

TEST(WeightsFileTest, CorruptFilesAreFormatErrors) {
  const auto g = build_model(toy_config());
  const std::string bytes = encode_weights(g, init_weights<float>(g, 1));
  EXPECT_THROW(decode_weights(g, bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(decode_weights(g, bytes + "zz"), FormatError);
  std::string bad = bytes;
  bad[3] = '?';
  EXPECT_THROW(decode_weights(g, bad), FormatError);
  auto other = toy_config();
  other.num_classes = 11;
  EXPECT_THROW(decode_weights(build_model(other), bytes), FormatError);
}

}  // namespace
}  // namespace sandglass
