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

#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sandglass/complexity.hpp"
#include "test_util.hpp"

#ifndef SANDGLASS_GOLDEN_DIR
#define SANDGLASS_GOLDEN_DIR "tests/golden"
#endif

namespace sandglass {
namespace {

ModelGraph toy_model() {
  ModelConfig c;
  c.resolution = 32;
  c.num_classes = 10;
  c.stages = {{BlockFamily::kSandglass, 2.0, 32, 1, 1}, {BlockFamily::kSandglass, 2.0, 64, 2, 1}};
  return build_model(c);
}

ModelGraph standard(ModelFamily f, double m = 1.0) {
  ModelConfig c;
  c.family = f;
  c.width_multiplier = m;
  return build_model(c);
}

class MacTally : public ForwardObserver<float> {
 public:
  void on_conv(const std::string& layer, std::uint64_t macs) override {
    per_layer[layer] += macs;
    total += macs;
  }
  std::map<std::string, std::uint64_t> per_layer;
  std::uint64_t total = 0;
};

TEST(ConvCountTest, DepthwiseExample) {
  ConvLayerSpec dw{"dw", ConvKind::kDepthwise, 32, 32, 3, 1, 32};
  EXPECT_EQ(conv_params(dw), 288u);
  EXPECT_EQ(conv_madds(dw, {1, 32, 112, 112}), 3'612'672u);
}

TEST(ConvCountTest, ClosedForms) {
  ConvLayerSpec pw{"pw", ConvKind::kPointwise, 96, 16, 1, 1, 1};
  EXPECT_EQ(conv_params(pw), 96u * 16u);
  EXPECT_EQ(conv_madds(pw, {1, 16, 14, 14}), 96u * 16u * 196u);
  ConvLayerSpec stem{"stem", ConvKind::kStandard, 3, 32, 3, 2, 1};
  EXPECT_EQ(conv_params(stem), 864u);
  EXPECT_EQ(conv_madds(stem, {1, 32, 112, 112}), 864u * 12544u);
  ConvLayerSpec grouped{"g", ConvKind::kStandard, 8, 12, 3, 1, 4};
  EXPECT_EQ(conv_params(grouped), 9u * 2u * 12u);
}

TEST(ConvCountTest, MatchesOracleMacCount) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int groups = 1 + int(rng.next_u64() % 3);
    const int cin = groups * (1 + int(rng.next_u64() % 3));
    const int cout = groups * (1 + int(rng.next_u64() % 3));
    const int k = rng.uniform() < 0.5 ? 1 : 3;
    const int s = 1 + int(rng.next_u64() % 2);
    const int hw = 3 + int(rng.next_u64() % 6);
    oracle::Array x({1, cin, hw, hw});
    oracle::Array w({cout, cin / groups, k, k});
    std::uint64_t macs = 0;
    const auto y = oracle::conv2d(x, w, groups, s, &macs);
    ConvLayerSpec layer{"c", ConvKind::kStandard, cin, cout, k, s, groups};
    const Shape out{1, cout, y.d.h, y.d.w};
    EXPECT_EQ(conv_madds(layer, out), macs) << "trial " << trial;
  }
}

TEST(AnalyzeTest, TotalsAreRowSums) {
  for (auto f : {ModelFamily::kMobileNeXt, ModelFamily::kMobileNetV2, ModelFamily::kVariantB}) {
    const auto r = analyze(standard(f));
    std::uint64_t p = 0, m = 0;
    for (const auto& row : r.rows) {
      p += row.params;
      m += row.madds;
    }
    EXPECT_EQ(r.total_params, p);
    EXPECT_EQ(r.total_madds, m);
  }
}

TEST(AnalyzeTest, RowOrderAndTypes) {
  const auto g = toy_model();
  const auto r = analyze(g);
  EXPECT_EQ(r.rows.front().id, "stem");
  EXPECT_EQ(r.rows.front().type, "conv2d");
  EXPECT_EQ(r.rows[1].id, "stem.bn");
  EXPECT_EQ(r.rows.back().id, "classifier");
  EXPECT_EQ(r.rows[r.rows.size() - 2].type, "avgpool");
  std::size_t adds = 0;
  for (const auto& row : r.rows) adds += row.type == "add";
  std::size_t shortcuts = 0;
  for (const auto& b : g.blocks) shortcuts += b.shortcut;
  EXPECT_EQ(adds, shortcuts);
  EXPECT_EQ(r.model, "mobilenext-1.00");
}

TEST(AnalyzeTest, CountsMatchExecutedMacs) {
  for (const auto& g : {toy_model(), standard(ModelFamily::kMobileNetV2, 0.35),
                        standard(ModelFamily::kVariantC, 0.5)}) {
    MacTally tally;
    model_forward(g, init_weights<float>(g, 1),
                  Tensor<float>({1, 3, g.config.resolution, g.config.resolution}, 0.1f), &tally);
    const auto r = analyze(g);
    EXPECT_EQ(r.total_madds, tally.total);
    for (const auto& row : r.rows)
      if (row.type.find("conv") != std::string::npos)
        EXPECT_EQ(row.madds, tally.per_layer.at(row.id)) << row.id;
  }
}

TEST(AnalyzeTest, ParamsMatchWeightFileScalars) {
  const auto g = toy_model();
  const auto w = init_weights<float>(g, 1);
  std::uint64_t scalars = 0;
  for (const auto* slot : w.slots()) {
    scalars += std::uint64_t(slot->weight.size());
    if (slot->bn) scalars += 2 * std::uint64_t(slot->bn->channels());
  }
  EXPECT_EQ(analyze(g).total_params, scalars);
}

TEST(AnalyzeTest, Conventions) {
  const auto g = toy_model();
  const auto base = analyze(g);
  const auto no_bn = analyze(g, {false, false, false});
  const auto bn_madds = analyze(g, {true, true, false});
  const auto add_madds = analyze(g, {true, false, true});
  std::uint64_t bn_channels = 0, bn_elems = 0;
  for (const auto& e : g.conv_layers())
    if (e.spec->batchnorm) {
      bn_channels += std::uint64_t(e.spec->out_channels);
      bn_elems += std::uint64_t(e.output.c * e.output.plane());
    }
  EXPECT_EQ(base.total_params - no_bn.total_params, 2 * bn_channels);
  EXPECT_EQ(bn_madds.total_madds - base.total_madds, bn_elems);
  EXPECT_GT(add_madds.total_madds, base.total_madds);
  EXPECT_EQ(add_madds.total_params, base.total_params);
}

TEST(AnalyzeTest, WidthMonotone) {
  for (auto f : {ModelFamily::kMobileNeXt, ModelFamily::kMobileNetV2}) {
    std::uint64_t prev_p = 0, prev_m = 0;
    for (double m : {0.35, 0.5, 0.75, 1.0, 1.4}) {
      const auto r = analyze(standard(f, m));
      EXPECT_GT(r.total_params, prev_p);
      EXPECT_GT(r.total_madds, prev_m);
      prev_p = r.total_params;
      prev_m = r.total_madds;
    }
  }
}

TEST(AnalyzeTest, EmptyGraphIsAnalysisError) {
  EXPECT_THROW(analyze(ModelGraph{}), AnalysisError);
}

TEST(FormatTest, MillionsRoundHalfEven) {
  EXPECT_EQ(format_millions(3'236'064), "3.2");
  EXPECT_EQ(format_millions(303'400'000), "303.4");
  EXPECT_EQ(format_millions(250'000), "0.2");
  EXPECT_EQ(format_millions(350'000), "0.4");
  EXPECT_EQ(format_millions(250'001), "0.3");
  EXPECT_EQ(format_millions(0), "0.0");
  EXPECT_EQ(format_millions(999'950'000), "1000.0");
}

TEST(ReportTest, JsonCarriesSpecAndRows) {
  const auto g = toy_model();
  const auto r = analyze(g);
  const auto j = nlohmann::json::parse(report_json(r));
  EXPECT_EQ(import_model_spec(report_json(r)), g);
  EXPECT_EQ(j.at("layers").size(), r.rows.size());
  EXPECT_EQ(j.at("total_params").get<std::uint64_t>(), r.total_params);
  EXPECT_EQ(j.at("total_madds").get<std::uint64_t>(), r.total_madds);
  EXPECT_EQ(j.at("convention").at("bn_params").get<bool>(), true);
  std::uint64_t sum = 0;
  for (const auto& l : j.at("layers")) sum += l.at("params").get<std::uint64_t>();
  EXPECT_EQ(sum, r.total_params);
}

TEST(ReportTest, CsvHasHeaderRowsAndTotal) {
  const auto r = analyze(toy_model());
  std::istringstream in(report_csv(r));
  std::string line, last;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    last = line;
  }
  EXPECT_EQ(lines, r.rows.size() + 2);
  EXPECT_EQ(last, "total,,,,," + std::to_string(r.total_params) + "," +
                      std::to_string(r.total_madds));
}

TEST(ReportTest, ToyTableMatchesGolden) {
  std::ifstream f(std::string(SANDGLASS_GOLDEN_DIR) + "/toy_summary.txt");
  ASSERT_TRUE(f) << "missing golden file";
  std::stringstream raw;
  raw << f.rdbuf();
  std::string golden = raw.str();
  // Skip the license block.
  const std::string fence = "==*/\n";
  if (const auto at = golden.find(fence); at != std::string::npos)
    golden = golden.substr(at + fence.size());
  EXPECT_EQ(report_table(analyze(toy_model())), golden);
}

TEST(CompareTest, SelfComparisonIsZeroDelta) {
  const auto r = analyze(standard(ModelFamily::kMobileNeXt));
  const auto c = compare(r, r);
  EXPECT_EQ(c.params_delta(), 0);
  EXPECT_EQ(c.madds_delta(), 0);
  EXPECT_DOUBLE_EQ(c.params_ratio(), 1.0);
  ASSERT_FALSE(c.stages.empty());
  EXPECT_EQ(c.stages.front().stage, "stem");
  EXPECT_EQ(c.stages.back().stage, "head");
  for (const auto& s : c.stages) EXPECT_EQ(s.params_a, s.params_b);
}

TEST(CompareTest, StageTotalsAddUp) {
  const auto a = analyze(standard(ModelFamily::kMobileNeXt));
  const auto b = analyze(standard(ModelFamily::kMobileNetV2));
  const auto c = compare(a, b);
  std::uint64_t pa = 0, mb = 0;
  for (const auto& s : c.stages) {
    pa += s.params_a;
    mb += s.madds_b;
  }
  EXPECT_EQ(pa, a.total_params);
  EXPECT_EQ(mb, b.total_madds);
  EXPECT_LT(c.params_delta(), 0);
  const auto j = nlohmann::json::parse(comparison_json(c));
  EXPECT_TRUE(j.is_object());
}

}  // namespace
}  // namespace sandglass
