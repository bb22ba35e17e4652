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

#include "sandglass/complexity.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sandglass {
namespace {

using ojson = nlohmann::ordered_json;

std::string model_name(const ModelConfig& c) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "-%.2f", c.width_multiplier);
  return std::string(to_string(c.family)) + buf;
}

std::string shape_text(const Shape& s) {
  return std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c);
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string lpad(const std::string& s, std::size_t width) {
  return s.size() < width ? std::string(width - s.size(), ' ') + s : s;
}

std::string signed_millions(std::int64_t v) {
  return (v < 0 ? "-" : "+") + format_millions(std::uint64_t(v < 0 ? -v : v));
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

ojson convention_json(const ComplexityConvention& c) {
  ojson j;
  j["madd_unit"] = "multiply-accumulate";
  j["bias"] = false;
  j["bn_params"] = c.bn_params;
  j["bn_madds"] = c.bn_madds;
  j["add_madds"] = c.add_madds;
  return j;
}

}  // namespace

std::uint64_t conv_params(const ConvLayerSpec& layer) {
  return std::uint64_t(layer.kernel * layer.kernel * (layer.in_channels / layer.groups) *
                       layer.out_channels);
}

std::uint64_t conv_madds(const ConvLayerSpec& layer, const Shape& output) {
  return conv_params(layer) * std::uint64_t(output.h * output.w);
}

ComplexityReport analyze(const ModelGraph& g, const ComplexityConvention& convention) {
  if (g.input_shape.numel() == 0 || g.logits.numel() == 0 ||
      g.block_outputs.size() != g.blocks.size())
    throw AnalysisError("model graph has unresolved shapes");
  ComplexityReport r;
  r.model = model_name(g.config);
  r.model_spec = export_model_spec(g);
  r.convention = convention;

  const auto layers = g.conv_layers();
  // Index of the last conv of each block, to place residual-add rows.
  std::vector<std::size_t> block_end;
  {
    std::size_t at = 1;
    for (const auto& b : g.blocks) {
      at += b.layers.size();
      block_end.push_back(at - 1);
    }
  }
  std::size_t next_block = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerEntry& e = layers[i];
    const ConvLayerSpec& spec = *e.spec;
    if (e.id == "classifier") {
      r.rows.push_back({"pool", "head", "avgpool", g.features, g.pooled, 0, 0});
    }
    r.rows.push_back({e.id, e.stage, std::string(to_string(spec.kind)), e.input, e.output,
                      conv_params(spec), conv_madds(spec, e.output)});
    if (spec.batchnorm) {
      const auto c = std::uint64_t(spec.out_channels);
      r.rows.push_back({e.id + ".bn", e.stage, "batchnorm", e.output, e.output,
                        convention.bn_params ? 2 * c : 0,
                        convention.bn_madds ? c * std::uint64_t(e.output.plane()) : 0});
    }
    if (next_block < block_end.size() && i == block_end[next_block]) {
      const BlockGraph& b = g.blocks[next_block];
      if (b.shortcut) {
        const auto added = std::uint64_t(identity_channels(e.output.c, b.spec.alpha)) *
                           std::uint64_t(e.output.plane());
        r.rows.push_back({g.block_prefix(next_block) + "add", e.stage, "add", e.output,
                          e.output, 0, convention.add_madds ? added : 0});
      }
      ++next_block;
    }
  }
  for (const auto& row : r.rows) {
    r.total_params += row.params;
    r.total_madds += row.madds;
  }
  return r;
}

std::string format_millions(std::uint64_t count) {
  std::uint64_t tenths = count / 100000;
  const std::uint64_t rem = count % 100000;
  if (rem > 50000 || (rem == 50000 && (tenths % 2) == 1)) ++tenths;
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

std::string report_table(const ComplexityReport& r) {
  std::ostringstream out;
  out << "Model: " << r.model << "\n";
  out << pad("layer", 26) << pad("type", 11) << pad("input", 15) << pad("output", 15)
      << lpad("params", 12) << lpad("madds", 14) << "\n";
  out << std::string(93, '-') << "\n";
  for (const auto& row : r.rows) {
    out << pad(row.id, 26) << pad(row.type, 11) << pad(shape_text(row.input), 15)
        << pad(shape_text(row.output), 15) << lpad(std::to_string(row.params), 12)
        << lpad(std::to_string(row.madds), 14) << "\n";
  }
  out << std::string(93, '-') << "\n";
  out << "Total params: " << r.total_params << " (" << format_millions(r.total_params)
      << "M)  Total madds: " << r.total_madds << " (" << format_millions(r.total_madds)
      << "M)\n";
  return out.str();
}

std::string report_csv(const ComplexityReport& r) {
  std::ostringstream out;
  out << "layer,stage,type,input,output,params,madds\n";
  for (const auto& row : r.rows)
    out << row.id << "," << row.stage << "," << row.type << "," << shape_text(row.input) << ","
        << shape_text(row.output) << "," << row.params << "," << row.madds << "\n";
  out << "total,,,,," << r.total_params << "," << r.total_madds << "\n";
  return out.str();
}

std::string report_json(const ComplexityReport& r) {
  ojson doc;
  doc["model"] = ojson::parse(r.model_spec);
  doc["layers"] = ojson::array();
  for (const auto& row : r.rows) {
    ojson j;
    j["id"] = row.id;
    j["stage"] = row.stage;
    j["type"] = row.type;
    j["input"] = row.input.dims();
    j["output"] = row.output.dims();
    j["params"] = row.params;
    j["madds"] = row.madds;
    doc["layers"].push_back(j);
  }
  doc["total_params"] = r.total_params;
  doc["total_madds"] = r.total_madds;
  doc["convention"] = convention_json(r.convention);
  return doc.dump(2) + "\n";
}

ComparisonReport compare(const ComplexityReport& a, const ComplexityReport& b) {
  ComparisonReport c{a.model, b.model, a.total_params, b.total_params, a.total_madds,
                     b.total_madds, {}};
  auto slot = [&c](const std::string& stage) -> StageComparison& {
    for (auto& s : c.stages)
      if (s.stage == stage) return s;
    c.stages.push_back({stage});
    return c.stages.back();
  };
  for (const auto& row : a.rows) {
    auto& s = slot(row.stage);
    s.params_a += row.params;
    s.madds_a += row.madds;
  }
  for (const auto& row : b.rows) {
    auto& s = slot(row.stage);
    s.params_b += row.params;
    s.madds_b += row.madds;
  }
  // stem, stage1..N, head regardless of which side introduced them.
  auto rank = [](const std::string& s) -> long {
    if (s == "stem") return -1;
    if (s == "head") return 1L << 30;
    return std::stol(s.substr(5));
  };
  std::stable_sort(c.stages.begin(), c.stages.end(),
                   [&](const auto& x, const auto& y) { return rank(x.stage) < rank(y.stage); });
  return c;
}

std::string comparison_table(const ComparisonReport& c) {
  std::ostringstream out;
  out << "A: " << c.model_a << "   B: " << c.model_b << "\n";
  out << pad("stage", 10) << lpad("params A", 12) << lpad("params B", 12) << lpad("delta", 10)
      << lpad("madds A", 14) << lpad("madds B", 14) << lpad("delta", 11) << "\n";
  out << std::string(83, '-') << "\n";
  for (const auto& s : c.stages) {
    out << pad(s.stage, 10) << lpad(std::to_string(s.params_a), 12)
        << lpad(std::to_string(s.params_b), 12)
        << lpad(signed_millions(std::int64_t(s.params_a) - std::int64_t(s.params_b)) + "M", 10)
        << lpad(std::to_string(s.madds_a), 14) << lpad(std::to_string(s.madds_b), 14)
        << lpad(signed_millions(std::int64_t(s.madds_a) - std::int64_t(s.madds_b)) + "M", 11)
        << "\n";
  }
  out << std::string(83, '-') << "\n";
  out << "Total params: " << format_millions(c.params_a) << "M vs " << format_millions(c.params_b)
      << "M  delta " << signed_millions(c.params_delta()) << "M  ratio "
      << fixed(c.params_ratio(), 3) << "\n";
  out << "Total madds:  " << format_millions(c.madds_a) << "M vs " << format_millions(c.madds_b)
      << "M  delta " << signed_millions(c.madds_delta()) << "M  ratio "
      << fixed(c.madds_ratio(), 3) << "\n";
  return out.str();
}

std::string comparison_csv(const ComparisonReport& c) {
  std::ostringstream out;
  out << "stage,params_a,params_b,params_delta,madds_a,madds_b,madds_delta\n";
  for (const auto& s : c.stages)
    out << s.stage << "," << s.params_a << "," << s.params_b << ","
        << std::int64_t(s.params_a) - std::int64_t(s.params_b) << "," << s.madds_a << ","
        << s.madds_b << "," << std::int64_t(s.madds_a) - std::int64_t(s.madds_b) << "\n";
  out << "total," << c.params_a << "," << c.params_b << "," << c.params_delta() << ","
      << c.madds_a << "," << c.madds_b << "," << c.madds_delta() << "\n";
  return out.str();
}

std::string comparison_json(const ComparisonReport& c) {
  ojson doc;
  doc["model_a"] = c.model_a;
  doc["model_b"] = c.model_b;
  doc["stages"] = ojson::array();
  for (const auto& s : c.stages) {
    ojson j;
    j["stage"] = s.stage;
    j["params_a"] = s.params_a;
    j["params_b"] = s.params_b;
    j["params_delta"] = std::int64_t(s.params_a) - std::int64_t(s.params_b);
    j["madds_a"] = s.madds_a;
    j["madds_b"] = s.madds_b;
    j["madds_delta"] = std::int64_t(s.madds_a) - std::int64_t(s.madds_b);
    doc["stages"].push_back(j);
  }
  doc["total_params_a"] = c.params_a;
  doc["total_params_b"] = c.params_b;
  doc["params_delta"] = c.params_delta();
  doc["params_ratio"] = c.params_ratio();
  doc["total_madds_a"] = c.madds_a;
  doc["total_madds_b"] = c.madds_b;
  doc["madds_delta"] = c.madds_delta();
  doc["madds_ratio"] = c.madds_ratio();
  return doc.dump(2) + "\n";
}

}  // namespace sandglass
