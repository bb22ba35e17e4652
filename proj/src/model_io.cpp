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

#include <algorithm>
#include <map>
#include <utility>

#include <nlohmann/json.hpp>

#include "sandglass/model_zoo.hpp"
#include "sandglass/tensor_io.hpp"

namespace sandglass {
namespace {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

const json& require(const json& obj, const std::string& key, const std::string& ptr) {
  if (!obj.is_object()) throw ParseError("expected an object", ptr);
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError("missing field \"" + key + "\"", ptr + "/" + key);
  return *it;
}

double number(const json& obj, const std::string& key, const std::string& ptr) {
  const json& v = require(obj, key, ptr);
  if (!v.is_number()) throw ParseError("\"" + key + "\" must be a number", ptr + "/" + key);
  return v.get<double>();
}

Index integer(const json& obj, const std::string& key, const std::string& ptr) {
  const json& v = require(obj, key, ptr);
  if (!v.is_number_integer())
    throw ParseError("\"" + key + "\" must be an integer", ptr + "/" + key);
  return v.get<Index>();
}

std::string string(const json& obj, const std::string& key, const std::string& ptr) {
  const json& v = require(obj, key, ptr);
  if (!v.is_string()) throw ParseError("\"" + key + "\" must be a string", ptr + "/" + key);
  return v.get<std::string>();
}

struct TensorSlot {
  std::string layer;
  std::string role;
  Shape shape;  // BN vectors are (C,1,1,1) in memory, written as [C]
  bool vector = false;
};

// Weight-file tensors in a fixed order: per conv unit, weight then BN
// gamma, beta, running_mean, running_var.
std::vector<TensorSlot> weight_layout(const ModelGraph& g) {
  std::vector<TensorSlot> slots;
  for (const LayerEntry& e : g.conv_layers()) {
    slots.push_back({e.id, "weight", e.spec->weight_shape(), false});
    if (e.spec->batchnorm) {
      const Shape v{e.spec->out_channels, 1, 1, 1};
      for (const char* role : {"bn.gamma", "bn.beta", "bn.running_mean", "bn.running_var"})
        slots.push_back({e.id, role, v, true});
    }
  }
  return slots;
}

}  // namespace

std::string export_model_spec(const ModelGraph& g) {
  const ModelConfig& c = g.config;
  ojson doc;
  doc["family"] = to_string(c.family);
  doc["width_multiplier"] = c.width_multiplier;
  doc["resolution"] = c.resolution;
  doc["num_classes"] = c.num_classes;
  doc["alpha"] = c.alpha;
  doc["divisor"] = c.divisor;
  doc["stages"] = ojson::array();
  for (const StageSpec& st : c.stages) {
    ojson row;
    row["block"] = to_string(st.block);
    row["t"] = st.t;
    row["c"] = st.c;
    row["s"] = st.s;
    row["b"] = st.b;
    doc["stages"].push_back(row);
  }
  return doc.dump(2) + "\n";
}

ModelGraph import_model_spec(std::string_view text) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw ParseError("invalid JSON", "");
  std::string root;
  if (doc.is_object() && doc.contains("model")) {
    doc = json(doc["model"]);
    root = "/model";
  }
  if (!doc.is_object()) throw ParseError("model spec must be an object", root);

  ModelConfig c;
  try {
    c.family = parse_model_family(string(doc, "family", root));
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), root + "/family");
  }
  c.width_multiplier = number(doc, "width_multiplier", root);
  c.resolution = integer(doc, "resolution", root);
  c.num_classes = integer(doc, "num_classes", root);
  c.alpha = number(doc, "alpha", root);
  c.divisor = integer(doc, "divisor", root);
  const json& stages = require(doc, "stages", root);
  if (!stages.is_array()) throw ParseError("\"stages\" must be an array", root + "/stages");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string ptr = root + "/stages/" + std::to_string(i);
    const json& row = stages[i];
    StageSpec st;
    try {
      st.block = parse_block_family(string(row, "block", ptr));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), ptr + "/block");
    }
    st.t = number(row, "t", ptr);
    st.c = integer(row, "c", ptr);
    st.s = integer(row, "s", ptr);
    st.b = integer(row, "b", ptr);
    c.stages.push_back(st);
  }
  try {
    return build_model(c);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), root);
  }
}

std::string encode_weights(const ModelGraph& g, const ModelWeights<float>& w) {
  const auto layout = weight_layout(g);
  const auto slots = w.slots();
  std::string payload;
  ojson manifest;
  manifest["dtype"] = "f32";
  manifest["bn_epsilon"] = slots.front()->bn ? double(slots.front()->bn->epsilon) : 1e-5;
  manifest["tensors"] = ojson::array();

  std::size_t li = 0;
  for (const auto* cw : slots) {
    auto emit = [&](const TensorSlot& slot, std::span<const float> values) {
      if (Index(values.size()) != slot.shape.numel())
        throw ConfigError("weights for " + slot.layer + " (" + slot.role +
                          ") do not match the graph");
      ojson entry;
      entry["layer"] = slot.layer;
      entry["role"] = slot.role;
      entry["shape"] = slot.vector ? ojson::array({slot.shape.n}) : ojson(slot.shape.dims());
      entry["offset"] = payload.size();
      manifest["tensors"].push_back(entry);
      detail::append_le<float>(payload, values);
    };
    emit(layout.at(li++), cw->weight.span());
    if (layout.size() > li && layout[li].role == "bn.gamma") {
      if (!cw->bn) throw ConfigError("missing batch norm for " + layout[li].layer);
      const auto& bn = *cw->bn;
      for (const auto* v : {&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var})
        emit(layout.at(li++), std::span<const float>(v->data(), std::size_t(v->size())));
    }
  }
  std::string out(kWeightsMagic);
  out += manifest.dump();
  out += '\n';
  out += payload;
  return out;
}

ModelWeights<float> decode_weights(const ModelGraph& g, std::string_view bytes) {
  std::size_t payload_at = 0;
  const std::string_view text = detail::split_framed_header(bytes, kWeightsMagic, payload_at);
  const std::size_t json_at = kWeightsMagic.size();
  json manifest = json::parse(text, nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object())
    throw FormatError("weights manifest is not a JSON object", json_at);
  if (manifest.value("dtype", "") != "f32")
    throw FormatError("weights manifest dtype must be \"f32\"", json_at);
  if (!manifest.contains("tensors") || !manifest["tensors"].is_array())
    throw FormatError("weights manifest lacks \"tensors\"", json_at);
  const float eps = manifest.value("bn_epsilon", 1e-5f);

  std::map<std::pair<std::string, std::string>, const json*> index;
  for (const json& e : manifest["tensors"]) {
    if (!e.is_object() || !e.contains("layer") || !e.contains("role") || !e.contains("offset"))
      throw FormatError("malformed weights manifest entry", json_at);
    index[{e["layer"].get<std::string>(), e["role"].get<std::string>()}] = &e;
  }

  const std::string_view payload = bytes.substr(payload_at);
  std::size_t consumed = 0;
  auto load = [&](const TensorSlot& slot, std::span<float> out) {
    auto it = index.find({slot.layer, slot.role});
    if (it == index.end())
      throw FormatError("weights file lacks " + slot.layer + " " + slot.role, json_at);
    const json& e = *it->second;
    std::vector<Index> expected(slot.vector ? 1 : 4);
    if (slot.vector)
      expected[0] = slot.shape.n;
    else
      expected = {slot.shape.n, slot.shape.c, slot.shape.h, slot.shape.w};
    if (e.value("shape", std::vector<Index>{}) != expected)
      throw FormatError("shape mismatch for " + slot.layer + " " + slot.role, json_at);
    const auto offset = e["offset"].get<std::size_t>();
    try {
      detail::read_le<float>(payload, offset, out);
    } catch (const FormatError&) {
      throw FormatError("truncated payload for " + slot.layer + " " + slot.role,
                        bytes.size());
    }
    consumed = std::max(consumed, offset + out.size() * sizeof(float));
  };

  ModelWeights<float> w;
  w.stem = {Tensor<float>(g.stem.weight_shape()), std::nullopt};
  for (const auto& block : g.blocks) {
    BlockWeights<float> bw;
    for (const auto& layer : block.layers) bw.push_back({Tensor<float>(layer.weight_shape()), {}});
    w.blocks.push_back(std::move(bw));
  }
  if (g.head) w.head = ConvWeights<float>{Tensor<float>(g.head->weight_shape()), std::nullopt};
  w.classifier = {Tensor<float>(g.classifier.weight_shape()), std::nullopt};

  const auto layout = weight_layout(g);
  std::size_t li = 0;
  for (ConvWeights<float>* cw : w.slots()) {
    load(layout.at(li++), cw->weight.span());
    if (layout.size() > li && layout[li].role == "bn.gamma") {
      BatchNormParams<float> bn = BatchNormParams<float>::identity(cw->weight.shape().n, eps);
      for (auto* v : {&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var})
        load(layout.at(li++), std::span<float>(v->data(), std::size_t(v->size())));
      cw->bn = std::move(bn);
    }
  }
  if (consumed != payload.size())
    throw FormatError("trailing bytes after weights payload", payload_at + consumed);
  return w;
}

void write_weights(const ModelGraph& g, const ModelWeights<float>& w, const std::string& path) {
  detail::write_file(path, encode_weights(g, w));
}

ModelWeights<float> read_weights(const ModelGraph& g, const std::string& path) {
  return decode_weights(g, detail::read_file(path));
}

}  // namespace sandglass
