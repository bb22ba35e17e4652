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

#include "sandglass/quantizer.hpp"

#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sandglass/binary_io.hpp"

namespace sandglass {
namespace {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

void check_bits(int bits) {
  if (bits < 2 || bits > 8) throw ConfigError("bits must be in [2, 8], got " + std::to_string(bits));
}

class MinMaxObserver : public ForwardObserver<float> {
 public:
  void on_site(const std::string& site, Tensor<float>& value) override {
    if (value.flat().array().isNaN().any()) throw NumericError("NaN at site " + site);
    const float lo = value.flat().minCoeff();
    const float hi = value.flat().maxCoeff();
    for (auto& r : ranges_) {
      if (r.site == site) {
        r.lo = std::min(r.lo, double(lo));
        r.hi = std::max(r.hi, double(hi));
        return;
      }
    }
    ranges_.push_back({site, double(lo), double(hi)});
  }

  struct Range {
    std::string site;
    double lo;
    double hi;
  };
  const std::vector<Range>& ranges() const { return ranges_; }

 private:
  std::vector<Range> ranges_;
};

class FakeQuantObserver : public ForwardObserver<float> {
 public:
  explicit FakeQuantObserver(const QuantizedModel& qm) : qm_(qm) {}

  void on_site(const std::string& site, Tensor<float>& value) override {
    if (qm_.passthrough) return;
    const QuantParams* p = qm_.site_params(site);
    if (!p) throw InternalError("no quantization parameters for site " + site);
    fake_quantize(value, *p);
  }

 private:
  const QuantizedModel& qm_;
};

// Chains another observer and keeps a copy of every site value.
class RecordingObserver : public ForwardObserver<float> {
 public:
  explicit RecordingObserver(ForwardObserver<float>* inner = nullptr) : inner_(inner) {}

  void on_site(const std::string& site, Tensor<float>& value) override {
    if (inner_) inner_->on_site(site, value);
    values_.push_back({site, value});
  }

  std::vector<std::pair<std::string, Tensor<float>>>& values() { return values_; }

 private:
  ForwardObserver<float>* inner_;
  std::vector<std::pair<std::string, Tensor<float>>> values_;
};

Index argmax(const Tensor<float>& logits, Index b) {
  Index best = 0;
  for (Index c = 1; c < logits.channels(); ++c)
    if (logits(b, c, 0, 0) > logits(b, best, 0, 0)) best = c;
  return best;
}

std::string snr_text(double snr) {
  if (std::isinf(snr)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", snr);
  return buf;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4e", v);
  return buf;
}

const json& field(const json& obj, const char* key, std::size_t offset) {
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(std::string("manifest is missing \"") + key + "\"", offset);
  return *it;
}

}  // namespace

QuantParams params_for_range(double lo, double hi, int bits) {
  check_bits(bits);
  if (std::isnan(lo) || std::isnan(hi)) throw NumericError("NaN calibration range");
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  QuantParams p;
  p.bits = bits;
  p.scale = std::max((hi - lo) / p.qmax(), kMinScale);
  p.zero_point = std::int32_t(std::clamp(std::nearbyint(-lo / p.scale), 0.0, double(p.qmax())));
  return p;
}

const QuantParams* QuantizedModel::site_params(std::string_view site) const {
  for (const auto& s : sites)
    if (s.site == site) return &s.params;
  return nullptr;
}

ModelWeights<float> fold_batchnorm(const ModelGraph& g, const ModelWeights<float>& w) {
  ModelWeights<float> out = w;
  const auto layers = g.conv_layers();
  auto slots = out.slots();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    ConvWeights<float>& cw = *slots[i];
    if (!cw.bn) continue;
    const auto& bn = *cw.bn;
    bn.validate(layers[i].spec->out_channels);
    const Index oc = cw.weight.shape().n;
    const Index per = cw.weight.size() / oc;
    Vec<float> bias(oc);
    for (Index c = 0; c < oc; ++c) {
      const double s = double(bn.gamma[c]) / std::sqrt(double(bn.running_var[c]) + bn.epsilon);
      cw.weight.flat().segment(c * per, per) =
          (cw.weight.flat().segment(c * per, per).cast<double>() * s).cast<float>();
      bias[c] = float(double(bn.beta[c]) - double(bn.running_mean[c]) * s);
    }
    BatchNormParams<float> folded = BatchNormParams<float>::identity(oc, 0.0f);
    folded.beta = bias;
    cw.bn = folded;
  }
  return out;
}

std::vector<std::string> activation_sites(const ModelGraph& g) {
  std::vector<std::string> sites{"input", "stem"};
  for (std::size_t i = 0; i < g.blocks.size(); ++i) {
    for (const auto& l : g.blocks[i].layers) sites.push_back(g.block_prefix(i) + l.name);
    if (g.blocks[i].shortcut) sites.push_back(g.block_prefix(i) + "add");
  }
  if (g.head) sites.push_back("head");
  sites.push_back("pool");
  sites.push_back("classifier");
  return sites;
}

QuantizedModel quantize_model(const ModelGraph& g, const ModelWeights<float>& w,
                              std::span<const Tensor<float>> calib_inputs,
                              const QuantizeOptions& options) {
  check_bits(options.bits);
  if (calib_inputs.empty()) throw ConfigError("quantization needs at least one calibration input");
  QuantizedModel qm;
  qm.graph = g;
  qm.bits = options.bits;
  qm.passthrough = options.passthrough;
  if (options.passthrough) {
    qm.weights = w;
    return qm;
  }
  qm.weights = fold_batchnorm(g, w);
  const auto layers = g.conv_layers();
  auto slots = qm.weights.slots();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Tensor<float>& weight = slots[i]->weight;
    QuantizedLayer ql{layers[i].id, calibrate(weight, options.bits), weight.shape(), {}};
    ql.codes = quantize<float>(weight.span(), ql.params);
    const auto deq = dequantize<float>(ql.codes, ql.params);
    std::copy(deq.begin(), deq.end(), weight.data());
    qm.layers.push_back(std::move(ql));
  }
  MinMaxObserver observer;
  for (const auto& x : calib_inputs) model_forward(g, qm.weights, x, &observer);
  for (const auto& r : observer.ranges())
    qm.sites.push_back({r.site, params_for_range(r.lo, r.hi, options.bits)});
  return qm;
}

Tensor<float> quantized_forward(const QuantizedModel& qm, const Tensor<float>& x) {
  FakeQuantObserver observer(qm);
  return model_forward(qm.graph, qm.weights, x, &observer);
}

double QuantErrorReport::agreement() const {
  return probes ? double(argmax_agree) / double(probes) : 0.0;
}

QuantErrorReport quant_error_report(const ModelGraph& g, const ModelWeights<float>& w,
                                    const QuantizedModel& qm,
                                    std::span<const Tensor<float>> probe_inputs) {
  QuantErrorReport report;
  for (const auto& s : activation_sites(g)) report.rows.push_back({s});
  std::vector<double> signal(report.rows.size(), 0.0);
  std::vector<double> noise(report.rows.size(), 0.0);
  for (const auto& x : probe_inputs) {
    RecordingObserver ref;
    const Tensor<float> a = model_forward(g, w, x, &ref);
    FakeQuantObserver fq(qm);
    RecordingObserver quant(&fq);
    const Tensor<float> b = model_forward(qm.graph, qm.weights, x, &quant);
    if (ref.values().size() != report.rows.size() || quant.values().size() != report.rows.size())
      throw InternalError("activation site count mismatch");
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      const auto& ra = ref.values()[i].second.flat();
      const auto& rb = quant.values()[i].second.flat();
      if (ra.size() != rb.size()) throw ShapeError("site " + report.rows[i].site + " differs in size");
      signal[i] += ra.cast<double>().squaredNorm();
      noise[i] += (ra.cast<double>() - rb.cast<double>()).squaredNorm();
      report.rows[i].count += std::uint64_t(ra.size());
    }
    for (Index n = 0; n < a.batch(); ++n) {
      ++report.probes;
      if (argmax(a, n) == argmax(b, n)) ++report.argmax_agree;
    }
  }
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    auto& row = report.rows[i];
    row.mse = row.count ? noise[i] / double(row.count) : 0.0;
    row.snr_db = noise[i] == 0.0 ? std::numeric_limits<double>::infinity()
                                 : 10.0 * std::log10(signal[i] / noise[i]);
  }
  return report;
}

std::string quant_report_table(const QuantErrorReport& r) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-28s%12s%14s%10s\n", "site", "elements", "mse", "snr_db");
  out << line << std::string(64, '-') << "\n";
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof(line), "%-28s%12llu%14s%10s\n", row.site.c_str(),
                  static_cast<unsigned long long>(row.count), sci(row.mse).c_str(),
                  snr_text(row.snr_db).c_str());
    out << line;
  }
  std::snprintf(line, sizeof(line), "argmax agreement: %zu/%zu (%.1f%%)\n", r.argmax_agree,
                r.probes, 100.0 * r.agreement());
  out << std::string(64, '-') << "\n" << line;
  return out.str();
}

std::string quant_report_csv(const QuantErrorReport& r) {
  std::ostringstream out;
  out << "site,elements,mse,snr_db\n";
  for (const auto& row : r.rows)
    out << row.site << "," << row.count << "," << sci(row.mse) << "," << snr_text(row.snr_db)
        << "\n";
  return out.str();
}

std::string quant_report_json(const QuantErrorReport& r) {
  ojson doc;
  doc["sites"] = ojson::array();
  for (const auto& row : r.rows) {
    ojson j;
    j["site"] = row.site;
    j["elements"] = row.count;
    j["mse"] = row.mse;
    // JSON has no infinity; the string "inf" is the zero-error sentinel.
    if (std::isinf(row.snr_db))
      j["snr_db"] = "inf";
    else
      j["snr_db"] = row.snr_db;
    doc["sites"].push_back(j);
  }
  doc["probes"] = r.probes;
  doc["argmax_agree"] = r.argmax_agree;
  doc["agreement"] = r.agreement();
  return doc.dump(2) + "\n";
}

std::string encode_quantized(const QuantizedModel& qm) {
  ojson manifest;
  manifest["model"] = ojson::parse(export_model_spec(qm.graph));
  manifest["bits"] = qm.bits;
  manifest["passthrough"] = qm.passthrough;
  manifest["tensors"] = ojson::array();
  std::string payload;
  auto add_f32 = [&](const std::string& layer, const std::string& role, const Shape& shape,
                     std::span<const float> values) {
    ojson t;
    t["layer"] = layer;
    t["role"] = role;
    t["dtype"] = "f32";
    t["shape"] = shape.dims();
    t["offset"] = payload.size();
    manifest["tensors"].push_back(t);
    detail::append_le<float>(payload, values);
  };
  const auto layers = qm.graph.conv_layers();
  const auto slots = qm.weights.slots();
  if (qm.passthrough) {
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto& cw = *slots[i];
      add_f32(layers[i].id, "weight", cw.weight.shape(), cw.weight.span());
      if (!cw.bn) continue;
      const Shape v{cw.bn->channels(), 1, 1, 1};
      auto vec = [](const Vec<float>& x) { return std::span<const float>(x.data(), x.size()); };
      add_f32(layers[i].id, "bn.gamma", v, vec(cw.bn->gamma));
      add_f32(layers[i].id, "bn.beta", v, vec(cw.bn->beta));
      add_f32(layers[i].id, "bn.running_mean", v, vec(cw.bn->running_mean));
      add_f32(layers[i].id, "bn.running_var", v, vec(cw.bn->running_var));
    }
    manifest["bn_epsilon"] = slots.front()->bn ? slots.front()->bn->epsilon : 1e-5f;
  } else {
    if (qm.layers.size() != slots.size()) throw InternalError("quantized layer count mismatch");
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const QuantizedLayer& ql = qm.layers[i];
      ojson t;
      t["layer"] = ql.layer;
      t["role"] = "weight";
      t["dtype"] = "u8";
      t["shape"] = ql.shape.dims();
      t["offset"] = payload.size();
      t["scale"] = ql.params.scale;
      t["zero_point"] = ql.params.zero_point;
      manifest["tensors"].push_back(t);
      payload.append(reinterpret_cast<const char*>(ql.codes.data()), ql.codes.size());
      if (slots[i]->bn) {
        const auto& beta = slots[i]->bn->beta;
        add_f32(ql.layer, "bias", Shape{beta.size(), 1, 1, 1},
                std::span<const float>(beta.data(), beta.size()));
      }
    }
  }
  manifest["sites"] = ojson::array();
  for (const auto& s : qm.sites)
    manifest["sites"].push_back(
        {{"site", s.site}, {"scale", s.params.scale}, {"zero_point", s.params.zero_point}});
  std::string out(kQuantMagic);
  out += manifest.dump();
  out += '\n';
  out += payload;
  return out;
}

QuantizedModel decode_quantized(std::string_view bytes) {
  std::size_t base = 0;
  const std::string_view header = detail::split_framed_header(bytes, kQuantMagic, base);
  json manifest;
  try {
    manifest = json::parse(header);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), kQuantMagic.size());
  }
  const std::size_t hdr = kQuantMagic.size();
  QuantizedModel qm;
  try {
    qm.graph = import_model_spec(field(manifest, "model", hdr).dump());
    qm.bits = field(manifest, "bits", hdr).get<int>();
    qm.passthrough = field(manifest, "passthrough", hdr).get<bool>();
    check_bits(qm.bits);
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what(), hdr);
  } catch (const ParseError& e) {
    throw FormatError(std::string("bad model spec: ") + e.what(), hdr);
  }
  const json& tensors = field(manifest, "tensors", hdr);
  if (!tensors.is_array()) throw FormatError("\"tensors\" must be an array", hdr);
  std::size_t next = 0;
  std::size_t consumed = 0;
  // Returns the next manifest entry after checking it names (layer, role, shape).
  auto entry = [&](const std::string& layer, const std::string& role, const Shape& shape,
                   const char* dtype) -> const json& {
    if (next >= tensors.size()) throw FormatError("manifest ends before " + layer + " " + role, hdr);
    const json& t = tensors[next++];
    try {
      if (t.at("layer") != layer || t.at("role") != role || t.at("dtype") != dtype ||
          t.at("shape").get<std::array<Index, 4>>() != shape.dims())
        throw FormatError("manifest entry " + std::to_string(next - 1) + " does not match " +
                              layer + " " + role + " " + shape.str(),
                          hdr);
      if (t.at("offset").get<std::size_t>() != consumed)
        throw FormatError("unexpected payload offset for " + layer + " " + role, base + consumed);
    } catch (const json::exception& e) {
      throw FormatError(std::string("bad manifest entry: ") + e.what(), hdr);
    }
    return t;
  };
  auto read_f32 = [&](const std::string& layer, const std::string& role, const Shape& shape,
                      float* dst) {
    entry(layer, role, shape, "f32");
    detail::read_le<float>(bytes, base + consumed, std::span<float>(dst, shape.numel()));
    consumed += std::size_t(shape.numel()) * sizeof(float);
  };
  const auto layers = qm.graph.conv_layers();
  qm.weights = init_weights<float>(qm.graph, 0);
  auto slots = qm.weights.slots();
  const float eps = qm.passthrough ? manifest.value("bn_epsilon", 1e-5f) : 0.0f;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const ConvLayerSpec& spec = *layers[i].spec;
    ConvWeights<float>& cw = *slots[i];
    const Shape ws = spec.weight_shape();
    const Shape vs{spec.out_channels, 1, 1, 1};
    if (cw.bn) *cw.bn = BatchNormParams<float>::identity(spec.out_channels, eps);
    if (qm.passthrough) {
      read_f32(layers[i].id, "weight", ws, cw.weight.data());
      if (cw.bn) {
        read_f32(layers[i].id, "bn.gamma", vs, cw.bn->gamma.data());
        read_f32(layers[i].id, "bn.beta", vs, cw.bn->beta.data());
        read_f32(layers[i].id, "bn.running_mean", vs, cw.bn->running_mean.data());
        read_f32(layers[i].id, "bn.running_var", vs, cw.bn->running_var.data());
      }
      continue;
    }
    const json& t = entry(layers[i].id, "weight", ws, "u8");
    QuantizedLayer ql{layers[i].id, {}, ws, {}};
    try {
      ql.params.scale = t.at("scale").get<double>();
      ql.params.zero_point = t.at("zero_point").get<std::int32_t>();
      ql.params.bits = qm.bits;
    } catch (const json::exception& e) {
      throw FormatError(std::string("bad weight quantization params: ") + e.what(), hdr);
    }
    if (!(ql.params.scale > 0) || ql.params.zero_point < 0 || ql.params.zero_point > ql.params.qmax())
      throw FormatError("invalid quantization params for " + ql.layer, hdr);
    ql.codes.resize(std::size_t(ws.numel()));
    detail::read_le<std::uint8_t>(bytes, base + consumed, ql.codes);
    consumed += ql.codes.size();
    for (std::uint8_t c : ql.codes)
      if (c > ql.params.qmax()) throw FormatError("code exceeds " + std::to_string(qm.bits) + " bits", base + consumed);
    const auto deq = dequantize<float>(ql.codes, ql.params);
    std::copy(deq.begin(), deq.end(), cw.weight.data());
    if (cw.bn) read_f32(layers[i].id, "bias", vs, cw.bn->beta.data());
    qm.layers.push_back(std::move(ql));
  }
  if (next != tensors.size()) throw FormatError("manifest lists extra tensors", hdr);
  if (base + consumed != bytes.size()) throw FormatError("trailing bytes after payload", base + consumed);
  try {
    for (const json& s : field(manifest, "sites", hdr)) {
      QuantParams p;
      p.bits = qm.bits;
      p.scale = s.at("scale").get<double>();
      p.zero_point = s.at("zero_point").get<std::int32_t>();
      qm.sites.push_back({s.at("site").get<std::string>(), p});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad site entry: ") + e.what(), hdr);
  }
  if (!qm.passthrough) {
    const auto expected = activation_sites(qm.graph);
    if (qm.sites.size() != expected.size())
      throw FormatError("site count does not match the model", hdr);
    for (std::size_t i = 0; i < expected.size(); ++i)
      if (qm.sites[i].site != expected[i]) throw FormatError("unexpected site " + qm.sites[i].site, hdr);
  }
  return qm;
}

void write_quantized(const QuantizedModel& qm, const std::string& path) {
  detail::write_file(path, encode_quantized(qm));
}

QuantizedModel read_quantized(const std::string& path) {
  return decode_quantized(detail::read_file(path));
}

}  // namespace sandglass
