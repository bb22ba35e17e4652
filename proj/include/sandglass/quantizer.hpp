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

#ifndef SANDGLASS_QUANTIZER_HPP_
#define SANDGLASS_QUANTIZER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sandglass/model_zoo.hpp"

namespace sandglass {

// Per-tensor affine quantization: q = clamp(round_half_even(x / scale) + zero_point, 0, 2^bits - 1).
struct QuantParams {
  double scale = 1e-8;
  std::int32_t zero_point = 0;
  int bits = 8;

  std::int32_t qmax() const { return (std::int32_t(1) << bits) - 1; }

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

inline constexpr double kMinScale = 1e-8;

// Params for an observed [lo, hi] range, widened to contain 0.
QuantParams params_for_range(double lo, double hi, int bits = 8);

// Min/max calibration. Throws NumericError on NaN or when no element is finite.
template <typename Scalar>
QuantParams calibrate(std::span<const Scalar> values, int bits = 8) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Scalar v : values) {
    if (std::isnan(v)) throw NumericError("NaN in calibration data");
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, double(v));
    hi = std::max(hi, double(v));
  }
  if (lo > hi) throw NumericError("calibration data has no finite element");
  return params_for_range(lo, hi, bits);
}

template <typename Scalar>
QuantParams calibrate(const Tensor<Scalar>& t, int bits = 8) {
  return calibrate<Scalar>(t.span(), bits);
}

inline std::uint8_t quantize_value(double x, const QuantParams& p) {
  // nearbyint honours the default round-to-nearest-even mode.
  const double q = std::nearbyint(x / p.scale) + p.zero_point;
  return std::uint8_t(std::clamp(q, 0.0, double(p.qmax())));
}

inline double dequantize_value(std::uint8_t q, const QuantParams& p) {
  return double(std::int32_t(q) - p.zero_point) * p.scale;
}

template <typename Scalar>
std::vector<std::uint8_t> quantize(std::span<const Scalar> values, const QuantParams& p) {
  std::vector<std::uint8_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = quantize_value(double(values[i]), p);
  return out;
}

template <typename Scalar>
std::vector<Scalar> dequantize(std::span<const std::uint8_t> codes, const QuantParams& p) {
  std::vector<Scalar> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = Scalar(dequantize_value(codes[i], p));
  return out;
}

template <typename Scalar>
void fake_quantize(Tensor<Scalar>& t, const QuantParams& p) {
  for (Scalar& v : t.span()) v = Scalar(dequantize_value(quantize_value(double(v), p), p));
}

// Conv weights folded with their batch norm. The bias rides in an identity
// batch norm (gamma 1, mean 0, var 1, eps 0) so the graph is unchanged.
ModelWeights<float> fold_batchnorm(const ModelGraph& g, const ModelWeights<float>& w);

struct QuantizedLayer {
  std::string layer;
  QuantParams params;
  Shape shape;
  std::vector<std::uint8_t> codes;
};

struct SiteParams {
  std::string site;
  QuantParams params;
};

struct QuantizedModel {
  ModelGraph graph;
  int bits = 8;
  // No folding, no rounding: the forward pass is the fp32 forward pass.
  bool passthrough = false;
  // Weights used by the simulated forward: dequantized codes plus folded
  // biases, or the original weights in passthrough mode.
  ModelWeights<float> weights;
  std::vector<QuantizedLayer> layers;  // conv_layers() order; empty in passthrough
  std::vector<SiteParams> sites;       // execution order; empty in passthrough

  const QuantParams* site_params(std::string_view site) const;
};

struct QuantizeOptions {
  int bits = 8;
  bool passthrough = false;
};

// Folds BN, quantizes each conv weight per tensor, then calibrates every
// activation site by min/max over `calib_inputs` run through the
// weight-quantized model. Throws ConfigError on an empty calibration set.
QuantizedModel quantize_model(const ModelGraph& g, const ModelWeights<float>& w,
                              std::span<const Tensor<float>> calib_inputs,
                              const QuantizeOptions& options = {});

// Forward with fake quantization applied at every activation site.
Tensor<float> quantized_forward(const QuantizedModel& qm, const Tensor<float>& x);

// Activation site names of a forward pass, in execution order.
std::vector<std::string> activation_sites(const ModelGraph& g);

struct SiteError {
  std::string site;
  std::uint64_t count = 0;
  double mse = 0.0;
  double snr_db = 0.0;  // +infinity when the error is exactly zero
};

struct QuantErrorReport {
  std::vector<SiteError> rows;
  std::size_t probes = 0;
  std::size_t argmax_agree = 0;  // per batch item

  double agreement() const;
};

QuantErrorReport quant_error_report(const ModelGraph& g, const ModelWeights<float>& w,
                                    const QuantizedModel& qm,
                                    std::span<const Tensor<float>> probe_inputs);

std::string quant_report_table(const QuantErrorReport& r);
std::string quant_report_csv(const QuantErrorReport& r);
std::string quant_report_json(const QuantErrorReport& r);

// ".ncq": "NCQMDL01", '\n'-terminated JSON manifest {"model":spec,"bits",
// "passthrough","tensors":[{"layer","role","dtype","shape","offset"[,"scale","zero_point"]}],
// "sites":[{"site","scale","zero_point"}]}, then u8 codes and little-endian f32 payloads.
inline constexpr std::string_view kQuantMagic = "NCQMDL01";

std::string encode_quantized(const QuantizedModel& qm);
QuantizedModel decode_quantized(std::string_view bytes);
void write_quantized(const QuantizedModel& qm, const std::string& path);
QuantizedModel read_quantized(const std::string& path);

}  // namespace sandglass

#endif  // SANDGLASS_QUANTIZER_HPP_
