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

#ifndef SANDGLASS_COMPLEXITY_HPP_
#define SANDGLASS_COMPLEXITY_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "sandglass/model_zoo.hpp"

namespace sandglass {

// What counts. One multiply-accumulate is one madd. Defaults: BN gamma/beta
// counted as parameters, BN and residual-add arithmetic not counted as madds.
struct ComplexityConvention {
  bool bn_params = true;
  bool bn_madds = false;
  bool add_madds = false;

  friend bool operator==(const ComplexityConvention&, const ComplexityConvention&) = default;
};

struct ComplexityRow {
  std::string id;
  std::string stage;
  std::string type;  // conv2d | dwconv | pwconv | batchnorm | add | avgpool
  Shape input;
  Shape output;
  std::uint64_t params = 0;
  std::uint64_t madds = 0;
};

struct ComplexityReport {
  std::string model;  // e.g. "mobilenext-1.00"
  std::string model_spec;  // export_model_spec() of the analyzed graph
  ComplexityConvention convention;
  std::vector<ComplexityRow> rows;
  std::uint64_t total_params = 0;
  std::uint64_t total_madds = 0;
};

// Closed-form counts for a conv: k*k*(in/groups)*out params, times out_h*out_w madds.
std::uint64_t conv_params(const ConvLayerSpec& layer);
std::uint64_t conv_madds(const ConvLayerSpec& layer, const Shape& output);

ComplexityReport analyze(const ModelGraph& g, const ComplexityConvention& convention = {});

// count / 1e6 rounded half-to-even to one decimal, e.g. "3.4".
std::string format_millions(std::uint64_t count);

std::string report_table(const ComplexityReport& r);
std::string report_csv(const ComplexityReport& r);
std::string report_json(const ComplexityReport& r);

struct StageComparison {
  std::string stage;
  std::uint64_t params_a = 0;
  std::uint64_t params_b = 0;
  std::uint64_t madds_a = 0;
  std::uint64_t madds_b = 0;
};

// Side-by-side view; deltas are a - b and ratios a / b.
struct ComparisonReport {
  std::string model_a;
  std::string model_b;
  std::uint64_t params_a = 0;
  std::uint64_t params_b = 0;
  std::uint64_t madds_a = 0;
  std::uint64_t madds_b = 0;
  std::vector<StageComparison> stages;

  std::int64_t params_delta() const { return std::int64_t(params_a) - std::int64_t(params_b); }
  std::int64_t madds_delta() const { return std::int64_t(madds_a) - std::int64_t(madds_b); }
  double params_ratio() const { return params_b ? double(params_a) / double(params_b) : 0.0; }
  double madds_ratio() const { return madds_b ? double(madds_a) / double(madds_b) : 0.0; }
};

ComparisonReport compare(const ComplexityReport& a, const ComplexityReport& b);

std::string comparison_table(const ComparisonReport& c);
std::string comparison_csv(const ComparisonReport& c);
std::string comparison_json(const ComparisonReport& c);

}  // namespace sandglass

#endif  // SANDGLASS_COMPLEXITY_HPP_
