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

// sandglass: build, inspect, compare, run, gradient-check and quantize models.
//
// Exit status: 0 success, 1 runtime or numeric error, 2 usage error.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sandglass/complexity.hpp"
#include "sandglass/gradcheck.hpp"
#include "sandglass/model_zoo.hpp"
#include "sandglass/quantizer.hpp"
#include "sandglass/tensor_io.hpp"

namespace {

using namespace sandglass;
using ojson = nlohmann::ordered_json;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// A usage problem found after CLI11 accepted the flags.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat JSON object of flag values: {"family": "mobilenext", "width": 0.75},
// applied to the selected subcommand. Arrays give multi-value flags.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(input);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<std::string> parents;
    for (const CLI::App* sub : root_->get_subcommands()) parents.push_back(sub->get_name());
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array())
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(value));
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  const CLI::App* root_;
};

// "0.75", "3/4" or "1".
double parse_rational(const std::string& text) {
  auto whole = [&text](const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(text);
    return v;
  };
  try {
    const auto slash = text.find('/');
    if (slash == std::string::npos) return whole(text);
    const double den = whole(text.substr(slash + 1));
    if (den == 0.0) throw std::invalid_argument(text);
    return whole(text.substr(0, slash)) / den;
  } catch (const std::logic_error&) {
    throw UsageError("not a rational number: " + text);
  }
}

const CLI::Validator kRational(
    [](std::string& s) -> std::string {
      try {
        return std::isfinite(parse_rational(s)) ? "" : "must be finite";
      } catch (const UsageError& e) {
        return e.what();
      }
    },
    "RATIONAL");

CLI::Validator rational_in(double lo, double hi, bool lo_open) {
  return CLI::Validator(
      [=](std::string& s) -> std::string {
        double v = 0.0;
        try {
          v = parse_rational(s);
        } catch (const UsageError& e) {
          return e.what();
        }
        const bool ok = (lo_open ? v > lo : v >= lo) && v <= hi;
        return ok ? "" : "value " + s + " out of range";
      },
      "RATIONAL");
}

const CLI::Validator kWidth = rational_in(0.0, 16.0, true);
const CLI::Validator kUnit = rational_in(0.0, 1.0, false);

bool color_enabled() {
  return std::getenv("SANDGLASS_NO_COLOR") == nullptr && ::isatty(STDOUT_FILENO) == 1;
}

std::string styled(const std::string& text, const char* ansi) {
  return color_enabled() ? std::string("\033[") + ansi + "m" + text + "\033[0m" : text;
}

const std::vector<std::string> kFamilies{"mobilenext", "mobilenetv2", "mobilenetv2-2dw",
                                         "variant-a",  "variant-b",   "variant-c"};
const std::vector<std::string> kBlocks{"sandglass", "inverted", "inverted-2dw", "variant-a",
                                       "variant-b", "variant-c", "classic",      "all"};
const std::vector<std::string> kFormats{"table", "json", "csv"};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path);
}

struct ModelFlags {
  std::string family = "mobilenext";
  std::string width = "1.0";
  Index resolution = 224;
  Index classes = 1000;
  std::string alpha = "1.0";
  std::string spec;

  void add(CLI::App* app, const std::string& prefix = "") {
    app->add_option("--" + prefix + "family", family, "Model family")
        ->check(CLI::IsMember(kFamilies));
    app->add_option("--" + prefix + "width", width, "Width multiplier")->check(kWidth);
    app->add_option("--" + prefix + "resolution", resolution, "Input resolution")
        ->check(CLI::PositiveNumber);
    app->add_option("--" + prefix + "classes", classes, "Number of classes")
        ->check(CLI::PositiveNumber);
    app->add_option("--" + prefix + "alpha", alpha, "Identity tensor multiplier")
        ->check(kUnit);
    app->add_option("--" + prefix + "spec", spec, "Model spec JSON; replaces the model flags")
        ->check(CLI::ExistingFile);
  }

  ModelGraph graph() const {
    if (!spec.empty()) return import_model_spec(read_text(spec));
    ModelConfig c;
    c.family = parse_model_family(family);
    c.width_multiplier = parse_rational(width);
    c.resolution = resolution;
    c.num_classes = classes;
    c.alpha = parse_rational(alpha);
    return build_model(c);
  }
};

Tensor<float> load_input(const std::string& path) {
  AnyTensor t = read_any_tensor(path);
  if (auto* f = std::get_if<Tensor<float>>(&t)) return std::move(*f);
  return std::get<Tensor<double>>(t).cast<float>();
}

// Each batch item of every file becomes one input.
std::vector<Tensor<float>> load_inputs(const std::vector<std::string>& paths) {
  std::vector<Tensor<float>> out;
  for (const auto& p : paths) {
    const Tensor<float> t = load_input(p);
    for (Index b = 0; b < t.batch(); ++b) out.push_back(batch_item(t, b));
  }
  return out;
}

std::vector<Tensor<float>> random_inputs(Rng& rng, std::size_t count, Index resolution) {
  std::vector<Tensor<float>> out;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor<float> t(Shape{1, 3, resolution, resolution});
    fill_normal(t, rng, 0.0, 1.0);
    out.push_back(std::move(t));
  }
  return out;
}

// Weights from a .ncw file, or drawn from `seed`.
ModelWeights<float> model_weights(const ModelGraph& g, const std::string& path,
                                  std::uint64_t seed) {
  return path.empty() ? init_weights<float>(g, seed) : read_weights(g, path);
}

bool has_magic(const std::string& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  std::string head(magic.size(), '\0');
  in.read(head.data(), std::streamsize(head.size()));
  return in && head == magic;
}

// The data stream for generated inputs is independent of the weight stream.
constexpr std::uint64_t kDataStream = 0x5EED0F1A7A5E7ull;

// ---------------------------------------------------------------------------

struct BuildArgs {
  ModelFlags model;
  std::uint64_t seed = 0;
  std::string out;
  std::string spec_out;
  std::string format = "table";
};

int run_build(const BuildArgs& a) {
  const ModelGraph g = a.model.graph();
  const auto w = init_weights<float>(g, a.seed);
  const std::string spec = export_model_spec(g);
  if (!a.out.empty()) write_weights(g, w, a.out);
  if (!a.spec_out.empty()) write_text(a.spec_out, spec);
  if (a.format == "json") {
    std::cout << spec;
    return 0;
  }
  const auto r = analyze(g);
  std::cout << "model " << r.model << ": " << g.blocks.size() << " blocks, "
            << g.conv_layers().size() << " conv layers, input " << g.input_shape.str()
            << ", logits " << g.logits.str() << "\n";
  std::cout << "params " << r.total_params << " (" << format_millions(r.total_params)
            << "M), madds " << r.total_madds << " (" << format_millions(r.total_madds) << "M)\n";
  if (!a.out.empty()) std::cout << "weights: " << a.out << " (seed " << a.seed << ")\n";
  if (!a.spec_out.empty()) std::cout << "spec: " << a.spec_out << "\n";
  return 0;
}

struct ConventionFlags {
  bool bn_madds = false;
  bool add_madds = false;
  bool exclude_bn_params = false;

  void add(CLI::App* app) {
    app->add_flag("--include-bn-madds", bn_madds, "Count batch norm arithmetic as madds");
    app->add_flag("--include-add-madds", add_madds, "Count residual additions as madds");
    app->add_flag("--exclude-bn-params", exclude_bn_params,
                  "Do not count batch norm gamma/beta as parameters");
  }

  ComplexityConvention convention() const {
    return {!exclude_bn_params, bn_madds, add_madds};
  }
};

struct SummaryArgs {
  ModelFlags model;
  ConventionFlags convention;
  std::string format = "table";
};

int run_summary(const SummaryArgs& a) {
  const auto r = analyze(a.model.graph(), a.convention.convention());
  if (a.format == "json")
    std::cout << report_json(r);
  else if (a.format == "csv")
    std::cout << report_csv(r);
  else
    std::cout << report_table(r);
  return 0;
}

struct CompareArgs {
  ModelFlags a;
  ModelFlags b;
  CLI::App* app = nullptr;
  ConventionFlags convention;
  std::string format = "table";
};

int run_compare(CompareArgs& args) {
  // Unset B flags inherit from A.
  static const char* kFields[] = {"family", "width", "resolution", "classes", "alpha"};
  for (const char* f : kFields) {
    if (args.app->count(std::string("--b-") + f) > 0) continue;
    const std::string key = f;
    if (key == "family") args.b.family = args.a.family;
    if (key == "width") args.b.width = args.a.width;
    if (key == "resolution") args.b.resolution = args.a.resolution;
    if (key == "classes") args.b.classes = args.a.classes;
    if (key == "alpha") args.b.alpha = args.a.alpha;
  }
  const auto conv = args.convention.convention();
  const auto c = compare(analyze(args.a.graph(), conv), analyze(args.b.graph(), conv));
  if (args.format == "json")
    std::cout << comparison_json(c);
  else if (args.format == "csv")
    std::cout << comparison_csv(c);
  else
    std::cout << comparison_table(c);
  return 0;
}

struct ForwardArgs {
  ModelFlags model;
  std::uint64_t seed = 0;
  std::string weights;
  std::string input;
  std::string out;
  Index batch = 1;
  std::string format = "table";
};

std::vector<Index> top_k(const Tensor<float>& logits, Index b, Index k) {
  std::vector<Index> idx(std::size_t(logits.channels()));
  std::iota(idx.begin(), idx.end(), Index(0));
  k = std::min<Index>(k, logits.channels());
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](Index i, Index j) {
    const float a = logits(b, i, 0, 0);
    const float c = logits(b, j, 0, 0);
    return a > c || (a == c && i < j);
  });
  idx.resize(std::size_t(k));
  return idx;
}

int run_forward(const ForwardArgs& a) {
  Tensor<float> logits;
  std::string mode = "fp32";
  std::optional<QuantizedModel> qm;
  ModelGraph g;
  if (!a.weights.empty() && has_magic(a.weights, kQuantMagic)) {
    qm = read_quantized(a.weights);
    g = qm->graph;
    if (!a.model.spec.empty() && !(a.model.graph() == g))
      throw ConfigError("--spec does not match the model stored in " + a.weights);
    mode = qm->passthrough ? "passthrough" : "int" + std::to_string(qm->bits);
  } else {
    g = a.model.graph();
  }
  Tensor<float> x;
  if (!a.input.empty()) {
    x = load_input(a.input);
  } else {
    Rng rng(a.seed ^ kDataStream);
    x = Tensor<float>(Shape{a.batch, 3, g.config.resolution, g.config.resolution});
    fill_normal(x, rng, 0.0, 1.0);
  }
  if (qm)
    logits = quantized_forward(*qm, x);
  else
    logits = model_forward(g, model_weights(g, a.weights, a.seed), x);
  if (!a.out.empty()) write_tensor(logits, a.out);

  if (a.format == "json") {
    ojson doc;
    doc["mode"] = mode;
    doc["logits_shape"] = logits.shape().dims();
    if (!a.out.empty()) doc["logits"] = a.out;
    doc["argmax"] = ojson::array();
    doc["top5"] = ojson::array();
    for (Index b = 0; b < logits.batch(); ++b) {
      const auto top = top_k(logits, b, 5);
      doc["argmax"].push_back(top.front());
      doc["top5"].push_back(top);
    }
    std::cout << doc.dump(2) << "\n";
    return 0;
  }
  std::cout << "mode " << mode << ", logits " << logits.shape().str();
  if (!a.out.empty()) std::cout << " -> " << a.out;
  std::cout << "\n";
  for (Index b = 0; b < logits.batch(); ++b) {
    const auto top = top_k(logits, b, 5);
    std::cout << "item " << b << ": argmax " << top.front() << ", top5";
    for (Index i : top) std::cout << " " << i;
    std::cout << "\n";
  }
  return 0;
}

struct GradcheckArgs {
  std::string block = "sandglass";
  Index m = 8;
  Index n = 8;
  std::string t = "2";
  Index s = 1;
  std::string alpha = "1.0";
  Index spatial = 8;
  double step = 1e-5;
  double threshold = 1e-4;
  std::uint64_t seed = 0;
  std::string format = "table";
};

int run_gradcheck(const GradcheckArgs& a) {
  std::vector<BlockFamily> families;
  if (a.block == "all") {
    for (const auto& name : kBlocks)
      if (name != "all") families.push_back(parse_block_family(name));
  } else {
    families.push_back(parse_block_family(a.block));
  }
  BlockGradcheckOptions opts;
  opts.spatial = a.spatial;
  opts.step = a.step;
  bool all_pass = true;
  ojson rows = ojson::array();
  for (BlockFamily f : families) {
    BlockSpec spec{f, a.m, a.n, parse_rational(a.t), a.s, parse_rational(a.alpha), 8};
    const auto r = gradcheck_block(spec, a.seed, opts);
    const double err = r.result.max_relative_error;
    const bool pass = err < a.threshold;
    all_pass = all_pass && pass;
    if (a.format == "json") {
      rows.push_back({{"block", std::string(to_string(f))},
                      {"m", a.m},
                      {"n", a.n},
                      {"t", spec.ratio},
                      {"s", a.s},
                      {"max_relative_error", err},
                      {"threshold", a.threshold},
                      {"pass", pass}});
      continue;
    }
    char line[256];
    std::snprintf(line, sizeof(line), " %-13s m=%lld n=%lld t=%g s=%lld max_rel_error=%.3e (threshold %.1e)\n",
                  std::string(to_string(f)).c_str(), static_cast<long long>(a.m),
                  static_cast<long long>(a.n), spec.ratio, static_cast<long long>(a.s), err,
                  a.threshold);
    std::cout << (pass ? styled("PASS", "32") : styled("FAIL", "31")) << line;
  }
  if (a.format == "json") std::cout << rows.dump(2) << "\n";
  return all_pass ? 0 : kExitRuntime;
}

struct QuantizeArgs {
  ModelFlags model;
  std::uint64_t seed = 0;
  std::string weights;
  std::vector<std::string> calib;
  std::size_t calib_random = 0;
  std::vector<std::string> probe;
  std::size_t probe_random = 100;
  int bits = 8;
  bool passthrough = false;
  std::string out;
  std::string format = "table";
};

int run_quantize(const QuantizeArgs& a) {
  if (a.calib.empty() && a.calib_random == 0)
    throw UsageError("calibration inputs required: pass --calib <file.nct>... or --calib-random N");
  const ModelGraph g = a.model.graph();
  const auto w = model_weights(g, a.weights, a.seed);
  Rng rng(a.seed ^ kDataStream);
  auto calib = load_inputs(a.calib);
  for (auto& t : random_inputs(rng, a.calib_random, g.config.resolution))
    calib.push_back(std::move(t));
  auto probes = load_inputs(a.probe);
  if (a.probe.empty())
    probes = random_inputs(rng, a.probe_random, g.config.resolution);

  const QuantizedModel qm = quantize_model(g, w, calib, {a.bits, a.passthrough});
  if (!a.out.empty()) write_quantized(qm, a.out);
  const auto report = quant_error_report(g, w, qm, probes);
  if (a.format == "json") {
    std::cout << quant_report_json(report);
  } else if (a.format == "csv") {
    std::cout << quant_report_csv(report);
  } else {
    std::cout << "quantized " << (a.passthrough ? "passthrough" : "W" + std::to_string(a.bits) +
                                                                      "/A" + std::to_string(a.bits))
              << " with " << calib.size() << " calibration inputs, " << probes.size()
              << " probes";
    if (!a.out.empty()) std::cout << " -> " << a.out;
    std::cout << "\n" << quant_report_table(report);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sandglass block library: build, analyze and verify mobile CNNs"};
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON file of flag values for the subcommand; explicit flags win");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  // Lets --config follow the subcommand name.
  auto with_config = [](CLI::App* sub) { sub->fallthrough(); };
  auto format_option = [](CLI::App* sub, std::string& target) {
    sub->add_option("--format", target, "Output format")->check(CLI::IsMember(kFormats));
  };

  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build", "Build a model and write seeded weights");
  build.model.add(build_cmd);
  build_cmd->add_option("--seed", build.seed, "Weight seed");
  build_cmd->add_option("--out", build.out, "Weights file (.ncw)");
  build_cmd->add_option("--spec-out", build.spec_out, "Model spec JSON output");
  format_option(build_cmd, build.format);
  with_config(build_cmd);

  SummaryArgs summary;
  auto* summary_cmd = app.add_subcommand("summary", "Per-layer parameter and madd table");
  summary.model.add(summary_cmd);
  summary.convention.add(summary_cmd);
  format_option(summary_cmd, summary.format);
  with_config(summary_cmd);

  CompareArgs cmp;
  auto* compare_cmd = app.add_subcommand("compare", "Compare two models stage by stage");
  cmp.app = compare_cmd;
  cmp.a.add(compare_cmd);
  cmp.b.add(compare_cmd, "b-");
  cmp.convention.add(compare_cmd);
  format_option(compare_cmd, cmp.format);
  with_config(compare_cmd);

  ForwardArgs fwd;
  auto* forward_cmd = app.add_subcommand("forward", "Run a forward pass and write logits");
  fwd.model.add(forward_cmd);
  forward_cmd->add_option("--seed", fwd.seed, "Seed for weights and generated input");
  forward_cmd->add_option("--weights", fwd.weights, "Weights (.ncw) or quantized model (.ncq)")
      ->check(CLI::ExistingFile);
  forward_cmd->add_option("--input", fwd.input, "Input tensor (.nct)")->check(CLI::ExistingFile);
  forward_cmd->add_option("--batch", fwd.batch, "Batch size of a generated input")
      ->check(CLI::PositiveNumber);
  forward_cmd->add_option("--out", fwd.out, "Logits output (.nct)");
  format_option(forward_cmd, fwd.format);
  with_config(forward_cmd);

  GradcheckArgs gc;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference check of a block");
  gradcheck_cmd->add_option("--block", gc.block, "Block family or 'all'")
      ->check(CLI::IsMember(kBlocks));
  gradcheck_cmd->add_option("--m", gc.m, "Input channels")->check(CLI::Range(1, 64));
  gradcheck_cmd->add_option("--n", gc.n, "Output channels")->check(CLI::Range(1, 64));
  gradcheck_cmd->add_option("--t", gc.t, "Expansion/reduction ratio")->check(kRational);
  gradcheck_cmd->add_option("--s", gc.s, "Stride")->check(CLI::IsMember({1, 2}));
  gradcheck_cmd->add_option("--alpha", gc.alpha, "Identity tensor multiplier")->check(kUnit);
  gradcheck_cmd->add_option("--spatial", gc.spatial, "Input height and width")
      ->check(CLI::Range(1, 32));
  gradcheck_cmd->add_option("--step", gc.step, "Finite-difference step")
      ->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--threshold", gc.threshold, "Maximum relative error to pass")
      ->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--seed", gc.seed, "Seed for weights, input and probe");
  format_option(gradcheck_cmd, gc.format);
  with_config(gradcheck_cmd);

  QuantizeArgs q;
  auto* quantize_cmd = app.add_subcommand("quantize", "Post-training quantization with SNR report");
  q.model.add(quantize_cmd);
  quantize_cmd->add_option("--seed", q.seed, "Seed for weights and generated inputs");
  quantize_cmd->add_option("--weights", q.weights, "Weights file (.ncw)")->check(CLI::ExistingFile);
  quantize_cmd->add_option("--calib", q.calib, "Calibration tensors (.nct)")
      ->check(CLI::ExistingFile);
  quantize_cmd->add_option("--calib-random", q.calib_random, "Number of generated calibration inputs");
  quantize_cmd->add_option("--probe", q.probe, "Probe tensors (.nct)")->check(CLI::ExistingFile);
  quantize_cmd->add_option("--probe-random", q.probe_random, "Number of generated probe inputs");
  quantize_cmd->add_option("--bits", q.bits, "Bit width")->check(CLI::Range(2, 8));
  quantize_cmd->add_flag("--passthrough", q.passthrough, "Disable folding and rounding");
  quantize_cmd->add_option("--out", q.out, "Quantized model output (.ncq)");
  format_option(quantize_cmd, q.format);
  with_config(quantize_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*build_cmd) return run_build(build);
    if (*summary_cmd) return run_summary(summary);
    if (*compare_cmd) return run_compare(cmp);
    if (*forward_cmd) return run_forward(fwd);
    if (*gradcheck_cmd) return run_gradcheck(gc);
    if (*quantize_cmd) return run_quantize(q);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
