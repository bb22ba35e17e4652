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

#ifndef SANDGLASS_TAPE_HPP_
#define SANDGLASS_TAPE_HPP_

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sandglass/ops.hpp"

namespace sandglass {

// Reverse-mode tape over whole-tensor ops. Every op appends one node holding
// its output value; backward() walks the nodes in exact reverse order of
// recording. A tape is single-owner: move it between threads, never share it.
template <typename Scalar>
class GradTape {
 public:
  using Id = std::size_t;

  Id input(Tensor<Scalar> value) { return push("input", std::move(value), {}); }

  Id conv2d(Id x, Id weight, Index groups, Index stride) {
    Conv2dParams<Scalar> p{value(weight), groups, stride};
    Tensor<Scalar> y = conv2d_forward(value(x), p);
    return push("conv2d", std::move(y), [x, weight, groups, stride](GradTape& t, Id self) {
      const Conv2dParams<Scalar> p{t.value(weight), groups, stride};
      auto g = conv2d_backward(t.value(x), p, t.nodes_[self].grad);
      t.accumulate(x, g.grad_x);
      t.accumulate(weight, g.grad_weight);
    });
  }

  // gamma and beta are tape nodes of shape (1, C, 1, 1); running statistics
  // are frozen.
  Id batchnorm(Id x, Id gamma, Id beta, Vec<Scalar> mean, Vec<Scalar> var, Scalar eps) {
    auto params = [this, gamma, beta, mean, var, eps]() {
      return BatchNormParams<Scalar>{value(gamma).flat(), value(beta).flat(), mean, var, eps};
    };
    Tensor<Scalar> y = batchnorm_forward(value(x), params());
    return push("batchnorm", std::move(y),
                [x, gamma, beta, mean, var, eps](GradTape& t, Id self) {
                  const BatchNormParams<Scalar> p{t.value(gamma).flat(), t.value(beta).flat(),
                                                  mean, var, eps};
                  auto g = batchnorm_backward(t.value(x), p, t.nodes_[self].grad);
                  t.accumulate(x, g.grad_x);
                  t.accumulate(gamma, Tensor<Scalar>(t.value(gamma).shape(), g.grad_gamma));
                  t.accumulate(beta, Tensor<Scalar>(t.value(beta).shape(), g.grad_beta));
                });
  }

  Id relu6(Id x) {
    const auto& xv = value(x);
    for (Scalar v : xv.span())
      kink_distance_ = std::min(kink_distance_, std::min(std::abs(v), std::abs(v - Scalar(6))));
    return push("relu6", relu6_forward(xv), [x](GradTape& t, Id self) {
      t.accumulate(x, relu6_backward(t.value(x), t.nodes_[self].grad));
    });
  }

  Id partial_residual_add(Id residual, Id identity, double alpha) {
    Tensor<Scalar> y =
        sandglass::partial_residual_add(value(residual), value(identity), alpha);
    return push("residual_add", std::move(y), [residual, identity, alpha](GradTape& t, Id self) {
      const Tensor<Scalar>& g = t.nodes_[self].grad;
      t.accumulate(residual, g);
      Tensor<Scalar> gi(g.shape());
      const Index chunk = identity_channels(g.channels(), alpha) * g.shape().plane();
      for (Index b = 0; b < g.batch(); ++b) {
        const Index at = g.offset(b, 0, 0, 0);
        gi.flat().segment(at, chunk) = g.flat().segment(at, chunk);
      }
      t.accumulate(identity, gi);
    });
  }

  Id global_avgpool(Id x) {
    return push("avgpool", sandglass::global_avgpool(value(x)), [x](GradTape& t, Id self) {
      t.accumulate(x, global_avgpool_backward(t.value(x).shape(), t.nodes_[self].grad));
    });
  }

  // <x, probe> as a (1,1,1,1) scalar; a generic linear readout for gradcheck.
  Id dot(Id x, Tensor<Scalar> probe) {
    if (probe.shape() != value(x).shape()) throw ShapeError("dot: probe shape mismatch");
    Tensor<Scalar> y(Shape{1, 1, 1, 1}, value(x).flat().dot(probe.flat()));
    return push("dot", std::move(y), [x, probe = std::move(probe)](GradTape& t, Id self) {
      Tensor<Scalar> g = probe;
      g.flat() *= t.nodes_[self].grad.flat()[0];
      t.accumulate(x, g);
    });
  }

  Id sum(Id x) {
    Tensor<Scalar> y(Shape{1, 1, 1, 1}, value(x).flat().sum());
    return push("sum", std::move(y), [x](GradTape& t, Id self) {
      t.accumulate(x, Tensor<Scalar>(t.value(x).shape(), t.nodes_[self].grad.flat()[0]));
    });
  }

  const Tensor<Scalar>& value(Id id) const { return nodes_.at(id).value; }

  // Gradient accumulated by the last backward(); zeros if `id` was not reached.
  Tensor<Scalar> grad(Id id) const {
    const Node& n = nodes_.at(id);
    return n.grad.empty() ? Tensor<Scalar>(n.value.shape()) : n.grad;
  }

  const std::string& op_name(Id id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }

  // Node ids in the order the last backward() visited them.
  const std::vector<Id>& backward_order() const { return visited_; }

  // Smallest |v| or |v - 6| over every relu6 input recorded so far.
  Scalar min_kink_distance() const { return kink_distance_; }

  void backward(Id output, const Tensor<Scalar>& seed) {
    if (seed.shape() != value(output).shape())
      throw ShapeError("backward seed shape does not match output");
    for (Node& n : nodes_) n.grad = Tensor<Scalar>();
    visited_.clear();
    nodes_[output].grad = seed;
    for (Id id = output + 1; id-- > 0;) {
      Node& n = nodes_[id];
      visited_.push_back(id);
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, id);
    }
  }

  void backward(Id scalar_output) {
    backward(scalar_output, Tensor<Scalar>(value(scalar_output).shape(), Scalar(1)));
  }

 private:
  struct Node {
    std::string op;
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    std::function<void(GradTape&, Id)> backward;
  };

  Id push(std::string op, Tensor<Scalar> value, std::function<void(GradTape&, Id)> bw) {
    nodes_.push_back(Node{std::move(op), std::move(value), Tensor<Scalar>(), std::move(bw)});
    return nodes_.size() - 1;
  }

  void accumulate(Id id, const Tensor<Scalar>& g) {
    Node& n = nodes_.at(id);
    if (n.grad.empty())
      n.grad = g;
    else
      n.grad.flat() += g.flat();
  }

  std::vector<Node> nodes_;
  std::vector<Id> visited_;
  Scalar kink_distance_ = std::numeric_limits<Scalar>::infinity();
};

// A differentiable scalar composite: records ops on `tape` starting from the
// input node and returns the id of a (1,1,1,1) output.
using Composite = std::function<GradTape<double>::Id(GradTape<double>&, GradTape<double>::Id)>;

struct GradcheckResult {
  double max_relative_error = 0.0;
  Index worst_index = -1;
  double min_kink_distance = std::numeric_limits<double>::infinity();
};

// Compares the tape gradient of fn at x with central differences
// (f(x + h e_i) - f(x - h e_i)) / 2h. Relative error per coordinate is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
inline GradcheckResult gradcheck_detailed(const Composite& fn, const Tensor<double>& x,
                                          double h) {
  auto evaluate = [&fn](const Tensor<double>& at, GradTape<double>& tape) {
    const auto out = fn(tape, tape.input(at));
    if (tape.value(out).size() != 1)
      throw ShapeError("gradcheck composite must return a single scalar");
    const double v = tape.value(out).flat()[0];
    if (!std::isfinite(v)) throw NumericError("gradcheck composite returned a non-finite value");
    return std::pair{out, v};
  };

  GradTape<double> tape;
  const auto [out, base] = evaluate(x, tape);
  tape.backward(out);
  const Tensor<double> analytic = tape.grad(0);
  GradcheckResult result;
  result.min_kink_distance = tape.min_kink_distance();

  Tensor<double> probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.flat()[i];
    probe.flat()[i] = orig + h;
    GradTape<double> plus;
    const double fp = evaluate(probe, plus).second;
    probe.flat()[i] = orig - h;
    GradTape<double> minus;
    const double fm = evaluate(probe, minus).second;
    probe.flat()[i] = orig;

    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic.flat()[i];
    if (!std::isfinite(a) || !std::isfinite(numeric))
      throw NumericError("non-finite gradient at coordinate " + std::to_string(i));
    const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    if (err > result.max_relative_error || result.worst_index < 0) {
      result.max_relative_error = err;
      result.worst_index = i;
    }
  }
  return result;
}

inline double gradcheck(const Composite& fn, const Tensor<double>& x, double h = 1e-5) {
  return gradcheck_detailed(fn, x, h).max_relative_error;
}

}  // namespace sandglass

#endif  // SANDGLASS_TAPE_HPP_
