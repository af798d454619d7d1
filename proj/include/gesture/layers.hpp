// SPDX-License-Identifier: Apache-2.0
/**
 * @file layers.hpp
 * @brief Differentiable layer primitives, SGD with weight decay, and a
 *        central-difference gradient checker.
 *
 * "Convolution" here is cross-correlation: kernels are applied without
 * flipping, as in every mainstream deep-learning framework.
 *
 * All functions are pure; shapes are validated and violations raise
 * ContractViolation naming the offending dimensions.
 */
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gesture/rng.hpp"
#include "gesture/tensor.hpp"

namespace gesture::nn {

enum class ParamKind { weight, bias };

struct Parameter {
  std::string name;
  Tensor value;
  ParamKind kind = ParamKind::weight;
  bool trainable = true;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct LayerGrad {
  Tensor d_input;
  std::vector<NamedTensor> d_params;

  const Tensor& param(std::string_view name) const;
};

// Convolution: input CxHxW, kernels KxCxkHxkW, bias K -> KxH'xW'.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride, int padding);
/// d_params are named "weight" and "bias".
LayerGrad conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& upstream, int stride,
                          int padding);

Tensor relu(const Tensor& input);
/// Passes upstream where input > 0; the subgradient at 0 is 0.
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

/// 2x2 max pooling with stride 2; H and W must be even.
Tensor maxpool2x2(const Tensor& input);
/// Routes each upstream value to its window's argmax (first in row-major order on ties).
Tensor maxpool2x2_backward(const Tensor& input, const Tensor& upstream);

// Fully connected: W (MxN) * x (N) + b (M).
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);
LayerGrad dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream);

Tensor softmax(const Tensor& logits);
/// -ln(probs[target] + 1e-12)
double cross_entropy(const Tensor& probs, int target_class);
/// Gradient of cross_entropy(softmax(z)) with respect to z: probs - one_hot(target).
Tensor softmax_cross_entropy_grad(const Tensor& probs, int target_class);

/// lambda * sum of squared weight entries; bias parameters are excluded.
double l2_penalty(std::span<const Parameter> params, double lambda);
double l2_penalty(std::span<const Parameter* const> params, double lambda);

/// w <- w - lr * (g + 2 * lambda * w) for weights, b <- b - lr * g for biases.
/// Parameters with trainable == false are skipped entirely.
void sgd_step(std::span<Parameter> params, std::span<const Tensor> grads, double learning_rate, double lambda);
void sgd_step(std::span<Parameter* const> params, std::span<const Tensor> grads, double learning_rate,
              double lambda);

// Layer values. A network is an ordered list of these.

struct Conv2d {
  std::string name;
  Parameter weight;  // KxCxkxk
  Parameter bias;    // K
  int stride = 1;
  int padding = 1;
};

struct Relu {
  std::string name;
};

struct MaxPool2x2 {
  std::string name;
};

struct Flatten {
  std::string name;
};

struct Dense {
  std::string name;
  Parameter weight;  // MxN
  Parameter bias;    // M
};

using Layer = std::variant<Conv2d, Relu, MaxPool2x2, Flatten, Dense>;

const std::string& layer_name(const Layer& layer);
Tensor forward(const Layer& layer, const Tensor& input);
/// d_params follow the order of `parameters(layer)`.
LayerGrad backward(const Layer& layer, const Tensor& input, const Tensor& upstream);
std::vector<Parameter*> parameters(Layer& layer);
std::vector<const Parameter*> parameters(const Layer& layer);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_entry;  // "input[3]" or "<param>[i]"
  std::size_t entries_checked = 0;
};

/// Error between an analytic and a numeric derivative:
/// |a - n| / max(1, |a|, |n|), i.e. relative for large values, absolute below 1.
double gradient_error(double analytic, double numeric);

/// Compares `backward` against central differences of L(x) = <r, forward(x)>
/// for every input and parameter entry, with r drawn from `rng`.
GradCheckReport gradient_check(const Layer& layer, const Tensor& input, double eps, Rng& rng);

}  // namespace gesture::nn
