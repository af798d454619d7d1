// SPDX-License-Identifier: Apache-2.0
/**
 * @file network.hpp
 * @brief Sequential network value with named parameters, plus the classifier
 *        and grid-detector builders.
 */
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gesture/layers.hpp"
#include "gesture/tensor.hpp"

namespace gesture::models {

enum class Head { none, softmax };

/// Ordered layers applied to a fixed input shape. Parameter names are
/// "<layer>.weight" / "<layer>.bias" and unique within the network.
class Network {
 public:
  Network() = default;
  /// Validates that consecutive layer shapes compose and names are unique.
  Network(Tensor::Shape input_shape, std::vector<nn::Layer> layers, Head head);

  const Tensor::Shape& input_shape() const { return input_shape_; }
  const Tensor::Shape& output_shape() const { return output_shape_; }
  Head head() const { return head_; }
  const std::vector<nn::Layer>& layers() const { return layers_; }

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  nn::Parameter& parameter(std::string_view name);
  const nn::Parameter& parameter(std::string_view name) const;
  std::size_t parameter_count(bool trainable_only = false) const;

  /// Output of the last layer (logits for a softmax head).
  Tensor forward(const Tensor& input) const;
  /// forward() followed by the head.
  Tensor predict(const Tensor& input) const;

  /// activations[0] is the input, activations[i + 1] the output of layer i.
  struct Trace {
    std::vector<Tensor> activations;
    const Tensor& output() const { return activations.back(); }
  };
  Trace forward_trace(const Tensor& input) const;
  /// Gradients with respect to every parameter (order of parameters()),
  /// given the gradient of the loss with respect to forward()'s output.
  std::vector<Tensor> backward(const Trace& trace, const Tensor& d_output) const;

  /// Text form of the architecture (shapes, layer kinds, hyperparameters).
  /// Two networks with equal descriptors have interchangeable parameters.
  std::string descriptor() const;
  /// Rebuilds the architecture with zero-initialised parameters.
  static Network from_descriptor(std::string_view descriptor);

 private:
  Tensor::Shape input_shape_;
  Tensor::Shape output_shape_;
  std::vector<nn::Layer> layers_;
  Head head_ = Head::none;
};

/// conv(8@3x3, pad 1) - relu - pool - conv(16@3x3, pad 1) - relu - pool -
/// flatten - dense(64) - relu - dense(num_classes), softmax head. He-normal
/// weights from `seed`, zero biases.
Network build_classifier(int num_classes, int input_side, std::uint64_t seed, int input_channels = 1);

/// Four conv/relu/pool stages (8, 16, 16, 16 filters) over an RGB input,
/// then dense(64) - relu - dense(grid_cells * cell_width), no head.
Network build_detector(int grid_side, int boxes_per_cell, int num_classes, int input_side, std::uint64_t seed);

/// Sets the trainable flag on every parameter whose name starts with
/// `prefix`; returns how many matched. Throws ContractViolation on no match.
std::size_t set_trainable(Network& net, std::string_view prefix, bool trainable);

/// Copies parameters whose name and shape match from `src` into `dst`.
std::size_t copy_matching_parameters(const Network& src, Network& dst);

}  // namespace gesture::models
