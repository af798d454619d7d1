// SPDX-License-Identifier: Apache-2.0
#include "gesture/network.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "gesture/error.hpp"
#include "gesture/rng.hpp"

namespace gesture::models {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Tensor::Shape infer_shape(const nn::Layer& layer, const Tensor::Shape& in) {
  auto fail = [&](const std::string& why) -> Tensor::Shape {
    throw ContractViolation("layer '" + nn::layer_name(layer) + "': " + why + " (input " + to_string(in) + ")");
  };
  return std::visit(
      overloaded{
          [&](const nn::Conv2d& l) -> Tensor::Shape {
            const auto& k = l.weight.value.shape();
            if (in.size() != 3) return fail("expects CxHxW input");
            if (k.size() != 4 || k[1] != in[0]) return fail("kernel channels do not match input");
            const std::size_t ph = in[1] + 2 * static_cast<std::size_t>(l.padding);
            const std::size_t pw = in[2] + 2 * static_cast<std::size_t>(l.padding);
            if (k[2] > ph || k[3] > pw) return fail("kernel larger than padded input");
            return {k[0], (ph - k[2]) / static_cast<std::size_t>(l.stride) + 1,
                    (pw - k[3]) / static_cast<std::size_t>(l.stride) + 1};
          },
          [&](const nn::Relu&) { return in; },
          [&](const nn::MaxPool2x2&) -> Tensor::Shape {
            if (in.size() != 3 || in[1] % 2 || in[2] % 2) return fail("expects CxHxW with even H, W");
            return {in[0], in[1] / 2, in[2] / 2};
          },
          [&](const nn::Flatten&) -> Tensor::Shape { return {element_count(in)}; },
          [&](const nn::Dense& l) -> Tensor::Shape {
            const auto& w = l.weight.value.shape();
            if (in.size() != 1 || w.size() != 2 || w[1] != in[0]) return fail("weight columns do not match input");
            return {w[0]};
          },
      },
      layer);
}

nn::Parameter make_param(const std::string& layer, const char* suffix, Tensor::Shape shape, nn::ParamKind kind) {
  return nn::Parameter{layer + "." + suffix, Tensor(std::move(shape)), kind, true};
}

nn::Layer conv(const std::string& name, std::size_t in_c, std::size_t out_c, std::size_t k, int stride, int pad) {
  return nn::Conv2d{name, make_param(name, "weight", {out_c, in_c, k, k}, nn::ParamKind::weight),
                    make_param(name, "bias", {out_c}, nn::ParamKind::bias), stride, pad};
}

nn::Layer fc(const std::string& name, std::size_t in, std::size_t out) {
  return nn::Dense{name, make_param(name, "weight", {out, in}, nn::ParamKind::weight),
                   make_param(name, "bias", {out}, nn::ParamKind::bias)};
}

void he_init(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto* p : net.parameters()) {
    if (p->kind == nn::ParamKind::bias) {
      p->value.fill(0.0);
      continue;
    }
    const auto& s = p->value.shape();
    const std::size_t fan_in = element_count(s) / s[0];
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : p->value.values()) v = rng.normal() * stddev;
  }
}

}  // namespace

Network::Network(Tensor::Shape input_shape, std::vector<nn::Layer> layers, Head head)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), head_(head) {
  if (input_shape_.empty() || element_count(input_shape_) == 0) throw ContractViolation("network: empty input shape");
  std::set<std::string> names;
  Tensor::Shape shape = input_shape_;
  for (const auto& l : layers_) {
    if (!names.insert(nn::layer_name(l)).second)
      throw ContractViolation("network: duplicate layer name '" + nn::layer_name(l) + "'");
    shape = infer_shape(l, shape);
  }
  if (head_ == Head::softmax && shape.size() != 1) throw ContractViolation("network: softmax head needs a vector output");
  output_shape_ = shape;
}

std::vector<nn::Parameter*> Network::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& l : layers_)
    for (auto* p : nn::parameters(l)) out.push_back(p);
  return out;
}

std::vector<const nn::Parameter*> Network::parameters() const {
  std::vector<const nn::Parameter*> out;
  for (const auto& l : layers_)
    for (const auto* p : nn::parameters(l)) out.push_back(p);
  return out;
}

nn::Parameter& Network::parameter(std::string_view name) {
  for (auto* p : parameters())
    if (p->name == name) return *p;
  throw ContractViolation("network has no parameter '" + std::string(name) + "'");
}

const nn::Parameter& Network::parameter(std::string_view name) const {
  return const_cast<Network*>(this)->parameter(name);
}

std::size_t Network::parameter_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto* p : parameters())
    if (!trainable_only || p->trainable) n += p->value.size();
  return n;
}

Tensor Network::forward(const Tensor& input) const {
  if (input.shape() != input_shape_)
    throw ContractViolation("network: input shape " + to_string(input.shape()) + " != expected " +
                            to_string(input_shape_));
  Tensor x = input;
  for (const auto& l : layers_) x = nn::forward(l, x);
  return x;
}

Tensor Network::predict(const Tensor& input) const {
  Tensor out = forward(input);
  return head_ == Head::softmax ? nn::softmax(out) : out;
}

Network::Trace Network::forward_trace(const Tensor& input) const {
  if (input.shape() != input_shape_)
    throw ContractViolation("network: input shape " + to_string(input.shape()) + " != expected " +
                            to_string(input_shape_));
  Trace t;
  t.activations.reserve(layers_.size() + 1);
  t.activations.push_back(input);
  for (const auto& l : layers_) t.activations.push_back(nn::forward(l, t.activations.back()));
  return t;
}

std::vector<Tensor> Network::backward(const Trace& trace, const Tensor& d_output) const {
  if (trace.activations.size() != layers_.size() + 1) throw ContractViolation("network: trace does not match layers");
  if (d_output.shape() != output_shape_)
    throw ContractViolation("network: output gradient shape " + to_string(d_output.shape()) + " != " +
                            to_string(output_shape_));
  // Parameter gradients are collected back to front, then reversed per layer.
  std::vector<std::vector<Tensor>> per_layer(layers_.size());
  Tensor upstream = d_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    nn::LayerGrad g = nn::backward(layers_[i], trace.activations[i], upstream);
    for (auto& p : g.d_params) per_layer[i].push_back(std::move(p.value));
    upstream = std::move(g.d_input);
  }
  std::vector<Tensor> out;
  for (auto& grads : per_layer)
    for (auto& t : grads) out.push_back(std::move(t));
  return out;
}

std::string Network::descriptor() const {
  std::ostringstream out;
  out << "input " << to_string(input_shape_) << ";head " << (head_ == Head::softmax ? "softmax" : "none");
  for (const auto& layer : layers_) {
    out << ';';
    std::visit(overloaded{
                   [&](const nn::Conv2d& l) {
                     const auto& k = l.weight.value.shape();
                     out << "conv2d " << l.name << ' ' << k[1] << ' ' << k[0] << ' ' << k[2] << ' ' << l.stride << ' '
                         << l.padding;
                   },
                   [&](const nn::Relu& l) { out << "relu " << l.name; },
                   [&](const nn::MaxPool2x2& l) { out << "maxpool2x2 " << l.name; },
                   [&](const nn::Flatten& l) { out << "flatten " << l.name; },
                   [&](const nn::Dense& l) {
                     const auto& w = l.weight.value.shape();
                     out << "dense " << l.name << ' ' << w[1] << ' ' << w[0];
                   },
               },
               layer);
  }
  return out.str();
}

Network Network::from_descriptor(std::string_view descriptor) {
  auto bad = [&](const std::string& why) -> Network {
    throw ContractViolation("invalid architecture descriptor: " + why);
  };
  std::vector<std::string> parts;
  {
    std::string cur;
    for (char c : descriptor) {
      if (c == ';') {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    parts.push_back(cur);
  }
  if (parts.size() < 2) return bad("too short");

  Tensor::Shape input;
  {
    std::istringstream in(parts[0]);
    std::string kw, dims;
    in >> kw >> dims;
    if (kw != "input") return bad("missing input shape");
    std::size_t start = 0;
    while (start <= dims.size()) {
      const auto x = dims.find('x', start);
      const std::string tok = dims.substr(start, x - start);
      if (tok.empty()) return bad("bad input shape");
      input.push_back(std::stoul(tok));
      if (x == std::string::npos) break;
      start = x + 1;
    }
  }
  Head head;
  if (parts[1] == "head softmax")
    head = Head::softmax;
  else if (parts[1] == "head none")
    head = Head::none;
  else
    return bad("missing head");

  std::vector<nn::Layer> layers;
  for (std::size_t i = 2; i < parts.size(); ++i) {
    std::istringstream in(parts[i]);
    std::string kind, name;
    in >> kind >> name;
    if (name.empty()) return bad("layer without name: '" + parts[i] + "'");
    if (kind == "conv2d") {
      std::size_t in_c, out_c, k;
      int stride, pad;
      if (!(in >> in_c >> out_c >> k >> stride >> pad)) return bad("conv2d fields: '" + parts[i] + "'");
      layers.push_back(conv(name, in_c, out_c, k, stride, pad));
    } else if (kind == "dense") {
      std::size_t n_in, n_out;
      if (!(in >> n_in >> n_out)) return bad("dense fields: '" + parts[i] + "'");
      layers.push_back(fc(name, n_in, n_out));
    } else if (kind == "relu") {
      layers.push_back(nn::Relu{name});
    } else if (kind == "maxpool2x2") {
      layers.push_back(nn::MaxPool2x2{name});
    } else if (kind == "flatten") {
      layers.push_back(nn::Flatten{name});
    } else {
      return bad("unknown layer kind '" + kind + "'");
    }
  }
  return Network(std::move(input), std::move(layers), head);
}

Network build_classifier(int num_classes, int input_side, std::uint64_t seed, int input_channels) {
  if (num_classes < 1) throw ContractViolation("build_classifier: num_classes must be >= 1");
  if (input_side < 16 || input_side % 4 != 0)
    throw ContractViolation("build_classifier: input_side must be >= 16 and divisible by 4, got " +
                            std::to_string(input_side));
  if (input_channels != 1 && input_channels != 3) throw ContractViolation("build_classifier: channels must be 1 or 3");
  const auto side = static_cast<std::size_t>(input_side);
  const auto c = static_cast<std::size_t>(input_channels);
  std::vector<nn::Layer> layers;
  layers.push_back(conv("conv1", c, 8, 3, 1, 1));
  layers.push_back(nn::Relu{"relu1"});
  layers.push_back(nn::MaxPool2x2{"pool1"});
  layers.push_back(conv("conv2", 8, 16, 3, 1, 1));
  layers.push_back(nn::Relu{"relu2"});
  layers.push_back(nn::MaxPool2x2{"pool2"});
  layers.push_back(nn::Flatten{"flatten"});
  layers.push_back(fc("fc1", 16 * (side / 4) * (side / 4), 64));
  layers.push_back(nn::Relu{"relu3"});
  layers.push_back(fc("fc2", 64, static_cast<std::size_t>(num_classes)));
  Network net({c, side, side}, std::move(layers), Head::softmax);
  he_init(net, seed);
  return net;
}

Network build_detector(int grid_side, int boxes_per_cell, int num_classes, int input_side, std::uint64_t seed) {
  if (grid_side < 1 || boxes_per_cell < 1 || num_classes < 1)
    throw ContractViolation("build_detector: S, B and C must be >= 1");
  if (input_side < 16 || input_side % 16 != 0)
    throw ContractViolation("build_detector: input_side must be a positive multiple of 16, got " +
                            std::to_string(input_side));
  const auto side = static_cast<std::size_t>(input_side);
  const auto out = static_cast<std::size_t>(grid_side * grid_side * (5 * boxes_per_cell + num_classes));
  std::vector<nn::Layer> layers;
  const std::size_t filters[4] = {8, 16, 16, 16};
  std::size_t in_c = 3;
  for (int s = 0; s < 4; ++s) {
    const std::string idx = std::to_string(s + 1);
    layers.push_back(conv("conv" + idx, in_c, filters[s], 3, 1, 1));
    layers.push_back(nn::Relu{"relu" + idx});
    layers.push_back(nn::MaxPool2x2{"pool" + idx});
    in_c = filters[s];
  }
  layers.push_back(nn::Flatten{"flatten"});
  layers.push_back(fc("fc1", 16 * (side / 16) * (side / 16), 64));
  layers.push_back(nn::Relu{"relu5"});
  layers.push_back(fc("fc2", 64, out));
  Network net({3, side, side}, std::move(layers), Head::none);
  he_init(net, seed);
  return net;
}

std::size_t set_trainable(Network& net, std::string_view prefix, bool trainable) {
  std::size_t matched = 0;
  for (auto* p : net.parameters())
    if (p->name.starts_with(prefix)) {
      p->trainable = trainable;
      ++matched;
    }
  if (matched == 0) throw ContractViolation("set_trainable: no parameter matches prefix '" + std::string(prefix) + "'");
  return matched;
}

std::size_t copy_matching_parameters(const Network& src, Network& dst) {
  std::size_t copied = 0;
  for (auto* d : dst.parameters())
    for (const auto* s : src.parameters())
      if (s->name == d->name && s->value.shape() == d->value.shape()) {
        d->value = s->value;
        ++copied;
      }
  return copied;
}

}  // namespace gesture::models
