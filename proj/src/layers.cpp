// SPDX-License-Identifier: Apache-2.0
#include "gesture/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gesture/error.hpp"
#include "gesture/kernels.hpp"

namespace gesture::nn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractViolation(what);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ContractViolation(std::string(what) + ": shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t filters, kh, kw;
  std::size_t out_h, out_w;
  int stride, padding;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels, int stride, int padding) {
  require(input.rank() == 3, "conv2d: input must be CxHxW, got " + to_string(input.shape()));
  require(kernels.rank() == 4, "conv2d: kernels must be KxCxkHxkW, got " + to_string(kernels.shape()));
  require(stride >= 1, "conv2d: stride must be >= 1, got " + std::to_string(stride));
  require(padding >= 0, "conv2d: padding must be >= 0, got " + std::to_string(padding));
  ConvGeometry g{};
  g.channels = input.dim(0);
  g.height = input.dim(1);
  g.width = input.dim(2);
  g.filters = kernels.dim(0);
  g.kh = kernels.dim(2);
  g.kw = kernels.dim(3);
  g.stride = stride;
  g.padding = padding;
  require(kernels.dim(1) == g.channels, "conv2d: kernel channels " + std::to_string(kernels.dim(1)) +
                                            " != input channels " + std::to_string(g.channels));
  const std::size_t ph = g.height + 2 * static_cast<std::size_t>(padding);
  const std::size_t pw = g.width + 2 * static_cast<std::size_t>(padding);
  require(g.kh <= ph && g.kw <= pw, "conv2d: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                                        " larger than padded input " + std::to_string(ph) + "x" +
                                        std::to_string(pw));
  g.out_h = (ph - g.kh) / static_cast<std::size_t>(stride) + 1;
  g.out_w = (pw - g.kw) / static_cast<std::size_t>(stride) + 1;
  return g;
}

// Output columns [lo, hi) whose input column ox*stride + kx - pad lies in [0, width).
std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kx) {
  const long s = g.stride;
  const long off = static_cast<long>(kx) - g.padding;
  long lo = off >= 0 ? 0 : (-off + s - 1) / s;
  long hi_excl = (static_cast<long>(g.width) - 1 - off) / s + 1;
  if (static_cast<long>(g.width) - 1 - off < 0) hi_excl = 0;
  hi_excl = std::min<long>(hi_excl, static_cast<long>(g.out_w));
  lo = std::min<long>(lo, hi_excl);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi_excl)};
}

}  // namespace

const Tensor& LayerGrad::param(std::string_view name) const {
  for (const auto& p : d_params)
    if (p.name == name) return p.value;
  throw ContractViolation("no gradient named " + std::string(name));
}

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride, int padding) {
  const auto g = conv_geometry(input, kernels, stride, padding);
  require(bias.rank() == 1 && bias.dim(0) == g.filters,
          "conv2d: bias must have " + std::to_string(g.filters) + " entries, got " + to_string(bias.shape()));

  const auto& k = kernels::active();
  Tensor out({g.filters, g.out_h, g.out_w});
  for (std::size_t f = 0; f < g.filters; ++f) {
    double* plane = out.data() + f * g.out_h * g.out_w;
    std::fill(plane, plane + g.out_h * g.out_w, bias[f]);
    for (std::size_t c = 0; c < g.channels; ++c) {
      const double* in_plane = input.data() + c * g.height * g.width;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const double w = kernels[((f * g.channels + c) * g.kh + ky) * g.kw + kx];
          const auto [lo, hi] = valid_columns(g, kx);
          if (lo >= hi) continue;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const long iy = static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.padding;
            if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
            const double* in_row = in_plane + static_cast<std::size_t>(iy) * g.width;
            double* out_row = plane + oy * g.out_w;
            if (g.stride == 1) {
              k.axpy(w, in_row + lo + kx - g.padding, out_row + lo, hi - lo);
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox)
                out_row[ox] += w * in_row[ox * g.stride + kx - g.padding];
            }
          }
        }
      }
    }
  }
  return out;
}

LayerGrad conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& upstream, int stride,
                          int padding) {
  const auto g = conv_geometry(input, kernels, stride, padding);
  const Tensor::Shape expected{g.filters, g.out_h, g.out_w};
  require(upstream.shape() == expected, "conv2d_backward: upstream shape " + to_string(upstream.shape()) +
                                            " != forward output shape " + to_string(expected));

  const auto& k = kernels::active();
  Tensor d_input(input.shape());
  Tensor d_weight(kernels.shape());
  Tensor d_bias({g.filters});

  for (std::size_t f = 0; f < g.filters; ++f) {
    const double* up_plane = upstream.data() + f * g.out_h * g.out_w;
    double sum = 0.0;
    for (std::size_t i = 0; i < g.out_h * g.out_w; ++i) sum += up_plane[i];
    d_bias[f] = sum;

    for (std::size_t c = 0; c < g.channels; ++c) {
      const double* in_plane = input.data() + c * g.height * g.width;
      double* din_plane = d_input.data() + c * g.height * g.width;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::size_t widx = ((f * g.channels + c) * g.kh + ky) * g.kw + kx;
          const double w = kernels[widx];
          const auto [lo, hi] = valid_columns(g, kx);
          if (lo >= hi) continue;
          double dw = 0.0;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const long iy = static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.padding;
            if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
            const double* up_row = up_plane + oy * g.out_w;
            const double* in_row = in_plane + static_cast<std::size_t>(iy) * g.width;
            double* din_row = din_plane + static_cast<std::size_t>(iy) * g.width;
            if (g.stride == 1) {
              const std::size_t shift = lo + kx - g.padding;
              dw += k.dot(up_row + lo, in_row + shift, hi - lo);
              k.axpy(w, up_row + lo, din_row + shift, hi - lo);
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox) {
                const std::size_t ix = ox * g.stride + kx - g.padding;
                dw += up_row[ox] * in_row[ix];
                din_row[ix] += w * up_row[ox];
              }
            }
          }
          d_weight[widx] = dw;
        }
      }
    }
  }
  LayerGrad grad;
  grad.d_input = std::move(d_input);
  grad.d_params.push_back({"weight", std::move(d_weight)});
  grad.d_params.push_back({"bias", std::move(d_bias)});
  return grad;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
  require_same_shape(input, upstream, "relu_backward");
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? upstream[i] : 0.0;
  return out;
}

namespace {

void require_poolable(const Tensor& input) {
  require(input.rank() == 3, "maxpool2x2: input must be CxHxW, got " + to_string(input.shape()));
  require(input.dim(1) % 2 == 0 && input.dim(2) % 2 == 0,
          "maxpool2x2: H and W must be even, got " + to_string(input.shape()));
}

// Index (within the input plane) of the window maximum; first in row-major order wins ties.
std::size_t window_argmax(const double* plane, std::size_t width, std::size_t oy, std::size_t ox) {
  const std::size_t y = 2 * oy, x = 2 * ox;
  std::size_t best = y * width + x;
  const std::size_t candidates[3] = {y * width + x + 1, (y + 1) * width + x, (y + 1) * width + x + 1};
  for (auto c : candidates)
    if (plane[c] > plane[best]) best = c;
  return best;
}

}  // namespace

Tensor maxpool2x2(const Tensor& input) {
  require_poolable(input);
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor out({c, h / 2, w / 2});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = input.data() + ch * h * w;
    for (std::size_t oy = 0; oy < h / 2; ++oy)
      for (std::size_t ox = 0; ox < w / 2; ++ox) out.at(ch, oy, ox) = plane[window_argmax(plane, w, oy, ox)];
  }
  return out;
}

Tensor maxpool2x2_backward(const Tensor& input, const Tensor& upstream) {
  require_poolable(input);
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const Tensor::Shape expected{c, h / 2, w / 2};
  require(upstream.shape() == expected, "maxpool2x2_backward: upstream shape " + to_string(upstream.shape()) +
                                            " != " + to_string(expected));
  Tensor d_input(input.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = input.data() + ch * h * w;
    double* dplane = d_input.data() + ch * h * w;
    for (std::size_t oy = 0; oy < h / 2; ++oy)
      for (std::size_t ox = 0; ox < w / 2; ++ox) dplane[window_argmax(plane, w, oy, ox)] += upstream.at(ch, oy, ox);
  }
  return d_input;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require(input.rank() == 1, "dense: input must be rank 1, got " + to_string(input.shape()));
  require(weights.rank() == 2 && weights.dim(1) == input.dim(0),
          "dense: weights " + to_string(weights.shape()) + " incompatible with input " + to_string(input.shape()));
  require(bias.rank() == 1 && bias.dim(0) == weights.dim(0),
          "dense: bias " + to_string(bias.shape()) + " incompatible with weights " + to_string(weights.shape()));
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  const auto& k = kernels::active();
  Tensor out({m});
  for (std::size_t r = 0; r < m; ++r) out[r] = bias[r] + k.dot(weights.data() + r * n, input.data(), n);
  return out;
}

LayerGrad dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream) {
  require(input.rank() == 1 && weights.rank() == 2 && weights.dim(1) == input.dim(0),
          "dense_backward: weights " + to_string(weights.shape()) + " incompatible with input " +
              to_string(input.shape()));
  require(upstream.rank() == 1 && upstream.dim(0) == weights.dim(0),
          "dense_backward: upstream " + to_string(upstream.shape()) + " != output size " +
              std::to_string(weights.dim(0)));
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  const auto& k = kernels::active();
  Tensor d_input({n});
  Tensor d_weight(weights.shape());
  for (std::size_t r = 0; r < m; ++r) {
    k.axpy(upstream[r], weights.data() + r * n, d_input.data(), n);
    k.axpy(upstream[r], input.data(), d_weight.data() + r * n, n);
  }
  LayerGrad grad;
  grad.d_input = std::move(d_input);
  grad.d_params.push_back({"weight", std::move(d_weight)});
  grad.d_params.push_back({"bias", upstream});
  return grad;
}

Tensor softmax(const Tensor& logits) {
  require(logits.rank() == 1 && logits.size() >= 1, "softmax: logits must be a non-empty vector");
  const double peak = *std::max_element(logits.values().begin(), logits.values().end());
  Tensor out(logits.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    sum += out[i];
  }
  for (auto& v : out.values()) v /= sum;
  return out;
}

namespace {
constexpr double kLogFloor = 1e-12;

void require_class(const Tensor& probs, int target_class) {
  require(target_class >= 0 && static_cast<std::size_t>(target_class) < probs.size(),
          "cross_entropy: target class " + std::to_string(target_class) + " out of range [0, " +
              std::to_string(probs.size()) + ")");
}
}  // namespace

double cross_entropy(const Tensor& probs, int target_class) {
  require_class(probs, target_class);
  return -std::log(probs[static_cast<std::size_t>(target_class)] + kLogFloor);
}

Tensor softmax_cross_entropy_grad(const Tensor& probs, int target_class) {
  require_class(probs, target_class);
  Tensor g = probs;
  g[static_cast<std::size_t>(target_class)] -= 1.0;
  return g;
}

double l2_penalty(std::span<const Parameter* const> params, double lambda) {
  require(lambda >= 0.0, "l2_penalty: lambda must be >= 0");
  if (lambda == 0.0) return 0.0;
  double sum = 0.0;
  for (const auto* p : params) {
    if (p->kind != ParamKind::weight) continue;
    for (double w : p->value.values()) sum += w * w;
  }
  return lambda * sum;
}

double l2_penalty(std::span<const Parameter> params, double lambda) {
  std::vector<const Parameter*> ptrs;
  for (const auto& p : params) ptrs.push_back(&p);
  return l2_penalty(std::span<const Parameter* const>(ptrs), lambda);
}

void sgd_step(std::span<Parameter* const> params, std::span<const Tensor> grads, double learning_rate,
              double lambda) {
  require(params.size() == grads.size(), "sgd_step: " + std::to_string(params.size()) + " params but " +
                                             std::to_string(grads.size()) + " gradients");
  require(learning_rate >= 0.0, "sgd_step: learning rate must be non-negative");
  require(lambda >= 0.0, "sgd_step: lambda must be non-negative");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->value.shape() != grads[i].shape())
      throw ContractViolation("sgd_step: gradient for " + params[i]->name + " has shape " +
                              to_string(grads[i].shape()) + ", expected " + to_string(params[i]->value.shape()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    const bool decay = p.kind == ParamKind::weight && lambda != 0.0;
    auto w = p.value.values();
    const auto g = grads[i].values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double step = decay ? g[j] + 2.0 * lambda * w[j] : g[j];
      w[j] -= learning_rate * step;
    }
  }
}

void sgd_step(std::span<Parameter> params, std::span<const Tensor> grads, double learning_rate, double lambda) {
  std::vector<Parameter*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  sgd_step(std::span<Parameter* const>(ptrs), grads, learning_rate, lambda);
}

// ---------------------------------------------------------------------------
// Layer variant dispatch

namespace {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace

const std::string& layer_name(const Layer& layer) {
  return std::visit([](const auto& l) -> const std::string& { return l.name; }, layer);
}

Tensor forward(const Layer& layer, const Tensor& input) {
  return std::visit(
      overloaded{
          [&](const Conv2d& l) {
            return conv2d_forward(input, l.weight.value, l.bias.value, l.stride, l.padding);
          },
          [&](const Relu&) { return relu(input); },
          [&](const MaxPool2x2&) { return maxpool2x2(input); },
          [&](const Flatten&) { return input.reshaped({input.size()}); },
          [&](const Dense& l) { return dense(input, l.weight.value, l.bias.value); },
      },
      layer);
}

LayerGrad backward(const Layer& layer, const Tensor& input, const Tensor& upstream) {
  return std::visit(
      overloaded{
          [&](const Conv2d& l) {
            return conv2d_backward(input, l.weight.value, upstream, l.stride, l.padding);
          },
          [&](const Relu&) { return LayerGrad{relu_backward(input, upstream), {}}; },
          [&](const MaxPool2x2&) { return LayerGrad{maxpool2x2_backward(input, upstream), {}}; },
          [&](const Flatten&) {
            require(upstream.size() == input.size(), "flatten backward: upstream size mismatch");
            return LayerGrad{upstream.reshaped(input.shape()), {}};
          },
          [&](const Dense& l) { return dense_backward(input, l.weight.value, upstream); },
      },
      layer);
}

std::vector<Parameter*> parameters(Layer& layer) {
  return std::visit(overloaded{
                        [](Conv2d& l) { return std::vector<Parameter*>{&l.weight, &l.bias}; },
                        [](Dense& l) { return std::vector<Parameter*>{&l.weight, &l.bias}; },
                        [](auto&) { return std::vector<Parameter*>{}; },
                    },
                    layer);
}

std::vector<const Parameter*> parameters(const Layer& layer) {
  auto ptrs = parameters(const_cast<Layer&>(layer));
  return {ptrs.begin(), ptrs.end()};
}

// ---------------------------------------------------------------------------

double gradient_error(double analytic, double numeric) {
  const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport gradient_check(const Layer& layer, const Tensor& input, double eps, Rng& rng) {
  require(eps > 0.0 && eps <= 1e-2, "gradient_check: eps must be in (0, 1e-2]");
  const Tensor out = forward(layer, input);
  Tensor projection(out.shape());
  for (auto& v : projection.values()) v = rng.normal();

  auto objective = [&](const Layer& l, const Tensor& x) {
    const Tensor y = forward(l, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += projection[i] * y[i];
    return s;
  };

  const LayerGrad analytic = backward(layer, input, projection);
  GradCheckReport report;
  auto record = [&](double a, double n, const std::string& what) {
    const double e = gradient_error(a, n);
    ++report.entries_checked;
    if (report.worst_entry.empty() || e > report.max_relative_error) {
      report.max_relative_error = e;
      report.worst_entry = what;
    }
  };

  Tensor x = input;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = objective(layer, x);
    x[i] = saved - eps;
    const double down = objective(layer, x);
    x[i] = saved;
    record(analytic.d_input[i], (up - down) / (2.0 * eps), "input[" + std::to_string(i) + "]");
  }

  Layer probe = layer;
  auto params = parameters(probe);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& value = params[p]->value;
    const Tensor& grad = analytic.d_params.at(p).value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + eps;
      const double up = objective(probe, input);
      value[i] = saved - eps;
      const double down = objective(probe, input);
      value[i] = saved;
      record(grad[i], (up - down) / (2.0 * eps), params[p]->name + "[" + std::to_string(i) + "]");
    }
  }
  return report;
}

}  // namespace gesture::nn
