// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gesture/error.hpp"
#include "gesture/layers.hpp"
#include "support.hpp"

using namespace gesture;
using namespace gesture::nn;
using gesture::testing::random_tensor;

namespace {

// Direct transcription of the cross-correlation definition with explicit
// zero padding; deliberately shares no code with the library.
Tensor conv_oracle(const Tensor& x, const Tensor& k, const Tensor& b, int stride, int pad) {
  const int C = static_cast<int>(x.dim(0)), H = static_cast<int>(x.dim(1)), W = static_cast<int>(x.dim(2));
  const int K = static_cast<int>(k.dim(0)), kh = static_cast<int>(k.dim(2)), kw = static_cast<int>(k.dim(3));
  const int Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor out({static_cast<std::size_t>(K), static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)});
  for (int o = 0; o < K; ++o)
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j) {
        double s = b[static_cast<std::size_t>(o)];
        for (int c = 0; c < C; ++c)
          for (int u = 0; u < kh; ++u)
            for (int v = 0; v < kw; ++v) {
              const int y = i * stride + u - pad, xx = j * stride + v - pad;
              if (y < 0 || y >= H || xx < 0 || xx >= W) continue;
              s += x.at(static_cast<std::size_t>(c), static_cast<std::size_t>(y), static_cast<std::size_t>(xx)) *
                   k[((static_cast<std::size_t>(o) * C + c) * kh + u) * kw + v];
            }
        out.at(static_cast<std::size_t>(o), static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = s;
      }
  return out;
}

Layer conv_layer(Tensor w, Tensor b, int stride, int pad) {
  return Conv2d{"conv", {"conv.weight", std::move(w), ParamKind::weight}, {"conv.bias", std::move(b), ParamKind::bias},
                stride, pad};
}

Layer dense_layer(Tensor w, Tensor b) {
  return Dense{"fc", {"fc.weight", std::move(w), ParamKind::weight}, {"fc.bias", std::move(b), ParamKind::bias}};
}

/// Values drawn away from 0 so ReLU is probed off its kink.
Tensor off_kink(Tensor::Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) {
    const double m = rng.uniform(0.01, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("construction validates shape and size") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    CHECK(t[5] == 1.5);
    CHECK_THROWS_AS(Tensor({2, 0}), ContractViolation);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ContractViolation);
    CHECK(Tensor::of({1, 2, 3}).shape() == Tensor::Shape{3});
  }

  TEST_CASE("reshape keeps data and checks element count") {
    Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
    const auto r = t.reshaped({3, 2});
    CHECK(r.storage() == t.storage());
    CHECK_THROWS_AS(t.reshaped({4, 2}), ContractViolation);
  }

  TEST_CASE("finiteness and shape printing") {
    Tensor t({2}, std::vector<double>{1.0, 2.0});
    CHECK(t.all_finite());
    t[1] = std::nan("");
    CHECK_FALSE(t.all_finite());
    CHECK(to_string(Tensor::Shape{1, 32, 32}) == "1x32x32");
  }
}

TEST_SUITE("conv2d") {
  TEST_CASE("all-ones input and kernel") {
    const auto y = conv2d_forward(Tensor({1, 3, 3}, 1.0), Tensor({1, 1, 2, 2}, 1.0), Tensor({1}), 1, 0);
    CHECK(y == Tensor({1, 2, 2}, 4.0));
  }

  TEST_CASE("hand-computed cross-correlation") {
    Tensor x({1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor k({1, 1, 2, 2}, std::vector<double>{1, 0, 0, 1});
    CHECK(conv2d_forward(x, k, Tensor({1}), 1, 0).storage() == std::vector<double>{6, 8, 12, 14});
  }

  TEST_CASE("1x1 identity kernel is the identity, bit-exact") {
    Rng rng(3);
    for (int i = 0; i < 10; ++i) {
      const auto x = random_tensor({1, 5, 7}, rng, -1e3, 1e3);
      CHECK(conv2d_forward(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0) == x);
    }
  }

  TEST_CASE("matches the direct oracle over random shapes, strides and padding") {
    Rng rng(11);
    for (int rep = 0; rep < 60; ++rep) {
      const std::size_t C = 1 + rng.below(3), K = 1 + rng.below(3), H = 3 + rng.below(6), W = 3 + rng.below(6);
      const std::size_t kh = 1 + rng.below(3), kw = 1 + rng.below(3);
      const int stride = 1 + static_cast<int>(rng.below(2)), pad = static_cast<int>(rng.below(2));
      const auto x = random_tensor({C, H, W}, rng), k = random_tensor({K, C, kh, kw}, rng),
                 b = random_tensor({K}, rng);
      const auto got = conv2d_forward(x, k, b, stride, pad);
      const auto want = conv_oracle(x, k, b, stride, pad);
      REQUIRE(got.shape() == want.shape());
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("output size follows floor((H + 2p - k) / s) + 1") {
    const auto y = conv2d_forward(Tensor({2, 7, 6}), Tensor({4, 2, 3, 3}), Tensor({4}), 2, 1);
    CHECK(y.shape() == Tensor::Shape{4, 4, 3});
  }

  TEST_CASE("shape violations name the dimensions") {
    CHECK_THROWS_WITH_AS(conv2d_forward(Tensor({2, 4, 4}), Tensor({1, 3, 2, 2}), Tensor({1}), 1, 0),
                         doctest::Contains("channel"), ContractViolation);
    CHECK_THROWS_AS(conv2d_forward(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor({1}), 1, 0), ContractViolation);
    CHECK_THROWS_AS(conv2d_forward(Tensor({1, 4, 4}), Tensor({1, 1, 2, 2}), Tensor({2}), 1, 0), ContractViolation);
    CHECK_THROWS_AS(conv2d_forward(Tensor({1, 4, 4}), Tensor({1, 1, 2, 2}), Tensor({1}), 0, 0), ContractViolation);
  }

  TEST_CASE("backward: zero upstream, identity kernel, upstream shape check") {
    Rng rng(4);
    const auto x = random_tensor({2, 4, 4}, rng), k = random_tensor({3, 2, 3, 3}, rng);
    const auto g = conv2d_backward(x, k, Tensor({3, 4, 4}), 1, 1);
    CHECK(g.d_input == Tensor({2, 4, 4}));
    CHECK(g.param("weight") == Tensor({3, 2, 3, 3}));
    CHECK(g.param("bias") == Tensor({3}));

    const auto up = random_tensor({1, 4, 4}, rng);
    CHECK(conv2d_backward(random_tensor({1, 4, 4}, rng), Tensor({1, 1, 1, 1}, 1.0), up, 1, 0).d_input == up);
    CHECK_THROWS_AS(conv2d_backward(x, k, Tensor({3, 3, 3}), 1, 1), ContractViolation);
  }

  TEST_CASE("gradient check on a seeded 1x4x4 input with a 2x2 kernel") {
    Rng rng(2024);
    const auto layer = conv_layer(random_tensor({1, 1, 2, 2}, rng), random_tensor({1}, rng), 1, 0);
    const auto report = gradient_check(layer, random_tensor({1, 4, 4}, rng), 1e-5, rng);
    CHECK(report.max_relative_error <= 1e-4);
    CHECK(report.entries_checked == 16 + 4 + 1);
  }
}

TEST_SUITE("relu") {
  TEST_CASE("definition and subgradient at zero") {
    CHECK(relu(Tensor::of({-1, 0, 2})).storage() == std::vector<double>{0, 0, 2});
    CHECK(relu(Tensor::of({0, 3, 4})) == Tensor::of({0, 3, 4}));
    CHECK(relu_backward(Tensor::of({-1, 2}), Tensor::of({5, 7})).storage() == std::vector<double>{0, 7});
    CHECK(relu_backward(Tensor::of({0.0}), Tensor::of({5})).storage() == std::vector<double>{0});
  }

  TEST_CASE("gradient check away from the kink") {
    Rng rng(8);
    const auto report = gradient_check(Relu{"relu"}, off_kink({2, 3, 3}, rng), 1e-5, rng);
    CHECK(report.max_relative_error <= 1e-6);
  }
}

TEST_SUITE("maxpool") {
  TEST_CASE("forward") {
    CHECK(maxpool2x2(Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4})).storage() == std::vector<double>{4});
    CHECK(maxpool2x2(Tensor({2, 4, 6}, 2.5)) == Tensor({2, 2, 3}, 2.5));
    CHECK_THROWS_AS(maxpool2x2(Tensor({1, 3, 4})), ContractViolation);
  }

  TEST_CASE("ties credit the first element in row-major order") {
    Tensor x({1, 2, 2}, std::vector<double>{4, 4, 0, 0});
    CHECK(maxpool2x2_backward(x, Tensor({1, 1, 1}, 1.0)).storage() == std::vector<double>{1, 0, 0, 0});
    Tensor flat({1, 2, 2}, 3.0);
    CHECK(maxpool2x2_backward(flat, Tensor({1, 1, 1}, 2.0)).storage() == std::vector<double>{2, 0, 0, 0});
  }

  TEST_CASE("property: output bounded by the input max, attained by the max window") {
    Rng rng(15);
    for (int rep = 0; rep < 50; ++rep) {
      const auto x = random_tensor({1 + rng.below(3), 2 * (1 + rng.below(4)), 2 * (1 + rng.below(4))}, rng);
      const auto y = maxpool2x2(x);
      const double xmax = *std::max_element(x.values().begin(), x.values().end());
      const double ymax = *std::max_element(y.values().begin(), y.values().end());
      CHECK(ymax == xmax);
      for (double v : y.values()) CHECK(v <= xmax);
    }
  }

  TEST_CASE("gradient check with distinct values") {
    Rng rng(9);
    const auto report = gradient_check(MaxPool2x2{"pool"}, random_tensor({2, 4, 4}, rng), 1e-5, rng);
    CHECK(report.max_relative_error <= 1e-4);
  }
}

TEST_SUITE("dense") {
  TEST_CASE("forward examples") {
    Tensor eye({2, 2}, std::vector<double>{1, 0, 0, 1});
    CHECK(dense(Tensor::of({3, -4}), eye, Tensor({2})) == Tensor::of({3, -4}));
    CHECK(dense(Tensor::of({3, -4}), Tensor({2, 2}), Tensor::of({1, 2})) == Tensor::of({1, 2}));
    CHECK(dense(Tensor::of({1, 1}), Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}), Tensor({2})) ==
          Tensor::of({3, 7}));
    CHECK_THROWS_AS(dense(Tensor::of({1, 1, 1}), eye, Tensor({2})), ContractViolation);
  }

  TEST_CASE("linear layer gradient check is exact up to rounding") {
    Rng rng(12);
    const auto layer = dense_layer(random_tensor({4, 6}, rng), random_tensor({4}, rng));
    CHECK(gradient_check(layer, random_tensor({6}, rng), 1e-5, rng).max_relative_error <= 1e-8);
  }
}

TEST_SUITE("softmax and cross entropy") {
  TEST_CASE("closed forms") {
    const auto a = softmax(Tensor::of({0, 0}));
    CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-15));
    const auto b = softmax(Tensor::of({std::log(2.0), 0}));
    CHECK(std::abs(b[0] - 2.0 / 3.0) < 1e-15);
    CHECK(std::abs(b[1] - 1.0 / 3.0) < 1e-15);
    const auto c = softmax(Tensor::of({1000, 0}));
    CHECK(c.all_finite());
    CHECK(c[0] == doctest::Approx(1.0));
  }

  TEST_CASE("property: sums to 1 and is shift invariant") {
    Rng rng(21);
    for (int rep = 0; rep < 200; ++rep) {
      const auto z = random_tensor({1 + rng.below(10)}, rng, -50, 50);
      const auto p = softmax(z);
      double s = 0;
      for (double v : p.values()) {
        CHECK(v > 0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
      auto shifted = z;
      const double c = rng.uniform(-100, 100);
      for (auto& v : shifted.values()) v += c;
      const auto q = softmax(shifted);
      for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) <= 1e-12);
    }
  }

  TEST_CASE("cross entropy values and gradient") {
    CHECK(cross_entropy(Tensor::of({0, 1, 0}), 1) == doctest::Approx(0.0).epsilon(1e-11));
    // The 1e-12 floor inside the log shifts the value by about 4e-12.
    CHECK(cross_entropy(Tensor({4}, 0.25), 2) == doctest::Approx(std::log(4.0)).epsilon(1e-10));
    CHECK(std::isfinite(cross_entropy(Tensor::of({1, 0}), 1)));
    CHECK(softmax_cross_entropy_grad(Tensor::of({0.5, 0.5}), 0) == Tensor::of({-0.5, 0.5}));
    CHECK_THROWS_AS(cross_entropy(Tensor::of({0.5, 0.5}), 2), ContractViolation);
    CHECK_THROWS_AS(cross_entropy(Tensor::of({0.5, 0.5}), -1), ContractViolation);
  }

  TEST_CASE("combined gradient matches finite differences of ce(softmax(z))") {
    Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
      const std::size_t C = 2 + rng.below(6);
      const auto z = random_tensor({C}, rng, -3, 3);
      const int t = static_cast<int>(rng.below(C));
      const auto g = softmax_cross_entropy_grad(softmax(z), t);
      for (std::size_t i = 0; i < C; ++i) {
        auto zp = z, zm = z;
        zp[i] += 1e-5;
        zm[i] -= 1e-5;
        const double num = (cross_entropy(softmax(zp), t) - cross_entropy(softmax(zm), t)) / 2e-5;
        CHECK(gradient_error(g[i], num) <= 1e-4);
      }
    }
  }
}

TEST_SUITE("regularisation and sgd") {
  TEST_CASE("l2 penalty examples, biases excluded") {
    std::vector<Parameter> ps{{"a.weight", Tensor::of({1, 2}), ParamKind::weight},
                              {"b.weight", Tensor::of({3}), ParamKind::weight},
                              {"b.bias", Tensor::of({100}), ParamKind::bias}};
    CHECK(l2_penalty(ps, 0.5) == 7.0);
    CHECK(l2_penalty(ps, 0.0) == 0.0);
    std::vector<Parameter> one{{"w", Tensor::of({3}), ParamKind::weight}};
    CHECK(l2_penalty(one, 1.0) == 9.0);
    CHECK_THROWS_AS(l2_penalty(ps, -1.0), ContractViolation);
  }

  TEST_CASE("sgd update rule") {
    std::vector<Parameter> ps{{"w", Tensor::of({1.0}), ParamKind::weight}, {"b", Tensor::of({1.0}), ParamKind::bias}};
    std::vector<Tensor> g{Tensor::of({1.0}), Tensor::of({1.0})};
    sgd_step(std::span<Parameter>(ps), g, 0.1, 0.0);
    CHECK(ps[0].value[0] == doctest::Approx(0.9));
    CHECK(ps[1].value[0] == doctest::Approx(0.9));

    std::vector<Parameter> q{{"w", Tensor::of({1.0}), ParamKind::weight}, {"b", Tensor::of({1.0}), ParamKind::bias}};
    std::vector<Tensor> zero{Tensor::of({0.0}), Tensor::of({0.0})};
    sgd_step(std::span<Parameter>(q), zero, 0.1, 0.5);
    CHECK(q[0].value[0] == doctest::Approx(0.9));
    CHECK(q[1].value[0] == 1.0);  // no decay on biases
  }

  TEST_CASE("property: zero gradient and zero lambda is the identity; frozen params never move") {
    Rng rng(41);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<Parameter> ps{{"w", random_tensor({3, 4}, rng), ParamKind::weight},
                                {"b", random_tensor({3}, rng), ParamKind::bias}};
      const auto before = ps;
      sgd_step(std::span<Parameter>(ps), std::vector<Tensor>{Tensor({3, 4}), Tensor({3})}, rng.uniform(0.01, 1), 0.0);
      CHECK(ps[0].value == before[0].value);
      CHECK(ps[1].value == before[1].value);

      ps[0].trainable = false;
      for (int s = 0; s < 5; ++s)
        sgd_step(std::span<Parameter>(ps), std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({3}, rng)},
                 0.5, 0.1);
      CHECK(ps[0].value == before[0].value);
      CHECK(ps[1].value != before[1].value);
    }
  }

  TEST_CASE("gradient shape mismatch is rejected") {
    std::vector<Parameter> ps{{"w", Tensor({2}), ParamKind::weight}};
    CHECK_THROWS_AS(sgd_step(std::span<Parameter>(ps), std::vector<Tensor>{Tensor({3})}, 0.1, 0.0),
                    ContractViolation);
    CHECK_THROWS_AS(sgd_step(std::span<Parameter>(ps), std::vector<Tensor>{}, 0.1, 0.0), ContractViolation);
  }
}

TEST_SUITE("gradient checker") {
  TEST_CASE("error metric") {
    CHECK(gradient_error(1.0, 1.0) == 0.0);
    CHECK(gradient_error(100.0, 101.0) == doctest::Approx(1.0 / 101.0));
    CHECK(gradient_error(1e-8, 0.0) == doctest::Approx(1e-8));
  }

  TEST_CASE("detects a wrong gradient") {
    // A ReLU probed at its kink: central differences see slope 1/2, backward says 0.
    Rng rng(1);
    const auto report = gradient_check(Relu{"relu"}, Tensor({1, 1, 1}, 0.0), 1e-5, rng);
    CHECK(report.max_relative_error > 1e-2);
    CHECK(report.worst_entry == "input[0]");
  }

  TEST_CASE("every layer kind on 10 seeded instances") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(1000 + seed);
      const auto conv = conv_layer(random_tensor({2, 2, 3, 3}, rng), random_tensor({2}, rng), 1 + seed % 2, 1);
      CHECK(gradient_check(conv, random_tensor({2, 5, 5}, rng), 1e-5, rng).max_relative_error <= 1e-4);
      const auto fc = dense_layer(random_tensor({3, 5}, rng), random_tensor({3}, rng));
      CHECK(gradient_check(fc, random_tensor({5}, rng), 1e-5, rng).max_relative_error <= 1e-4);
      CHECK(gradient_check(Relu{"r"}, off_kink({6}, rng), 1e-5, rng).max_relative_error <= 1e-4);
      CHECK(gradient_check(MaxPool2x2{"p"}, random_tensor({1, 4, 4}, rng), 1e-5, rng).max_relative_error <= 1e-4);
      CHECK(gradient_check(Flatten{"f"}, random_tensor({2, 2, 3}, rng), 1e-5, rng).max_relative_error <= 1e-4);
    }
  }
}
