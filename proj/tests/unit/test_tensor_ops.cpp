#include <cmath>
#include <vector>

#include "doctest.h"
#include "normpert/ops.hpp"
#include "normpert/rng.hpp"
#include "normpert/tensor.hpp"

using namespace normpert;
using TD = Tensor<double>;

namespace {

TD random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool rg = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TD(shape, std::move(v), rg);
}

// Central-difference check of d sum(w * f(x)) / dx against backward, with a
// fixed random weighting w so every output element matters.
template <typename F>
GradCheckResult check_unary(F f, const TD& x, Rng& rng) {
  const TD probe_out = f(x.detach());
  std::vector<double> w(probe_out.numel());
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  const TD weights(probe_out.shape(), w);
  TD leaf = x.detach();
  leaf.set_requires_grad(true);
  backward(sum(mul(f(leaf), weights)));
  const auto numeric = finite_difference_grad(
      [&](const TD& z) {
        NoGradGuard g;
        return sum(mul(f(z), weights)).item();
      },
      x.detach());
  return compare_gradients(leaf.grad(), numeric.data());
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("construction validates shape against data") {
    CHECK_THROWS_AS(TD({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(TD({0, 2}, {}), std::invalid_argument);
    TD t({2, 3}, {0, 1, 2, 3, 4, 5});
    CHECK(t.at({1, 2}) == 5.0);
    CHECK(t.numel() == 6);
  }

  TEST_CASE("copies share storage, clone does not") {
    TD a({2}, {1.0, 2.0});
    TD b = a;
    b.mutable_data()[0] = 7.0;
    CHECK(a.data()[0] == 7.0);
    TD c = a.clone();
    c.mutable_data()[0] = 9.0;
    CHECK(a.data()[0] == 7.0);
  }

  TEST_CASE("backward of sum is all ones") {
    TD x({2, 3}, {1, -2, 3, 0.5, 8, -1}, true);
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }

  TEST_CASE("backward of sum of squares") {
    TD x({2}, {1.0, -2.0}, true);
    backward(sum(square(x)));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(-4.0));
  }

  TEST_CASE("backward rejects non-scalar and disconnected losses") {
    TD x({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(backward(square(x)), std::invalid_argument);
    TD c({1}, {3.0});
    CHECK_THROWS_AS(backward(c), std::invalid_argument);
  }

  TEST_CASE("gradients accumulate over shared uses") {
    TD x({1}, {3.0}, true);
    backward(sum(add(mul(x, x), x)));  // x^2 + x
    CHECK(x.grad()[0] == doctest::Approx(7.0));
  }

  TEST_CASE("backward is linear in the loss") {
    Rng rng(11);
    TD x = random_tensor({3, 4}, rng);
    auto grad_of = [&](double a, double b) {
      TD leaf = x.detach();
      leaf.set_requires_grad(true);
      backward(add(scale(sum(square(leaf)), a), scale(sum(mul(leaf, leaf)), b)));
      return std::vector<double>(leaf.grad().begin(), leaf.grad().end());
    };
    const auto f = grad_of(1.0, 0.0);
    const auto g = grad_of(0.0, 1.0);
    const auto h = grad_of(2.5, -0.75);
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == doctest::Approx(2.5 * f[i] - 0.75 * g[i]).epsilon(1e-12));
  }

  TEST_CASE("no-grad guard records nothing") {
    TD x({2}, {1.0, 2.0}, true);
    NoGradGuard guard;
    CHECK_FALSE(square(x).requires_grad());
  }

  TEST_CASE("check_finite names the location") {
    std::vector<double> v{1.0, NAN};
    CHECK_THROWS_WITH_AS(check_finite<double>(v, "probe"), doctest::Contains("probe"), std::runtime_error);
  }
}

TEST_SUITE("ops") {
  TEST_CASE("conv2d of zeros is zero") {
    TD x = TD::zeros({1, 1, 3, 3});
    TD w({1, 1, 3, 3}, std::vector<double>(9, 0.7));
    TD b = TD::zeros({1});
    const TD y = conv2d(x, w, b);
    for (double v : y.data()) CHECK(v == 0.0);
  }

  TEST_CASE("conv2d with a 1x1 kernel is affine") {
    TD x({1, 1, 2, 2}, {1, 2, 3, 4});
    TD w({1, 1, 1, 1}, {2});
    TD b({1}, {1});
    const auto y = conv2d(x, w, b);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{3, 5, 7, 9});
  }

  TEST_CASE("conv2d with a ones kernel sums the window") {
    TD x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    TD w({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    const auto y = conv2d(x, w, TD::zeros({1}));
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == 45.0);
  }

  TEST_CASE("conv2d output extent follows stride and padding") {
    Rng rng(2);
    TD x = random_tensor({2, 3, 7, 5}, rng);
    TD w = random_tensor({4, 3, 3, 3}, rng);
    const auto y = conv2d(x, w, TD::zeros({4}), 2, 1);
    CHECK(y.shape() == Shape{2, 4, 4, 3});
    CHECK_THROWS_AS(conv2d(x, random_tensor({4, 2, 3, 3}, rng), TD::zeros({4})), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, w, TD::zeros({4}), 0, 1), std::invalid_argument);
  }

  TEST_CASE("conv2d matches a direct loop") {
    Rng rng(5);
    TD x = random_tensor({2, 2, 5, 4}, rng);
    TD w = random_tensor({3, 2, 3, 3}, rng);
    TD b = random_tensor({3}, rng);
    const std::size_t stride = 1, pad = 1;
    const auto y = conv2d(x, w, b, stride, pad);
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < 5; ++i) {
          for (std::size_t j = 0; j < 4; ++j) {
            double acc = b.data()[k];
            for (std::size_t c = 0; c < 2; ++c) {
              for (std::size_t di = 0; di < 3; ++di) {
                for (std::size_t dj = 0; dj < 3; ++dj) {
                  const long yi = static_cast<long>(i + di) - static_cast<long>(pad);
                  const long xj = static_cast<long>(j + dj) - static_cast<long>(pad);
                  if (yi < 0 || xj < 0 || yi >= 5 || xj >= 4) continue;
                  acc += x.at({n, c, std::size_t(yi), std::size_t(xj)}) * w.at({k, c, di, dj});
                }
              }
            }
            CHECK(y.at({n, k, i, j}) == doctest::Approx(acc).epsilon(1e-12));
          }
        }
      }
    }
  }

  TEST_CASE("relu, maxpool and global average pool") {
    const auto r = relu(TD({3}, {-1, 0, 2}));
    CHECK(std::vector<double>(r.data().begin(), r.data().end()) == std::vector<double>{0, 0, 2});
    CHECK(maxpool2(TD({1, 1, 2, 2}, {1, 2, 3, 4})).item() == 4.0);
    CHECK_THROWS_AS(maxpool2(TD::zeros({1, 1, 3, 2})), std::invalid_argument);
    const auto g = global_avg_pool(TD::full({2, 3, 4, 4}, 2.5));
    CHECK(g.shape() == Shape{2, 3});
    for (double v : g.data()) CHECK(v == 2.5);
  }

  TEST_CASE("softmax cross-entropy values") {
    const std::vector<int> zero{0};
    CHECK(softmax_cross_entropy(TD({1, 4}, {0.3, 0.3, 0.3, 0.3}), zero).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    const double tiny = softmax_cross_entropy(TD({1, 2}, {10.0, -10.0}), zero).item();
    CHECK(tiny == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
    CHECK(tiny == doctest::Approx(2.061e-9).epsilon(1e-3));

    const TD logits({2, 3}, {1.0, 2.0, 0.5, -1.0, 0.0, 3.0});
    const std::vector<int> labels{1, 0};
    const double l0 = softmax_cross_entropy(TD({1, 3}, {1.0, 2.0, 0.5}), std::vector<int>{1}).item();
    const double l1 = softmax_cross_entropy(TD({1, 3}, {-1.0, 0.0, 3.0}), std::vector<int>{0}).item();
    CHECK(softmax_cross_entropy(logits, labels).item() == doctest::Approx(0.5 * (l0 + l1)).epsilon(1e-12));
    CHECK_THROWS_AS(softmax_cross_entropy(logits, std::vector<int>{1, 3}), std::invalid_argument);
  }

  TEST_CASE("finite differences of simple functions") {
    const auto g = finite_difference_grad([](const TD& z) { return sum(z).item(); }, TD({3}, {1.0, -4.0, 2.0}));
    for (double v : g.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-10));
    const auto h = finite_difference_grad([](const TD& z) { return sum(square(z)).item(); }, TD({1}, {3.0}), 1e-4);
    CHECK(std::abs(h.item() - 6.0) < 1e-6);
  }

  TEST_CASE("gradient check of every primitive") {
    Rng rng(42);
    SUBCASE("conv2d input, weight and bias") {
      TD x = random_tensor({2, 2, 5, 5}, rng);
      TD w = random_tensor({3, 2, 3, 3}, rng);
      TD b = random_tensor({3}, rng);
      CHECK(check_unary([&](const TD& z) { return conv2d(z, w.detach(), b.detach(), 1, 1); }, x, rng).ok());
      CHECK(check_unary([&](const TD& z) { return conv2d(x.detach(), z, b.detach(), 2, 1); }, w, rng).ok());
      CHECK(check_unary([&](const TD& z) { return conv2d(x.detach(), w.detach(), z, 1, 0); }, b, rng).ok());
    }
    SUBCASE("relu away from the kink") {
      std::vector<double> v(24);
      for (auto& e : v) e = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
      CHECK(check_unary([](const TD& z) { return relu(z); }, TD({2, 3, 2, 2}, v), rng).ok());
    }
    SUBCASE("maxpool2 with distinct values") {
      CHECK(check_unary([](const TD& z) { return maxpool2(z); }, random_tensor({2, 2, 4, 6}, rng), rng).ok());
    }
    SUBCASE("global average pool") {
      CHECK(check_unary([](const TD& z) { return global_avg_pool(z); }, random_tensor({2, 3, 4, 4}, rng), rng).ok());
    }
    SUBCASE("linear") {
      TD x = random_tensor({3, 5}, rng);
      TD w = random_tensor({4, 5}, rng);
      TD b = random_tensor({4}, rng);
      CHECK(check_unary([&](const TD& z) { return linear(z, w.detach(), b.detach()); }, x, rng).ok());
      CHECK(check_unary([&](const TD& z) { return linear(x.detach(), z, b.detach()); }, w, rng).ok());
      CHECK(check_unary([&](const TD& z) { return linear(x.detach(), w.detach(), z); }, b, rng).ok());
    }
    SUBCASE("softmax cross-entropy") {
      const std::vector<int> labels{2, 0, 1};
      CHECK(check_unary([&](const TD& z) { return softmax_cross_entropy(z, labels); }, random_tensor({3, 4}, rng, -3, 3),
                        rng)
                .ok());
    }
    SUBCASE("elementwise arithmetic") {
      TD a = random_tensor({2, 3}, rng);
      TD b = random_tensor({2, 3}, rng);
      CHECK(check_unary([&](const TD& z) { return add(z, b.detach()); }, a, rng).ok());
      CHECK(check_unary([&](const TD& z) { return mul(z, b.detach()); }, a, rng).ok());
      CHECK(check_unary([&](const TD& z) { return scale(z, -1.7); }, a, rng).ok());
      CHECK(check_unary([&](const TD& z) { return square(z); }, a, rng).ok());
    }
  }

  TEST_CASE("forward and backward are deterministic") {
    auto run = [] {
      Rng rng(9);
      TD x = random_tensor({2, 3, 6, 6}, rng);
      TD w = random_tensor({4, 3, 3, 3}, rng);
      TD b = random_tensor({4}, rng);
      auto y = sum(square(maxpool2(relu(conv2d(x, w, b, 1, 1)))));
      backward(y);
      std::vector<double> out{y.item()};
      out.insert(out.end(), w.grad().begin(), w.grad().end());
      out.insert(out.end(), x.grad().begin(), x.grad().end());
      return out;
    };
    CHECK(run() == run());
  }
}
