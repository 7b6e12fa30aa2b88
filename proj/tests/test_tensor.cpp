#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fd_oracle.hpp"
#include "tsrobust/tensor.hpp"

using namespace tsrobust;

namespace {

std::vector<double> randvec(std::mt19937_64& eng, std::size_t n, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(eng);
  return v;
}

}  // namespace

TEST_CASE("conv1d matches the direct-sum oracle") {
  // spec example: replicate padding around a single spike
  {
    Graph g;
    Tensor x = g.leaf({1, 1, 3}, {0, 10, 0}, false);
    Tensor k = g.leaf({1, 1, 3}, {0.25, 0.5, 0.25}, false);
    Tensor y = conv1d(x, k, Padding::Replicate);
    auto want = oracle::conv_direct({0, 10, 0}, {0.25, 0.5, 0.25}, true);
    CHECK(want[0] == doctest::Approx(2.5));
    CHECK(want[1] == doctest::Approx(5.0));
    CHECK(want[2] == doctest::Approx(2.5));
    for (int i = 0; i < 3; ++i) CHECK(y.values()[i] == doctest::Approx(want[i]));
  }
  // identity kernel
  {
    Graph g;
    Tensor x = g.leaf({1, 1, 3}, {1, 2, 3}, false);
    Tensor k = g.leaf({1, 1, 1}, {1}, false);
    Tensor y = conv1d(x, k, Padding::Zero);
    CHECK(y.values()[0] == 1.0);
    CHECK(y.values()[1] == 2.0);
    CHECK(y.values()[2] == 3.0);
  }
  // random instances, both paddings, even and odd widths
  std::mt19937_64 eng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 5 + static_cast<int>(eng() % 12);
    const int w = 1 + static_cast<int>(eng() % static_cast<unsigned>(k));
    auto xv = randvec(eng, static_cast<std::size_t>(k));
    auto kv = randvec(eng, static_cast<std::size_t>(w));
    for (bool rep : {true, false}) {
      Graph g;
      Tensor x = g.leaf({1, 1, k}, xv, false);
      Tensor ker = g.leaf({1, 1, w}, kv, false);
      Tensor y = conv1d(x, ker, rep ? Padding::Replicate : Padding::Zero);
      auto want = oracle::conv_direct(xv, kv, rep);
      for (int i = 0; i < k; ++i)
        CHECK(y.values()[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv1d with replicate padding preserves constants exactly") {
  {
    Graph g;
    Tensor x = g.leaf({1, 1, 4}, {5, 5, 5, 5}, false);
    Tensor k = g.leaf({1, 1, 3}, {0.25, 0.5, 0.25}, false);
    Tensor y = conv1d(x, k, Padding::Replicate);
    for (int i = 0; i < 4; ++i) CHECK(y.values()[i] == doctest::Approx(5.0).epsilon(1e-15));
  }
  std::mt19937_64 eng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int w = 2 + static_cast<int>(eng() % 9);
    auto kv = randvec(eng, static_cast<std::size_t>(w), 0.01, 1.0);
    double s = 0.0;
    for (double v : kv) s += v;
    for (auto& v : kv) v /= s;
    const double c = std::uniform_real_distribution<double>(-4, 4)(eng);
    Graph g;
    Tensor x = g.leaf({1, 1, 16}, std::vector<double>(16, c), false);
    Tensor ker = g.leaf({1, 1, w}, kv, false);
    Tensor y = conv1d(x, ker, Padding::Replicate);
    for (int i = 0; i < 16; ++i) CHECK(std::abs(y.values()[i] - c) < 1e-12);
  }
}

TEST_CASE("conv1d rejects bad shapes") {
  Graph g;
  Tensor x = g.leaf({1, 2, 8}, std::vector<double>(16, 0.0), false);
  Tensor k_badci = g.leaf({1, 3, 3}, std::vector<double>(9, 0.0), false);
  CHECK_THROWS_AS(conv1d(x, k_badci, Padding::Zero), ShapeError);
  Tensor k_wide = g.leaf({1, 2, 9}, std::vector<double>(18, 0.0), false);
  CHECK_THROWS_AS(conv1d(x, k_wide, Padding::Zero), ShapeError);
}

TEST_CASE("conv1d gradients match finite differences") {
  std::mt19937_64 eng(23);
  const int k = 9, w = 4, ci = 2, co = 2;
  auto xv = randvec(eng, static_cast<std::size_t>(ci) * k);
  auto kv = randvec(eng, static_cast<std::size_t>(co) * ci * w);
  for (bool rep : {true, false}) {
    const Padding pad = rep ? Padding::Replicate : Padding::Zero;
    auto loss_at = [&](const std::vector<double>& xin, const std::vector<double>& kin) {
      Graph g;
      Tensor x = g.leaf({1, ci, k}, xin, false);
      Tensor ker = g.leaf({co, ci, w}, kin, false);
      return sum_squares(conv1d(x, ker, pad)).scalar();
    };
    Graph g;
    Tensor x = g.leaf({1, ci, k}, xv, true);
    Tensor ker = g.leaf({co, ci, w}, kv, true);
    backward(sum_squares(conv1d(x, ker, pad)));
    auto fd_x = oracle::central_diff([&](const std::vector<double>& v) { return loss_at(v, kv); }, xv);
    auto fd_k = oracle::central_diff([&](const std::vector<double>& v) { return loss_at(xv, v); }, kv);
    CHECK(oracle::max_rel_err(x.grad(), fd_x) < 1e-4);
    CHECK(oracle::max_rel_err(ker.grad(), fd_k) < 1e-4);
  }
}

TEST_CASE("relu") {
  {
    Graph g;
    Tensor y = relu(g.leaf({3}, {-1, 0, 2}, false));
    CHECK(y.values()[0] == 0.0);
    CHECK(y.values()[1] == 0.0);
    CHECK(y.values()[2] == 2.0);
  }
  {
    Graph g;
    Tensor x = g.leaf({3}, {-1, -2, -0.5}, true);
    Tensor loss = sum(relu(x));
    CHECK(loss.scalar() == 0.0);
    backward(loss);
    for (double v : x.grad()) CHECK(v == 0.0);
  }
  {
    Graph g;
    Tensor x = g.leaf({2}, {-1, 2}, true);
    backward(sum(relu(x)));
    auto fd = oracle::central_diff(
        [](const std::vector<double>& v) {
          Graph gg;
          return sum(relu(gg.leaf({2}, v, false))).scalar();
        },
        {-1, 2});
    CHECK(x.grad()[0] == doctest::Approx(fd[0]).epsilon(1e-6));
    CHECK(x.grad()[1] == doctest::Approx(fd[1]).epsilon(1e-6));
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 1.0);
  }
}

TEST_CASE("global_avg_pool") {
  {
    Graph g;
    Tensor y = global_avg_pool(g.leaf({1, 1, 3}, {1, 2, 3}, false));
    CHECK(y.values()[0] == doctest::Approx(2.0));
  }
  {
    Graph g;
    Tensor y = global_avg_pool(g.leaf({1, 2, 4}, std::vector<double>(8, 3.5), false));
    CHECK(y.values()[0] == doctest::Approx(3.5));
    CHECK(y.values()[1] == doctest::Approx(3.5));
  }
  {
    Graph g;
    Tensor x = g.leaf({1, 1, 4}, {1, 2, 3, 4}, true);
    backward(sum(global_avg_pool(x)));
    for (double v : x.grad()) CHECK(v == doctest::Approx(0.25));
  }
  {
    Graph g;
    Tensor x = g.leaf({1, 1, 0}, {}, false);
    CHECK_THROWS_AS(global_avg_pool(x), ShapeError);
  }
}

TEST_CASE("affine") {
  {
    Graph g;
    Tensor y = affine(g.leaf({1, 2}, {1, 0}, false), g.leaf({1, 2}, {2, 3}, false),
                      g.leaf({1}, {1}, false));
    CHECK(y.values()[0] == doctest::Approx(3.0));
  }
  {
    // zero weight broadcasts the bias
    std::mt19937_64 eng(1);
    Graph g;
    Tensor y = affine(g.leaf({2, 3}, randvec(eng, 6), false),
                      g.leaf({2, 3}, std::vector<double>(6, 0.0), false),
                      g.leaf({2}, {0.3, -1.1}, false));
    CHECK(y.values()[0] == doctest::Approx(0.3));
    CHECK(y.values()[1] == doctest::Approx(-1.1));
    CHECK(y.values()[2] == doctest::Approx(0.3));
    CHECK(y.values()[3] == doctest::Approx(-1.1));
  }
  {
    Graph g;
    Tensor x = g.leaf({1, 2}, {1, 2}, false);
    Tensor w = g.leaf({3, 3}, std::vector<double>(9, 0.0), false);
    Tensor b = g.leaf({3}, {0, 0, 0}, false);
    CHECK_THROWS_AS(affine(x, w, b), ShapeError);
  }
  {
    // random 3x4 instance against finite differences
    std::mt19937_64 eng(42);
    auto xv = randvec(eng, 3 * 4);
    auto wv = randvec(eng, 2 * 4);
    auto bv = randvec(eng, 2);
    auto loss_fn = [&](const std::vector<double>& w, const std::vector<double>& b) {
      Graph g;
      return sum_squares(affine(g.leaf({3, 4}, xv, false), g.leaf({2, 4}, w, false),
                                g.leaf({2}, b, false)))
          .scalar();
    };
    Graph g;
    Tensor w = g.leaf({2, 4}, wv, true);
    Tensor b = g.leaf({2}, bv, true);
    backward(sum_squares(affine(g.leaf({3, 4}, xv, false), w, b)));
    auto fd_w = oracle::central_diff(
        [&](const std::vector<double>& v) { return loss_fn(v, bv); }, wv);
    auto fd_b = oracle::central_diff(
        [&](const std::vector<double>& v) { return loss_fn(wv, v); }, bv);
    CHECK(oracle::max_rel_err(w.grad(), fd_w) < 1e-4);
    CHECK(oracle::max_rel_err(b.grad(), fd_b) < 1e-4);
  }
}

TEST_CASE("softmax_t") {
  {
    Graph g;
    Tensor p = softmax_t(g.leaf({1, 2}, {2, 0}, false), 10.0);
    CHECK(p.values()[0] == doctest::Approx(0.549834).epsilon(1e-4));
    CHECK(p.values()[1] == doctest::Approx(0.450166).epsilon(1e-4));
  }
  {
    Graph g;
    Tensor p = softmax_t(g.leaf({1, 4}, {1.7, 1.7, 1.7, 1.7}, false), 3.0);
    for (int i = 0; i < 4; ++i) CHECK(p.values()[i] == doctest::Approx(0.25).epsilon(1e-12));
  }
  {
    Graph g;
    Tensor p = softmax_t(g.leaf({1, 2}, {2, 0}, false), 1.0);
    CHECK(p.values()[0] == doctest::Approx(0.880797).epsilon(1e-4));
    CHECK(p.values()[1] == doctest::Approx(0.119203).epsilon(1e-4));
  }
  {
    Graph g;
    Tensor z = g.leaf({1, 2}, {1, 2}, false);
    CHECK_THROWS_AS(softmax_t(z, 0.0), ConfigError);
    CHECK_THROWS_AS(softmax_t(z, -1.0), ConfigError);
  }
}

TEST_CASE("softmax_t rows sum to one across extreme logits and temperatures") {
  std::mt19937_64 eng(3);
  for (double t : {0.01, 0.5, 1.0, 10.0, 100.0}) {
    auto zv = randvec(eng, 40, -100.0, 100.0);
    Graph g;
    Tensor p = softmax_t(g.leaf({8, 5}, zv, false), t);
    for (int b = 0; b < 8; ++b) {
      double s = 0.0;
      for (int j = 0; j < 5; ++j) s += p.values()[b * 5 + j];
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("cross_entropy") {
  {
    Graph g;
    Tensor p = g.leaf({1, 2}, {1.0, 0.0}, false);
    std::vector<int> y{0};
    CHECK(cross_entropy(p, std::span<const int>(y)).scalar() == doctest::Approx(0.0));
  }
  {
    Graph g;
    Tensor p = g.leaf({1, 4}, {0.25, 0.25, 0.25, 0.25}, false);
    std::vector<int> y{2};
    CHECK(cross_entropy(p, std::span<const int>(y)).scalar() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-9));
  }
  {
    Graph g;
    Tensor p = g.leaf({1, 2}, {0.5, 0.5}, false);
    CHECK(cross_entropy(p, std::vector<double>{0.5, 0.5}).scalar() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-9));
  }
  {
    Graph g;
    Tensor p = g.leaf({1, 2}, {0.5, 0.5}, false);
    std::vector<int> y{2};
    CHECK_THROWS_AS(cross_entropy(p, std::span<const int>(y)), DataError);
  }
}

TEST_CASE("backward basics") {
  {
    Graph g;
    Tensor x = g.leaf({1}, {3.0}, true);
    backward(mul(x, x));
    CHECK(x.grad()[0] == doctest::Approx(6.0));
  }
  {
    Graph g;
    Tensor a = g.constant({2}, {1, 2});
    Tensor b = g.constant({2}, {3, 4});
    Tensor tracked = g.leaf({2}, {0, 0}, true);
    backward(sum(add(a, b)));
    for (double v : tracked.grad()) CHECK(v == 0.0);
  }
  {
    Graph g;
    Tensor x = g.leaf({1}, {2.0}, true);
    Tensor loss = mul(x, x);
    backward(loss);
    CHECK_THROWS_AS(backward(loss), GraphError);
  }
}

TEST_CASE("two-layer network gradients match central differences") {
  std::mt19937_64 eng(101);
  const int n = 4, h = 5, c = 3, batch = 2;
  auto xv = randvec(eng, batch * n);
  auto w1 = randvec(eng, h * n);
  auto b1 = randvec(eng, h);
  auto w2 = randvec(eng, c * h);
  auto b2 = randvec(eng, c);
  std::vector<int> labels{1, 2};

  auto loss_fn = [&](const std::vector<double>& w1v, const std::vector<double>& b1v,
                     const std::vector<double>& w2v, const std::vector<double>& b2v,
                     const std::vector<double>& xin) {
    Graph g;
    Tensor x = g.leaf({batch, n}, xin, false);
    Tensor l1 = relu(affine(x, g.leaf({h, n}, w1v, false), g.leaf({h}, b1v, false)));
    Tensor z = affine(l1, g.leaf({c, h}, w2v, false), g.leaf({c}, b2v, false));
    return cross_entropy(softmax_t(z, 1.0), std::span<const int>(labels)).scalar();
  };

  Graph g;
  Tensor x = g.leaf({batch, n}, xv, true);
  Tensor tw1 = g.leaf({h, n}, w1, true);
  Tensor tb1 = g.leaf({h}, b1, true);
  Tensor tw2 = g.leaf({c, h}, w2, true);
  Tensor tb2 = g.leaf({c}, b2, true);
  Tensor z = affine(relu(affine(x, tw1, tb1)), tw2, tb2);
  backward(cross_entropy(softmax_t(z, 1.0), std::span<const int>(labels)));

  auto fd_w1 = oracle::central_diff(
      [&](const std::vector<double>& v) { return loss_fn(v, b1, w2, b2, xv); }, w1);
  auto fd_b1 = oracle::central_diff(
      [&](const std::vector<double>& v) { return loss_fn(w1, v, w2, b2, xv); }, b1);
  auto fd_w2 = oracle::central_diff(
      [&](const std::vector<double>& v) { return loss_fn(w1, b1, v, b2, xv); }, w2);
  auto fd_b2 = oracle::central_diff(
      [&](const std::vector<double>& v) { return loss_fn(w1, b1, w2, v, xv); }, b2);
  auto fd_x = oracle::central_diff(
      [&](const std::vector<double>& v) { return loss_fn(w1, b1, w2, b2, v); }, xv);

  CHECK(oracle::max_rel_err(tw1.grad(), fd_w1) < 1e-4);
  CHECK(oracle::max_rel_err(tb1.grad(), fd_b1) < 1e-4);
  CHECK(oracle::max_rel_err(tw2.grad(), fd_w2) < 1e-4);
  CHECK(oracle::max_rel_err(tb2.grad(), fd_b2) < 1e-4);
  CHECK(oracle::max_rel_err(x.grad(), fd_x) < 1e-4);
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 eng(5);
  auto xv = randvec(eng, 6);
  const double a = 1.7, b = -0.4;

  auto grad_of = [&](int which) {
    Graph g;
    Tensor x = g.leaf({2, 3}, xv, true);
    Tensor f = sum_squares(x);
    Tensor h = sum(relu(x));
    Tensor loss = which == 0   ? f
                  : which == 1 ? h
                               : add(scale(f, a), scale(h, b));
    backward(loss);
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };

  auto gf = grad_of(0);
  auto gh = grad_of(1);
  auto gc = grad_of(2);
  for (std::size_t i = 0; i < gc.size(); ++i)
    CHECK(std::abs(gc[i] - (a * gf[i] + b * gh[i])) < 1e-10);
}

TEST_CASE("composed expression gradient fidelity (conv net path)") {
  std::mt19937_64 eng(77);
  const int k = 10, ci = 1, co = 2, w = 3, c = 2;
  auto xv = randvec(eng, k, -2.0, 2.0);
  auto kv = randvec(eng, co * ci * w);
  auto bv = randvec(eng, co);
  auto wv = randvec(eng, c * co);
  auto av = randvec(eng, c);
  std::vector<int> labels{1};

  auto loss_fn = [&](const std::vector<double>& xin) {
    Graph g;
    Tensor x = reshape(g.leaf({1, k}, xin, false), {1, ci, k});
    Tensor h = relu(channel_bias(conv1d(x, g.leaf({co, ci, w}, kv, false), Padding::Replicate),
                                 g.leaf({co}, bv, false)));
    Tensor z = affine(global_avg_pool(h), g.leaf({c, co}, wv, false), g.leaf({c}, av, false));
    return cross_entropy(softmax_t(z, 1.0), std::span<const int>(labels)).scalar();
  };

  Graph g;
  Tensor x0 = g.leaf({1, k}, xv, true);
  Tensor x = reshape(x0, {1, ci, k});
  Tensor h = relu(channel_bias(conv1d(x, g.leaf({co, ci, w}, kv, false), Padding::Replicate),
                               g.leaf({co}, bv, false)));
  Tensor z = affine(global_avg_pool(h), g.leaf({c, co}, wv, false), g.leaf({c}, av, false));
  backward(cross_entropy(softmax_t(z, 1.0), std::span<const int>(labels)));

  auto fd = oracle::central_diff(loss_fn, xv);
  CHECK(oracle::max_rel_err(x0.grad(), fd) < 1e-4);
}

TEST_CASE("roughness and class-picking ops") {
  {
    Graph g;
    Tensor x = g.leaf({1, 4}, {1, 3, 2, 2}, true);
    Tensor r = roughness(x);
    CHECK(r.scalar() == doctest::Approx(4.0 + 1.0 + 0.0));
    backward(r);
    auto fd = oracle::central_diff(
        [](const std::vector<double>& v) {
          Graph gg;
          return roughness(gg.leaf({1, 4}, v, false)).scalar();
        },
        {1, 3, 2, 2});
    CHECK(oracle::max_rel_err(x.grad(), fd) < 1e-4);
  }
  {
    Graph g;
    Tensor x = g.leaf({4}, std::vector<double>(4, 0.7), false);
    CHECK(roughness(x).scalar() == 0.0);  // flat series has no roughness
  }
  {
    Graph g;
    Tensor z = g.leaf({2, 3}, {1, 5, 2, 9, 0, 3}, true);
    std::vector<int> cls{1, 0};
    Tensor zy = pick_class(z, std::span<const int>(cls));
    CHECK(zy.values()[0] == 5.0);
    CHECK(zy.values()[1] == 9.0);
    Tensor zo = max_excluding(z, std::span<const int>(cls));
    CHECK(zo.values()[0] == 2.0);
    CHECK(zo.values()[1] == 3.0);
    backward(sum(sub(zo, zy)));
    std::vector<double> want{0, -1, 1, -1, 0, 1};
    for (int i = 0; i < 6; ++i) CHECK(z.grad()[i] == doctest::Approx(want[i]));
  }
}
