#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sct/fd_check.hpp"
#include "sct/ops.hpp"
#include "sct/rng.hpp"
#include "sct/tensor.hpp"

using sct::Shape;
using sct::TensorD;

namespace {

TensorD randn(Shape s, sct::Pcg32& rng, double scale = 1.0, bool rg = true) {
  std::vector<double> v(sct::numel_of(s));
  for (auto& x : v) x = scale * rng.normal();
  return TensorD::from_data(std::move(s), std::move(v), rg);
}

}  // namespace

TEST_CASE("tensor factories and validation") {
  auto z = TensorD::zeros({2, 3});
  CHECK(z.numel() == 6);
  CHECK(z.shape() == Shape{2, 3});
  CHECK(z.data()[5] == 0.0);

  auto f = TensorD::full({4}, 2.5);
  CHECK(f.data()[3] == 2.5);

  CHECK_THROWS_AS(TensorD::zeros({2, 0, 3}), sct::ShapeError);
  CHECK_THROWS_AS(TensorD::from_data({2, 2}, {1.0, 2.0, 3.0}), sct::ShapeError);

  auto s = TensorD::scalar(7.0);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 7.0);
  CHECK_THROWS_AS(z.item(), sct::ContractError);
}

TEST_CASE("backward requires a scalar root and accumulates into leaves") {
  auto x = TensorD::from_data({2}, {1.0, 2.0}, true);
  auto y = sct::mul(x, x);
  CHECK_THROWS_AS(y.backward(), sct::ContractError);

  auto loss = sct::sum(sct::mul(x, x));
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));

  // second pass accumulates; caller is responsible for zeroing
  sct::sum(sct::mul(x, x)).backward();
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  x.zero_grad();
  CHECK(!x.has_grad());
}

TEST_CASE("shared subgraph gets both contributions") {
  auto x = TensorD::from_data({3}, {0.5, -1.0, 2.0}, true);
  auto fn = [](std::vector<TensorD>& in) {
    auto y = sct::add(sct::mul(in[0], in[0]), in[0]);  // x^2 + x
    return sct::sum(y);
  };
  auto rep = fd::check(fn, {x});
  CHECK_MESSAGE(rep.max_rel_err < 1e-7, fd::describe(rep));
}

TEST_CASE("elementwise binary ops with trailing broadcast") {
  sct::Pcg32 rng(11, 0);
  auto a = randn({2, 3, 4}, rng);
  auto b = randn({4}, rng);

  auto out = sct::add(a, b);
  for (std::size_t i = 0; i < out.numel(); ++i)
    CHECK(out.data()[i] == doctest::Approx(a.data()[i] + b.data()[i % 4]).epsilon(1e-12));

  auto bad = randn({3}, rng);
  CHECK_THROWS_AS(sct::add(a, bad), sct::ShapeError);
  CHECK_THROWS_AS(sct::add(b, a), sct::ShapeError);

  for (auto op : {sct::add<double>, sct::sub<double>, sct::mul<double>}) {
    auto rep = fd::check(
        [op](std::vector<TensorD>& in) { return sct::sum(op(in[0], in[1])); }, {a, b});
    CHECK_MESSAGE(rep.max_rel_err < 1e-7, fd::describe(rep));
  }
}

TEST_CASE("unary op values and gradients") {
  sct::Pcg32 rng(12, 0);
  // keep inputs away from the leaky_relu kink at 0
  std::vector<double> vals(24);
  for (auto& v : vals) {
    v = rng.normal();
    if (std::abs(v) < 0.05) v = 0.2;
  }
  auto x = TensorD::from_data({4, 6}, vals, true);

  auto e = sct::exp(x);
  auto t = sct::tanh(x);
  auto s = sct::silu(x);
  auto l = sct::leaky_relu(x, 0.2);
  auto p = sct::softplus(x);
  auto af = sct::affine(x, 2.0, -1.0);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    double v = vals[i];
    CHECK(e.data()[i] == doctest::Approx(std::exp(v)).epsilon(1e-12));
    CHECK(t.data()[i] == doctest::Approx(std::tanh(v)).epsilon(1e-12));
    CHECK(s.data()[i] == doctest::Approx(v / (1.0 + std::exp(-v))).epsilon(1e-12));
    CHECK(l.data()[i] == doctest::Approx(v >= 0 ? v : 0.2 * v).epsilon(1e-12));
    CHECK(p.data()[i] == doctest::Approx(std::log1p(std::exp(v))).epsilon(1e-9));
    CHECK(af.data()[i] == doctest::Approx(2.0 * v - 1.0).epsilon(1e-12));
  }

  using Fn = TensorD (*)(const TensorD&);
  Fn ops[] = {sct::exp<double>, sct::tanh<double>, sct::silu<double>,
              sct::softplus<double>};
  for (auto op : ops) {
    auto rep = fd::check(
        [op](std::vector<TensorD>& in) { return sct::sum(op(in[0])); }, {x});
    CHECK_MESSAGE(rep.max_rel_err < 1e-7, fd::describe(rep));
  }
  auto rep = fd::check(
      [](std::vector<TensorD>& in) { return sct::sum(sct::leaky_relu(in[0], 0.2)); },
      {x});
  CHECK_MESSAGE(rep.max_rel_err < 1e-7, fd::describe(rep));
}

TEST_CASE("clip clamps values and zeroes clamped gradients") {
  auto x = TensorD::from_data({5}, {-2.0, -0.5, 0.0, 0.5, 2.0}, true);
  auto y = sct::clip(x, -1.0, 1.0);
  CHECK(y.data()[0] == -1.0);
  CHECK(y.data()[4] == 1.0);
  CHECK(y.data()[2] == 0.0);

  sct::sum(y).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[4] == 0.0);

  CHECK_THROWS_AS(sct::clip(x, 1.0, -1.0), sct::ContractError);
  CHECK_THROWS_AS(sct::clip(x, 1.0, 1.0), sct::ContractError);
}

TEST_CASE("corrupted clip gradient is caught by the finite-difference check") {
  auto x = TensorD::from_data({4}, {-3.0, -0.4, 0.4, 3.0}, true);
  auto fn = [](std::vector<TensorD>& in) {
    return sct::sum(sct::clip(in[0], -1.0, 1.0));
  };
  auto clean = fd::check(fn, {x});
  CHECK(clean.max_rel_err < 1e-7);

  sct::fault::corrupt_clip_grad = true;
  auto bad = fd::check(fn, {x});
  sct::fault::corrupt_clip_grad = false;
  CHECK(bad.max_rel_err > 0.5);  // clamped elements report grad 1 vs true 0
}

TEST_CASE("reshape and permute move data correctly") {
  auto x = TensorD::from_data({2, 3}, {0, 1, 2, 3, 4, 5}, true);
  auto r = sct::reshape(x, {3, 2});
  CHECK(r.shape() == Shape{3, 2});
  CHECK(r.data() == x.data());
  CHECK_THROWS_AS(sct::reshape(x, {4, 2}), sct::ShapeError);

  auto p = sct::permute(x, {1, 0});
  CHECK(p.shape() == Shape{3, 2});
  // p[i][j] == x[j][i]
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(p.data()[i * 2 + j] == x.data()[j * 3 + i]);
  CHECK_THROWS_AS(sct::permute(x, {0, 0}), sct::ShapeError);

  sct::Pcg32 rng(13, 0);
  auto y = randn({2, 3, 4}, rng);
  auto rep = fd::check(
      [](std::vector<TensorD>& in) {
        auto t = sct::permute(in[0], {2, 0, 1});
        return sct::sum(sct::mul(t, t));
      },
      {y});
  CHECK_MESSAGE(rep.max_rel_err < 1e-7, fd::describe(rep));
}

TEST_CASE("concat stitches along the axis and splits gradients") {
  auto a = TensorD::from_data({2, 2}, {1, 2, 3, 4}, true);
  auto b = TensorD::from_data({2, 1}, {5, 6}, true);
  auto c = sct::concat<double>({a, b}, 1);
  CHECK(c.shape() == Shape{2, 3});
  CHECK(c.data() == std::vector<double>{1, 2, 5, 3, 4, 6});

  auto c0 = sct::concat<double>({a, a}, 0);
  CHECK(c0.shape() == Shape{4, 2});
  CHECK(c0.data() == std::vector<double>{1, 2, 3, 4, 1, 2, 3, 4});

  CHECK_THROWS_AS(sct::concat<double>({a, b}, 0), sct::ShapeError);

  auto rep = fd::check(
      [](std::vector<TensorD>& in) {
        auto t = sct::concat<double>({in[0], in[1]}, 1);
        return sct::sum(sct::mul(t, t));
      },
      {a, b});
  CHECK_MESSAGE(rep.max_rel_err < 1e-7, fd::describe(rep));
}

TEST_CASE("reorder_tokens applies the permutation per batch") {
  // x[b,i,:] -> out[b] rows picked by perm
  auto x = TensorD::from_data({1, 3, 2}, {10, 11, 20, 21, 30, 31}, true);
  auto out = sct::reorder_tokens(x, {2, 0, 1});
  CHECK(out.data() == std::vector<double>{30, 31, 10, 11, 20, 21});

  CHECK_THROWS_AS(sct::reorder_tokens(x, {0, 1}), sct::ShapeError);

  auto rep = fd::check(
      [](std::vector<TensorD>& in) {
        auto t = sct::reorder_tokens(in[0], {2, 0, 1});
        return sct::sum(sct::mul(t, t));
      },
      {x});
  CHECK_MESSAGE(rep.max_rel_err < 1e-7, fd::describe(rep));
}

TEST_CASE("patchify token order and feature packing") {
  // 1x1x4x4 image, 2x2 patches -> 4 tokens in row-major grid order,
  // features in (c, dy, dx) order.
  std::vector<double> img(16);
  for (std::size_t i = 0; i < 16; ++i) img[i] = static_cast<double>(i);
  auto x = TensorD::from_data({1, 1, 4, 4}, img, true);
  auto tok = sct::patchify(x, 2);
  CHECK(tok.shape() == Shape{1, 4, 4});
  // token 0 is the top-left patch: rows 0-1, cols 0-1
  CHECK(tok.data()[0] == 0.0);
  CHECK(tok.data()[1] == 1.0);
  CHECK(tok.data()[2] == 4.0);
  CHECK(tok.data()[3] == 5.0);
  // token 3 is the bottom-right patch
  CHECK(tok.data()[12] == 10.0);
  CHECK(tok.data()[15] == 15.0);

  auto back = sct::unpatchify(tok, 2, 1, 4);
  CHECK(back.data() == img);

  CHECK_THROWS_AS(sct::patchify(x, 3), sct::ShapeError);

  sct::Pcg32 rng(14, 0);
  auto y = randn({2, 3, 4, 4}, rng);
  auto tok2 = sct::patchify(y, 2);
  CHECK(tok2.shape() == Shape{2, 4, 12});
  // multi-channel oracle: token (gy,gx), feature (c,dy,dx)
  for (std::size_t gy = 0; gy < 2; ++gy)
    for (std::size_t gx = 0; gx < 2; ++gx)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            double want = y.data()[((1 * 3 + c) * 4 + gy * 2 + dy) * 4 + gx * 2 + dx];
            double got =
                tok2.data()[(1 * 4 + gy * 2 + gx) * 12 + (c * 2 + dy) * 2 + dx];
            CHECK(got == want);
          }

  auto rep = fd::check(
      [](std::vector<TensorD>& in) {
        auto t = sct::patchify(in[0], 2);
        auto u = sct::unpatchify(t, 2, 3, 4);
        return sct::sum(sct::mul(u, u));
      },
      {y});
  CHECK_MESSAGE(rep.max_rel_err < 1e-7, fd::describe(rep));
}

TEST_CASE("matmul matches a triple-loop oracle") {
  sct::Pcg32 rng(15, 0);
  auto a = randn({5, 7}, rng);
  auto b = randn({7, 3}, rng);
  auto c = sct::matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 7; ++k) acc += a.data()[i * 7 + k] * b.data()[k * 3 + j];
      CHECK(c.data()[i * 3 + j] == doctest::Approx(acc).epsilon(1e-12));
    }

  CHECK_THROWS_AS(sct::matmul(a, a), sct::ShapeError);

  auto rep = fd::check(
      [](std::vector<TensorD>& in) {
        return sct::sum(sct::mul(sct::matmul(in[0], in[1]), sct::matmul(in[0], in[1])));
      },
      {a, b});
  CHECK_MESSAGE(rep.max_rel_err < 1e-6, fd::describe(rep));
}

TEST_CASE("linear flattens leading dims and handles missing bias") {
  sct::Pcg32 rng(16, 0);
  auto x = randn({2, 3, 4}, rng);
  auto w = randn({4, 5}, rng);
  auto b = randn({5}, rng);

  auto y = sct::linear(x, w, b);
  CHECK(y.shape() == Shape{2, 3, 5});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = b.data()[j];
      for (std::size_t k = 0; k < 4; ++k)
        acc += x.data()[r * 4 + k] * w.data()[k * 5 + j];
      CHECK(y.data()[r * 5 + j] == doctest::Approx(acc).epsilon(1e-12));
    }

  auto y2 = sct::linear(x, w, TensorD());
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(y2.data()[r * 5 + j] ==
            doctest::Approx(y.data()[r * 5 + j] - b.data()[j]).epsilon(1e-9));

  CHECK_THROWS_AS(sct::linear(x, randn({3, 5}, rng), TensorD()), sct::ShapeError);

  auto rep = fd::check(
      [](std::vector<TensorD>& in) {
        auto t = sct::linear(in[0], in[1], in[2]);
        return sct::sum(sct::mul(t, t));
      },
      {x, w, b});
  CHECK_MESSAGE(rep.max_rel_err < 1e-6, fd::describe(rep));
}

namespace {

// independent zero-padded stride-1 convolution
std::vector<double> conv_oracle(const std::vector<double>& x, std::size_t B,
                                std::size_t Cin, std::size_t H, std::size_t W,
                                const std::vector<double>& w, std::size_t Cout,
                                std::size_t k, const std::vector<double>* bias) {
  std::vector<double> out(B * Cout * H * W, 0.0);
  std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(H); ++y)
        for (std::ptrdiff_t xc = 0; xc < static_cast<std::ptrdiff_t>(W); ++xc) {
          double acc = bias ? (*bias)[co] : 0.0;
          for (std::size_t ci = 0; ci < Cin; ++ci)
            for (std::size_t dy = 0; dy < k; ++dy)
              for (std::size_t dx = 0; dx < k; ++dx) {
                std::ptrdiff_t sy = y + static_cast<std::ptrdiff_t>(dy) - pad;
                std::ptrdiff_t sx = xc + static_cast<std::ptrdiff_t>(dx) - pad;
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H) || sx < 0 ||
                    sx >= static_cast<std::ptrdiff_t>(W))
                  continue;
                acc += w[((co * Cin + ci) * k + dy) * k + dx] *
                       x[((b * Cin + ci) * H + sy) * W + sx];
              }
          out[((b * Cout + co) * H + y) * W + xc] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("conv2d matches a naive loop oracle") {
  sct::Pcg32 rng(17, 0);
  auto x = randn({2, 3, 5, 4}, rng);
  auto w = randn({4, 3, 3, 3}, rng, 0.5);
  auto b = randn({4}, rng);

  auto y = sct::conv2d(x, w, b);
  CHECK(y.shape() == Shape{2, 4, 5, 4});
  std::vector<double> bias = b.data();
  auto want = conv_oracle(x.data(), 2, 3, 5, 4, w.data(), 4, 3, &bias);
  for (std::size_t i = 0; i < want.size(); ++i)
    CHECK(y.data()[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // 1x1 kernel degenerates to a per-pixel linear map
  auto w1 = randn({2, 3, 1, 1}, rng);
  auto y1 = sct::conv2d(x, w1, TensorD());
  auto want1 = conv_oracle(x.data(), 2, 3, 5, 4, w1.data(), 2, 1, nullptr);
  for (std::size_t i = 0; i < want1.size(); ++i)
    CHECK(y1.data()[i] == doctest::Approx(want1[i]).epsilon(1e-12));

  CHECK_THROWS_AS(sct::conv2d(x, randn({4, 3, 2, 2}, rng), TensorD()), sct::ShapeError);
  CHECK_THROWS_AS(sct::conv2d(x, randn({4, 2, 3, 3}, rng), TensorD()), sct::ShapeError);

  auto small_x = randn({1, 2, 3, 3}, rng);
  auto small_w = randn({2, 2, 3, 3}, rng, 0.5);
  auto small_b = randn({2}, rng);
  auto rep = fd::check(
      [](std::vector<TensorD>& in) {
        auto t = sct::conv2d(in[0], in[1], in[2]);
        return sct::sum(sct::mul(t, t));
      },
      {small_x, small_w, small_b});
  CHECK_MESSAGE(rep.max_rel_err < 1e-6, fd::describe(rep));
}

TEST_CASE("depthwise_conv2d applies one filter per channel") {
  sct::Pcg32 rng(18, 0);
  auto x = randn({2, 3, 4, 4}, rng);
  auto w = randn({3, 1, 3, 3}, rng, 0.5);
  auto b = randn({3}, rng);

  auto y = sct::depthwise_conv2d(x, w, b);
  // oracle: per-channel conv with a 1-channel kernel
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> xc(2 * 16), wc(9);
    for (std::size_t bi = 0; bi < 2; ++bi)
      for (std::size_t i = 0; i < 16; ++i) xc[bi * 16 + i] = x.data()[(bi * 3 + c) * 16 + i];
    for (std::size_t i = 0; i < 9; ++i) wc[i] = w.data()[c * 9 + i];
    std::vector<double> bias = {b.data()[c]};
    auto want = conv_oracle(xc, 2, 1, 4, 4, wc, 1, 3, &bias);
    for (std::size_t bi = 0; bi < 2; ++bi)
      for (std::size_t i = 0; i < 16; ++i)
        CHECK(y.data()[(bi * 3 + c) * 16 + i] ==
              doctest::Approx(want[bi * 16 + i]).epsilon(1e-12));
  }

  CHECK_THROWS_AS(sct::depthwise_conv2d(x, randn({3, 1, 5, 5}, rng), TensorD()),
                  sct::ShapeError);

  auto rep = fd::check(
      [](std::vector<TensorD>& in) {
        auto t = sct::depthwise_conv2d(in[0], in[1], in[2]);
        return sct::sum(sct::mul(t, t));
      },
      {x, w, b});
  CHECK_MESSAGE(rep.max_rel_err < 1e-6, fd::describe(rep));
}

TEST_CASE("maxpool2 picks maxima and routes gradients to them") {
  auto x = TensorD::from_data({1, 1, 4, 4},
                              {1, 2, 5, 5,   // tie in the second window
                               3, 0, 5, 5,   //
                               9, 1, 0, 2,   //
                               1, 1, 4, 0},
                              true);
  auto y = sct::maxpool2(x);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK(y.data() == std::vector<double>{3, 5, 9, 4});

  sct::sum(y).backward();
  // tie: all four candidates equal 5, first (row-major) cell wins
  std::vector<double> want = {0, 0, 1, 0,  //
                              1, 0, 0, 0,  //
                              1, 0, 0, 0,  //
                              0, 0, 1, 0};
  for (std::size_t i = 0; i < 16; ++i) CHECK(x.grad()[i] == want[i]);

  CHECK_THROWS_AS(sct::maxpool2(TensorD::zeros({1, 1, 3, 4})), sct::ShapeError);

  sct::Pcg32 rng(19, 0);
  auto z = randn({2, 2, 4, 4}, rng);  // distinct values w.p. 1
  auto rep = fd::check(
      [](std::vector<TensorD>& in) {
        auto t = sct::maxpool2(in[0]);
        return sct::sum(sct::mul(t, t));
      },
      {z});
  CHECK_MESSAGE(rep.max_rel_err < 1e-7, fd::describe(rep));
}

TEST_CASE("upsample2 repeats cells and sums gradients back") {
  auto x = TensorD::from_data({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  auto y = sct::upsample2(x);
  CHECK(y.shape() == Shape{1, 1, 4, 4});
  CHECK(y.data() == std::vector<double>{1, 1, 2, 2,  //
                                        1, 1, 2, 2,  //
                                        3, 3, 4, 4,  //
                                        3, 3, 4, 4});
  sct::sum(y).backward();
  for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == 4.0);
}

TEST_CASE("instance_norm normalizes each (sample,channel) plane") {
  sct::Pcg32 rng(20, 0);
  auto x = randn({2, 3, 4, 5}, rng, 3.0);
  auto ones = TensorD::full({3}, 1.0);
  auto zeros = TensorD::zeros({3});

  auto y = sct::instance_norm(x, ones, zeros);
  for (std::size_t r = 0; r < 6; ++r) {
    double mu = 0, var = 0;
    for (std::size_t i = 0; i < 20; ++i) mu += y.data()[r * 20 + i];
    mu /= 20;
    for (std::size_t i = 0; i < 20; ++i) {
      double d = y.data()[r * 20 + i] - mu;
      var += d * d;
    }
    var /= 20;
    CHECK(std::abs(mu) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }

  CHECK_THROWS_AS(sct::instance_norm(x, TensorD::full({4}, 1.0), zeros),
                  sct::ShapeError);

  auto g = randn({3}, rng);
  auto b = randn({3}, rng);
  auto xs = randn({1, 2, 3, 3}, rng);
  auto rep = fd::check(
      [](std::vector<TensorD>& in) {
        auto t = sct::instance_norm(in[0], in[1], in[2]);
        return sct::sum(sct::mul(t, t));
      },
      {xs, randn({2}, rng), randn({2}, rng)});
  CHECK_MESSAGE(rep.max_rel_err < 1e-6, fd::describe(rep));
}

TEST_CASE("layer_norm matches a two-pass oracle over the last axis") {
  sct::Pcg32 rng(21, 0);
  auto x = randn({3, 4, 6}, rng, 2.0);
  auto g = randn({6}, rng);
  auto b = randn({6}, rng);

  auto y = sct::layer_norm(x, g, b);
  for (std::size_t r = 0; r < 12; ++r) {
    double mu = 0, var = 0;
    for (std::size_t i = 0; i < 6; ++i) mu += x.data()[r * 6 + i];
    mu /= 6;
    for (std::size_t i = 0; i < 6; ++i) {
      double d = x.data()[r * 6 + i] - mu;
      var += d * d;
    }
    var /= 6;
    double rstd = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t i = 0; i < 6; ++i) {
      double want = g.data()[i] * (x.data()[r * 6 + i] - mu) * rstd + b.data()[i];
      CHECK(y.data()[r * 6 + i] == doctest::Approx(want).epsilon(1e-10));
    }
  }

  // pre-affine mean is zero
  auto y0 = sct::layer_norm(x, TensorD::full({6}, 1.0), TensorD::zeros({6}));
  for (std::size_t r = 0; r < 12; ++r) {
    double mu = 0;
    for (std::size_t i = 0; i < 6; ++i) mu += y0.data()[r * 6 + i];
    CHECK(std::abs(mu / 6) < 1e-6);
  }

  auto rep = fd::check(
      [](std::vector<TensorD>& in) {
        auto t = sct::layer_norm(in[0], in[1], in[2]);
        return sct::sum(sct::mul(t, t));
      },
      {x, g, b});
  CHECK_MESSAGE(rep.max_rel_err < 1e-6, fd::describe(rep));
}

TEST_CASE("reductions") {
  auto x = TensorD::from_data({2, 2}, {1, 2, 3, 4}, true);
  CHECK(sct::sum(x).item() == 10.0);
  CHECK(sct::mean(x).item() == 2.5);

  auto a = TensorD::from_data({3}, {1.0, 2.0, 5.0}, true);
  auto b = TensorD::from_data({3}, {2.0, 2.0, 1.0}, true);
  CHECK(sct::l1_mean(a, b).item() == doctest::Approx((1 + 0 + 4) / 3.0));
  CHECK_THROWS_AS(sct::l1_mean(a, x), sct::ShapeError);

  // tie element contributes zero gradient
  sct::l1_mean(a, b).backward();
  CHECK(a.grad()[0] == doctest::Approx(-1.0 / 3));
  CHECK(a.grad()[1] == 0.0);
  CHECK(a.grad()[2] == doctest::Approx(1.0 / 3));
  CHECK(b.grad()[2] == doctest::Approx(-1.0 / 3));

  sct::Pcg32 rng(22, 0);
  auto u = randn({4, 3}, rng);
  auto v = randn({4, 3}, rng);
  // keep |u-v| away from the kink
  for (std::size_t i = 0; i < u.numel(); ++i)
    if (std::abs(u.data()[i] - v.data()[i]) < 0.05) u.data()[i] += 0.1;
  auto rep = fd::check(
      [](std::vector<TensorD>& in) { return sct::l1_mean(in[0], in[1]); }, {u, v});
  CHECK_MESSAGE(rep.max_rel_err < 1e-7, fd::describe(rep));

  auto rep2 = fd::check(
      [](std::vector<TensorD>& in) { return sct::mean(sct::mul(in[0], in[0])); }, {u});
  CHECK_MESSAGE(rep2.max_rel_err < 1e-7, fd::describe(rep2));
}

TEST_CASE("gradients stay finite after deep chains") {
  sct::Pcg32 rng(23, 0);
  auto x = randn({2, 3, 4, 4}, rng, 0.5);
  auto w = randn({3, 3, 3, 3}, rng, 0.3);
  auto g = TensorD::full({3}, 1.0, true);
  auto b = TensorD::zeros({3}, true);

  auto h = sct::conv2d(x, w, TensorD());
  h = sct::instance_norm(h, g, b);
  h = sct::leaky_relu(h, 0.2);
  h = sct::maxpool2(h);
  h = sct::upsample2(h);
  auto loss = sct::mean(sct::mul(h, h));
  loss.backward();

  for (double v : x.grad()) CHECK(std::isfinite(v));
  for (double v : w.grad()) CHECK(std::isfinite(v));
  CHECK(w.has_grad());
  CHECK(g.has_grad());
}
