#include <cmath>

#include "doctest.h"
#include "hdas/autodiff.hpp"
#include "hdas/error.hpp"
#include "hdas/gradcheck.hpp"
#include "hdas/nn.hpp"

using namespace hdas;

namespace {

Tensor randn(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

/// Direct definition of a grouped, strided, dilated convolution with
/// "same" padding (extra zero on the high side).
Tensor naive_conv(const Tensor& x, const Tensor& w, int stride, int dilation, int groups) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), k = w.dim(2);
  const int span = dilation * (k - 1) + 1;
  const int oh = (h + stride - 1) / stride, ow = (wd + stride - 1) / stride;
  const int pad_h = std::max(0, (oh - 1) * stride + span - h) / 2;
  const int pad_w = std::max(0, (ow - 1) * stride + span - wd) / 2;
  const int cin_g = cin / groups, cout_g = cout / groups;
  Tensor out({n, cout, oh, ow});
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < cout; ++o)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          double s = 0.0;
          const int g = o / cout_g;
          for (int ci = 0; ci < cin_g; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = y * stride - pad_h + ky * dilation;
                const int ix = xx * stride - pad_w + kx * dilation;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                s += x[((static_cast<std::size_t>(b) * cin + g * cin_g + ci) * h + iy) * wd + ix] *
                     w[((static_cast<std::size_t>(o) * cin_g + ci) * k + ky) * k + kx];
              }
          out[((static_cast<std::size_t>(b) * cout + o) * oh + y) * ow + xx] = s;
        }
  return out;
}

Tensor ramp5x5() {
  Tensor t({1, 1, 5, 5});
  for (int i = 0; i < 25; ++i) t[static_cast<std::size_t>(i)] = i;
  return t;
}

void check_close(const Tensor& a, const std::vector<double>& b, double tol = 1e-12) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(tol));
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("same padding puts the odd zero on the high side") {
    CHECK(same_padding(5, 3, 1, 1).out == 5);
    CHECK(same_padding(5, 3, 1, 1).lo == 1);
    CHECK(same_padding(6, 3, 2, 1).out == 3);
    CHECK(same_padding(6, 3, 2, 1).lo == 0);
    CHECK(same_padding(8, 3, 1, 2).lo == 2);
    CHECK(same_padding(7, 5, 2, 2).out == 4);
  }

  TEST_CASE("conv2d matches the direct definition") {
    Rng rng(11);
    struct Case {
      Shape x, w;
      int stride, dilation, groups;
    };
    for (const Case& c : {Case{{2, 3, 7, 6}, {4, 3, 3, 3}, 1, 1, 1}, Case{{1, 4, 8, 8}, {4, 1, 5, 5}, 2, 1, 4},
                          Case{{2, 2, 9, 9}, {2, 2, 3, 3}, 1, 2, 1}, Case{{1, 4, 8, 7}, {4, 1, 5, 5}, 2, 2, 4},
                          Case{{3, 6, 5, 5}, {2, 6, 1, 1}, 2, 1, 1}}) {
      Tensor x = randn(rng, c.x), w = randn(rng, c.w);
      Graph g;
      Var y = conv2d(g.constant(x), g.constant(w), {c.stride, c.dilation, c.groups});
      const Tensor ref = naive_conv(x, w, c.stride, c.dilation, c.groups);
      REQUIRE(y.shape() == ref.shape());
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("3x3 pooling on a 5x5 ramp") {
    // Input x[i][j] = 5i + j. Average pooling excludes padding.
    Graph g;
    Var x = g.constant(ramp5x5());
    // clang-format off
    check_close(avg_pool3x3(x, 1).value(), { 3.0,  3.5,  4.5,  5.5,  6.0,
                                             5.5,  6.0,  7.0,  8.0,  8.5,
                                            10.5, 11.0, 12.0, 13.0, 13.5,
                                            15.5, 16.0, 17.0, 18.0, 18.5,
                                            18.0, 18.5, 19.5, 20.5, 21.0});
    check_close(max_pool3x3(x, 1).value(), { 6,  7,  8,  9,  9,
                                            11, 12, 13, 14, 14,
                                            16, 17, 18, 19, 19,
                                            21, 22, 23, 24, 24,
                                            21, 22, 23, 24, 24});
    // clang-format on
    check_close(avg_pool3x3(x, 2).value(), {3, 4.5, 6, 10.5, 12, 13.5, 18, 19.5, 21});
    check_close(max_pool3x3(x, 2).value(), {6, 8, 9, 16, 18, 19, 21, 23, 24});
  }

  TEST_CASE("grad_check reference cases") {
    SUBCASE("softmax then cross-entropy on [1,10]") {
      Rng rng(3);
      auto r = grad_check([](Graph&, Var x) { return cross_entropy(x, {7}); }, randn(rng, {1, 10}));
      CHECK(r.pass);
    }
    SUBCASE("identity sum is exact") {
      // Integer inputs and a power-of-two step keep every probe exact.
      const Tensor x({2, 3}, {1, -2, 3, 4, -5, 6});
      auto r = grad_check([](Graph&, Var v) { return sum(identity(v)); }, x, 0x1p-17);
      CHECK(r.max_rel_err == 0.0);
    }
    SUBCASE("dilated 3x3 conv, d = 2, on [1,2,8,8]") {
      Rng rng(5);
      const Tensor w = randn(rng, {3, 2, 3, 3});
      auto r = grad_check(
          [&](Graph& g, Var x) { return sum(mul(conv2d(x, g.constant(w), {1, 2, 1}), conv2d(x, g.constant(w), {1, 2, 1}))); },
          randn(rng, {1, 2, 8, 8}));
      CHECK(r.pass);
    }
  }

  TEST_CASE("two-layer conv-relu-linear net at step 1e-5") {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
      Rng rng(seed);
      const Tensor x = randn(rng, {2, 3, 6, 6});
      const Tensor w1 = randn(rng, {4, 3, 3, 3});
      const Tensor w2 = randn(rng, {5, 4});
      // Fan-in scaling keeps the softmax out of saturation.
      auto net = [](Var xv, Var w1v, Var w2v) {
        Var h = relu(conv2d(xv, scale(w1v, 1.0 / std::sqrt(27.0)), {1, 1, 1}));
        return cross_entropy(linear(global_avg_pool(h), scale(w2v, 0.5), std::nullopt), {1, 3});
      };
      CHECK(grad_check([&](Graph& g, Var v) { return net(v, g.constant(w1), g.constant(w2)); }, x).pass);
      CHECK(grad_check([&](Graph& g, Var v) { return net(g.constant(x), v, g.constant(w2)); }, w1).pass);
      CHECK(grad_check([&](Graph& g, Var v) { return net(g.constant(x), g.constant(w1), v); }, w2).pass);
    }
  }

  TEST_CASE("every op and both architecture losses pass the gradient suite") {
    const auto cases = run_gradient_suite({1, 2, 3});
    CHECK(cases.size() > 200);
    for (const auto& c : cases) {
      INFO(c.name, " seed ", c.seed, " err ", c.report.max_rel_err);
      CHECK(c.report.pass);
    }
  }

  TEST_CASE("batch norm normalizes in training and tracks running statistics") {
    Rng rng(8);
    Tensor x = randn(rng, {4, 2, 3, 3});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 3.0 * x[i] + 2.0;
    RunningStats stats(2);
    Graph g;
    const Tensor& y = batch_norm(g.constant(x), std::nullopt, std::nullopt, stats, true).value();
    const int m = 4 * 9;
    for (int c = 0; c < 2; ++c) {
      double mean = 0.0, sq = 0.0, ym = 0.0, yv = 0.0;
      for (int b = 0; b < 4; ++b)
        for (int i = 0; i < 9; ++i) {
          const std::size_t k = (static_cast<std::size_t>(b) * 2 + c) * 9 + i;
          mean += x[k];
          ym += y[k];
        }
      mean /= m;
      ym /= m;
      for (int b = 0; b < 4; ++b)
        for (int i = 0; i < 9; ++i) {
          const std::size_t k = (static_cast<std::size_t>(b) * 2 + c) * 9 + i;
          sq += (x[k] - mean) * (x[k] - mean);
          yv += (y[k] - ym) * (y[k] - ym);
        }
      CHECK(ym == doctest::Approx(0.0).scale(1.0));
      CHECK(yv / m == doctest::Approx(sq / m / (sq / m + 1e-5)).epsilon(1e-10));
      CHECK(stats.mean[static_cast<std::size_t>(c)] == doctest::Approx(0.1 * mean).epsilon(1e-12));
      CHECK(stats.var[static_cast<std::size_t>(c)] == doctest::Approx(0.9 + 0.1 * sq / (m - 1)).epsilon(1e-12));
    }
  }

  TEST_CASE("parameters used twice accumulate both contributions") {
    Parameter p("p", Tensor({3}, {1.0, -2.0, 0.5}));
    Graph g;
    Var a = g.parameter(p);
    g.backward(sum(add(mul(a, a), scale(a, 3.0))));
    CHECK(p.grad[0] == 5.0);
    CHECK(p.grad[1] == -1.0);
    CHECK(p.grad[2] == 4.0);
  }

  TEST_CASE("shape errors name the op") {
    Graph g;
    Var a = g.constant(Tensor({2, 3}));
    Var b = g.constant(Tensor({3, 2}));
    try {
      add(a, b);
      FAIL("expected a shape error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kShape);
      CHECK(std::string(e.what()).find("add") != std::string::npos);
    }
    CHECK_THROWS_AS(conv2d(a, b, {}), Error);
    CHECK_THROWS_AS(g.backward(a), Error);
  }
}
