#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "draw/graph.hpp"
#include "draw/params.hpp"
#include "draw/rng.hpp"
#include "draw/tensor.hpp"
#include "gradcheck.hpp"

using draw::Graph;
using draw::ParameterT;
using draw::Rng;
using draw::Shape;
using draw::Tensor;
using GD = Graph<double>;

TEST_CASE("shape and tensor basics") {
  Shape s{2, 3, 4};
  CHECK(s.rank == 3);
  CHECK(s.numel() == 24);
  CHECK(s.str() == "[2,3,4]");
  CHECK(Shape{2, 3, 4} == s);
  CHECK(Shape{2, 3} != s);

  Shape scalar;
  CHECK(scalar.rank == 0);
  CHECK(scalar.numel() == 1);

  Tensor<double> t(s);
  CHECK(t.size() == 24);
  CHECK(t[0] == 0.0);
  t.fill(2.5);
  CHECK(t[23] == 2.5);

  Tensor<double> u(s);
  u.fill(2.5);
  u[7] = 2.75;
  CHECK(t.max_abs_diff(u) == doctest::Approx(0.25));
}

TEST_CASE("rng streams are deterministic and well ranged") {
  Rng a(42), b(42), c(43);
  bool same = true, diff = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t x = a.next_u64();
    same = same && (x == b.next_u64());
    diff = diff || (x != c.next_u64());
  }
  CHECK(same);
  CHECK(diff);

  Rng r(7);
  double mean = 0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    mean += u;
  }
  CHECK(mean / 10000 == doctest::Approx(0.5).epsilon(0.02));

  for (int i = 0; i < 1000; ++i) {
    const int k = r.range_int(3, 9);
    CHECK(k >= 3);
    CHECK(k <= 9);
  }

  double nm = 0, nv = 0;
  const int nn = 20000;
  std::vector<double> xs(nn);
  for (int i = 0; i < nn; ++i) xs[static_cast<size_t>(i)] = r.normal();
  for (double x : xs) nm += x;
  nm /= nn;
  for (double x : xs) nv += (x - nm) * (x - nm);
  nv /= nn;
  CHECK(nm == doctest::Approx(0.0).epsilon(1.0).scale(0.05));
  CHECK(nv == doctest::Approx(1.0).epsilon(0.05));

  CHECK(draw::mix_seed(1, 0) != draw::mix_seed(1, 1));
  CHECK(draw::mix_seed(1, 0) != draw::mix_seed(2, 0));
}

// ---------------------------------------------------------------------------
// Forward oracles: convolutions against direct scalar loops.

namespace {

Tensor<double> conv2d_naive(const Tensor<double>& x, const Tensor<double>& w,
                            const Tensor<double>& b, int s, int p) {
  const int ci = x.shape[0], h = x.shape[1], wd = x.shape[2];
  const int co = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  const int ho = (h + 2 * p - kh) / s + 1, wo = (wd + 2 * p - kw) / s + 1;
  Tensor<double> out(Shape{co, ho, wo});
  for (int o = 0; o < co; ++o)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double acc = b.empty() ? 0.0 : b[o];
        for (int c = 0; c < ci; ++c)
          for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
              const int iy = oy * s - p + ki, ix = ox * s - p + kj;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              acc += x[(c * h + iy) * wd + ix] * w[((o * ci + c) * kh + ki) * kw + kj];
            }
        out[(o * ho + oy) * wo + ox] = acc;
      }
  return out;
}

Tensor<double> conv3d_naive(const Tensor<double>& x, const Tensor<double>& w,
                            const Tensor<double>& b, int sd, int sh, int sw, int pd,
                            int ph, int pw) {
  const int ci = x.shape[0], d = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const int co = w.shape[0], kd = w.shape[2], kh = w.shape[3], kw = w.shape[4];
  const int dout = (d + 2 * pd - kd) / sd + 1;
  const int ho = (h + 2 * ph - kh) / sh + 1, wo = (wd + 2 * pw - kw) / sw + 1;
  Tensor<double> out(Shape{co, dout, ho, wo});
  for (int o = 0; o < co; ++o)
    for (int od = 0; od < dout; ++od)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = b.empty() ? 0.0 : b[o];
          for (int c = 0; c < ci; ++c)
            for (int kz = 0; kz < kd; ++kz)
              for (int ki = 0; ki < kh; ++ki)
                for (int kj = 0; kj < kw; ++kj) {
                  const int iz = od * sd - pd + kz, iy = oy * sh - ph + ki,
                            ix = ox * sw - pw + kj;
                  if (iz < 0 || iz >= d || iy < 0 || iy >= h || ix < 0 || ix >= wd)
                    continue;
                  acc += x[((c * d + iz) * h + iy) * wd + ix] *
                         w[(((o * ci + c) * kd + kz) * kh + ki) * kw + kj];
                }
          out[((o * dout + od) * ho + oy) * wo + ox] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("conv2d matches the direct-loop oracle") {
  Rng rng(11);
  for (auto [s, p] : std::vector<std::pair<int, int>>{{1, 1}, {2, 1}, {1, 0}, {2, 2}}) {
    const Tensor<double> x = gc::random_tensor(Shape{3, 7, 6}, rng);
    const Tensor<double> w = gc::random_tensor(Shape{4, 3, 3, 3}, rng);
    const Tensor<double> b = gc::random_tensor(Shape{4}, rng);
    GD g;
    auto* out = g.conv2d(g.input(&x), g.input(&w), g.input(&b), s, p);
    const Tensor<double> ref = conv2d_naive(x, w, b, s, p);
    REQUIRE(out->v().shape == ref.shape);
    CHECK(out->v().max_abs_diff(ref) < 1e-12);
  }
}

TEST_CASE("conv3d matches the direct-loop oracle") {
  Rng rng(12);
  const Tensor<double> x = gc::random_tensor(Shape{2, 4, 5, 5}, rng);
  const Tensor<double> w = gc::random_tensor(Shape{3, 2, 3, 3, 3}, rng);
  const Tensor<double> b = gc::random_tensor(Shape{3}, rng);
  {
    GD g;
    auto* out = g.conv3d(g.input(&x), g.input(&w), g.input(&b), 1, 1, 1, 0, 1, 1);
    const Tensor<double> ref = conv3d_naive(x, w, b, 1, 1, 1, 0, 1, 1);
    REQUIRE(out->v().shape == ref.shape);
    CHECK(out->v().max_abs_diff(ref) < 1e-12);
  }
  {
    GD g;
    auto* out = g.conv3d(g.input(&x), g.input(&w), g.input(&b), 1, 2, 2, 1, 1, 1);
    const Tensor<double> ref = conv3d_naive(x, w, b, 1, 2, 2, 1, 1, 1);
    REQUIRE(out->v().shape == ref.shape);
    CHECK(out->v().max_abs_diff(ref) < 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Gradient checks.  Loss is mean(out * R) with a fixed random R so every
// output element receives a distinct upstream gradient.

namespace {

gc::BuildFn weighted(std::function<GD::Node*(GD&)> fwd, Tensor<double> r) {
  return [fwd = std::move(fwd), r = std::move(r)](GD& g) {
    return g.mean_all(g.mul(fwd(g), g.constant(r)));
  };
}

}  // namespace

TEST_CASE("gradcheck: elementwise ops") {
  Rng rng(21);
  ParameterT<double> a(Shape{2, 3, 3}), b(Shape{2, 3, 3});
  gc::fill_away_from_zero(a, rng);
  gc::fill_away_from_zero(b, rng);
  const Tensor<double> r = gc::random_tensor(a.value.shape, rng);

  auto check = [&](std::function<GD::Node*(GD&)> fwd) {
    auto rep = gc::gradcheck({&a, &b}, weighted(std::move(fwd), r));
    CHECK(rep.max_rel < 1e-6);
  };

  check([&](GD& g) { return g.add(g.param(&a), g.param(&b)); });
  check([&](GD& g) { return g.sub(g.param(&a), g.param(&b)); });
  check([&](GD& g) { return g.mul(g.param(&a), g.param(&b)); });
  check([&](GD& g) { return g.add_scaled(g.param(&a), g.param(&b), 0.37); });
  check([&](GD& g) { return g.affine(g.param(&a), -2.0, 0.5); });
  check([&](GD& g) { return g.sq(g.param(&a)); });
  check([&](GD& g) { return g.sigmoid(g.param(&a)); });
  check([&](GD& g) { return g.tanh_(g.param(&a)); });
  check([&](GD& g) { return g.relu(g.param(&a)); });
  check([&](GD& g) { return g.lrelu(g.param(&a)); });
}

TEST_CASE("gradcheck: conv2d") {
  Rng rng(22);
  ParameterT<double> x(Shape{2, 6, 6}), w(Shape{3, 2, 3, 3}), b(Shape{3});
  gc::fill_uniform(x, rng, -1, 1);
  gc::fill_uniform(w, rng, -0.5, 0.5);
  gc::fill_uniform(b, rng, -0.5, 0.5);
  for (auto [s, p] : std::vector<std::pair<int, int>>{{1, 1}, {2, 1}}) {
    GD probe;
    auto* out = probe.conv2d(probe.param(&x), probe.param(&w), probe.param(&b), s, p);
    const Tensor<double> r = gc::random_tensor(out->v().shape, rng);
    auto rep = gc::gradcheck(
        {&x, &w, &b},
        weighted([&, s, p](GD& g) {
          return g.conv2d(g.param(&x), g.param(&w), g.param(&b), s, p);
        }, r));
    CHECK(rep.max_rel < 1e-6);
  }
}

TEST_CASE("gradcheck: conv3d with cyclic view padding") {
  Rng rng(23);
  ParameterT<double> x(Shape{1, 4, 4, 4}), w(Shape{2, 1, 3, 3, 3}), b(Shape{2});
  gc::fill_uniform(x, rng, -1, 1);
  gc::fill_uniform(w, rng, -0.5, 0.5);
  gc::fill_uniform(b, rng, -0.5, 0.5);
  auto fwd = [&](GD& g) {
    return g.conv3d(g.cyclic_pad_views(g.param(&x), 1), g.param(&w), g.param(&b), 1, 1,
                    1, 0, 1, 1);
  };
  GD probe;
  const Tensor<double> r = gc::random_tensor(fwd(probe)->v().shape, rng);
  auto rep = gc::gradcheck({&x, &w, &b}, weighted(fwd, r));
  CHECK(rep.max_rel < 1e-6);
}

TEST_CASE("gradcheck: conv3d strided with zero padding") {
  Rng rng(24);
  ParameterT<double> x(Shape{2, 4, 6, 6}), w(Shape{2, 2, 3, 3, 3}), b(Shape{2});
  gc::fill_uniform(x, rng, -1, 1);
  gc::fill_uniform(w, rng, -0.5, 0.5);
  gc::fill_uniform(b, rng, -0.5, 0.5);
  auto fwd = [&](GD& g) {
    return g.conv3d(g.param(&x), g.param(&w), g.param(&b), 1, 2, 2, 1, 1, 1);
  };
  GD probe;
  const Tensor<double> r = gc::random_tensor(fwd(probe)->v().shape, rng);
  auto rep = gc::gradcheck({&x, &w, &b}, weighted(fwd, r));
  CHECK(rep.max_rel < 1e-6);
}

TEST_CASE("gradcheck: fc") {
  Rng rng(25);
  ParameterT<double> x(Shape{5}), w(Shape{4, 5}), b(Shape{4});
  gc::fill_uniform(x, rng, -1, 1);
  gc::fill_uniform(w, rng, -1, 1);
  gc::fill_uniform(b, rng, -1, 1);
  const Tensor<double> r = gc::random_tensor(Shape{4}, rng);
  auto rep = gc::gradcheck({&x, &w, &b}, weighted([&](GD& g) {
                             return g.fc(g.param(&x), g.param(&w), g.param(&b));
                           }, r));
  CHECK(rep.max_rel < 1e-6);
}

TEST_CASE("gradcheck: instance_norm") {
  Rng rng(26);
  ParameterT<double> x(Shape{3, 4, 4}), gamma(Shape{3}), beta(Shape{3});
  gc::fill_uniform(x, rng, -2, 2);
  gc::fill_uniform(gamma, rng, 0.5, 1.5);
  gc::fill_uniform(beta, rng, -0.5, 0.5);
  const Tensor<double> r = gc::random_tensor(x.value.shape, rng);
  auto rep = gc::gradcheck({&x, &gamma, &beta}, weighted([&](GD& g) {
                             return g.instance_norm(g.param(&x), g.param(&gamma),
                                                    g.param(&beta));
                           }, r));
  CHECK(rep.max_rel < 1e-5);
}

TEST_CASE("instance_norm normalizes each channel") {
  Rng rng(27);
  ParameterT<double> x(Shape{2, 8, 8}), gamma(Shape{2}), beta(Shape{2});
  gc::fill_uniform(x, rng, -3, 5);
  gamma.value.fill(1.0);
  beta.value.fill(0.0);
  GD g;
  auto* out = g.instance_norm(g.param(&x), g.param(&gamma), g.param(&beta));
  for (int c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (int i = 0; i < 64; ++i) m += out->v()[c * 64 + i];
    m /= 64;
    for (int i = 0; i < 64; ++i) {
      const double d = out->v()[c * 64 + i] - m;
      v += d * d;
    }
    v /= 64;
    CHECK(m == doctest::Approx(0.0).epsilon(1.0).scale(1e-9));
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("gradcheck: shape ops") {
  Rng rng(28);

  {
    ParameterT<double> x(Shape{2, 3, 3});
    gc::fill_uniform(x, rng, -1, 1);
    const Tensor<double> r = gc::random_tensor(Shape{2, 6, 6}, rng);
    auto rep = gc::gradcheck({&x}, weighted([&](GD& g) { return g.upsample2x(g.param(&x)); }, r));
    CHECK(rep.max_rel < 1e-6);
  }
  {
    ParameterT<double> x(Shape{3, 4, 4});
    gc::fill_uniform(x, rng, -1, 1);
    const Tensor<double> r = gc::random_tensor(Shape{3}, rng);
    auto rep = gc::gradcheck({&x}, weighted([&](GD& g) { return g.gap(g.param(&x)); }, r));
    CHECK(rep.max_rel < 1e-6);
  }
  {
    ParameterT<double> x(Shape{4});
    gc::fill_uniform(x, rng, -1, 1);
    const Tensor<double> r = gc::random_tensor(Shape{4, 3, 3}, rng);
    auto rep = gc::gradcheck({&x}, weighted([&](GD& g) {
                               return g.broadcast_hw(g.param(&x), 3, 3);
                             }, r));
    CHECK(rep.max_rel < 1e-6);
  }
  {
    ParameterT<double> a(Shape{1, 3, 3}), b(Shape{2, 3, 3});
    gc::fill_uniform(a, rng, -1, 1);
    gc::fill_uniform(b, rng, -1, 1);
    const Tensor<double> r = gc::random_tensor(Shape{3, 3, 3}, rng);
    auto rep = gc::gradcheck({&a, &b}, weighted([&](GD& g) {
                               return g.concat_ch(g.param(&a), g.param(&b));
                             }, r));
    CHECK(rep.max_rel < 1e-6);
  }
  {
    ParameterT<double> x(Shape{4, 3, 3});
    gc::fill_uniform(x, rng, -1, 1);
    const Tensor<double> r = gc::random_tensor(Shape{2, 3, 3}, rng);
    auto rep = gc::gradcheck({&x}, weighted([&](GD& g) {
                               return g.slice_ch(g.param(&x), 1, 3);
                             }, r));
    CHECK(rep.max_rel < 1e-6);
  }
  {
    ParameterT<double> x(Shape{1, 3, 3});
    gc::fill_uniform(x, rng, -1, 1);
    const Tensor<double> r = gc::random_tensor(Shape{3, 3, 3}, rng);
    auto rep = gc::gradcheck({&x}, weighted([&](GD& g) { return g.repeat_ch(g.param(&x), 3); }, r));
    CHECK(rep.max_rel < 1e-6);
  }
  {
    ParameterT<double> x(Shape{3, 3, 3});
    gc::fill_uniform(x, rng, -1, 1);
    const Tensor<double> r = gc::random_tensor(Shape{1, 3, 3}, rng);
    auto rep = gc::gradcheck({&x}, weighted([&](GD& g) { return g.mean_ch(g.param(&x)); }, r));
    CHECK(rep.max_rel < 1e-6);
  }
  {
    ParameterT<double> a(Shape{2, 3, 3}), b(Shape{2, 3, 3});
    gc::fill_uniform(a, rng, -1, 1);
    gc::fill_uniform(b, rng, -1, 1);
    const Tensor<double> r = gc::random_tensor(Shape{2, 2, 3, 3}, rng);
    auto rep = gc::gradcheck({&a, &b}, weighted([&](GD& g) {
                               return g.stack_views({g.param(&a), g.param(&b)});
                             }, r));
    CHECK(rep.max_rel < 1e-6);
  }
  {
    ParameterT<double> x(Shape{2, 3, 4, 4});
    gc::fill_uniform(x, rng, -1, 1);
    const Tensor<double> r = gc::random_tensor(Shape{2, 4, 4}, rng);
    auto rep = gc::gradcheck({&x}, weighted([&](GD& g) { return g.slice_view(g.param(&x), 1); }, r));
    CHECK(rep.max_rel < 1e-6);
  }
  {
    ParameterT<double> x(Shape{1, 4, 3, 3});
    gc::fill_uniform(x, rng, -1, 1);
    const Tensor<double> r = gc::random_tensor(Shape{1, 6, 3, 3}, rng);
    auto rep = gc::gradcheck({&x}, weighted([&](GD& g) {
                               return g.cyclic_pad_views(g.param(&x), 1);
                             }, r));
    CHECK(rep.max_rel < 1e-6);
  }
}

TEST_CASE("gradcheck: reductions") {
  Rng rng(29);
  {
    ParameterT<double> a(Shape{3, 4, 4}), b(Shape{3, 4, 4});
    gc::fill_uniform(a, rng, -1, 1);
    for (long i = 0; i < b.value.size(); ++i) {
      const double d = rng.uniform(0.1, 0.8) * (rng.bernoulli(0.5) ? 1 : -1);
      b.value[i] = a.value[i] + d;
    }
    auto rep = gc::gradcheck({&a, &b}, [&](GD& g) {
      return g.mean_abs_diff(g.param(&a), g.param(&b));
    });
    CHECK(rep.max_rel < 1e-6);
  }
  {
    ParameterT<double> x(Shape{2, 5, 5});
    gc::fill_uniform(x, rng, -1, 1);
    auto rep = gc::gradcheck({&x}, [&](GD& g) { return g.mean_all(g.sq(g.param(&x))); });
    CHECK(rep.max_rel < 1e-6);
  }
}

// ---------------------------------------------------------------------------
// Structural behavior.

TEST_CASE("cyclic_pad_views view mapping") {
  Tensor<double> x(Shape{1, 4, 1, 1});
  for (int j = 0; j < 4; ++j) x[j] = 10 + j;
  {
    GD g;
    auto* out = g.cyclic_pad_views(g.input(&x), 1);
    REQUIRE(out->v().shape == Shape{1, 6, 1, 1});
    const std::vector<double> want{13, 10, 11, 12, 13, 10};
    for (int j = 0; j < 6; ++j) CHECK(out->v()[j] == want[static_cast<size_t>(j)]);
  }
  {
    Tensor<double> one(Shape{1, 1, 1, 1});
    one[0] = 5;
    GD g;
    auto* out = g.cyclic_pad_views(g.input(&one), 1);
    REQUIRE(out->v().shape == Shape{1, 3, 1, 1});
    for (int j = 0; j < 3; ++j) CHECK(out->v()[j] == 5);
  }
}

TEST_CASE("stop blocks gradient flow") {
  Rng rng(31);
  ParameterT<double> x(Shape{2, 3, 3});
  gc::fill_uniform(x, rng, -1, 1);
  x.zero_grad();
  GD g;
  auto* loss = g.mean_all(g.sq(g.stop(g.sq(g.param(&x)))));
  g.backward(loss, 1.0);
  for (long i = 0; i < x.grad.size(); ++i) CHECK(x.grad[i] == 0.0);
}

TEST_CASE("per-sample backward accumulates batch-mean gradients") {
  ParameterT<double> x(Shape{2});
  x.value[0] = 3.0;
  x.value[1] = -2.0;
  x.zero_grad();
  const int batch = 4;
  for (int s = 0; s < batch; ++s) {
    GD g;
    auto* loss = g.mean_all(g.sq(g.param(&x)));  // d/dx = x per sample
    g.backward(loss, 1.0 / batch);
  }
  CHECK(x.grad[0] == doctest::Approx(3.0));   // mean over identical samples
  CHECK(x.grad[1] == doctest::Approx(-2.0));
}

TEST_CASE("input leaves receive no gradient buffers") {
  Tensor<double> x(Shape{2, 2, 2});
  x.fill(1.0);
  GD g;
  auto* xi = g.input(&x);
  auto* loss = g.mean_all(g.sq(xi));
  CHECK_FALSE(xi->needs_grad);
  g.backward(loss, 1.0);
  CHECK(xi->grad.empty());
}

TEST_CASE("adam first step moves opposite the gradient by ~lr") {
  draw::ParameterT<float> p(Shape{2});
  p.value[0] = 1.0f;
  p.value[1] = 1.0f;
  draw::ParamListT<float> list{{"p", &p}};
  draw::AdamT<float>::Config cfg;
  draw::AdamT<float> opt(list, cfg);
  opt.zero_grad();
  p.grad[0] = 1.0f;
  p.grad[1] = -0.5f;
  opt.step();
  CHECK(p.value[0] == doctest::Approx(1.0 - cfg.lr).epsilon(1e-4));
  CHECK(p.value[1] == doctest::Approx(1.0 + cfg.lr).epsilon(1e-4));
}

TEST_CASE("sort_params orders by name and rejects duplicates") {
  draw::ParameterT<float> a(Shape{1}), b(Shape{1});
  draw::ParamListT<float> list{{"z.w", &a}, {"a.w", &b}};
  draw::sort_params(list);
  CHECK(list[0].first == "a.w");
  draw::ParamListT<float> dup{{"w", &a}, {"w", &b}};
  CHECK_THROWS(draw::sort_params(dup));
}
