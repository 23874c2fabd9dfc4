#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "draw/models.hpp"
#include "draw/nnblocks.hpp"
#include "gradcheck.hpp"

using draw::Graph;
using draw::ModelConfig;
using draw::ModelSetT;
using draw::ParameterT;
using draw::Rng;
using draw::Shape;
using draw::Tensor;
using GD = Graph<double>;
using GF = Graph<float>;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.image_size = 8;
  c.n_views = 4;
  return c;
}

template <typename T>
Tensor<T> rand_tensor(Shape s, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor<T> t(s);
  for (long i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace

TEST_CASE("conv lstm maps zero state and zero input to zero") {
  Rng rng(5);
  draw::ConvLSTMCellT<float> cell(rng, 2, 3);
  Tensor<float> x(Shape{2, 4, 4});
  GF g;
  auto st = cell.zero_state(g, 4, 4);
  auto nx = cell.step(g, g.input(&x), st);
  for (long i = 0; i < nx.h->v().size(); ++i) CHECK(nx.h->v()[i] == 0.0f);
  for (long i = 0; i < nx.c->v().size(); ++i) CHECK(nx.c->v()[i] == 0.0f);
}

TEST_CASE("gradcheck: conv lstm two-step unroll") {
  Rng rng(6);
  draw::ConvLSTMCellT<double> cell(rng, 2, 2);
  ParameterT<double> x(Shape{2, 4, 4});
  gc::fill_uniform(x, rng, -1, 1);
  auto fwd = [&](GD& g) {
    auto st = cell.zero_state(g, 4, 4);
    st = cell.step(g, g.param(&x), st);
    st = cell.step(g, g.param(&x), st);
    return st.h;
  };
  GD probe;
  const Tensor<double> r = gc::random_tensor(fwd(probe)->v().shape, rng);
  auto rep = gc::gradcheck({&x, &cell.gates.w, &cell.gates.b}, [&](GD& g) {
    return g.mean_all(g.mul(fwd(g), g.constant(r)));
  });
  CHECK(rep.max_rel < 1e-4);
  CHECK(rep.checked == 32 + 8 * 4 * 9 + 8);
}

TEST_CASE("gradcheck: residual blocks") {
  Rng rng(7);
  {
    draw::ResBlock2dT<double> blk(rng, 2);
    ParameterT<double> x(Shape{2, 4, 4});
    gc::fill_uniform(x, rng, -1, 1);
    const Tensor<double> r = gc::random_tensor(Shape{2, 4, 4}, rng);
    draw::ParamListT<double> ps;
    blk.collect("blk", ps);
    std::vector<gc::Param*> all{&x};
    for (auto& [n, p] : ps) all.push_back(p);
    auto rep = gc::gradcheck(all, [&](GD& g) {
      return g.mean_all(g.mul(blk.forward(g, g.param(&x)), g.constant(r)));
    });
    CHECK(rep.max_rel < 2e-5);
  }
  {
    draw::ResBlock3dCyclicT<double> blk(rng, 2);
    ParameterT<double> x(Shape{2, 3, 4, 4});
    gc::fill_uniform(x, rng, -1, 1);
    const Tensor<double> r = gc::random_tensor(Shape{2, 3, 4, 4}, rng);
    draw::ParamListT<double> ps;
    blk.collect("blk", ps);
    std::vector<gc::Param*> all{&x};
    for (auto& [n, p] : ps) all.push_back(p);
    auto rep = gc::gradcheck(all, [&](GD& g) {
      return g.mean_all(g.mul(blk.forward(g, g.param(&x)), g.constant(r)));
    });
    CHECK(rep.max_rel < 2e-5);
  }
}

TEST_CASE("refiner is the identity at init") {
  Rng rng(8);
  ModelConfig c = tiny_config();
  ModelSetT<float> ms(c, 33);
  Tensor<float> vol = rand_tensor<float>(Shape{1, 4, 8, 8}, rng);
  GF g;
  auto* out = ms.g2.forward(g, g.input(&vol));
  REQUIRE(out->v().shape == vol.shape);
  CHECK(out->v().max_abs_diff(vol) == 0.0f);
}

TEST_CASE("refiner is equivariant to cyclic view shifts") {
  Rng rng(9);
  ModelConfig c = tiny_config();
  ModelSetT<float> ms(c, 34);
  // Give the final conv real weights so the residual is nonzero.
  ms.g2.final_conv.conv.w.init_normal(rng, 0.05);

  const int n = 4, hw = 8;
  Tensor<float> vol = rand_tensor<float>(Shape{1, n, hw, hw}, rng);
  Tensor<float> shifted(vol.shape);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < hw * hw; ++i)
      shifted[j * hw * hw + i] = vol[((j + 1) % n) * hw * hw + i];

  GF g1, g2;
  const Tensor<float>& a = ms.g2.forward(g1, g1.input(&vol))->v();
  const Tensor<float>& b = ms.g2.forward(g2, g2.input(&shifted))->v();
  float worst = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < hw * hw; ++i)
      worst = std::max(worst,
                       std::abs(b[j * hw * hw + i] - a[((j + 1) % n) * hw * hw + i]));
  CHECK(worst <= 1e-5f);
}

TEST_CASE("rotator emits n views with pass-through view 0") {
  Rng rng(10);
  ModelConfig c = tiny_config();
  ModelSetT<float> ms(c, 35);
  Tensor<float> s0 = rand_tensor<float>(Shape{1, 8, 8}, rng);
  GF g;
  auto views = ms.g1.forward(g, g.input(&s0), 4);
  REQUIRE(views.size() == 4);
  CHECK(views[0]->v().max_abs_diff(s0) == 0.0f);
  for (int t = 1; t < 4; ++t) {
    REQUIRE(views[static_cast<size_t>(t)]->v().shape == Shape{1, 8, 8});
    for (long i = 0; i < 64; ++i) {
      const float v = views[static_cast<size_t>(t)]->v()[i];
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("domain transfer output contract") {
  Rng rng(11);
  ModelConfig c = tiny_config();
  ModelSetT<float> ms(c, 36);
  Tensor<float> x = rand_tensor<float>(Shape{3, 8, 8}, rng);
  GF g;
  auto out = ms.f.forward(g, g.input(&x));
  REQUIRE(out.raw->v().shape == Shape{1, 8, 8});
  REQUIRE(out.mask->v().shape == Shape{1, 8, 8});
  REQUIRE(out.s0->v().shape == Shape{1, 8, 8});
  for (long i = 0; i < 64; ++i) {
    CHECK(out.s0->v()[i] == out.raw->v()[i] * out.mask->v()[i]);
    CHECK(out.s0->v()[i] >= 0.0f);
    CHECK(out.s0->v()[i] <= 1.0f);
  }
}

TEST_CASE("ir_forward symmetry when both inputs coincide") {
  Rng rng(12);
  ModelConfig c = tiny_config();
  ModelSetT<float> ms(c, 37);
  Tensor<float> x = rand_tensor<float>(Shape{3, 8, 8}, rng);
  GF g;
  auto out = draw::ir_forward(g, ms.enc, ms.dec, g.input(&x), g.input(&x));
  CHECK(out.x0_hat->v().same_values(out.sp_hat->v()));
  CHECK(out.s0_hat->v().same_values(out.xp_hat->v()));
}

TEST_CASE("critics return deterministic finite scalars") {
  Rng rng(13);
  ModelConfig c = tiny_config();
  ModelSetT<float> ms(c, 38);
  Tensor<float> cond = rand_tensor<float>(Shape{3, 8, 8}, rng);
  Tensor<float> cand = rand_tensor<float>(Shape{3, 8, 8}, rng);
  float first = 0;
  for (int k = 0; k < 2; ++k) {
    GF g;
    auto* s = ms.d_dt.forward(g, g.input(&cond), g.input(&cand));
    REQUIRE(s->v().shape.rank == 0);
    CHECK(std::isfinite(s->v()[0]));
    if (k == 0) first = s->v()[0];
    else CHECK(s->v()[0] == first);
  }

  Tensor<float> va = rand_tensor<float>(Shape{1, 4, 8, 8}, rng);
  Tensor<float> vb = rand_tensor<float>(Shape{1, 4, 8, 8}, rng);
  GF g;
  auto* s = ms.d_v.forward(g, g.input(&va), g.input(&vb));
  REQUIRE(s->v().shape.rank == 0);
  CHECK(std::isfinite(s->v()[0]));
}

TEST_CASE("model parameter registry is unique, grouped, and seeded") {
  ModelConfig c;  // full desk size
  ModelSetT<float> a(c, 40), b(c, 40), other(c, 41);
  auto pa = a.all_params();
  auto pb = b.all_params();
  auto po = other.all_params();
  REQUIRE(pa.size() == pb.size());

  std::set<std::string> names;
  for (auto& [n, p] : pa) names.insert(n);
  CHECK(names.size() == pa.size());

  long total = draw::param_count(pa);
  MESSAGE("total parameters: " << total);
  CHECK(total > 500000);
  CHECK(total < 8000000);

  bool same = true, differs = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    same = same && pa[i].second->value.v == pb[i].second->value.v;
    differs = differs || !(pa[i].second->value.v == po[i].second->value.v);
  }
  CHECK(same);
  CHECK(differs);

  // Stage-1 grouping covers exactly the rotation/refinement stack.
  auto s1 = a.params({"g1", "g2", "d_v"});
  for (auto& [n, p] : s1)
    CHECK((n.rfind("g1.", 0) == 0 || n.rfind("g2.", 0) == 0 || n.rfind("d_v.", 0) == 0));
  CHECK_THROWS(a.params({"nope"}));
}
