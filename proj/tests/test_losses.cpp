// Reference loss forms against pinned hand values, independent scalar-loop
// oracles, graph-builder equivalence, and composite gradient checks through
// whole networks.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "draw/losses.hpp"
#include "draw/models.hpp"
#include "draw/rng.hpp"
#include "gradcheck.hpp"

using draw::Shape;
using draw::Tensor;

namespace {

// A prediction with exactly this mean absolute distance from an all-zero
// target of the same size.
Tensor<double> offset_map(const Shape& s, double mae) { return Tensor<double>::full(s, mae); }

// Deliberately flat re-computations, structured differently from the library
// loops (per-element running index, no per-view helper).
double oracle_views_l1(const std::vector<Tensor<double>>& t, const std::vector<Tensor<double>>& p) {
  double total = 0;
  for (size_t v = 0; v < t.size(); ++v) {
    double s = 0;
    for (long i = 0; i < t[v].size(); ++i) s += std::fabs(t[v][i] - p[v][i]);
    total += s / static_cast<double>(t[v].size());
  }
  return total;
}

double oracle_volume_l1(const std::vector<Tensor<double>>& t, const Tensor<double>& vol) {
  const long hw = static_cast<long>(vol.shape[2]) * vol.shape[3];
  double total = 0;
  long flat = 0;
  for (size_t v = 0; v < t.size(); ++v) {
    double s = 0;
    for (long i = 0; i < hw; ++i, ++flat) s += std::fabs(t[v][i] - vol[flat]);
    total += s / static_cast<double>(hw);
  }
  return total;
}

}  // namespace

static draw::ModelConfig micro_config() {
  draw::ModelConfig c;
  c.image_size = 8;
  c.n_views = 4;
  c.f_c1 = 4;
  c.f_c2 = 6;
  c.f_c3 = 8;
  c.enc_c1 = 4;
  c.enc_c2 = 6;
  c.enc_c3 = 8;
  c.shape_ch = 4;
  c.app_dim = 4;
  c.dec_c1 = 8;
  c.dec_c2 = 6;
  c.dec_c3 = 4;
  c.dec_c4 = 4;
  c.g1_c1 = 4;
  c.g1_hidden = 6;
  c.g1_d1 = 4;
  c.g1_d2 = 4;
  c.g2_hidden = 2;
  c.cr_c1 = 4;
  c.cr_c2 = 6;
  c.cr_c3 = 8;
  c.dv_c1 = 2;
  c.dv_c2 = 3;
  c.dv_c3 = 4;
  return c;
}

TEST_CASE("tile3 and channel_mean invert each other") {
  draw::Rng rng(11);
  Tensor<double> d = gc::random_tensor(Shape{1, 5, 7}, rng, 0.0, 1.0);
  Tensor<double> t = draw::tile3(d);
  CHECK(t.shape == Shape{3, 5, 7});
  for (long i = 0; i < d.size(); ++i) {
    CHECK(t[i] == d[i]);
    CHECK(t[d.size() + i] == d[i]);
    CHECK(t[2 * d.size() + i] == d[i]);
  }
  Tensor<double> back = draw::channel_mean(t);
  CHECK(back.max_abs_diff(d) == doctest::Approx(0.0));
  CHECK_THROWS_AS(draw::tile3(Tensor<double>(Shape{3, 5, 7})), std::invalid_argument);
  CHECK_THROWS_AS(draw::channel_mean(Tensor<double>(Shape{1, 5, 7})), std::invalid_argument);
}

TEST_CASE("depth transfer losses: hand values") {
  CHECK(draw::loss_dt_critic(1.0, 0.0) == doctest::Approx(0.0));
  CHECK(draw::loss_dt_critic(0.0, 1.0) == doctest::Approx(2.0));
  CHECK(draw::loss_dt_critic(0.8, 0.3) == doctest::Approx(0.13));

  const Shape s{1, 6, 5};
  Tensor<double> target = Tensor<double>::zeros(s);
  CHECK(draw::loss_dt_gen(target, target, 1.0, 0.05) == doctest::Approx(0.0));
  CHECK(draw::loss_dt_gen(target, offset_map(s, 0.1), 0.5, 1.0) == doctest::Approx(0.35));
  CHECK(draw::loss_dt_gen(target, offset_map(s, 0.1), 0.5, 0.0) == doctest::Approx(0.1));
}

TEST_CASE("recurrent generation loss: hand values and guards") {
  const Shape s{1, 4, 4};
  std::vector<Tensor<double>> targets{Tensor<double>::zeros(s), Tensor<double>::zeros(s)};
  std::vector<Tensor<double>> preds{offset_map(s, 0.1), offset_map(s, 0.2)};
  CHECK(draw::loss_recgen(targets, targets) == doctest::Approx(0.0));
  CHECK(draw::loss_recgen(targets, preds) == doctest::Approx(0.3));
  std::vector<Tensor<double>> one{Tensor<double>::zeros(s)};
  CHECK_THROWS_AS(draw::loss_recgen(targets, one), std::invalid_argument);
}

TEST_CASE("3d refinement loss: hand values and guards") {
  const Shape s{1, 4, 4};
  std::vector<Tensor<double>> targets{Tensor<double>::zeros(s), Tensor<double>::zeros(s)};
  Tensor<double> vol(Shape{1, 2, 4, 4});
  for (long i = 0; i < 16; ++i) vol[i] = 0.1;
  for (long i = 16; i < 32; ++i) vol[i] = 0.2;
  CHECK(draw::loss_3d(targets, Tensor<double>::zeros(Shape{1, 2, 4, 4})) == doctest::Approx(0.0));
  CHECK(draw::loss_3d(targets, vol) == doctest::Approx(0.3));
  CHECK_THROWS_AS(draw::loss_3d(targets, Tensor<double>::zeros(Shape{1, 3, 4, 4})),
                  std::invalid_argument);
}

TEST_CASE("volume critic and rotator generator losses: hand values") {
  CHECK(draw::loss_dv_critic(1.0, 0.0) == doctest::Approx(0.0));
  CHECK(draw::loss_dv_critic(0.0, 1.0) == doctest::Approx(2.0));
  CHECK(draw::loss_dv_critic(0.9, 0.2) == doctest::Approx(0.05));

  CHECK(draw::loss_dr_gen(0.0, 0.0, 1.0, 1.0, 1.0) == doctest::Approx(0.0));
  CHECK(draw::loss_dr_gen(0.3, 0.2, 0.5, 1.0, 1.0) == doctest::Approx(0.75));
  CHECK(draw::loss_dr_gen(0.3, 0.2, 0.5, 0.0, 0.0) == doctest::Approx(0.3));
}

TEST_CASE("identity recovery losses: hand values and the x_p guard") {
  const Shape s{3, 4, 4};
  Tensor<double> zero = Tensor<double>::zeros(s);
  draw::IrTensors<double> out{offset_map(s, 0.1), offset_map(s, 0.2), offset_map(s, 0.05),
                              offset_map(s, 0.3)};
  draw::IrTensors<double> perfect{zero, zero, zero, zero};
  CHECK(draw::loss_ir_supervised(zero, zero, zero, perfect, false, nullptr) ==
        doctest::Approx(0.0));
  CHECK(draw::loss_ir_supervised(zero, zero, zero, out, false, nullptr) == doctest::Approx(0.6));
  CHECK(draw::loss_ir_supervised(zero, zero, zero, out, true, &zero) == doctest::Approx(0.65));
  CHECK_THROWS_AS(draw::loss_ir_supervised(zero, zero, zero, out, true, nullptr),
                  std::invalid_argument);

  CHECK(draw::loss_ir_critic(1.0, 0.0, 0.0, 0.0) == doctest::Approx(0.0));
  CHECK(draw::loss_ir_critic(0.0, 1.0, 1.0, 1.0) == doctest::Approx(4.0));
  CHECK(draw::loss_ir_critic(0.8, 0.1, 0.2, 0.3) == doctest::Approx(0.18));

  CHECK(draw::loss_ir_gen(1.0, 1.0, 1.0, 0.0) == doctest::Approx(0.0));
  CHECK(draw::loss_ir_gen(0.5, 0.5, 0.5, 0.6) == doctest::Approx(1.35));
  CHECK(draw::loss_ir_gen(1.0, 1.0, 1.0, 0.42) == doctest::Approx(0.42));
}

TEST_CASE("stage-2 composites: hand values and degenerate weights") {
  CHECK(draw::loss_stage2_critic(0.0, 0.0, 1.0) == doctest::Approx(0.0));
  CHECK(draw::loss_stage2_critic(0.13, 0.18, 1.0) == doctest::Approx(0.31));
  CHECK(draw::loss_stage2_critic(0.13, 0.18, 0.0) == doctest::Approx(0.13));
  CHECK(draw::loss_stage2_gen(0.0, 0.0, 1.0) == doctest::Approx(0.0));
  CHECK(draw::loss_stage2_gen(0.35, 1.35, 1.0) == doctest::Approx(1.70));
  CHECK(draw::loss_stage2_gen(0.35, 1.35, 0.0) == doctest::Approx(0.35));
}

TEST_CASE("L1 losses match independent scalar-loop oracles") {
  draw::Rng rng(202);
  for (int it = 0; it < 10; ++it) {
    const int n = rng.range_int(2, 6);
    const int h = rng.range_int(5, 12);
    const int w = rng.range_int(5, 12);
    std::vector<Tensor<double>> targets, preds;
    Tensor<double> vol(Shape{1, n, h, w});
    for (int p = 0; p < n; ++p) {
      targets.push_back(gc::random_tensor(Shape{1, h, w}, rng, 0.0, 1.0));
      preds.push_back(gc::random_tensor(Shape{1, h, w}, rng, 0.0, 1.0));
      for (long i = 0; i < static_cast<long>(h) * w; ++i)
        vol[static_cast<long>(p) * h * w + i] = preds.back()[i];
    }
    CHECK(draw::loss_recgen(targets, preds) ==
          doctest::Approx(oracle_views_l1(targets, preds)).epsilon(1e-6));
    CHECK(draw::loss_3d(targets, vol) ==
          doctest::Approx(oracle_volume_l1(targets, vol)).epsilon(1e-6));

    const Shape img{3, h, w};
    Tensor<double> x0 = gc::random_tensor(img, rng, 0.0, 1.0);
    Tensor<double> s0 = gc::random_tensor(img, rng, 0.0, 1.0);
    Tensor<double> sp = gc::random_tensor(img, rng, 0.0, 1.0);
    Tensor<double> xp = gc::random_tensor(img, rng, 0.0, 1.0);
    draw::IrTensors<double> out{gc::random_tensor(img, rng, 0.0, 1.0),
                                gc::random_tensor(img, rng, 0.0, 1.0),
                                gc::random_tensor(img, rng, 0.0, 1.0),
                                gc::random_tensor(img, rng, 0.0, 1.0)};
    auto flat_mae = [](const Tensor<double>& a, const Tensor<double>& b) {
      double s = 0;
      for (long i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
      return s / static_cast<double>(a.size());
    };
    const double want3 = flat_mae(x0, out.x0_hat) + flat_mae(s0, out.s0_hat) +
                         flat_mae(sp, out.sp_hat);
    CHECK(draw::loss_ir_supervised(x0, s0, sp, out, false, nullptr) ==
          doctest::Approx(want3).epsilon(1e-6));
    CHECK(draw::loss_ir_supervised(x0, s0, sp, out, true, &xp) ==
          doctest::Approx(want3 + flat_mae(xp, out.xp_hat)).epsilon(1e-6));
  }
}

TEST_CASE("graph builders reproduce the reference forms") {
  draw::Rng rng(77);
  const int n = 3, h = 6, w = 6;
  std::vector<Tensor<double>> targets, preds;
  Tensor<double> vol(Shape{1, n, h, w});
  for (int p = 0; p < n; ++p) {
    targets.push_back(gc::random_tensor(Shape{1, h, w}, rng, 0.0, 1.0));
    preds.push_back(gc::random_tensor(Shape{1, h, w}, rng, 0.0, 1.0));
    for (long i = 0; i < static_cast<long>(h) * w; ++i)
      vol[static_cast<long>(p) * h * w + i] = preds.back()[i];
  }

  draw::Graph<double> g;
  std::vector<draw::NodeP<double>> tn, pn;
  for (int p = 0; p < n; ++p) {
    tn.push_back(g.input(&targets[p]));
    pn.push_back(g.input(&preds[p]));
  }
  const double recgen = draw::Graph<double>::value(draw::nviews_l1(g, tn, pn));
  CHECK(recgen == doctest::Approx(draw::loss_recgen(targets, preds)).epsilon(1e-9));

  auto* voln = g.input(&vol);
  auto* tvol = g.stack_views(tn);
  const double l3d = draw::Graph<double>::value(draw::nvolume_l1(g, tvol, voln));
  CHECK(l3d == doctest::Approx(draw::loss_3d(targets, vol)).epsilon(1e-9));

  // dr_gen assembled in graph space from its pieces.
  auto* dv = g.make_scalar(0.37);
  auto* total = g.add(g.add(draw::nviews_l1(g, tn, pn),
                            draw::nscale(g, draw::nvolume_l1(g, tvol, voln), 0.8)),
                      draw::nscale(g, draw::nto_one(g, dv), 0.05));
  CHECK(draw::Graph<double>::value(total) ==
        doctest::Approx(draw::loss_dr_gen(recgen, l3d, 0.37, 0.8, 0.05)).epsilon(1e-9));

  // nsum/nscale/nto_one on plain scalars.
  auto* a = g.make_scalar(0.25);
  auto* b = g.make_scalar(0.5);
  CHECK(draw::Graph<double>::value(draw::nsum(g, {a, b, a})) == doctest::Approx(1.0));
  CHECK(draw::Graph<double>::value(draw::nscale(g, b, 3.0)) == doctest::Approx(1.5));
  CHECK(draw::Graph<double>::value(draw::nto_one(g, b)) == doctest::Approx(0.25));
}

// Gradient checks probe a generic point in parameter space: every parameter
// (zero-init biases and norm shifts included) is pushed away from zero so no
// relu sits exactly on its kink and no norm layer reduces to a constant shift
// of zero.
static void randomize_params(draw::ModelSetT<double>& m, uint64_t seed) {
  draw::Rng rng(seed);
  for (auto& [name, p] : m.all_params()) gc::fill_away_from_zero(*p, rng, 0.05, 0.4);
}

TEST_CASE("stage-1 composite gradient matches finite differences") {
  draw::ModelConfig c = micro_config();
  draw::ModelSetT<double> m(c, 909);
  randomize_params(m, 919);
  draw::Rng rng(910);
  std::vector<Tensor<double>> targets;
  for (int p = 0; p < c.n_views; ++p)
    targets.push_back(gc::random_tensor(Shape{1, c.image_size, c.image_size}, rng, 0.05, 0.95));

  auto build = [&](draw::Graph<double>& g) {
    std::vector<draw::NodeP<double>> tn;
    for (auto& t : targets) tn.push_back(g.input(&t));
    auto views = m.g1.forward(g, tn[0], c.n_views);
    auto* s_prime = g.stack_views(views);
    auto* refined = m.g2.forward(g, s_prime);
    auto* dv_fake = m.d_v.forward(g, s_prime, refined);
    auto* loss = draw::nviews_l1(g, tn, views);
    loss = g.add(loss, draw::nvolume_l1(g, g.stack_views(tn), refined));
    return g.add(loss, draw::nscale(g, draw::nto_one(g, dv_fake), 0.05));
  };

  auto gen = m.params({"g1", "g2"});
  std::vector<gc::Param*> probe;
  for (auto& [name, p] : gen) probe.push_back(p);
  draw::Rng pick(911);
  auto rep = gc::gradcheck_sampled(probe, build, pick, 4);
  CHECK(rep.checked > 50);
  CHECK(rep.max_rel < 1e-3);
}

TEST_CASE("stage-2 composite gradient matches finite differences") {
  draw::ModelConfig c = micro_config();
  draw::ModelSetT<double> m(c, 303);
  randomize_params(m, 313);
  draw::Rng rng(304);
  const Shape img{3, c.image_size, c.image_size};
  Tensor<double> x0 = gc::random_tensor(img, rng, 0.05, 0.95);
  Tensor<double> s0_map = gc::random_tensor(Shape{1, c.image_size, c.image_size}, rng, 0.05, 0.95);
  Tensor<double> sp_map = gc::random_tensor(Shape{1, c.image_size, c.image_size}, rng, 0.05, 0.95);
  Tensor<double> s0_t3 = draw::tile3(s0_map);
  Tensor<double> sp_t3 = draw::tile3(sp_map);

  auto build = [&](draw::Graph<double>& g) {
    auto* x0n = g.input(&x0);
    auto* s0n = g.input(&s0_t3);
    auto* spn = g.input(&sp_t3);
    auto* s0m = g.input(&s0_map);

    auto f_out = m.f.forward(g, x0n);
    auto* dt_fake = m.d_dt.forward(g, x0n, g.repeat_ch(f_out.s0, 3));
    auto* dt_gen = g.add(g.mean_abs_diff(s0m, f_out.s0),
                         draw::nscale(g, draw::nto_one(g, dt_fake), 0.05));

    auto ir = draw::ir_forward(g, m.enc, m.dec, x0n, spn);
    auto* sup = draw::nsum(g, {g.mean_abs_diff(x0n, ir.x0_hat), g.mean_abs_diff(s0n, ir.s0_hat),
                               g.mean_abs_diff(spn, ir.sp_hat)});
    auto* f1 = m.d_ir.forward(g, x0n, ir.s0_hat);
    auto* f2 = m.d_ir.forward(g, ir.x0_hat, s0n);
    auto* f3 = m.d_ir.forward(g, ir.xp_hat, spn);
    auto* ir_gen = draw::nsum(
        g, {draw::nto_one(g, f1), draw::nto_one(g, f2), draw::nto_one(g, f3), sup});
    return g.add(dt_gen, ir_gen);
  };

  auto gen = m.params({"f", "enc", "dec"});
  std::vector<gc::Param*> probe;
  for (auto& [name, p] : gen) probe.push_back(p);
  draw::Rng pick(305);
  auto rep = gc::gradcheck_sampled(probe, build, pick, 3);
  CHECK(rep.checked > 100);
  CHECK(rep.max_rel < 1e-3);
}
