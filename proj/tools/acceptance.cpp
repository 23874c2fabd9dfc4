// Acceptance gate: eight numbered checks, one PASS/FAIL line each.  The
// fast checks (1, 2, 3, 8) are self-contained; the scored checks (4-7) read
// the desk-scale artifacts that `--setup` trains into --artifacts (dataset,
// stage-1 and stage-2 checkpoints, and the hal/wir/ir ablations).  Setup is
// idempotent: phases whose checkpoint already matches the config are skipped,
// so re-running the gate after the first pass costs evaluation time only.
// Every tolerance is pinned here, next to the check that uses it.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "draw/checkpoint.hpp"
#include "draw/dataset.hpp"
#include "draw/eval.hpp"
#include "draw/losses.hpp"
#include "draw/metrics.hpp"
#include "draw/models.hpp"
#include "draw/pipeline.hpp"
#include "draw/runconfig.hpp"
#include "draw/synthdata.hpp"
#include "draw/train.hpp"

#include "gradcheck.hpp"
#include "testdata.hpp"

namespace fs = std::filesystem;
using namespace draw;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double rel_err(double got, double want) {
  const double scale = std::max(std::max(std::abs(got), std::abs(want)), 1e-6);
  return std::abs(got - want) / scale;
}

Tensor<float> random_image(Shape s, Rng& rng) {
  Tensor<float> t(s);
  for (long i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform01());
  return t;
}

// The 8x8 micro configuration used by the gradient and invariant checks;
// small enough that finite differences over whole networks stay cheap.
ModelConfig micro_config() {
  ModelConfig c;
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

// Moves every parameter off zero so kinked ops never straddle a sign flip
// inside the difference stencil (and 1x1 instance norms see real variance).
void randomize_params(ModelSetT<double>& m, uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, p] : m.all_params()) gc::fill_away_from_zero(*p, rng, 0.05, 0.4);
}

std::vector<float> flatten(const ParamList& ps) {
  std::vector<float> out;
  for (const auto& [name, p] : ps)
    out.insert(out.end(), p->value.v.begin(), p->value.v.end());
  return out;
}

bool same_bytes(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// criterion 1: graph-built metrics and losses match independent scalar-loop
// oracles on random instances.

double ssim_oracle(const Tensor<float>& a, const Tensor<float>& b) {
  constexpr int kWin = 11, kHalf = 5;
  constexpr double kSigma = 1.5, kC1 = 1e-4, kC2 = 9e-4;
  double kernel[kWin][kWin];
  double norm = 0;
  for (int dy = 0; dy < kWin; ++dy)
    for (int dx = 0; dx < kWin; ++dx) {
      const double ry = dy - kHalf, rx = dx - kHalf;
      kernel[dy][dx] = std::exp(-(ry * ry + rx * rx) / (2 * kSigma * kSigma));
      norm += kernel[dy][dx];
    }
  for (int dy = 0; dy < kWin; ++dy)
    for (int dx = 0; dx < kWin; ++dx) kernel[dy][dx] /= norm;

  const int ch = a.shape[0], h = a.shape[1], w = a.shape[2];
  double total = 0;
  long windows = 0;
  for (int c = 0; c < ch; ++c) {
    const long base = static_cast<long>(c) * h * w;
    for (int y = kHalf; y < h - kHalf; ++y)
      for (int x = kHalf; x < w - kHalf; ++x) {
        double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
        for (int dy = -kHalf; dy <= kHalf; ++dy)
          for (int dx = -kHalf; dx <= kHalf; ++dx) {
            const double wgt = kernel[dy + kHalf][dx + kHalf];
            const double va = a[base + static_cast<long>(y + dy) * w + (x + dx)];
            const double vb = b[base + static_cast<long>(y + dy) * w + (x + dx)];
            ma += wgt * va;
            mb += wgt * vb;
            maa += wgt * va * va;
            mbb += wgt * vb * vb;
            mab += wgt * va * vb;
          }
        const double var_a = maa - ma * ma;
        const double var_b = mbb - mb * mb;
        const double cov = mab - ma * mb;
        total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
                 ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
        ++windows;
      }
  }
  return total / static_cast<double>(windows);
}

double l1_oracle(const Tensor<float>& a, const Tensor<float>& b) {
  double s = 0;
  for (long i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
  return s / static_cast<double>(a.size());
}

Tensor<double> random_maps(Shape s, Rng& rng) {
  Tensor<double> t(s);
  for (long i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.02, 0.98);
  return t;
}

Outcome criterion1() {
  constexpr int kRounds = 50;
  constexpr double kTolL1 = 1e-9, kTolSsim = 1e-7, kTolLoss = 1e-6;
  double worst_l1 = 0, worst_ssim = 0, worst_recgen = 0, worst_3d = 0, worst_ir = 0,
         worst_lsgan = 0;

  for (int k = 0; k < kRounds; ++k) {
    Rng rng(1000 + static_cast<uint64_t>(k));

    {  // mean absolute difference
      const int ch = rng.bernoulli(0.5) ? 3 : 1;
      const int h = rng.range_int(5, 16), w = rng.range_int(5, 16);
      Tensor<float> a = random_image(Shape{ch, h, w}, rng);
      Tensor<float> b = random_image(Shape{ch, h, w}, rng);
      worst_l1 = std::max(worst_l1, rel_err(metric_l1(a, b), l1_oracle(a, b)));
    }

    {  // windowed structural similarity
      const int ch = rng.bernoulli(0.5) ? 3 : 1;
      const int h = rng.range_int(11, 18), w = rng.range_int(11, 18);
      Tensor<float> a = random_image(Shape{ch, h, w}, rng);
      Tensor<float> b = random_image(Shape{ch, h, w}, rng);
      for (long i = 0; i < b.size(); ++i)
        if (rng.bernoulli(0.5)) b[i] = a[i];  // mix of correlated and fresh pixels
      worst_ssim = std::max(worst_ssim, rel_err(metric_ssim(a, b), ssim_oracle(a, b)));
    }

    const int n = 4, hw = 7;
    {  // per-view reconstruction sum vs its graph builder
      std::vector<Tensor<double>> targets, preds;
      for (int p = 0; p < n; ++p) {
        targets.push_back(random_maps(Shape{1, hw, hw}, rng));
        preds.push_back(random_maps(Shape{1, hw, hw}, rng));
      }
      Graph<double> g;
      std::vector<NodeP<double>> tn, pn;
      for (int p = 0; p < n; ++p) {
        tn.push_back(g.input(&targets[p]));
        pn.push_back(g.input(&preds[p]));
      }
      const double got = Graph<double>::value(nviews_l1(g, tn, pn));
      worst_recgen = std::max(worst_recgen, rel_err(got, loss_recgen(targets, preds)));
    }

    {  // volume loss vs its graph builder
      std::vector<Tensor<double>> targets;
      for (int p = 0; p < n; ++p) targets.push_back(random_maps(Shape{1, hw, hw}, rng));
      Tensor<double> refined = random_maps(Shape{1, n, hw, hw}, rng);
      Tensor<double> target_vol(Shape{1, n, hw, hw});
      for (int p = 0; p < n; ++p)
        for (long i = 0; i < hw * hw; ++i)
          target_vol[static_cast<long>(p) * hw * hw + i] = targets[static_cast<size_t>(p)][i];
      Graph<double> g;
      const double got =
          Graph<double>::value(nvolume_l1(g, g.input(&target_vol), g.input(&refined)));
      worst_3d = std::max(worst_3d, rel_err(got, loss_3d(targets, refined)));
    }

    {  // supervised identity-recovery term vs its graph form
      const bool xp = k % 2 == 0;
      const Shape img{3, hw, hw};
      Tensor<double> x0 = random_maps(img, rng), s0 = random_maps(img, rng),
                     sp = random_maps(img, rng), xpt = random_maps(img, rng);
      IrTensors<double> out{random_maps(img, rng), random_maps(img, rng),
                            random_maps(img, rng), random_maps(img, rng)};
      Graph<double> g;
      std::vector<NodeP<double>> terms{
          g.mean_abs_diff(g.input(&x0), g.input(&out.x0_hat)),
          g.mean_abs_diff(g.input(&s0), g.input(&out.s0_hat)),
          g.mean_abs_diff(g.input(&sp), g.input(&out.sp_hat))};
      if (xp) terms.push_back(g.mean_abs_diff(g.input(&xpt), g.input(&out.xp_hat)));
      const double got = Graph<double>::value(nsum(g, terms));
      const double want = loss_ir_supervised(x0, s0, sp, out, xp, xp ? &xpt : nullptr);
      worst_ir = std::max(worst_ir, rel_err(got, want));
    }

    {  // least-squares target-one term vs scalar form
      Tensor<double> score(Shape{});
      score[0] = rng.uniform(-2.0, 2.0);
      Graph<double> g;
      const double got = Graph<double>::value(nto_one(g, g.input(&score)));
      worst_lsgan = std::max(worst_lsgan, rel_err(got, lsgan_to_one(score[0])));
    }
  }

  const bool pass = worst_l1 <= kTolL1 && worst_ssim <= kTolSsim && worst_recgen <= kTolLoss &&
                    worst_3d <= kTolLoss && worst_ir <= kTolLoss && worst_lsgan <= kTolLoss;
  return {pass, "50 instances/op, worst rel err: l1 " + num(worst_l1) + ", ssim " +
                    num(worst_ssim) + ", recgen " + num(worst_recgen) + ", 3d " + num(worst_3d) +
                    ", ir " + num(worst_ir) + ", lsgan " + num(worst_lsgan)};
}

// ---------------------------------------------------------------------------
// criterion 2: analytic gradients match central differences in double, on
// 8x8 inputs, through every trainable block and both composite losses.

Outcome criterion2() {
  constexpr double kTol = 1e-3;
  struct Case {
    std::string name;
    gc::Report rep;
  };
  std::vector<Case> cases;

  {  // recurrent cell, two-step unroll
    Rng rng(21);
    ConvLSTMCellT<double> cell(rng, 2, 2);
    gc::Param x(Shape{2, 8, 8});
    gc::fill_uniform(x, rng, -1, 1);
    auto fwd = [&](Graph<double>& g) {
      auto st = cell.zero_state(g, 8, 8);
      st = cell.step(g, g.param(&x), st);
      st = cell.step(g, g.param(&x), st);
      return st.h;
    };
    Graph<double> probe;
    const Tensor<double> r = gc::random_tensor(fwd(probe)->v().shape, rng);
    cases.push_back({"conv_lstm", gc::gradcheck({&x, &cell.gates.w, &cell.gates.b},
                                                [&](Graph<double>& g) {
                                                  return g.mean_all(g.mul(fwd(g), g.constant(r)));
                                                },
                                                1e-5, kTol)});
  }

  {  // cyclically padded 3d convolution over a 4-view volume
    Rng rng(22);
    CyclicConv3dT<double> cc(rng, 2, 2);
    gc::Param x(Shape{2, 4, 8, 8});
    gc::fill_uniform(x, rng, -1, 1);
    Graph<double> probe;
    const Tensor<double> r =
        gc::random_tensor(cc.forward(probe, probe.param(&x))->v().shape, rng);
    cases.push_back({"cyclic_conv3d",
                     gc::gradcheck(
                         {&x, &cc.conv.w, &cc.conv.b},
                         [&](Graph<double>& g) {
                           return g.mean_all(g.mul(cc.forward(g, g.param(&x)), g.constant(r)));
                         },
                         1e-5, kTol)});
  }

  {  // shared encoder through shared decoder
    ModelConfig c = micro_config();
    ModelSetT<double> m(c, 23);
    randomize_params(m, 24);
    Rng rng(25);
    gc::Param x(Shape{3, c.image_size, c.image_size});
    gc::fill_uniform(x, rng, 0.05, 0.95);
    Graph<double> probe;
    auto codes0 = m.enc.forward(probe, probe.param(&x));
    const Tensor<double> r = gc::random_tensor(
        m.dec.forward(probe, codes0.shape, codes0.app)->v().shape, rng);
    auto build = [&](Graph<double>& g) {
      auto codes = m.enc.forward(g, g.param(&x));
      return g.mean_all(g.mul(m.dec.forward(g, codes.shape, codes.app), g.constant(r)));
    };
    std::vector<gc::Param*> probe_params{&x};
    for (auto& [name, p] : m.params({"enc", "dec"})) probe_params.push_back(p);
    Rng pick(26);
    cases.push_back(
        {"encoder_decoder", gc::gradcheck_sampled(probe_params, build, pick, 4, 1e-5, kTol)});
  }

  {  // stage-1 composite: rotator + refiner + volume critic
    ModelConfig c = micro_config();
    ModelSetT<double> m(c, 27);
    randomize_params(m, 28);
    Rng rng(29);
    std::vector<Tensor<double>> targets;
    for (int p = 0; p < c.n_views; ++p)
      targets.push_back(gc::random_tensor(Shape{1, c.image_size, c.image_size}, rng, 0.05, 0.95));
    auto build = [&](Graph<double>& g) {
      std::vector<NodeP<double>> tn;
      for (auto& t : targets) tn.push_back(g.input(&t));
      auto views = m.g1.forward(g, tn[0], c.n_views);
      auto* s_prime = g.stack_views(views);
      auto* refined = m.g2.forward(g, s_prime);
      auto* dv_fake = m.d_v.forward(g, s_prime, refined);
      auto* loss = nviews_l1(g, tn, views);
      loss = g.add(loss, nvolume_l1(g, g.stack_views(tn), refined));
      return g.add(loss, nscale(g, nto_one(g, dv_fake), 0.05));
    };
    std::vector<gc::Param*> probe;
    for (auto& [name, p] : m.params({"g1", "g2"})) probe.push_back(p);
    Rng pick(30);
    cases.push_back(
        {"stage1_composite", gc::gradcheck_sampled(probe, build, pick, 4, 1e-5, kTol)});
  }

  {  // stage-2 composite: transfer + identity recovery + both critics
    ModelConfig c = micro_config();
    ModelSetT<double> m(c, 31);
    randomize_params(m, 32);
    Rng rng(33);
    const Shape img{3, c.image_size, c.image_size};
    Tensor<double> x0 = gc::random_tensor(img, rng, 0.05, 0.95);
    Tensor<double> s0_map = gc::random_tensor(Shape{1, c.image_size, c.image_size}, rng, 0.05, 0.95);
    Tensor<double> sp_map = gc::random_tensor(Shape{1, c.image_size, c.image_size}, rng, 0.05, 0.95);
    Tensor<double> s0_t3 = tile3(s0_map);
    Tensor<double> sp_t3 = tile3(sp_map);
    auto build = [&](Graph<double>& g) {
      auto* x0n = g.input(&x0);
      auto* s0n = g.input(&s0_t3);
      auto* spn = g.input(&sp_t3);
      auto* s0m = g.input(&s0_map);
      auto f_out = m.f.forward(g, x0n);
      auto* dt_fake = m.d_dt.forward(g, x0n, g.repeat_ch(f_out.s0, 3));
      auto* dt_gen =
          g.add(g.mean_abs_diff(s0m, f_out.s0), nscale(g, nto_one(g, dt_fake), 0.05));
      auto ir = ir_forward(g, m.enc, m.dec, x0n, spn);
      auto* sup = nsum(g, {g.mean_abs_diff(x0n, ir.x0_hat), g.mean_abs_diff(s0n, ir.s0_hat),
                           g.mean_abs_diff(spn, ir.sp_hat)});
      auto* f1 = m.d_ir.forward(g, x0n, ir.s0_hat);
      auto* f2 = m.d_ir.forward(g, ir.x0_hat, s0n);
      auto* f3 = m.d_ir.forward(g, ir.xp_hat, spn);
      auto* ir_gen = nsum(g, {nto_one(g, f1), nto_one(g, f2), nto_one(g, f3), sup});
      return g.add(dt_gen, ir_gen);
    };
    std::vector<gc::Param*> probe;
    for (auto& [name, p] : m.params({"f", "enc", "dec"})) probe.push_back(p);
    Rng pick(34);
    cases.push_back(
        {"stage2_composite", gc::gradcheck_sampled(probe, build, pick, 3, 1e-5, kTol)});
  }

  double worst = 0;
  long checked = 0;
  std::string bad;
  for (const Case& c : cases) {
    worst = std::max(worst, c.rep.max_rel);
    checked += c.rep.checked;
    if (c.rep.max_rel > kTol) bad += (bad.empty() ? "" : ", ") + c.name;
  }
  std::string detail = std::to_string(checked) + " partials over " +
                       std::to_string(cases.size()) + " builds, worst rel err " + num(worst);
  if (!bad.empty()) detail += "; over tolerance: " + bad;
  return {bad.empty() && checked > 500, detail};
}

// ---------------------------------------------------------------------------
// criterion 3: structural invariants.

Outcome criterion3() {
  std::vector<std::string> failed;
  std::string notes;

  {  // refiner is the identity at init
    Rng rng(41);
    ModelSetT<float> m(micro_config(), 42);
    Tensor<float> vol = random_image(Shape{1, 4, 8, 8}, rng);
    Graph<float> g;
    auto* out = m.g2.forward(g, g.input(&vol));
    if (!(out->v().shape == vol.shape) || out->v().max_abs_diff(vol) != 0.0f)
      failed.push_back("refiner-identity-at-init");
  }

  {  // refiner commutes with cyclic view shifts once its tail has weights
    Rng rng(43);
    ModelSetT<float> m(micro_config(), 44);
    m.g2.final_conv.conv.w.init_normal(rng, 0.05);
    const int n = 4, hw = 8;
    Tensor<float> vol = random_image(Shape{1, n, hw, hw}, rng);
    float worst = 0;
    for (int r = 1; r < n; ++r) {
      Tensor<float> shifted(vol.shape);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < hw * hw; ++i)
          shifted[j * hw * hw + i] = vol[((j + r) % n) * hw * hw + i];
      Graph<float> ga, gb;
      const Tensor<float>& a = m.g2.forward(ga, ga.input(&vol))->v();
      const Tensor<float>& b = m.g2.forward(gb, gb.input(&shifted))->v();
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < hw * hw; ++i)
          worst = std::max(worst,
                           std::abs(b[j * hw * hw + i] - a[((j + r) % n) * hw * hw + i]));
    }
    notes += "shift err " + num(worst);
    if (worst > 1e-5f) failed.push_back("refiner-equivariance");
  }

  {  // recombination collapses when both identity-recovery inputs coincide
    Rng rng(45);
    ModelSetT<float> m(micro_config(), 46);
    Tensor<float> x = random_image(Shape{3, 8, 8}, rng);
    Graph<float> g;
    auto out = ir_forward(g, m.enc, m.dec, g.input(&x), g.input(&x));
    if (!out.x0_hat->v().same_values(out.sp_hat->v()) ||
        !out.s0_hat->v().same_values(out.xp_hat->v()))
      failed.push_back("ir-symmetry");
  }

  {  // stage-2 training leaves the stage-1 groups bit-identical
    const Dataset& d = td::tiny_dataset();
    ModelSet m(td::tiny_model_config(), 47);
    const std::vector<float> before = flatten(m.params({"g1", "g2", "d_v"}));
    TrainConfig tc;
    tc.steps = 2;
    tc.batch_size = 2;
    tc.seed = 48;
    train_stage2(m, d, tc, nullptr);
    if (!same_bytes(before, flatten(m.params({"g1", "g2", "d_v"}))))
      failed.push_back("stage2-freeze");
  }

  {  // checkpoint round-trip: byte-identical params and re-serialization
    const ModelConfig cfg = td::tiny_model_config();
    const fs::path dir = fs::temp_directory_path() / "draw_accept_ckpt";
    const fs::path dir2 = fs::temp_directory_path() / "draw_accept_ckpt2";
    fs::remove_all(dir);
    fs::remove_all(dir2);
    ModelSet a(cfg, 51), b(cfg, 52);
    CheckpointMeta meta{.stage = "stage2", .config = cfg};
    save_checkpoint(dir.string(), meta, a.all_params());
    load_checkpoint(dir.string(), b.all_params());
    const bool values_ok = same_bytes(flatten(a.all_params()), flatten(b.all_params()));
    save_checkpoint(dir2.string(), meta, b.all_params());
    const bool files_ok = slurp(dir / "params.bin") == slurp(dir2 / "params.bin") &&
                          slurp(dir / "manifest.json") == slurp(dir2 / "manifest.json");
    fs::remove_all(dir);
    fs::remove_all(dir2);
    if (!(values_ok && files_ok)) failed.push_back("checkpoint-round-trip");
  }

  if (failed.empty())
    return {true, "identity-at-init, equivariance (" + notes +
                      "), ir symmetry, stage-2 freeze, checkpoint round-trip"};
  std::string detail = "failed:";
  for (const std::string& f : failed) detail += " " + f;
  return {false, detail};
}

// ---------------------------------------------------------------------------
// artifacts: desk-scale dataset + trained checkpoints for criteria 4-7.

struct Artifacts {
  fs::path root;
  fs::path data() const { return root / "data"; }
  fs::path s1() const { return root / "s1"; }
  fs::path s2() const { return root / "s2"; }
  fs::path hal() const { return root / "hal"; }
  fs::path wir() const { return root / "wir"; }
  fs::path ir() const { return root / "ir"; }
  fs::path ir_noxp() const { return root / "ir_noxp"; }
};

// True when `dir` already holds a checkpoint for this stage and model config
// (and, for the standalone runs, the same supervision arity).
bool cached(const fs::path& dir, const std::string& stage, const ModelConfig& mc,
            std::optional<bool> xp = std::nullopt) {
  try {
    CheckpointMeta meta = read_checkpoint_meta(dir.string());
    if (meta.stage != stage || meta.config_hash != model_config_hash(mc)) return false;
    if (xp && meta.include_xp != *xp) return false;
    return true;
  } catch (...) {
    return false;
  }
}

std::ofstream open_log(const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream log(dir / "train_log.jsonl");
  if (!log) throw std::runtime_error("cannot write train log in " + dir.string());
  return log;
}

void timed(const std::string& what, const std::function<void()>& fn) {
  std::cout << "setup: " << what << "..." << std::flush;
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << " done in " << num(s) << "s" << std::endl;
}

void run_setup(const Artifacts& art) {
  const RunConfig rc;
  fs::create_directories(art.root);

  if (!fs::exists(art.data() / "manifest.json"))
    timed("datagen", [&] { build_dataset(rc.datagen, art.data().string()); });
  else
    std::cout << "setup: datagen cached" << std::endl;
  const Dataset data = load_dataset(art.data().string());

  if (!cached(art.s1(), "stage1", rc.model))
    timed("stage 1 (" + std::to_string(rc.stage1.steps) + " steps)", [&] {
      ModelSet m(rc.model, rc.stage1.seed);
      std::ofstream log = open_log(art.s1());
      train_stage1(m, data, rc.stage1.to_train_config(), &log);
      CheckpointMeta meta{.stage = "stage1", .config = rc.model};
      save_checkpoint(art.s1().string(), meta, m.params({"g1", "g2", "d_v"}));
    });
  else
    std::cout << "setup: stage 1 cached" << std::endl;

  if (!cached(art.s2(), "stage2", rc.model))
    timed("stage 2 (" + std::to_string(rc.stage2.steps) + " steps)", [&] {
      ModelSet m(rc.model, rc.stage2.seed);
      load_checkpoint(art.s1().string(), m.params({"g1", "g2", "d_v"}));
      std::ofstream log = open_log(art.s2());
      train_stage2(m, data, rc.stage2.to_train_config(), &log);
      CheckpointMeta meta{.stage = "stage2", .config = rc.model};
      save_checkpoint(art.s2().string(), meta, m.all_params());
    });
  else
    std::cout << "setup: stage 2 cached" << std::endl;

  const auto baseline = [&](const fs::path& dir, BaselineKind kind, const std::string& tag) {
    if (cached(dir, tag, rc.model)) {
      std::cout << "setup: " << tag << " cached" << std::endl;
      return;
    }
    timed(tag + " (" + std::to_string(rc.baseline.steps) + " steps)", [&] {
      BaselineSet b(rc.model, rc.baseline.seed, baseline_in_ch(kind));
      std::ofstream log = open_log(dir);
      train_baseline(b, kind, data, rc.baseline.to_train_config(), &log);
      CheckpointMeta meta{.stage = tag, .config = rc.model};
      save_checkpoint(dir.string(), meta, b.all_params());
    });
  };
  baseline(art.hal(), BaselineKind::hal, "hal");
  baseline(art.wir(), BaselineKind::wir, "wir");

  const auto standalone = [&](const fs::path& dir, bool include_xp, const std::string& what) {
    if (cached(dir, "ir_standalone", rc.model, include_xp)) {
      std::cout << "setup: " << what << " cached" << std::endl;
      return;
    }
    timed(what + " (" + std::to_string(rc.baseline.steps) + " steps)", [&] {
      ModelSet m(rc.model, rc.baseline.seed);
      TrainConfig tc = rc.baseline.to_train_config();
      tc.include_xp = include_xp;
      std::ofstream log = open_log(dir);
      train_ir_standalone(m, data, tc, &log);
      CheckpointMeta meta{.stage = "ir_standalone", .config = rc.model};
      meta.include_xp = include_xp;
      save_checkpoint(dir.string(), meta, m.params({"d_ir", "dec", "enc"}));
    });
  };
  standalone(art.ir(), true, "ir standalone");
  standalone(art.ir_noxp(), false, "ir standalone (3-term)");
}

// Loads a model checkpoint after verifying its stage tag and model config.
CheckpointMeta restore(const fs::path& dir, ModelSet& m, const std::string& stage) {
  CheckpointMeta meta = read_checkpoint_meta(dir.string());
  if (meta.stage != stage)
    throw std::runtime_error("artifact " + dir.string() + " has stage '" + meta.stage +
                             "', expected " + stage + "; rerun --setup");
  if (meta.config_hash != model_config_hash(m.cfg))
    throw std::runtime_error("artifact " + dir.string() + " uses a different model config");
  if (stage == "stage1")
    load_checkpoint(dir.string(), m.params({"g1", "g2", "d_v"}));
  else if (stage == "ir_standalone")
    load_checkpoint(dir.string(), m.params({"d_ir", "dec", "enc"}));
  else
    load_checkpoint(dir.string(), m.all_params());
  return meta;
}

// ---------------------------------------------------------------------------
// criterion 4: on held-out objects the refined rotator beats the raw one.

Outcome criterion4(const Artifacts& art) {
  const RunConfig rc;
  const Dataset data = load_dataset(art.data().string());
  ModelSet m(rc.model, 0);
  restore(art.s1(), m, "stage1");
  const EvalReport refined = eval_rotator(m, data, true);
  const EvalReport raw = eval_rotator(m, data, false);
  const bool pass =
      refined.all.ssim > raw.all.ssim && refined.all.l1 < raw.all.l1;
  return {pass, "refined ssim " + num(refined.all.ssim) + " vs raw " + num(raw.all.ssim) +
                    ", refined l1 " + num(refined.all.l1) + " vs raw " + num(raw.all.l1)};
}

// ---------------------------------------------------------------------------
// criterion 5: held-out synthesis ordering ir > wir > hal, and the 4-term
// supervised variant lands within 10% relative of the 3-term one.

Outcome criterion5(const Artifacts& art) {
  const RunConfig rc;
  const Dataset data = load_dataset(art.data().string());

  ModelSet ir(rc.model, 0);
  restore(art.ir(), ir, "ir_standalone");
  const EvalReport rep_ir = eval_ir_synthesis(ir, data);

  ModelSet irn(rc.model, 0);
  restore(art.ir_noxp(), irn, "ir_standalone");
  const EvalReport rep_irn = eval_ir_synthesis(irn, data);

  BaselineSet hal(rc.model, 0, baseline_in_ch(BaselineKind::hal));
  load_checkpoint(art.hal().string(), hal.all_params());
  const EvalReport rep_hal = eval_baseline_synthesis(hal, BaselineKind::hal, data);

  BaselineSet wir(rc.model, 0, baseline_in_ch(BaselineKind::wir));
  load_checkpoint(art.wir().string(), wir.all_params());
  const EvalReport rep_wir = eval_baseline_synthesis(wir, BaselineKind::wir, data);

  const bool order =
      rep_ir.all.ssim > rep_wir.all.ssim && rep_wir.all.ssim > rep_hal.all.ssim;
  const double dl1 = std::abs(rep_ir.all.l1 - rep_irn.all.l1) / rep_irn.all.l1;
  const double dssim = std::abs(rep_ir.all.ssim - rep_irn.all.ssim) / std::abs(rep_irn.all.ssim);
  const bool close = dl1 <= 0.10 && dssim <= 0.10;
  return {order && close,
          "ssim ir " + num(rep_ir.all.ssim) + " / wir " + num(rep_wir.all.ssim) + " / hal " +
              num(rep_hal.all.ssim) + "; 4-term vs 3-term drift l1 " + num(dl1) + ", ssim " +
              num(dssim)};
}

// ---------------------------------------------------------------------------
// criterion 6: identity probes on held-out shape seeds.

Outcome criterion6(const Artifacts& art) {
  const RunConfig rc;
  ModelSet m(rc.model, 0);
  restore(art.s2(), m, "stage2");

  constexpr int kPairs = 25;
  int dominant = 0;
  double depth_sum = 0, depth_max = 0, min_view_gap = 1e30;
  for (int k = 0; k < kPairs; ++k) {
    const uint64_t shape = rc.datagen.n_train + static_cast<uint64_t>(k);
    const int p = 1 + k % (rc.model.n_views - 1);
    const IdentityProbe probe =
        probe_identity(m, rc.datagen, shape, 2 * static_cast<uint64_t>(k) + 1,
                       2 * static_cast<uint64_t>(k) + 2, p);
    if (probe.diagonal_dominant()) ++dominant;
    depth_sum += probe.f_depth_l1;
    depth_max = std::max(depth_max, probe.f_depth_l1);
    for (double v : probe.traj_view_l1) min_view_gap = std::min(min_view_gap, v);
  }
  const double depth_mean = depth_sum / kPairs;
  const bool pass = dominant >= 20 && depth_mean < 0.02 && min_view_gap > 0;
  return {pass, std::to_string(dominant) + "/25 diagonal-dominant, depth l1 mean " +
                    num(depth_mean) + " (max " + num(depth_max) + "), min per-view gap " +
                    num(min_view_gap)};
}

// ---------------------------------------------------------------------------
// criterion 7: the trained trajectory beats an untrained model and the
// copy-the-input baseline on held-out L1.

Outcome criterion7(const Artifacts& art) {
  const RunConfig rc;
  const Dataset data = load_dataset(art.data().string());

  ModelSet trained(rc.model, 0);
  restore(art.s2(), trained, "stage2");
  const EvalReport rep_tr = eval_trajectory(trained, data);

  ModelSet fresh(rc.model, 4242);
  const EvalReport rep_un = eval_trajectory(fresh, data);

  const int n = data.n_views();
  const EvalReport rep_cp = eval_trajectory_with(
      [n](const LoadedObject& obj, int input_view) {
        return std::vector<Tensor<float>>(static_cast<size_t>(n),
                                          obj.rgb[static_cast<size_t>(input_view)]);
      },
      data.test, n, "trajectory/copy-input");

  const bool pass = rep_tr.all.l1 < rep_un.all.l1 && rep_tr.all.l1 < rep_cp.all.l1;
  return {pass, "l1 trained " + num(rep_tr.all.l1) + " vs untrained " + num(rep_un.all.l1) +
                    " vs copy-input " + num(rep_cp.all.l1)};
}

// ---------------------------------------------------------------------------
// criterion 8: byte-level determinism of datagen and of a training slice.

bool trees_equal(const fs::path& a, const fs::path& b, std::string& why) {
  std::vector<fs::path> ra, rb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) ra.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) rb.push_back(fs::relative(e.path(), b));
  std::sort(ra.begin(), ra.end());
  std::sort(rb.begin(), rb.end());
  if (ra != rb) {
    why = "file lists differ";
    return false;
  }
  for (const fs::path& rel : ra)
    if (slurp(a / rel) != slurp(b / rel)) {
      why = "bytes differ at " + rel.string();
      return false;
    }
  return true;
}

Outcome criterion8() {
  const RunConfig rc;
  const fs::path tmp = fs::temp_directory_path() / "draw_accept_det";
  fs::remove_all(tmp);
  build_dataset(rc.datagen, (tmp / "a").string());
  build_dataset(rc.datagen, (tmp / "b").string());
  std::string why;
  const bool data_ok = trees_equal(tmp / "a", tmp / "b", why);

  const Dataset data = load_dataset((tmp / "a").string());
  auto slice = [&](std::string& log_text) {
    ModelSet m(rc.model, rc.stage1.seed);
    TrainConfig tc = rc.stage1.to_train_config();
    tc.steps = 100;
    std::ostringstream log;
    train_stage1(m, data, tc, &log);
    log_text = log.str();
    return flatten(m.all_params());
  };
  std::string log_a, log_b;
  const std::vector<float> pa = slice(log_a);
  const std::vector<float> pb = slice(log_b);
  const bool train_ok = same_bytes(pa, pb) && log_a == log_b && !log_a.empty();
  fs::remove_all(tmp);

  if (data_ok && train_ok)
    return {true, "datagen trees byte-identical; 100-step slice params and logs byte-identical"};
  std::string detail;
  if (!data_ok) detail = "datagen mismatch (" + why + ")";
  if (!train_ok) detail += std::string(detail.empty() ? "" : "; ") + "training slice mismatch";
  return {false, detail};
}

Outcome run_criterion(int n, const Artifacts& art) {
  switch (n) {
    case 1: return criterion1();
    case 2: return criterion2();
    case 3: return criterion3();
    case 4: return criterion4(art);
    case 5: return criterion5(art);
    case 6: return criterion6(art);
    case 7: return criterion7(art);
    case 8: return criterion8();
    default: throw std::invalid_argument("criterion out of range");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance gate: trains desk-scale artifacts and scores the eight checks"};
  std::string artifacts = "acceptance_artifacts";
  int criterion = 0;
  bool setup = false;
  app.add_option("--artifacts", artifacts, "artifact directory (dataset + checkpoints)");
  app.add_flag("--setup", setup, "train any missing artifacts, then exit");
  app.add_option("--criterion", criterion, "run a single criterion (default: all)")
      ->check(CLI::Range(1, 8));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const Artifacts art{fs::path(artifacts)};
  try {
    if (setup) {
      run_setup(art);
      if (criterion == 0) return 0;
    }
  } catch (const std::exception& e) {
    std::cout << "setup: FAIL - " << e.what() << std::endl;
    return 2;
  }

  bool all_pass = true;
  std::vector<int> todo;
  if (criterion > 0)
    todo.push_back(criterion);
  else
    for (int n = 1; n <= 8; ++n) todo.push_back(n);

  for (int n : todo) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = run_criterion(n, art);
    } catch (const std::exception& e) {
      o = {false, e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << " (" << num(s) << "s)" << std::endl;
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
