#include "draw/train.hpp"

#include <cmath>
#include <ostream>
#include <vector>

#include <json.hpp>

namespace draw {

using json = nlohmann::json;

namespace {

using G = Graph<float>;
using Node = G::Node;

void log_line(std::ostream* log, long step, const char* stage, const char* name, double value) {
  if (!log) return;
  *log << json{{"step", step}, {"stage", stage}, {"loss_name", name}, {"value", value}}.dump()
       << "\n";
}

// Aborts on a non-finite batch loss after dumping parameter-group norms.
void check_finite(std::ostream* log, long step, const char* stage, const char* name, double value,
                  ParamList& params) {
  if (std::isfinite(value)) return;
  if (log) {
    json norms = json::object();
    for (auto& [pname, p] : params) {
      double s = 0;
      for (long i = 0; i < p->value.size(); ++i) s += static_cast<double>(p->value[i]) * p->value[i];
      norms[pname] = std::sqrt(s);
    }
    *log << json{{"step", step},
                 {"stage", stage},
                 {"loss_name", std::string("fault/") + name},
                 {"value", value},
                 {"param_norms", norms}}
                .dump()
         << "\n";
    log->flush();
  }
  throw TrainingFault(std::string(stage) + ": non-finite " + name + " at step " +
                      std::to_string(step));
}

bool should_log(long step, const TrainConfig& cfg) {
  return step == 0 || step == cfg.steps - 1 || (step + 1) % cfg.log_every == 0;
}

// One optimization phase of one step: per-sample graphs, batch-mean gradient
// accumulation into `opt`'s parameters, then one optimizer step.  Returns the
// batch-mean loss.
template <typename BuildLoss>
double run_phase(Adam& opt, int batch, const BuildLoss& build) {
  zero_grads(opt.params());
  double total = 0;
  const float seed = 1.0f / static_cast<float>(batch);
  for (int b = 0; b < batch; ++b) {
    G g;
    Node* loss = build(g, b);
    total += static_cast<double>(G::value(loss));
    g.backward(loss, seed);
  }
  opt.step();
  return total / batch;
}

Node* to_one(G& g, Node* score) { return nto_one(g, score); }

}  // namespace

TrainResult train_stage1(ModelSet& m, const Dataset& data, const TrainConfig& cfg,
                         std::ostream* log) {
  cfg.validate();
  const int n = data.n_views();
  TrainSampler sampler(data, cfg.seed);
  Adam opt_critic(m.params({"d_v"}), cfg.opt);
  Adam opt_gen(m.params({"g1", "g2"}), cfg.opt);
  ParamList all = m.params({"d_v", "g1", "g2"});

  TrainResult res;
  res.steps = cfg.steps;
  for (long step = 0; step < cfg.steps; ++step) {
    std::vector<Stage1Sample> batch;
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(sampler.next_stage1());

    const double lc = run_phase(opt_critic, cfg.batch_size, [&](G& g, int b) {
      auto targets = rotated_depths(*batch[static_cast<size_t>(b)].obj,
                                    batch[static_cast<size_t>(b)].ref);
      std::vector<Node*> tn;
      for (const Tensor<float>* t : targets) tn.push_back(g.input(t));
      auto views = m.g1.forward(g, tn[0], n);
      Node* s_prime = g.stop(g.stack_views(views));
      Node* refined = g.stop(m.g2.forward(g, s_prime));
      Node* d_real = m.d_v.forward(g, s_prime, g.stack_views(tn));
      Node* d_fake = m.d_v.forward(g, s_prime, refined);
      return g.add(to_one(g, d_real), g.sq(d_fake));
    });
    check_finite(log, step, "stage1", "dv_critic", lc, all);

    const double lg = run_phase(opt_gen, cfg.batch_size, [&](G& g, int b) {
      auto targets = rotated_depths(*batch[static_cast<size_t>(b)].obj,
                                    batch[static_cast<size_t>(b)].ref);
      std::vector<Node*> tn;
      for (const Tensor<float>* t : targets) tn.push_back(g.input(t));
      auto views = m.g1.forward(g, tn[0], n);
      Node* s_prime = g.stack_views(views);
      Node* refined = m.g2.forward(g, s_prime);
      Node* d_fake = m.d_v.forward(g, s_prime, refined);
      Node* loss = nviews_l1(g, tn, views);
      loss = g.add(loss, nscale(g, nvolume_l1(g, g.stack_views(tn), refined),
                                cfg.weights.lambda_3d));
      return g.add(loss, nscale(g, to_one(g, d_fake), cfg.weights.lambda_g));
    });
    check_finite(log, step, "stage1", "dr_gen", lg, all);

    if (step == 0) res.first_gen_loss = lg;
    res.final_gen_loss = lg;
    if (should_log(step, cfg)) {
      log_line(log, step, "stage1", "dv_critic", lc);
      log_line(log, step, "stage1", "dr_gen", lg);
    }
  }
  return res;
}

TrainResult train_stage2(ModelSet& m, const Dataset& data, const TrainConfig& cfg,
                         std::ostream* log) {
  cfg.validate();
  TrainSampler sampler(data, cfg.seed);
  Adam opt_critic(m.params({"d_dt", "d_ir"}), cfg.opt);
  Adam opt_gen(m.params({"f", "enc", "dec"}), cfg.opt);
  ParamList all = m.params({"d_dt", "d_ir", "f", "enc", "dec"});
  const LossWeights& w = cfg.weights;

  TrainResult res;
  res.steps = cfg.steps;
  for (long step = 0; step < cfg.steps; ++step) {
    struct Item {
      const Tensor<float>*x0, *s0_map;
      Tensor<float> s0_t3, sp_t3;
    };
    std::vector<Item> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      Stage2Sample s = sampler.next_stage2();
      batch.push_back({&s.obj->rgb[static_cast<size_t>(s.i)],
                       &s.obj->depth[static_cast<size_t>(s.i)],
                       tile3(s.obj->depth[static_cast<size_t>(s.i)]),
                       tile3(s.obj->depth[static_cast<size_t>(s.p)])});
    }

    const double lc = run_phase(opt_critic, cfg.batch_size, [&](G& g, int b) {
      const Item& it = batch[static_cast<size_t>(b)];
      Node* x0 = g.input(it.x0);
      Node* s0t = g.input(&it.s0_t3);
      Node* spt = g.input(&it.sp_t3);
      auto f_out = m.f.forward(g, x0);
      Node* dt_real = m.d_dt.forward(g, x0, s0t);
      Node* dt_fake = m.d_dt.forward(g, x0, g.stop(g.repeat_ch(f_out.s0, 3)));
      Node* dt = g.add(to_one(g, dt_real), g.sq(dt_fake));

      auto ir = ir_forward(g, m.enc, m.dec, x0, spt);
      Node* r = m.d_ir.forward(g, x0, s0t);
      Node* f1 = m.d_ir.forward(g, x0, g.stop(ir.s0_hat));
      Node* f2 = m.d_ir.forward(g, g.stop(ir.x0_hat), s0t);
      Node* f3 = m.d_ir.forward(g, g.stop(ir.xp_hat), spt);
      Node* irc = nsum(g, {to_one(g, r), g.sq(f1), g.sq(f2), g.sq(f3)});
      return g.add(dt, nscale(g, irc, w.lambda_2));
    });
    check_finite(log, step, "stage2", "stage2_critic", lc, all);

    const double lg = run_phase(opt_gen, cfg.batch_size, [&](G& g, int b) {
      const Item& it = batch[static_cast<size_t>(b)];
      Node* x0 = g.input(it.x0);
      Node* s0t = g.input(&it.s0_t3);
      Node* spt = g.input(&it.sp_t3);
      Node* s0m = g.input(it.s0_map);
      auto f_out = m.f.forward(g, x0);
      Node* dt_fake = m.d_dt.forward(g, x0, g.repeat_ch(f_out.s0, 3));
      Node* dt = g.add(g.mean_abs_diff(s0m, f_out.s0),
                       nscale(g, to_one(g, dt_fake), w.lambda_f));

      auto ir = ir_forward(g, m.enc, m.dec, x0, spt);
      Node* sup = nsum(g, {g.mean_abs_diff(x0, ir.x0_hat), g.mean_abs_diff(s0t, ir.s0_hat),
                           g.mean_abs_diff(spt, ir.sp_hat)});
      Node* f1 = m.d_ir.forward(g, x0, ir.s0_hat);
      Node* f2 = m.d_ir.forward(g, ir.x0_hat, s0t);
      Node* f3 = m.d_ir.forward(g, ir.xp_hat, spt);
      Node* irg = nsum(g, {to_one(g, f1), to_one(g, f2), to_one(g, f3), sup});
      return g.add(dt, nscale(g, irg, w.lambda_1));
    });
    check_finite(log, step, "stage2", "stage2_gen", lg, all);

    if (step == 0) res.first_gen_loss = lg;
    res.final_gen_loss = lg;
    if (should_log(step, cfg)) {
      log_line(log, step, "stage2", "stage2_critic", lc);
      log_line(log, step, "stage2", "stage2_gen", lg);
    }
  }
  return res;
}

TrainResult train_ir_standalone(ModelSet& m, const Dataset& data, const TrainConfig& cfg,
                                std::ostream* log) {
  cfg.validate();
  TrainSampler sampler(data, cfg.seed);
  Adam opt_critic(m.params({"d_ir"}), cfg.opt);
  Adam opt_gen(m.params({"enc", "dec"}), cfg.opt);
  ParamList all = m.params({"d_ir", "enc", "dec"});

  TrainResult res;
  res.steps = cfg.steps;
  for (long step = 0; step < cfg.steps; ++step) {
    struct Item {
      const Tensor<float>*x0, *xp;
      Tensor<float> s0_t3, sp_t3;
    };
    std::vector<Item> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      PairSample s = sampler.next_pair();
      batch.push_back({&s.obj->rgb[static_cast<size_t>(s.i)],
                       &s.obj->rgb[static_cast<size_t>(s.p)],
                       tile3(s.obj->depth[static_cast<size_t>(s.i)]),
                       tile3(s.obj->depth[static_cast<size_t>(s.p)])});
    }

    const double lc = run_phase(opt_critic, cfg.batch_size, [&](G& g, int b) {
      const Item& it = batch[static_cast<size_t>(b)];
      Node* x0 = g.input(it.x0);
      Node* s0t = g.input(&it.s0_t3);
      Node* spt = g.input(&it.sp_t3);
      auto ir = ir_forward(g, m.enc, m.dec, x0, spt);
      Node* r = m.d_ir.forward(g, x0, s0t);
      Node* f1 = m.d_ir.forward(g, x0, g.stop(ir.s0_hat));
      Node* f2 = m.d_ir.forward(g, g.stop(ir.x0_hat), s0t);
      Node* f3 = m.d_ir.forward(g, g.stop(ir.xp_hat), spt);
      return nsum(g, {to_one(g, r), g.sq(f1), g.sq(f2), g.sq(f3)});
    });
    check_finite(log, step, "ir_standalone", "ir_critic", lc, all);

    const double lg = run_phase(opt_gen, cfg.batch_size, [&](G& g, int b) {
      const Item& it = batch[static_cast<size_t>(b)];
      Node* x0 = g.input(it.x0);
      Node* xp = g.input(it.xp);
      Node* s0t = g.input(&it.s0_t3);
      Node* spt = g.input(&it.sp_t3);
      auto ir = ir_forward(g, m.enc, m.dec, x0, spt);
      Node* sup = nsum(g, {g.mean_abs_diff(x0, ir.x0_hat), g.mean_abs_diff(s0t, ir.s0_hat),
                           g.mean_abs_diff(spt, ir.sp_hat)});
      if (cfg.include_xp) sup = g.add(sup, g.mean_abs_diff(xp, ir.xp_hat));
      Node* f1 = m.d_ir.forward(g, x0, ir.s0_hat);
      Node* f2 = m.d_ir.forward(g, ir.x0_hat, s0t);
      Node* f3 = m.d_ir.forward(g, ir.xp_hat, spt);
      return nsum(g, {to_one(g, f1), to_one(g, f2), to_one(g, f3), sup});
    });
    check_finite(log, step, "ir_standalone", "ir_gen", lg, all);

    if (step == 0) res.first_gen_loss = lg;
    res.final_gen_loss = lg;
    if (should_log(step, cfg)) {
      log_line(log, step, "ir_standalone", "ir_critic", lc);
      log_line(log, step, "ir_standalone", "ir_gen", lg);
    }
  }
  return res;
}

TrainResult train_baseline(BaselineSet& bl, BaselineKind kind, const Dataset& data,
                           const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  TrainSampler sampler(data, cfg.seed);
  Adam opt_critic(bl.params({"critic"}), cfg.opt);
  Adam opt_gen(bl.params({"net"}), cfg.opt);
  ParamList all = bl.all_params();
  const char* stage = kind == BaselineKind::hal ? "hal" : "wir";

  TrainResult res;
  res.steps = cfg.steps;
  for (long step = 0; step < cfg.steps; ++step) {
    struct Item {
      const Tensor<float>*x0, *xp;
      Tensor<float> sp_t3;
    };
    std::vector<Item> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      PairSample s = sampler.next_pair();
      batch.push_back({&s.obj->rgb[static_cast<size_t>(s.i)],
                       &s.obj->rgb[static_cast<size_t>(s.p)],
                       tile3(s.obj->depth[static_cast<size_t>(s.p)])});
    }

    // Both baselines are conditioned on the target-view depth; WIR's net also
    // sees the reference image.  Adversarial loss only, no reconstruction term.
    auto fake_of = [&](G& g, const Item& it) {
      Node* spt = g.input(&it.sp_t3);
      if (kind == BaselineKind::hal) return bl.net.forward(g, spt);
      return bl.net.forward(g, g.concat_ch(g.input(it.x0), spt));
    };

    const double lc = run_phase(opt_critic, cfg.batch_size, [&](G& g, int b) {
      const Item& it = batch[static_cast<size_t>(b)];
      Node* spt = g.input(&it.sp_t3);
      Node* d_real = bl.critic.forward(g, spt, g.input(it.xp));
      Node* d_fake = bl.critic.forward(g, spt, g.stop(fake_of(g, it)));
      return g.add(to_one(g, d_real), g.sq(d_fake));
    });
    check_finite(log, step, stage, "critic", lc, all);

    const double lg = run_phase(opt_gen, cfg.batch_size, [&](G& g, int b) {
      const Item& it = batch[static_cast<size_t>(b)];
      Node* spt = g.input(&it.sp_t3);
      return to_one(g, bl.critic.forward(g, spt, fake_of(g, it)));
    });
    check_finite(log, step, stage, "gen", lg, all);

    if (step == 0) res.first_gen_loss = lg;
    res.final_gen_loss = lg;
    if (should_log(step, cfg)) {
      log_line(log, step, stage, "critic", lc);
      log_line(log, step, stage, "gen", lg);
    }
  }
  return res;
}

}  // namespace draw
