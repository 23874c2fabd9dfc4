#include "draw/eval.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "draw/imageio.hpp"
#include "draw/losses.hpp"
#include "draw/metrics.hpp"
#include "draw/pipeline.hpp"
#include "draw/threading.hpp"

namespace draw {

using json = nlohmann::json;

namespace {

int circular_distance(int a, int b, int n) {
  const int d = std::abs(a - b) % n;
  return std::min(d, n - d);
}

// Buckets pair records into per-distance rows plus the all-pairs aggregate.
EvalReport bucket_pairs(std::vector<PairRecord> pairs, int n_views,
                        const std::string& protocol) {
  EvalReport r;
  r.protocol = protocol;
  const int kmax = n_views / 2;
  for (int d = 1; d <= kmax; ++d) r.rows.push_back({std::to_string(d), 0, 0, 0});
  r.all.key = "All";
  for (const PairRecord& p : pairs) {
    const int d = circular_distance(p.input_view, p.target_view, n_views);
    EvalRow& row = r.rows[static_cast<size_t>(d - 1)];
    row.count += 1;
    row.l1 += p.l1;
    row.ssim += p.ssim;
    r.all.count += 1;
    r.all.l1 += p.l1;
    r.all.ssim += p.ssim;
  }
  for (EvalRow& row : r.rows)
    if (row.count) {
      row.l1 /= row.count;
      row.ssim /= row.count;
    }
  if (r.all.count) {
    r.all.l1 /= r.all.count;
    r.all.ssim /= r.all.count;
  }
  r.pairs = std::move(pairs);
  return r;
}

json row_to_json(const EvalRow& row) {
  return json{{"key", row.key}, {"count", row.count}, {"l1", row.l1}, {"ssim", row.ssim}};
}

}  // namespace

std::string report_json(const EvalReport& r) {
  json rows = json::array();
  for (const EvalRow& row : r.rows) rows.push_back(row_to_json(row));
  json pairs = json::array();
  for (const PairRecord& p : r.pairs)
    pairs.push_back(json{{"object_id", p.object_id},
                         {"input_view", p.input_view},
                         {"target_view", p.target_view},
                         {"l1", p.l1},
                         {"ssim", p.ssim}});
  return json{{"protocol", r.protocol},
              {"checkpoint_hash", r.checkpoint_hash},
              {"rows", rows},
              {"all", row_to_json(r.all)},
              {"pairs", pairs}}
      .dump(2);
}

EvalReport eval_rotator_with(const DepthPredictor& predict,
                             const std::vector<LoadedObject>& objects, int n_views,
                             const std::string& protocol) {
  if (objects.empty()) throw std::invalid_argument("eval: empty object set");
  // One slot per (object, reference) keeps accumulation order deterministic
  // under parallel prediction.
  const long jobs = static_cast<long>(objects.size()) * n_views;
  std::vector<std::vector<PairRecord>> slots(static_cast<size_t>(jobs));
  parallel_for(jobs, [&](long idx) {
    const LoadedObject& obj = objects[static_cast<size_t>(idx / n_views)];
    const int ref = static_cast<int>(idx % n_views);
    auto preds = predict(obj, ref);
    std::vector<PairRecord>& out = slots[static_cast<size_t>(idx)];
    for (int j = 1; j < n_views; ++j) {
      const int target = (ref + j) % n_views;
      const Tensor<float>& gt = obj.depth[static_cast<size_t>(target)];
      out.push_back({obj.rec.id, ref, target, metric_l1(preds[static_cast<size_t>(j)], gt),
                     metric_ssim(preds[static_cast<size_t>(j)], gt)});
    }
  });
  std::vector<PairRecord> pairs;
  for (auto& s : slots) pairs.insert(pairs.end(), s.begin(), s.end());
  return bucket_pairs(std::move(pairs), n_views, protocol);
}

EvalReport eval_rotator(ModelSet& m, const Dataset& d, bool with_refinement) {
  const int n = d.n_views();
  DepthPredictor predict = [&m, n, with_refinement](const LoadedObject& obj, int ref) {
    Graph<float> g;
    auto* s0 = g.input(&obj.depth[static_cast<size_t>(ref)]);
    auto views = m.g1.forward(g, s0, n);
    std::vector<Tensor<float>> out;
    out.reserve(static_cast<size_t>(n));
    if (with_refinement) {
      auto* refined = m.g2.forward(g, g.stack_views(views));
      for (int j = 0; j < n; ++j) out.push_back(g.slice_view(refined, j)->v());
    } else {
      for (int j = 0; j < n; ++j) out.push_back(views[static_cast<size_t>(j)]->v());
    }
    return out;
  };
  return eval_rotator_with(predict, d.test, n,
                           with_refinement ? "rotator/refined" : "rotator/raw");
}

EvalReport eval_trajectory_with(const TrajectoryPredictor& predict,
                                const std::vector<LoadedObject>& objects, int n_views,
                                const std::string& protocol) {
  if (objects.empty()) throw std::invalid_argument("eval: empty object set");
  const long jobs = static_cast<long>(objects.size()) * n_views;
  std::vector<std::vector<PairRecord>> slots(static_cast<size_t>(jobs));
  parallel_for(jobs, [&](long idx) {
    const LoadedObject& obj = objects[static_cast<size_t>(idx / n_views)];
    const int input = static_cast<int>(idx % n_views);
    if (!obj.has_rgb(input)) throw std::invalid_argument("eval: missing RGB view");
    auto preds = predict(obj, input);
    std::vector<PairRecord>& out = slots[static_cast<size_t>(idx)];
    for (int j = 1; j < n_views; ++j) {
      const int target = (input + j) % n_views;
      const Tensor<float>& gt = obj.rgb[static_cast<size_t>(target)];
      out.push_back({obj.rec.id, input, target, metric_l1(preds[static_cast<size_t>(j)], gt),
                     metric_ssim(preds[static_cast<size_t>(j)], gt)});
    }
  });
  std::vector<PairRecord> pairs;
  for (auto& s : slots) pairs.insert(pairs.end(), s.begin(), s.end());
  return bucket_pairs(std::move(pairs), n_views, protocol);
}

EvalReport eval_trajectory(ModelSet& m, const Dataset& d) {
  TrajectoryPredictor predict = [&m](const LoadedObject& obj, int input) {
    return synthesize_trajectory(m, obj.rgb[static_cast<size_t>(input)]).views;
  };
  return eval_trajectory_with(predict, d.test, d.n_views(), "trajectory/full");
}

EvalReport eval_view_synthesis_with(const ViewSynthPredictor& predict,
                                    const std::vector<LoadedObject>& objects, int n_views,
                                    const std::string& protocol) {
  if (objects.empty()) throw std::invalid_argument("eval: empty object set");
  const long jobs = static_cast<long>(objects.size()) * n_views;
  std::vector<std::vector<PairRecord>> slots(static_cast<size_t>(jobs));
  parallel_for(jobs, [&](long idx) {
    const LoadedObject& obj = objects[static_cast<size_t>(idx / n_views)];
    const int i = static_cast<int>(idx % n_views);
    std::vector<PairRecord>& out = slots[static_cast<size_t>(idx)];
    for (int j = 1; j < n_views; ++j) {
      const int p = (i + j) % n_views;
      Tensor<float> pred = predict(obj, i, p);
      const Tensor<float>& gt = obj.rgb[static_cast<size_t>(p)];
      out.push_back({obj.rec.id, i, p, metric_l1(pred, gt), metric_ssim(pred, gt)});
    }
  });
  std::vector<PairRecord> pairs;
  for (auto& s : slots) pairs.insert(pairs.end(), s.begin(), s.end());
  return bucket_pairs(std::move(pairs), n_views, protocol);
}

EvalReport eval_ir_synthesis(ModelSet& m, const Dataset& d) {
  ViewSynthPredictor predict = [&m](const LoadedObject& obj, int i, int p) {
    Graph<float> g;
    Tensor<float> sp3 = tile3(obj.depth[static_cast<size_t>(p)]);
    auto* x0 = g.input(&obj.rgb[static_cast<size_t>(i)]);
    auto* spn = g.input(&sp3);
    auto app = m.enc.forward(g, x0).app;
    return m.dec.forward(g, m.enc.forward(g, spn).shape, app)->v();
  };
  return eval_view_synthesis_with(predict, d.test, d.n_views(), "viewsynth/ir");
}

EvalReport eval_baseline_synthesis(BaselineSet& b, BaselineKind kind, const Dataset& d) {
  ViewSynthPredictor predict = [&b, kind](const LoadedObject& obj, int i, int p) {
    Graph<float> g;
    Tensor<float> sp3 = tile3(obj.depth[static_cast<size_t>(p)]);
    auto* spn = g.input(&sp3);
    if (kind == BaselineKind::hal) return b.net.forward(g, spn)->v();
    return b.net.forward(g, g.concat_ch(g.input(&obj.rgb[static_cast<size_t>(i)]), spn))->v();
  };
  return eval_view_synthesis_with(
      predict, d.test, d.n_views(),
      kind == BaselineKind::hal ? "viewsynth/hal" : "viewsynth/wir");
}

namespace {

// Per-channel mean over mask-foreground pixels.
std::array<double, 3> foreground_mean(const Tensor<float>& img, const Tensor<float>& mask) {
  const long hw = mask.size();
  std::array<double, 3> mean{0, 0, 0};
  long count = 0;
  for (long i = 0; i < hw; ++i) {
    if (mask[i] < 0.5f) continue;
    ++count;
    for (int c = 0; c < 3; ++c) mean[static_cast<size_t>(c)] += img[c * hw + i];
  }
  if (count)
    for (double& m : mean) m /= count;
  return mean;
}

double color_distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double s = 0;
  for (int c = 0; c < 3; ++c) {
    const double d = a[static_cast<size_t>(c)] - b[static_cast<size_t>(c)];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

IdentityProbe probe_identity(ModelSet& m, const DatasetConfig& dcfg, uint64_t shape_seed,
                             uint64_t app_seed_a, uint64_t app_seed_b, int p) {
  const uint64_t lo = static_cast<uint64_t>(dcfg.n_train);
  const uint64_t hi = lo + static_cast<uint64_t>(dcfg.n_test);
  if (shape_seed < lo || shape_seed >= hi)
    throw std::invalid_argument("probe: shape seed outside the test range");
  if (app_seed_a == app_seed_b)
    throw std::invalid_argument("probe: appearance seeds must differ");
  if (p < 0 || p >= dcfg.view.n_views) throw std::invalid_argument("probe: bad target view");

  const ObjectSpec obj_a = make_object(shape_seed, app_seed_a, dcfg.bounds);
  const ObjectSpec obj_b = make_object(shape_seed, app_seed_b, dcfg.bounds);
  const RenderedView in_a = render_view(obj_a, 0, dcfg.view);
  const RenderedView in_b = render_view(obj_b, 0, dcfg.view);
  const RenderedView target = render_view(obj_a, p, dcfg.view);  // geometry only

  IdentityProbe probe;
  {
    Graph<float> g;
    Tensor<float> sp3 = tile3(target.depth);
    auto* spn = g.input(&sp3);
    auto* xa = g.input(&in_a.rgb);
    auto* xb = g.input(&in_b.rgb);
    auto shape_code = m.enc.forward(g, spn).shape;
    probe.out_a = m.dec.forward(g, shape_code, m.enc.forward(g, xa).app)->v();
    probe.out_b = m.dec.forward(g, shape_code, m.enc.forward(g, xb).app)->v();
  }

  const auto in_mean_a = foreground_mean(in_a.rgb, in_a.mask);
  const auto in_mean_b = foreground_mean(in_b.rgb, in_b.mask);
  const auto out_mean_a = foreground_mean(probe.out_a, target.mask);
  const auto out_mean_b = foreground_mean(probe.out_b, target.mask);
  probe.dist[0][0] = color_distance(out_mean_a, in_mean_a);
  probe.dist[0][1] = color_distance(out_mean_a, in_mean_b);
  probe.dist[1][0] = color_distance(out_mean_b, in_mean_a);
  probe.dist[1][1] = color_distance(out_mean_b, in_mean_b);

  const SynthesisOut traj_a = synthesize_trajectory_full(m, in_a.rgb);
  const SynthesisOut traj_b = synthesize_trajectory_full(m, in_b.rgb);
  probe.f_depth_l1 = metric_l1(traj_a.s0, traj_b.s0);
  for (size_t v = 0; v < traj_a.traj.views.size(); ++v)
    probe.traj_view_l1.push_back(metric_l1(traj_a.traj.views[v], traj_b.traj.views[v]));
  return probe;
}

void emit_figure_grid(const std::vector<std::vector<Tensor<float>>>& rows,
                      const std::string& path) {
  if (rows.empty() || rows[0].empty()) throw std::invalid_argument("grid: empty rows");
  const int h = rows[0][0].shape[1], w = rows[0][0].shape[2];
  const int ncols = static_cast<int>(rows[0].size());
  Tensor<float> canvas(Shape{3, static_cast<int>(rows.size()) * h, ncols * w});
  const long canvas_hw = static_cast<long>(canvas.shape[1]) * canvas.shape[2];
  for (size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<int>(rows[r].size()) != ncols)
      throw std::invalid_argument("grid: ragged rows");
    for (size_t c = 0; c < rows[r].size(); ++c) {
      const Tensor<float>& cell = rows[r][c];
      if (cell.shape[1] != h || cell.shape[2] != w)
        throw std::invalid_argument("grid: cell size mismatch");
      const bool gray = cell.shape[0] == 1;
      if (!gray && cell.shape[0] != 3) throw std::invalid_argument("grid: bad channel count");
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const long src = static_cast<long>(y) * w + x;
          const long dst =
              (static_cast<long>(r) * h + y) * canvas.shape[2] + static_cast<long>(c) * w + x;
          for (int ch = 0; ch < 3; ++ch)
            canvas[ch * canvas_hw + dst] = cell[(gray ? 0 : ch) * (static_cast<long>(h) * w) + src];
        }
    }
  }
  write_png(path, to_u8(canvas));
}

}  // namespace draw
