#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "draw/eval.hpp"
#include "draw/imageio.hpp"
#include "draw/pipeline.hpp"
#include "testdata.hpp"

namespace fs = std::filesystem;
using namespace draw;
using json = nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<float> flatten(const ParamList& list) {
  std::vector<float> out;
  for (const auto& [name, p] : list)
    out.insert(out.end(), p->value.v.begin(), p->value.v.end());
  return out;
}

// All-pairs aggregate re-derived two independent ways.
void check_aggregate_consistency(const EvalReport& r) {
  long count = 0;
  double l1 = 0, ssim = 0;
  for (const EvalRow& row : r.rows) {
    count += row.count;
    l1 += row.count * row.l1;
    ssim += row.count * row.ssim;
  }
  REQUIRE(count == r.all.count);
  CHECK(std::abs(l1 / count - r.all.l1) < 1e-9);
  CHECK(std::abs(ssim / count - r.all.ssim) < 1e-9);

  REQUIRE(r.pairs.size() == static_cast<size_t>(r.all.count));
  double pl1 = 0, pssim = 0;
  for (const PairRecord& p : r.pairs) {
    pl1 += p.l1;
    pssim += p.ssim;
  }
  CHECK(std::abs(pl1 / count - r.all.l1) < 1e-9);
  CHECK(std::abs(pssim / count - r.all.ssim) < 1e-9);
}

}  // namespace

TEST_CASE("trajectory synthesis: shapes, range, determinism, purity") {
  const Dataset& d = td::tiny_dataset();
  ModelSet m(td::tiny_model_config(), 21);
  const Tensor<float>& x0 = d.test[0].rgb[0];
  const auto before = flatten(m.all_params());

  SynthesisOut out = synthesize_trajectory_full(m, x0, "probe");
  CHECK(out.traj.source_id == "probe");
  REQUIRE(out.traj.views.size() == 4);
  for (const Tensor<float>& v : out.traj.views) {
    REQUIRE(v.shape == Shape{3, 16, 16});
    for (long i = 0; i < v.size(); ++i) {
      REQUIRE(v[i] >= 0.0f);
      REQUIRE(v[i] <= 1.0f);
    }
  }
  CHECK(out.s0.shape == Shape{1, 16, 16});
  CHECK(out.refined.shape == Shape{1, 4, 16, 16});

  SynthesisOut again = synthesize_trajectory_full(m, x0, "probe");
  for (size_t p = 0; p < 4; ++p) CHECK(out.traj.views[p].same_values(again.traj.views[p]));
  CHECK(out.s0.same_values(again.s0));
  CHECK(out.refined.same_values(again.refined));

  CHECK(flatten(m.all_params()) == before);  // inference must not disturb weights

  Tensor<float> bad(Shape{3, 8, 8});
  CHECK_THROWS(synthesize_trajectory(m, bad));
}

TEST_CASE("write_trajectory lays out indexed files") {
  const Dataset& d = td::tiny_dataset();
  ModelSet m(td::tiny_model_config(), 21);
  Trajectory t = synthesize_trajectory(m, d.test[0].rgb[0], "obj6");
  const fs::path dir = fresh_dir("draw_traj_out");
  write_trajectory(t, dir.string());

  for (int p = 0; p < 4; ++p) {
    ImageU8 img = read_png((dir / ("traj_" + std::to_string(p) + ".png")).string());
    CHECK(img.w == 16);
    CHECK(img.h == 16);
    CHECK(img.ch == 3);
  }
  json idx = json::parse(std::ifstream(dir / "trajectory.json"));
  CHECK(idx.at("source_id") == "obj6");
  CHECK(idx.at("n_views") == 4);
  CHECK(idx.at("views").size() == 4);
}

TEST_CASE("rotator protocol: perfect predictions score perfectly") {
  const Dataset& d = td::tiny_dataset();
  DepthPredictor perfect = [&](const LoadedObject& obj, int ref) {
    std::vector<Tensor<float>> out;
    for (int j = 0; j < 4; ++j) out.push_back(obj.depth[static_cast<size_t>((ref + j) % 4)]);
    return out;
  };
  EvalReport r = eval_rotator_with(perfect, d.test, 4, "rotator/perfect");
  REQUIRE(r.rows.size() == 2);  // circular distances 1 and 2
  CHECK(r.rows[0].key == "1");
  CHECK(r.rows[1].key == "2");
  CHECK(r.rows[0].count == static_cast<long>(d.test.size()) * 4 * 2);
  CHECK(r.rows[1].count == static_cast<long>(d.test.size()) * 4 * 1);
  CHECK(r.all.count == static_cast<long>(d.test.size()) * 4 * 3);
  for (const EvalRow& row : r.rows) {
    CHECK(row.l1 == 0.0);
    CHECK(row.ssim == doctest::Approx(1.0).epsilon(1e-9));
  }
  check_aggregate_consistency(r);
}

TEST_CASE("rotator protocol: rows separate by distance and aggregates re-derive") {
  const Dataset& d = td::tiny_dataset();
  // Error grows with step index, so distance buckets must differ.
  DepthPredictor skewed = [&](const LoadedObject& obj, int ref) {
    std::vector<Tensor<float>> out;
    for (int j = 0; j < 4; ++j) {
      Tensor<float> t = obj.depth[static_cast<size_t>((ref + j) % 4)];
      for (long i = 0; i < t.size(); ++i) t[i] += 0.05f * static_cast<float>(j % 2);
      out.push_back(t);
    }
    return out;
  };
  EvalReport r = eval_rotator_with(skewed, d.test, 4, "rotator/skewed");
  CHECK(r.rows[0].l1 > 0.0);       // odd steps perturbed
  CHECK(r.rows[1].l1 == 0.0);      // distance 2 = step 2, untouched
  CHECK(r.rows[0].ssim < 1.0);
  check_aggregate_consistency(r);

  EvalReport r2 = eval_rotator_with(skewed, d.test, 4, "rotator/skewed");
  CHECK(report_json(r) == report_json(r2));
}

TEST_CASE("model rotator evaluation: protocols, purity, refinement independence") {
  const Dataset& d = td::tiny_dataset();
  ModelSet m(td::tiny_model_config(), 23);
  const auto before = flatten(m.all_params());

  EvalReport raw = eval_rotator(m, d, false);
  EvalReport refined = eval_rotator(m, d, true);
  CHECK(raw.protocol == "rotator/raw");
  CHECK(refined.protocol == "rotator/refined");
  CHECK(raw.all.count == refined.all.count);
  for (const EvalReport* r : {&raw, &refined}) {
    CHECK(std::isfinite(r->all.l1));
    CHECK(r->all.ssim >= -1.0);
    CHECK(r->all.ssim <= 1.0);
    check_aggregate_consistency(*r);
  }
  CHECK(flatten(m.all_params()) == before);
}

TEST_CASE("trajectory protocol on ground truth RGB") {
  const Dataset& d = td::tiny_dataset();
  TrajectoryPredictor perfect = [&](const LoadedObject& obj, int input) {
    std::vector<Tensor<float>> out;
    for (int j = 0; j < 4; ++j) out.push_back(obj.rgb[static_cast<size_t>((input + j) % 4)]);
    return out;
  };
  EvalReport r = eval_trajectory_with(perfect, d.test, 4, "trajectory/perfect");
  CHECK(r.all.l1 == 0.0);
  CHECK(r.all.ssim == doctest::Approx(1.0).epsilon(1e-9));
  check_aggregate_consistency(r);

  ModelSet m(td::tiny_model_config(), 23);
  EvalReport full = eval_trajectory(m, d);
  CHECK(full.protocol == "trajectory/full");
  CHECK(full.all.count == r.all.count);
  CHECK(std::isfinite(full.all.l1));
  check_aggregate_consistency(full);
}

TEST_CASE("view synthesis protocol is shared across model and baselines") {
  const Dataset& d = td::tiny_dataset();
  ViewSynthPredictor copy_gt = [&](const LoadedObject& obj, int, int p) {
    return obj.rgb[static_cast<size_t>(p)];
  };
  EvalReport perfect = eval_view_synthesis_with(copy_gt, d.test, 4, "viewsynth/perfect");
  CHECK(perfect.all.l1 == 0.0);
  CHECK(perfect.all.count == static_cast<long>(d.test.size()) * 4 * 3);
  check_aggregate_consistency(perfect);

  ModelSet m(td::tiny_model_config(), 23);
  EvalReport ir = eval_ir_synthesis(m, d);
  CHECK(ir.protocol == "viewsynth/ir");
  CHECK(ir.all.count == perfect.all.count);
  check_aggregate_consistency(ir);

  BaselineSet hal(td::tiny_model_config(), 5, baseline_in_ch(BaselineKind::hal));
  BaselineSet wir(td::tiny_model_config(), 5, baseline_in_ch(BaselineKind::wir));
  EvalReport rh = eval_baseline_synthesis(hal, BaselineKind::hal, d);
  EvalReport rw = eval_baseline_synthesis(wir, BaselineKind::wir, d);
  CHECK(rh.protocol == "viewsynth/hal");
  CHECK(rw.protocol == "viewsynth/wir");
  CHECK(rh.all.count == perfect.all.count);
  CHECK(rw.all.count == perfect.all.count);
  check_aggregate_consistency(rh);
  check_aggregate_consistency(rw);
}

TEST_CASE("report_json carries rows and pairs verbatim") {
  const Dataset& d = td::tiny_dataset();
  DepthPredictor perfect = [&](const LoadedObject& obj, int ref) {
    std::vector<Tensor<float>> out;
    for (int j = 0; j < 4; ++j) out.push_back(obj.depth[static_cast<size_t>((ref + j) % 4)]);
    return out;
  };
  EvalReport r = eval_rotator_with(perfect, d.test, 4, "rotator/perfect");
  r.checkpoint_hash = "deadbeef";
  json j = json::parse(report_json(r));
  CHECK(j.at("protocol") == "rotator/perfect");
  CHECK(j.at("checkpoint_hash") == "deadbeef");
  REQUIRE(j.at("rows").size() == r.rows.size());
  CHECK(j.at("all").at("count").get<long>() == r.all.count);
  REQUIRE(j.at("pairs").size() == r.pairs.size());
  const json& p0 = j.at("pairs")[0];
  CHECK(p0.at("object_id").get<int>() == r.pairs[0].object_id);
  CHECK(p0.at("input_view").get<int>() == r.pairs[0].input_view);
  CHECK(p0.at("target_view").get<int>() == r.pairs[0].target_view);
}

TEST_CASE("identity probe: contract, determinism, validation") {
  const DatasetConfig dcfg = td::tiny_dataset_config();
  ModelSet m(td::tiny_model_config(), 29);
  const uint64_t shape_seed = static_cast<uint64_t>(dcfg.n_train);  // first test object

  IdentityProbe a = probe_identity(m, dcfg, shape_seed, 100, 200, 1);
  CHECK(a.out_a.shape == Shape{3, 16, 16});
  CHECK(a.out_b.shape == Shape{3, 16, 16});
  REQUIRE(a.traj_view_l1.size() == 4);
  for (double v : a.traj_view_l1) CHECK(v >= 0.0);
  CHECK(a.f_depth_l1 >= 0.0);
  for (int o = 0; o < 2; ++o)
    for (int i = 0; i < 2; ++i) CHECK(a.dist[o][i] >= 0.0);

  IdentityProbe b = probe_identity(m, dcfg, shape_seed, 100, 200, 1);
  CHECK(a.out_a.same_values(b.out_a));
  CHECK(a.out_b.same_values(b.out_b));
  CHECK(a.dist[0][0] == b.dist[0][0]);
  CHECK(a.dist[1][1] == b.dist[1][1]);
  CHECK(a.f_depth_l1 == b.f_depth_l1);

  CHECK_THROWS(probe_identity(m, dcfg, 0, 100, 200, 1));                   // train-split shape
  CHECK_THROWS(probe_identity(m, dcfg, shape_seed, 100, 100, 1));          // same appearance
  CHECK_THROWS(probe_identity(m, dcfg, shape_seed, 100, 200, 9));          // bad view
}

TEST_CASE("figure grid: geometry, gray tiling, determinism") {
  std::vector<std::vector<Tensor<float>>> rows(2);
  Rng rng(31);
  for (int c = 0; c < 3; ++c) {
    Tensor<float> gray(Shape{1, 4, 5});
    Tensor<float> color(Shape{3, 4, 5});
    for (long i = 0; i < gray.size(); ++i) gray[i] = static_cast<float>(rng.uniform(0, 1));
    for (long i = 0; i < color.size(); ++i) color[i] = static_cast<float>(rng.uniform(0, 1));
    rows[0].push_back(gray);
    rows[1].push_back(color);
  }
  const fs::path dir = fresh_dir("draw_grid");
  fs::create_directories(dir);
  emit_figure_grid(rows, (dir / "grid.png").string());

  ImageU8 img = read_png((dir / "grid.png").string());
  CHECK(img.w == 15);  // 3 columns x 5
  CHECK(img.h == 8);   // 2 rows x 4
  CHECK(img.ch == 3);
  // Gray cells replicate across channels: probe the first pixel of row 0.
  CHECK(img.data[0] == img.data[1]);
  CHECK(img.data[1] == img.data[2]);

  emit_figure_grid(rows, (dir / "grid2.png").string());
  CHECK(slurp(dir / "grid.png") == slurp(dir / "grid2.png"));

  rows[1].pop_back();
  CHECK_THROWS(emit_figure_grid(rows, (dir / "bad.png").string()));
  CHECK_THROWS(emit_figure_grid({}, (dir / "bad.png").string()));
}
