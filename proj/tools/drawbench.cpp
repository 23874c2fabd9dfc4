// drawbench: single executable surface over data generation, the two training
// stages, the ablation baselines, inference, and evaluation.  Exit codes:
// 0 success, 1 validation error (bad flags, bad config, wrong checkpoint),
// 2 runtime fault (I/O failure, non-finite training loss).  All randomness is
// governed by seeds; DRAWBENCH_THREADS caps worker parallelism.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "draw/checkpoint.hpp"
#include "draw/dataset.hpp"
#include "draw/eval.hpp"
#include "draw/imageio.hpp"
#include "draw/models.hpp"
#include "draw/pipeline.hpp"
#include "draw/runconfig.hpp"
#include "draw/synthdata.hpp"
#include "draw/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace draw;

namespace {

// Every command records what produced its outputs.
void write_run_record(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                      uint64_t seed) {
  fs::create_directories(dir);
  std::ofstream out(dir / "run.json");
  if (!out) throw std::runtime_error("cannot write run record in " + dir.string());
  out << json{{"schema_version", cfg.schema_version},
              {"command", command},
              {"config_hash", run_config_hash(cfg)},
              {"seed", seed}}
             .dump(2)
      << "\n";
}

void write_text(const std::string& path, const std::string& text) {
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void write_report(const std::string& path, const EvalReport& r, const RunConfig& cfg) {
  json j = json::parse(report_json(r));
  j["config_hash"] = run_config_hash(cfg);
  write_text(path, j.dump(2) + "\n");
}

std::ofstream open_log(const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream log(dir / "train_log.jsonl");
  if (!log) throw std::runtime_error("cannot write train log in " + dir.string());
  return log;
}

// Restores model groups from a checkpoint whose stage must be one of
// `allowed`; returns the manifest metadata.
CheckpointMeta load_model_checkpoint(const std::string& dir, ModelSet& m,
                                     const std::vector<std::string>& allowed) {
  CheckpointMeta meta = read_checkpoint_meta(dir);
  bool ok = false;
  for (const std::string& s : allowed) ok = ok || meta.stage == s;
  if (!ok) {
    std::string want;
    for (const std::string& s : allowed) want += (want.empty() ? "" : " or ") + s;
    throw std::invalid_argument("checkpoint " + dir + " has stage '" + meta.stage +
                                "', expected " + want);
  }
  if (model_config_hash(m.cfg) != meta.config_hash)
    throw std::invalid_argument("checkpoint " + dir + " was trained with a different model config");
  if (meta.stage == "stage1")
    load_checkpoint(dir, m.params({"g1", "g2", "d_v"}));
  else
    load_checkpoint(dir, m.all_params());
  return meta;
}

struct Common {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;

  RunConfig load() const {
    return config_path.empty() ? RunConfig{} : load_run_config(config_path);
  }
};

void add_common(CLI::App* sc, Common& c) {
  sc->add_option("--config", c.config_path, "Run configuration file (JSON)");
  auto* s = sc->add_option("--seed", c.seed, "Override the relevant seed");
  sc->final_callback([&c, s] { c.seed_set = s->count() > 0; });
}

struct TrainFlags {
  long steps = 0;
  int batch = 0;
  CLI::Option *steps_opt = nullptr, *batch_opt = nullptr;

  void add(CLI::App* sc) {
    steps_opt = sc->add_option("--steps", steps, "Override the step budget");
    batch_opt = sc->add_option("--batch", batch, "Override the batch size");
  }

  void apply(TrainSection& t, const Common& c) const {
    if (*steps_opt) t.steps = steps;
    if (*batch_opt) t.batch_size = batch;
    if (c.seed_set) t.seed = c.seed;
  }
};

std::vector<Tensor<float>> volume_slices(const Tensor<float>& refined) {
  const int n = refined.shape[1], h = refined.shape[2], w = refined.shape[3];
  std::vector<Tensor<float>> out;
  for (int p = 0; p < n; ++p) {
    Tensor<float> s(Shape{1, h, w});
    const long base = static_cast<long>(p) * h * w;
    for (long i = 0; i < s.size(); ++i) s[i] = refined[base + i];
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drawbench: cross-modal view synthesis workbench"};
  app.require_subcommand(1);

  // datagen ------------------------------------------------------------------
  auto* sc_datagen = app.add_subcommand("datagen", "Generate the procedural dataset");
  Common c_datagen;
  std::string datagen_out;
  add_common(sc_datagen, c_datagen);
  sc_datagen->add_option("--out", datagen_out, "Output dataset directory")->required();

  // train-stage1 -------------------------------------------------------------
  auto* sc_s1 = app.add_subcommand("train-stage1", "Train the depth rotation stack");
  Common c_s1;
  TrainFlags f_s1;
  std::string s1_data, s1_out;
  add_common(sc_s1, c_s1);
  f_s1.add(sc_s1);
  sc_s1->add_option("--data", s1_data, "Dataset directory")->required();
  sc_s1->add_option("--out", s1_out, "Checkpoint output directory")->required();

  // train-stage2 -------------------------------------------------------------
  auto* sc_s2 = app.add_subcommand(
      "train-stage2", "Train domain transfer and identity recovery over a frozen stage 1");
  Common c_s2;
  TrainFlags f_s2;
  std::string s2_data, s2_out, s2_stage1;
  add_common(sc_s2, c_s2);
  f_s2.add(sc_s2);
  sc_s2->add_option("--data", s2_data, "Dataset directory")->required();
  sc_s2->add_option("--stage1", s2_stage1, "Stage-1 checkpoint directory")->required();
  sc_s2->add_option("--out", s2_out, "Checkpoint output directory")->required();

  // train-baseline -----------------------------------------------------------
  auto* sc_bl = app.add_subcommand("train-baseline", "Train an ablation baseline");
  Common c_bl;
  TrainFlags f_bl;
  std::string bl_data, bl_out, bl_kind;
  bool bl_no_xp = false;
  add_common(sc_bl, c_bl);
  f_bl.add(sc_bl);
  sc_bl->add_option("--kind", bl_kind, "hal | wir | ir")
      ->required()
      ->check(CLI::IsMember({"hal", "wir", "ir"}));
  sc_bl->add_flag("--no-xp", bl_no_xp, "Drop the novel-view supervision term (ir only)");
  sc_bl->add_option("--data", bl_data, "Dataset directory")->required();
  sc_bl->add_option("--out", bl_out, "Checkpoint output directory")->required();

  // infer --------------------------------------------------------------------
  auto* sc_infer = app.add_subcommand("infer", "Synthesize a pose trajectory from one image");
  Common c_infer;
  std::string infer_image, infer_ckpt, infer_out;
  add_common(sc_infer, c_infer);
  sc_infer->add_option("--image", infer_image, "Input RGB image (PNG)")->required();
  sc_infer->add_option("--ckpt", infer_ckpt, "Stage-2 checkpoint directory")->required();
  sc_infer->add_option("--out", infer_out, "Output trajectory directory")->required();

  // eval-rotator -------------------------------------------------------------
  auto* sc_rot = app.add_subcommand("eval-rotator", "Score depth rotation per view distance");
  Common c_rot;
  std::string rot_ckpt, rot_data, rot_out = "report.json";
  bool rot_no_refine = false;
  add_common(sc_rot, c_rot);
  sc_rot->add_option("--ckpt", rot_ckpt, "Stage-1 or stage-2 checkpoint directory")->required();
  sc_rot->add_option("--data", rot_data, "Dataset directory")->required();
  sc_rot->add_option("--out", rot_out, "Report path (JSON)");
  sc_rot->add_flag("--no-refine", rot_no_refine, "Score the recurrent rotator alone");

  // eval-trajectory ----------------------------------------------------------
  auto* sc_traj = app.add_subcommand("eval-trajectory", "Score full RGB pose trajectories");
  Common c_traj;
  std::string traj_ckpt, traj_data, traj_out = "report.json";
  add_common(sc_traj, c_traj);
  sc_traj->add_option("--ckpt", traj_ckpt, "Stage-2 checkpoint directory")->required();
  sc_traj->add_option("--data", traj_data, "Dataset directory")->required();
  sc_traj->add_option("--out", traj_out, "Report path (JSON)");

  // probe-identity -----------------------------------------------------------
  auto* sc_probe = app.add_subcommand(
      "probe-identity", "Check appearance/shape factorization on a held-out shape");
  Common c_probe;
  std::string probe_ckpt, probe_out = "probe.json";
  uint64_t probe_shape = 0, probe_a = 0, probe_b = 0;
  int probe_view = -1;
  add_common(sc_probe, c_probe);
  sc_probe->add_option("--ckpt", probe_ckpt, "Stage-2 checkpoint directory")->required();
  sc_probe->add_option("--out", probe_out, "Probe report path (JSON)");
  auto* o_shape = sc_probe->add_option("--shape-seed", probe_shape, "Held-out shape seed");
  auto* o_a = sc_probe->add_option("--app-a", probe_a, "First appearance seed");
  auto* o_b = sc_probe->add_option("--app-b", probe_b, "Second appearance seed");
  auto* o_view = sc_probe->add_option("--view", probe_view, "Target view index");

  // render-grid --------------------------------------------------------------
  auto* sc_grid = app.add_subcommand(
      "render-grid", "Render ground truth, trajectory, and depth rows for one object");
  Common c_grid;
  std::string grid_ckpt, grid_data, grid_out = "grid.png";
  int grid_object = -1;
  add_common(sc_grid, c_grid);
  sc_grid->add_option("--ckpt", grid_ckpt, "Stage-2 checkpoint directory")->required();
  sc_grid->add_option("--data", grid_data, "Dataset directory")->required();
  sc_grid->add_option("--object", grid_object, "Test object id (default: first)");
  sc_grid->add_option("--out", grid_out, "Output image path (PNG)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*sc_datagen) {
      RunConfig cfg = c_datagen.load();
      if (c_datagen.seed_set) cfg.datagen.seed = c_datagen.seed;
      build_dataset(cfg.datagen, datagen_out);
      write_run_record(datagen_out, "datagen", cfg, cfg.datagen.seed);
    } else if (*sc_s1) {
      RunConfig cfg = c_s1.load();
      f_s1.apply(cfg.stage1, c_s1);
      Dataset data = load_dataset(s1_data);
      ModelSet m(cfg.model, cfg.stage1.seed);
      std::ofstream log = open_log(s1_out);
      train_stage1(m, data, cfg.stage1.to_train_config(), &log);
      CheckpointMeta meta{.stage = "stage1", .config = cfg.model};
      save_checkpoint(s1_out, meta, m.params({"g1", "g2", "d_v"}));
      write_run_record(s1_out, "train-stage1", cfg, cfg.stage1.seed);
    } else if (*sc_s2) {
      RunConfig cfg = c_s2.load();
      f_s2.apply(cfg.stage2, c_s2);
      Dataset data = load_dataset(s2_data);
      ModelSet m(cfg.model, cfg.stage2.seed);
      load_model_checkpoint(s2_stage1, m, {"stage1"});
      std::ofstream log = open_log(s2_out);
      train_stage2(m, data, cfg.stage2.to_train_config(), &log);
      CheckpointMeta meta{.stage = "stage2", .config = cfg.model};
      save_checkpoint(s2_out, meta, m.all_params());
      write_run_record(s2_out, "train-stage2", cfg, cfg.stage2.seed);
    } else if (*sc_bl) {
      RunConfig cfg = c_bl.load();
      f_bl.apply(cfg.baseline, c_bl);
      if (bl_no_xp) cfg.baseline.include_xp = false;
      Dataset data = load_dataset(bl_data);
      std::ofstream log = open_log(bl_out);
      if (bl_kind == "ir") {
        ModelSet m(cfg.model, cfg.baseline.seed);
        train_ir_standalone(m, data, cfg.baseline.to_train_config(), &log);
        CheckpointMeta meta{.stage = "ir_standalone", .config = cfg.model};
        meta.include_xp = cfg.baseline.include_xp;
        save_checkpoint(bl_out, meta, m.params({"d_ir", "dec", "enc"}));
      } else {
        const BaselineKind kind = bl_kind == "hal" ? BaselineKind::hal : BaselineKind::wir;
        BaselineSet b(cfg.model, cfg.baseline.seed, baseline_in_ch(kind));
        train_baseline(b, kind, data, cfg.baseline.to_train_config(), &log);
        CheckpointMeta meta{.stage = bl_kind, .config = cfg.model};
        save_checkpoint(bl_out, meta, b.all_params());
      }
      write_run_record(bl_out, "train-baseline", cfg, cfg.baseline.seed);
    } else if (*sc_infer) {
      RunConfig cfg = c_infer.load();
      ModelSet m(cfg.model, 0);
      load_model_checkpoint(infer_ckpt, m, {"stage2"});
      Tensor<float> x0 = to_chw(read_png(infer_image));
      if (x0.shape != Shape{3, cfg.model.image_size, cfg.model.image_size})
        throw std::invalid_argument("input image must be RGB " +
                                    std::to_string(cfg.model.image_size) + "x" +
                                    std::to_string(cfg.model.image_size));
      Trajectory t = synthesize_trajectory(m, x0, fs::path(infer_image).stem().string());
      write_trajectory(t, infer_out);
      write_run_record(infer_out, "infer", cfg, 0);
    } else if (*sc_rot) {
      RunConfig cfg = c_rot.load();
      ModelSet m(cfg.model, 0);
      CheckpointMeta meta = load_model_checkpoint(rot_ckpt, m, {"stage1", "stage2"});
      Dataset data = load_dataset(rot_data);
      EvalReport r = eval_rotator(m, data, !rot_no_refine);
      r.checkpoint_hash = meta.config_hash;
      write_report(rot_out, r, cfg);
    } else if (*sc_traj) {
      RunConfig cfg = c_traj.load();
      ModelSet m(cfg.model, 0);
      CheckpointMeta meta = load_model_checkpoint(traj_ckpt, m, {"stage2"});
      Dataset data = load_dataset(traj_data);
      EvalReport r = eval_trajectory(m, data);
      r.checkpoint_hash = meta.config_hash;
      write_report(traj_out, r, cfg);
    } else if (*sc_probe) {
      RunConfig cfg = c_probe.load();
      const uint64_t shape_seed = *o_shape ? probe_shape : cfg.eval.probe_shape_seed;
      const uint64_t app_a = *o_a ? probe_a : cfg.eval.probe_app_seed_a;
      const uint64_t app_b = *o_b ? probe_b : cfg.eval.probe_app_seed_b;
      const int view = *o_view ? probe_view : cfg.eval.probe_view;
      ModelSet m(cfg.model, 0);
      CheckpointMeta meta = load_model_checkpoint(probe_ckpt, m, {"stage2"});
      IdentityProbe p = probe_identity(m, cfg.datagen, shape_seed, app_a, app_b, view);
      json j{{"config_hash", run_config_hash(cfg)},
             {"checkpoint_hash", meta.config_hash},
             {"shape_seed", shape_seed},
             {"app_seed_a", app_a},
             {"app_seed_b", app_b},
             {"view", view},
             {"dist", {{p.dist[0][0], p.dist[0][1]}, {p.dist[1][0], p.dist[1][1]}}},
             {"diagonal_dominant", p.diagonal_dominant()},
             {"f_depth_l1", p.f_depth_l1},
             {"traj_view_l1", p.traj_view_l1}};
      write_text(probe_out, j.dump(2) + "\n");
    } else if (*sc_grid) {
      RunConfig cfg = c_grid.load();
      ModelSet m(cfg.model, 0);
      load_model_checkpoint(grid_ckpt, m, {"stage2"});
      Dataset data = load_dataset(grid_data);
      const LoadedObject* obj = nullptr;
      for (const LoadedObject& o : data.test)
        if (grid_object < 0 || o.rec.id == grid_object) {
          obj = &o;
          break;
        }
      if (!obj)
        throw std::invalid_argument("no test object with id " + std::to_string(grid_object));
      SynthesisOut out = synthesize_trajectory_full(m, obj->rgb[0]);
      emit_figure_grid({obj->rgb, out.traj.views, volume_slices(out.refined)}, grid_out);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "drawbench: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "drawbench: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
