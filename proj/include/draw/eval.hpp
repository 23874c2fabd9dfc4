#pragma once
// Evaluation protocols: per-view-distance depth rotator scoring, full
// trajectory scoring, the shared RGB view-synthesis protocol for the identity
// ablations, the appearance/shape identity probe, and figure-grid emission.
// Every report keeps its per-pair records so aggregates can be re-derived.

#include <functional>
#include <string>
#include <vector>

#include "draw/dataset.hpp"
#include "draw/models.hpp"
#include "draw/tensor.hpp"

namespace draw {

struct EvalRow {
  std::string key;  // circular view distance, or "All"
  long count = 0;
  double l1 = 0, ssim = 0;
};

struct PairRecord {
  int object_id = 0;
  int input_view = 0;
  int target_view = 0;
  double l1 = 0, ssim = 0;
};

struct EvalReport {
  std::string protocol;
  std::string checkpoint_hash;
  std::vector<EvalRow> rows;  // distances 1..floor(N/2)
  EvalRow all;                // mean over every nonzero-distance pair
  std::vector<PairRecord> pairs;
};

std::string report_json(const EvalReport& r);

// --- depth rotator (per-view-distance) -------------------------------------
// The predictor returns N depth maps in azimuth order starting at `ref`
// (entry j is the prediction for view (ref+j)%N); every view of every object
// serves once as reference.
using DepthPredictor =
    std::function<std::vector<Tensor<float>>(const LoadedObject&, int ref)>;

EvalReport eval_rotator_with(const DepthPredictor& predict,
                             const std::vector<LoadedObject>& objects, int n_views,
                             const std::string& protocol);
EvalReport eval_rotator(ModelSet& m, const Dataset& d, bool with_refinement);

// --- full pipeline trajectories --------------------------------------------
// The predictor returns N RGB views in azimuth order starting at the input
// view; scored against ground truth for every target view != input.
using TrajectoryPredictor =
    std::function<std::vector<Tensor<float>>(const LoadedObject&, int input_view)>;

EvalReport eval_trajectory_with(const TrajectoryPredictor& predict,
                                const std::vector<LoadedObject>& objects, int n_views,
                                const std::string& protocol);
EvalReport eval_trajectory(ModelSet& m, const Dataset& d);

// --- RGB synthesis from ground-truth target depth --------------------------
// Shared protocol for the identity-recovery module and the HAL/WIR baselines:
// predict the view-p image from the view-i image and the view-p depth map.
using ViewSynthPredictor =
    std::function<Tensor<float>(const LoadedObject&, int i, int p)>;

EvalReport eval_view_synthesis_with(const ViewSynthPredictor& predict,
                                    const std::vector<LoadedObject>& objects, int n_views,
                                    const std::string& protocol);
EvalReport eval_ir_synthesis(ModelSet& m, const Dataset& d);
EvalReport eval_baseline_synthesis(BaselineSet& b, BaselineKind kind, const Dataset& d);

// --- identity probe ---------------------------------------------------------
// Two renders of the same shape under different appearance seeds, one common
// target depth map.  dist[o][i] is the foreground mean-color distance between
// output o and input i; identity preservation shows as diagonal dominance.
struct IdentityProbe {
  double dist[2][2] = {{0, 0}, {0, 0}};
  double f_depth_l1 = 0;                // L1 between the two F(x0) outputs
  std::vector<double> traj_view_l1;     // per-view L1 between the two trajectories
  Tensor<float> out_a, out_b;           // the two synthesized view-p images
  bool diagonal_dominant() const { return dist[0][0] < dist[0][1] && dist[1][1] < dist[1][0]; }
};

IdentityProbe probe_identity(ModelSet& m, const DatasetConfig& dcfg, uint64_t shape_seed,
                             uint64_t app_seed_a, uint64_t app_seed_b, int p);

// --- figure grid ------------------------------------------------------------
// rows x N mosaic; depth maps ([1,H,W]) are tiled to gray.  Output dimensions
// are (rows*H, N*W).
void emit_figure_grid(const std::vector<std::vector<Tensor<float>>>& rows,
                      const std::string& path);

}  // namespace draw
