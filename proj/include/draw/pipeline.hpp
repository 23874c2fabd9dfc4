#pragma once
// Deployment path: one RGB image in, a full N-view RGB pose trajectory out.
// No pose label is consumed; view p of the output is decoded from the refined
// depth volume's view p with the input image's appearance code.

#include <string>
#include <vector>

#include "draw/models.hpp"
#include "draw/tensor.hpp"

namespace draw {

struct Trajectory {
  std::vector<Tensor<float>> views;  // N images [3,H,W] in [0,1]
  std::string source_id;
};

// Also returns the intermediate depth: F(x0) and the refined volume, which the
// evaluation probes reuse.
struct SynthesisOut {
  Trajectory traj;
  Tensor<float> s0;       // [1,H,W]
  Tensor<float> refined;  // [1,N,H,W]
};

SynthesisOut synthesize_trajectory_full(ModelSet& m, const Tensor<float>& x0,
                                        const std::string& source_id = "");

Trajectory synthesize_trajectory(ModelSet& m, const Tensor<float>& x0,
                                 const std::string& source_id = "");

// traj_<p>.png files plus a trajectory.json index.
void write_trajectory(const Trajectory& t, const std::string& dir);

}  // namespace draw
