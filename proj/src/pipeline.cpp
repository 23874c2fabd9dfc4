#include "draw/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "draw/imageio.hpp"

namespace draw {

namespace fs = std::filesystem;
using json = nlohmann::json;

SynthesisOut synthesize_trajectory_full(ModelSet& m, const Tensor<float>& x0,
                                        const std::string& source_id) {
  const int n = m.cfg.n_views;
  if (x0.shape != Shape{3, m.cfg.image_size, m.cfg.image_size})
    throw std::invalid_argument("synthesize: input must be [3," +
                                std::to_string(m.cfg.image_size) + "," +
                                std::to_string(m.cfg.image_size) + "]");

  Graph<float> g;
  auto* xn = g.input(&x0);
  auto f_out = m.f.forward(g, xn);
  auto views = m.g1.forward(g, f_out.s0, n);
  auto* refined = m.g2.forward(g, g.stack_views(views));
  auto app = m.enc.forward(g, xn).app;

  SynthesisOut out;
  out.traj.source_id = source_id;
  out.traj.views.reserve(static_cast<size_t>(n));
  for (int p = 0; p < n; ++p) {
    auto* sp3 = g.repeat_ch(g.slice_view(refined, p), 3);
    auto* xp = m.dec.forward(g, m.enc.forward(g, sp3).shape, app);
    out.traj.views.push_back(xp->v());
  }
  out.s0 = f_out.s0->v();
  out.refined = refined->v();
  return out;
}

Trajectory synthesize_trajectory(ModelSet& m, const Tensor<float>& x0,
                                 const std::string& source_id) {
  return synthesize_trajectory_full(m, x0, source_id).traj;
}

void write_trajectory(const Trajectory& t, const std::string& dir) {
  fs::create_directories(dir);
  json files = json::array();
  for (size_t p = 0; p < t.views.size(); ++p) {
    const std::string name = "traj_" + std::to_string(p) + ".png";
    write_png((fs::path(dir) / name).string(), to_u8(t.views[p]));
    files.push_back(name);
  }
  std::ofstream out(fs::path(dir) / "trajectory.json");
  if (!out) throw std::runtime_error("trajectory: cannot write index in " + dir);
  out << json{{"source_id", t.source_id}, {"n_views", t.views.size()}, {"views", files}}.dump(2)
      << "\n";
}

}  // namespace draw
