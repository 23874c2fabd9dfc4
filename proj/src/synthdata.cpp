#include "draw/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <stdexcept>

#include "draw/digest.hpp"
#include "draw/imageio.hpp"
#include "draw/rng.hpp"
#include "draw/threading.hpp"

namespace draw {

namespace fs = std::filesystem;
using nlohmann::json;

void GenBounds::validate() const {
  if (min_parts < 3 || max_parts > 8 || min_parts > max_parts)
    throw std::invalid_argument("datagen: part bounds must satisfy 3 <= min <= max <= 8");
}

void ViewConfig::validate() const {
  if (n_views < 2) throw std::invalid_argument("datagen: n_views must be >= 2");
  if (image_size < 8) throw std::invalid_argument("datagen: image_size must be >= 8");
  if (!(far > near && near > 0))
    throw std::invalid_argument("datagen: need far > near > 0");
  if (!(ortho_half > 0)) throw std::invalid_argument("datagen: ortho_half must be > 0");
}

void DatasetConfig::validate() const {
  bounds.validate();
  view.validate();
  if (n_train < 1 || n_test < 1)
    throw std::invalid_argument("datagen: need at least one object per split");
  if (k_retain < 1 || k_retain > view.n_views)
    throw std::invalid_argument("datagen: k_retain must be in [1, n_views]");
}

// --- object generation -----------------------------------------------------
// A seat slab, panel or post legs, then optional back / armrests / stretchers
// as the part budget allows.  Every sample below draws from the shape stream
// only; colors come from a separate stream keyed by appearance_seed.

ObjectSpec make_object(uint64_t shape_seed, uint64_t appearance_seed, const GenBounds& b) {
  b.validate();
  ObjectSpec obj;
  obj.shape_seed = shape_seed;
  obj.appearance_seed = appearance_seed;

  Rng shape(splitmix64(shape_seed));
  auto add = [&obj](double cx, double cy, double cz, double hx, double hy, double hz) {
    obj.parts.push_back(Box{{cx, cy, cz}, {hx, hy, hz}, static_cast<int>(obj.parts.size())});
  };

  const double sx = shape.uniform(0.30, 0.55);
  const double sy = shape.uniform(0.04, 0.09);
  const double sz = shape.uniform(0.30, 0.50);
  const double seat_y = shape.uniform(0.00, 0.15);
  add(0, seat_y, 0, sx, sy, sz);

  const double leg_bottom = -0.6;
  const double leg_top = seat_y - sy;
  const double leg_cy = 0.5 * (leg_top + leg_bottom);
  const double leg_hy = 0.5 * (leg_top - leg_bottom);
  const double lw = shape.uniform(0.03, 0.07);
  const bool panel_legs = shape.bernoulli(0.3);
  int n_legs = panel_legs ? 2 : 4;
  n_legs = std::min(n_legs, b.max_parts - 1);
  const double lx = (sx - lw) * 0.9;
  const double lz = (sz - lw) * 0.9;
  if (n_legs == 2) {
    add(-lx, leg_cy, 0, lw, leg_hy, sz * 0.8);
    add(+lx, leg_cy, 0, lw, leg_hy, sz * 0.8);
  } else {
    for (int ix = 0; ix < 2 && static_cast<int>(obj.parts.size()) < 1 + n_legs; ++ix)
      for (int iz = 0; iz < 2 && static_cast<int>(obj.parts.size()) < 1 + n_legs; ++iz)
        add(ix ? lx : -lx, leg_cy, iz ? lz : -lz, lw, leg_hy, lw);
  }

  const double back_h = shape.uniform(0.20, 0.30);
  const double back_t = shape.uniform(0.03, 0.06);
  const bool want_back = shape.bernoulli(0.7);
  if (want_back && static_cast<int>(obj.parts.size()) < b.max_parts)
    add(0, seat_y + sy + back_h, -(sz - back_t), sx * 0.9, back_h, back_t);

  const bool want_arms = shape.bernoulli(0.35);
  const double arm_h = shape.uniform(0.10, 0.16);
  if (want_arms && static_cast<int>(obj.parts.size()) + 2 <= b.max_parts) {
    add(-(sx - lw), seat_y + sy + arm_h, 0, lw, arm_h, sz * 0.7);
    add(+(sx - lw), seat_y + sy + arm_h, 0, lw, arm_h, sz * 0.7);
  }

  // Stretcher bars fill up to min_parts when the draws above came in short.
  double stretcher_y = shape.uniform(-0.45, -0.25);
  while (static_cast<int>(obj.parts.size()) < b.min_parts) {
    add(0, stretcher_y, 0, lx, 0.02, lw);
    stretcher_y += 0.08;
  }

  Rng appearance(splitmix64(appearance_seed));
  obj.colors.reserve(obj.parts.size());
  for (size_t i = 0; i < obj.parts.size(); ++i)
    obj.colors.push_back({appearance.uniform(0.15, 0.95), appearance.uniform(0.15, 0.95),
                          appearance.uniform(0.15, 0.95)});
  return obj;
}

// --- rendering -------------------------------------------------------------

namespace {

struct Vec3 {
  double x, y, z;
};

Vec3 normalize(Vec3 v) {
  const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  return {v.x / n, v.y / n, v.z / n};
}

// Slab intersection; returns the entry parameter and face axis on hit.
bool ray_box(const Vec3& o, const Vec3& d, const Box& b, double& t_enter, int& axis) {
  double t0 = -1e30, t1 = 1e30;
  int ax = -1;
  const double ov[3] = {o.x, o.y, o.z};
  const double dv[3] = {d.x, d.y, d.z};
  for (int k = 0; k < 3; ++k) {
    const double lo = b.center[static_cast<size_t>(k)] - b.half[static_cast<size_t>(k)];
    const double hi = b.center[static_cast<size_t>(k)] + b.half[static_cast<size_t>(k)];
    if (std::abs(dv[k]) < 1e-12) {
      if (ov[k] < lo || ov[k] > hi) return false;
      continue;
    }
    double ta = (lo - ov[k]) / dv[k];
    double tb = (hi - ov[k]) / dv[k];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      ax = k;
    }
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  if (t1 < 0) return false;
  t_enter = t0;
  axis = ax;
  return true;
}

}  // namespace

RenderedView render_view(const ObjectSpec& obj, int p, const ViewConfig& vc) {
  vc.validate();
  const int n = vc.n_views, hw = vc.image_size;
  const int pi = ((p % n) + n) % n;
  const double theta = pi * (2.0 * M_PI / n);
  const double elev = vc.elevation_deg * M_PI / 180.0;

  const Vec3 cam{vc.camera_distance * std::cos(elev) * std::sin(theta),
                 vc.camera_distance * std::sin(elev),
                 vc.camera_distance * std::cos(elev) * std::cos(theta)};
  const Vec3 fwd = normalize({-cam.x, -cam.y, -cam.z});
  const Vec3 right = normalize({fwd.y * 0 - fwd.z * 1, fwd.z * 0 - fwd.x * 0,
                                fwd.x * 1 - fwd.y * 0});  // fwd x (0,1,0)
  const Vec3 up{right.y * fwd.z - right.z * fwd.y, right.z * fwd.x - right.x * fwd.z,
                right.x * fwd.y - right.y * fwd.x};  // right x fwd

  const Vec3 light = normalize({0.35, 0.8, 0.45});
  const double ambient = 0.35;

  RenderedView out;
  out.azimuth_index = pi;
  out.rgb = Tensor<float>(Shape{3, hw, hw});
  out.depth = Tensor<float>(Shape{1, hw, hw});
  out.mask = Tensor<float>(Shape{1, hw, hw});
  const long plane = static_cast<long>(hw) * hw;

  for (int i = 0; i < hw; ++i) {
    for (int j = 0; j < hw; ++j) {
      const double u = ((j + 0.5) / hw * 2.0 - 1.0) * vc.ortho_half;
      const double w = (1.0 - (i + 0.5) / hw * 2.0) * vc.ortho_half;
      const Vec3 o{cam.x + u * right.x + w * up.x, cam.y + u * right.y + w * up.y,
                   cam.z + u * right.z + w * up.z};

      double best_t = 1e30;
      int best_part = -1, best_axis = -1;
      for (size_t bi = 0; bi < obj.parts.size(); ++bi) {
        double t;
        int axis;
        if (ray_box(o, fwd, obj.parts[bi], t, axis) && t < best_t) {
          best_t = t;
          best_part = static_cast<int>(bi);
          best_axis = axis;
        }
      }
      if (best_part < 0) continue;

      const long px = static_cast<long>(i) * hw + j;
      double depth = (vc.far - best_t) / (vc.far - vc.near);
      depth = std::clamp(depth, 0.0, 1.0);
      out.depth[px] = static_cast<float>(depth);
      out.mask[px] = 1.0f;

      const double dir_k = best_axis == 0 ? fwd.x : (best_axis == 1 ? fwd.y : fwd.z);
      Vec3 nrm{0, 0, 0};
      const double sign = dir_k > 0 ? -1.0 : 1.0;
      if (best_axis == 0) nrm.x = sign;
      else if (best_axis == 1) nrm.y = sign;
      else nrm.z = sign;

      const double ndl = std::max(0.0, nrm.x * light.x + nrm.y * light.y + nrm.z * light.z);
      const double shade = ambient + (1.0 - ambient) * ndl;
      const auto& col = obj.colors[static_cast<size_t>(best_part)];
      for (int c = 0; c < 3; ++c)
        out.rgb[c * plane + px] =
            static_cast<float>(std::clamp(col[static_cast<size_t>(c)] * shade, 0.0, 1.0));
    }
  }
  return out;
}

std::vector<int> subsample_poses(int n, int k, uint64_t seed) {
  if (k < 1 || k > n) throw std::invalid_argument("subsample_poses: k out of range");
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(splitmix64(seed));
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(n - i)));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  idx.resize(static_cast<size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// --- dataset serialization -------------------------------------------------

namespace {

json view_to_json(const ViewConfig& v) {
  return json{{"n_views", v.n_views},       {"image_size", v.image_size},
              {"camera_distance", v.camera_distance}, {"near", v.near},
              {"far", v.far},               {"elevation_deg", v.elevation_deg},
              {"ortho_half", v.ortho_half}};
}

ViewConfig view_from_json(const json& j) {
  ViewConfig v;
  v.n_views = j.at("n_views").get<int>();
  v.image_size = j.at("image_size").get<int>();
  v.camera_distance = j.at("camera_distance").get<double>();
  v.near = j.at("near").get<double>();
  v.far = j.at("far").get<double>();
  v.elevation_deg = j.at("elevation_deg").get<double>();
  v.ortho_half = j.at("ortho_half").get<double>();
  return v;
}

json config_to_json(const DatasetConfig& c) {
  return json{{"n_train", c.n_train},
              {"n_test", c.n_test},
              {"k_retain", c.k_retain},
              {"seed", c.seed},
              {"appearance_base", c.appearance_base},
              {"min_parts", c.bounds.min_parts},
              {"max_parts", c.bounds.max_parts},
              {"view", view_to_json(c.view)}};
}

DatasetConfig config_from_json(const json& j) {
  DatasetConfig c;
  c.n_train = j.at("n_train").get<int>();
  c.n_test = j.at("n_test").get<int>();
  c.k_retain = j.at("k_retain").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.appearance_base = j.at("appearance_base").get<uint64_t>();
  c.bounds.min_parts = j.at("min_parts").get<int>();
  c.bounds.max_parts = j.at("max_parts").get<int>();
  c.view = view_from_json(j.at("view"));
  return c;
}

json record_to_json(const ObjectRecord& r) {
  return json{{"id", r.id},
              {"shape_seed", r.shape_seed},
              {"appearance_seed", r.appearance_seed},
              {"retained", r.retained},
              {"dir", r.dir}};
}

ObjectRecord record_from_json(const json& j) {
  ObjectRecord r;
  r.id = j.at("id").get<int>();
  r.shape_seed = j.at("shape_seed").get<uint64_t>();
  r.appearance_seed = j.at("appearance_seed").get<uint64_t>();
  r.retained = j.at("retained").get<std::vector<int>>();
  r.dir = j.at("dir").get<std::string>();
  return r;
}

// Renders one object and writes its directory; rgb only for retained views.
void write_object(const fs::path& root, const ObjectRecord& rec, const DatasetConfig& cfg) {
  const ObjectSpec obj = make_object(rec.shape_seed, rec.appearance_seed, cfg.bounds);
  const int n = cfg.view.n_views;
  std::vector<RenderedView> views(static_cast<size_t>(n));
  parallel_for(n, [&](long p) {
    views[static_cast<size_t>(p)] = render_view(obj, static_cast<int>(p), cfg.view);
  });

  const fs::path dir = root / rec.dir;
  fs::create_directories(dir);
  for (int p = 0; p < n; ++p) {
    const RenderedView& v = views[static_cast<size_t>(p)];
    const std::string sp = std::to_string(p);
    write_f32((dir / ("depth_" + sp + ".bin")).string(), v.depth.data(),
              static_cast<size_t>(v.depth.size()));
    ImageU8 m;
    m.w = cfg.view.image_size;
    m.h = cfg.view.image_size;
    m.ch = 1;
    m.data.resize(static_cast<size_t>(m.w) * m.h);
    for (long i = 0; i < v.mask.size(); ++i)
      m.data[static_cast<size_t>(i)] = v.mask[i] > 0.5f ? 255 : 0;
    write_png((dir / ("mask_" + sp + ".png")).string(), m);
    if (std::find(rec.retained.begin(), rec.retained.end(), p) != rec.retained.end())
      write_png((dir / ("rgb_" + sp + ".png")).string(), to_u8(v.rgb));
  }

  json meta{{"id", rec.id},
            {"shape_seed", rec.shape_seed},
            {"appearance_seed", rec.appearance_seed},
            {"retained", rec.retained},
            {"n_views", n}};
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << "\n";
}

}  // namespace

std::string dataset_config_json(const DatasetConfig& cfg) { return config_to_json(cfg).dump(2); }

DatasetConfig dataset_config_from_json(const std::string& text) {
  return config_from_json(json::parse(text));
}

DatasetManifest build_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  DatasetManifest m;
  m.cfg = cfg;
  m.config_hash = hex64(fnv1a64(dataset_config_json(cfg)));

  const int n = cfg.view.n_views;
  std::vector<int> all(static_cast<size_t>(n));
  std::iota(all.begin(), all.end(), 0);

  for (int i = 0; i < cfg.n_train; ++i) {
    ObjectRecord r;
    r.id = i;
    r.shape_seed = static_cast<uint64_t>(i);
    r.appearance_seed = cfg.appearance_base + r.shape_seed;
    r.retained = subsample_poses(n, cfg.k_retain, mix_seed(cfg.seed, static_cast<uint64_t>(i)));
    r.dir = "obj_" + std::to_string(i);
    m.train.push_back(std::move(r));
  }
  for (int i = 0; i < cfg.n_test; ++i) {
    ObjectRecord r;
    r.id = cfg.n_train + i;
    r.shape_seed = static_cast<uint64_t>(cfg.n_train + i);
    r.appearance_seed = cfg.appearance_base + r.shape_seed;
    r.retained = all;  // test keeps every RGB view
    r.dir = "obj_" + std::to_string(r.id);
    m.test.push_back(std::move(r));
  }

  const fs::path root(out_dir);
  fs::create_directories(root);
  for (const ObjectRecord& r : m.train) write_object(root, r, cfg);
  for (const ObjectRecord& r : m.test) write_object(root, r, cfg);

  json jm{{"format_version", m.format_version},
          {"config", config_to_json(cfg)},
          {"config_hash", m.config_hash},
          {"splits", json::object()}};
  json jtrain = json::array(), jtest = json::array();
  for (const ObjectRecord& r : m.train) jtrain.push_back(record_to_json(r));
  for (const ObjectRecord& r : m.test) jtest.push_back(record_to_json(r));
  jm["splits"]["train"] = json{{"objects", jtrain}};
  jm["splits"]["test"] = json{{"objects", jtest}};
  std::ofstream out(root / "manifest.json");
  if (!out) throw std::runtime_error("datagen: cannot write manifest in " + out_dir);
  out << jm.dump(2) << "\n";
  return m;
}

DatasetManifest load_manifest(const std::string& dataset_dir) {
  std::ifstream in(fs::path(dataset_dir) / "manifest.json");
  if (!in) throw std::runtime_error("dataset: missing manifest.json in " + dataset_dir);
  json jm = json::parse(in);
  DatasetManifest m;
  m.format_version = jm.at("format_version").get<int>();
  if (m.format_version != 1)
    throw std::runtime_error("dataset: unsupported format_version");
  m.cfg = config_from_json(jm.at("config"));
  m.config_hash = jm.at("config_hash").get<std::string>();
  for (const json& j : jm.at("splits").at("train").at("objects"))
    m.train.push_back(record_from_json(j));
  for (const json& j : jm.at("splits").at("test").at("objects"))
    m.test.push_back(record_from_json(j));
  return m;
}

}  // namespace draw
