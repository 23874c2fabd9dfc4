#pragma once
// Procedural chair-like objects built from axis-aligned boxes, rendered with
// an orthographic camera and analytic ray-box intersection.  Geometry is a
// function of shape_seed alone and colors of appearance_seed alone, which is
// the factorization the identity-recovery probes rely on.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "draw/tensor.hpp"

namespace draw {

struct Box {
  std::array<double, 3> center;
  std::array<double, 3> half;  // all components > 0
  int part_id = 0;
};

struct ObjectSpec {
  uint64_t shape_seed = 0;
  uint64_t appearance_seed = 0;
  std::vector<Box> parts;
  std::vector<std::array<double, 3>> colors;  // one RGB triple per part
};

struct GenBounds {
  int min_parts = 3;
  int max_parts = 6;

  void validate() const;
};

struct ViewConfig {
  int n_views = 8;
  int image_size = 64;
  double camera_distance = 2.0;
  double near = 1.0;
  double far = 3.0;
  double elevation_deg = 0.0;
  double ortho_half = 0.85;  // half-width of the orthographic frustum

  void validate() const;
};

struct RenderedView {
  Tensor<float> rgb;    // [3,H,W] in [0,1]
  Tensor<float> depth;  // [1,H,W] in [0,1]; (far-t)/(far-near) on hits, 0 off-object
  Tensor<float> mask;   // [1,H,W] in {0,1}
  int azimuth_index = 0;
};

struct DatasetConfig {
  int n_train = 200;
  int n_test = 40;
  int k_retain = 5;
  uint64_t seed = 0;                   // master seed for pose subsampling
  uint64_t appearance_base = 1000000;  // appearance_seed = base + shape_seed
  GenBounds bounds;
  ViewConfig view;

  void validate() const;
};

struct ObjectRecord {
  int id = 0;
  uint64_t shape_seed = 0;
  uint64_t appearance_seed = 0;
  std::vector<int> retained;  // RGB view indices present on disk
  std::string dir;
};

struct DatasetManifest {
  int format_version = 1;
  DatasetConfig cfg;
  std::string config_hash;
  std::vector<ObjectRecord> train, test;
};

ObjectSpec make_object(uint64_t shape_seed, uint64_t appearance_seed, const GenBounds& b);

RenderedView render_view(const ObjectSpec& obj, int p, const ViewConfig& vc);

// Exactly k distinct indices out of 0..n-1, ascending, deterministic in seed.
std::vector<int> subsample_poses(int n, int k, uint64_t seed);

// Renders and writes the full dataset; returns the manifest also written to
// <out_dir>/manifest.json.
DatasetManifest build_dataset(const DatasetConfig& cfg, const std::string& out_dir);

DatasetManifest load_manifest(const std::string& dataset_dir);

std::string dataset_config_json(const DatasetConfig& cfg);  // canonical form
DatasetConfig dataset_config_from_json(const std::string& text);

}  // namespace draw
