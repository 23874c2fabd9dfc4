#pragma once
// In-memory view of a generated dataset plus deterministic samplers for the
// training stages.  Depth and masks are loaded for every view; RGB only where
// the dataset retained it (all views on the test split).

#include <string>
#include <vector>

#include "draw/rng.hpp"
#include "draw/synthdata.hpp"
#include "draw/tensor.hpp"

namespace draw {

struct LoadedObject {
  ObjectRecord rec;
  std::vector<Tensor<float>> rgb;    // [3,H,W]; empty tensor when not on disk
  std::vector<Tensor<float>> depth;  // [1,H,W]
  std::vector<Tensor<float>> mask;   // [1,H,W] in {0,1}

  bool has_rgb(int p) const { return rgb[static_cast<size_t>(p)].size() > 0; }
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<LoadedObject> train, test;

  int n_views() const { return manifest.cfg.view.n_views; }
  int image_size() const { return manifest.cfg.view.image_size; }
};

Dataset load_dataset(const std::string& dir);

// Depth maps of one object in azimuth order starting at reference view r;
// pointers into the dataset, valid for its lifetime.
std::vector<const Tensor<float>*> rotated_depths(const LoadedObject& obj, int r);

struct Stage1Sample {
  const LoadedObject* obj;
  int ref;  // reference view index
};

struct Stage2Sample {
  const LoadedObject* obj;
  int i;  // reference view with RGB on disk
  int p;  // target view, any view != i (depth only)
};

// Ordered pair with RGB available at both ends; baselines and the standalone
// identity-recovery ablation train on these.
struct PairSample {
  const LoadedObject* obj;
  int i;
  int p;
};

class TrainSampler {
 public:
  TrainSampler(const Dataset& d, uint64_t seed);

  Stage1Sample next_stage1();
  Stage2Sample next_stage2();
  PairSample next_pair();

 private:
  const Dataset* d_;
  Rng rng_;
  std::vector<const LoadedObject*> pair_objects_;  // >= 2 retained RGB views
};

}  // namespace draw
