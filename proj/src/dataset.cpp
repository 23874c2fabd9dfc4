#include "draw/dataset.hpp"

#include <filesystem>
#include <stdexcept>

#include "draw/imageio.hpp"

namespace draw {

namespace fs = std::filesystem;

namespace {

LoadedObject load_object(const fs::path& root, const ObjectRecord& rec, const ViewConfig& vc) {
  LoadedObject o;
  o.rec = rec;
  const int n = vc.n_views;
  const int hw = vc.image_size;
  o.rgb.resize(static_cast<size_t>(n));
  o.depth.reserve(static_cast<size_t>(n));
  o.mask.reserve(static_cast<size_t>(n));
  const fs::path dir = root / rec.dir;
  for (int p = 0; p < n; ++p) {
    const std::string sp = std::to_string(p);
    auto raw = read_f32((dir / ("depth_" + sp + ".bin")).string(),
                        static_cast<size_t>(hw) * hw);
    o.depth.emplace_back(Shape{1, hw, hw}, std::move(raw));

    ImageU8 m = read_png((dir / ("mask_" + sp + ".png")).string());
    if (m.ch != 1 || m.w != hw || m.h != hw)
      throw std::runtime_error("dataset: bad mask " + (dir / ("mask_" + sp + ".png")).string());
    Tensor<float> mt(Shape{1, hw, hw});
    for (long i = 0; i < mt.size(); ++i) mt[i] = m.data[static_cast<size_t>(i)] > 127 ? 1.0f : 0.0f;
    o.mask.push_back(std::move(mt));

    const fs::path rgb_path = dir / ("rgb_" + sp + ".png");
    if (fs::exists(rgb_path)) {
      Tensor<float> img = to_chw(read_png(rgb_path.string()));
      if (img.shape != Shape{3, hw, hw})
        throw std::runtime_error("dataset: bad rgb " + rgb_path.string());
      o.rgb[static_cast<size_t>(p)] = std::move(img);
    }
  }
  // Every retained view must actually be present.
  for (int p : rec.retained)
    if (!o.has_rgb(p))
      throw std::runtime_error("dataset: missing retained rgb view " + std::to_string(p) +
                               " of " + rec.dir);
  return o;
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  d.manifest = load_manifest(dir);
  const fs::path root(dir);
  d.train.reserve(d.manifest.train.size());
  for (const ObjectRecord& r : d.manifest.train)
    d.train.push_back(load_object(root, r, d.manifest.cfg.view));
  d.test.reserve(d.manifest.test.size());
  for (const ObjectRecord& r : d.manifest.test)
    d.test.push_back(load_object(root, r, d.manifest.cfg.view));
  return d;
}

std::vector<const Tensor<float>*> rotated_depths(const LoadedObject& obj, int r) {
  const int n = static_cast<int>(obj.depth.size());
  std::vector<const Tensor<float>*> out;
  out.reserve(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) out.push_back(&obj.depth[static_cast<size_t>((r + j) % n)]);
  return out;
}

TrainSampler::TrainSampler(const Dataset& d, uint64_t seed) : d_(&d), rng_(seed) {
  if (d.train.empty()) throw std::invalid_argument("sampler: empty training split");
  for (const LoadedObject& o : d.train)
    if (o.rec.retained.size() >= 2) pair_objects_.push_back(&o);
}

Stage1Sample TrainSampler::next_stage1() {
  const LoadedObject& o = d_->train[static_cast<size_t>(rng_.below(d_->train.size()))];
  return {&o, rng_.range_int(0, d_->n_views() - 1)};
}

Stage2Sample TrainSampler::next_stage2() {
  const LoadedObject& o = d_->train[static_cast<size_t>(rng_.below(d_->train.size()))];
  const auto& kept = o.rec.retained;
  const int i = kept[static_cast<size_t>(rng_.below(kept.size()))];
  int p = rng_.range_int(0, d_->n_views() - 2);
  if (p >= i) ++p;  // uniform over views != i
  return {&o, i, p};
}

PairSample TrainSampler::next_pair() {
  if (pair_objects_.empty())
    throw std::invalid_argument("sampler: no object retains two RGB views");
  const LoadedObject& o = *pair_objects_[static_cast<size_t>(rng_.below(pair_objects_.size()))];
  const auto& kept = o.rec.retained;
  const size_t a = static_cast<size_t>(rng_.below(kept.size()));
  size_t b = static_cast<size_t>(rng_.below(kept.size() - 1));
  if (b >= a) ++b;
  return {&o, kept[a], kept[b]};
}

}  // namespace draw
