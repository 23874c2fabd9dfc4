#pragma once
// Shared fixtures: a tiny on-disk dataset (built once per process) and a
// matching micro model configuration, sized so full training steps run in
// milliseconds.

#include <filesystem>
#include <string>

#include "draw/dataset.hpp"
#include "draw/models.hpp"
#include "draw/synthdata.hpp"

namespace td {

inline draw::DatasetConfig tiny_dataset_config() {
  draw::DatasetConfig c;
  c.n_train = 6;
  c.n_test = 3;
  c.k_retain = 3;
  c.seed = 7;
  c.view.n_views = 4;
  c.view.image_size = 16;
  return c;
}

inline draw::ModelConfig tiny_model_config() {
  draw::ModelConfig c;
  c.image_size = 16;
  c.n_views = 4;
  c.f_c1 = 4;
  c.f_c2 = 6;
  c.f_c3 = 8;
  c.enc_c1 = 4;
  c.enc_c2 = 6;
  c.enc_c3 = 8;
  c.shape_ch = 4;
  c.app_dim = 4;
  c.dec_c1 = 8;
  c.dec_c2 = 6;
  c.dec_c3 = 4;
  c.dec_c4 = 4;
  c.g1_c1 = 4;
  c.g1_hidden = 6;
  c.g1_d1 = 4;
  c.g1_d2 = 4;
  c.g2_hidden = 2;
  c.cr_c1 = 4;
  c.cr_c2 = 6;
  c.cr_c3 = 8;
  c.dv_c1 = 2;
  c.dv_c2 = 3;
  c.dv_c3 = 4;
  return c;
}

inline const std::string& tiny_dataset_dir() {
  static const std::string dir = [] {
    const auto p = std::filesystem::temp_directory_path() / "draw_tiny_dataset";
    std::filesystem::remove_all(p);
    draw::build_dataset(tiny_dataset_config(), p.string());
    return p.string();
  }();
  return dir;
}

inline const draw::Dataset& tiny_dataset() {
  static const draw::Dataset d = draw::load_dataset(tiny_dataset_dir());
  return d;
}

}  // namespace td
