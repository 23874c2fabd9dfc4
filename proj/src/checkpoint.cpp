#include "draw/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "draw/digest.hpp"

namespace draw {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"image_size", c.image_size},
              {"n_views", c.n_views},
              {"f_c1", c.f_c1},
              {"f_c2", c.f_c2},
              {"f_c3", c.f_c3},
              {"enc_c1", c.enc_c1},
              {"enc_c2", c.enc_c2},
              {"enc_c3", c.enc_c3},
              {"shape_ch", c.shape_ch},
              {"app_dim", c.app_dim},
              {"dec_c1", c.dec_c1},
              {"dec_c2", c.dec_c2},
              {"dec_c3", c.dec_c3},
              {"dec_c4", c.dec_c4},
              {"g1_c1", c.g1_c1},
              {"g1_hidden", c.g1_hidden},
              {"g1_d1", c.g1_d1},
              {"g1_d2", c.g1_d2},
              {"g2_hidden", c.g2_hidden},
              {"cr_c1", c.cr_c1},
              {"cr_c2", c.cr_c2},
              {"cr_c3", c.cr_c3},
              {"dv_c1", c.dv_c1},
              {"dv_c2", c.dv_c2},
              {"dv_c3", c.dv_c3}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.n_views = j.at("n_views").get<int>();
  c.f_c1 = j.at("f_c1").get<int>();
  c.f_c2 = j.at("f_c2").get<int>();
  c.f_c3 = j.at("f_c3").get<int>();
  c.enc_c1 = j.at("enc_c1").get<int>();
  c.enc_c2 = j.at("enc_c2").get<int>();
  c.enc_c3 = j.at("enc_c3").get<int>();
  c.shape_ch = j.at("shape_ch").get<int>();
  c.app_dim = j.at("app_dim").get<int>();
  c.dec_c1 = j.at("dec_c1").get<int>();
  c.dec_c2 = j.at("dec_c2").get<int>();
  c.dec_c3 = j.at("dec_c3").get<int>();
  c.dec_c4 = j.at("dec_c4").get<int>();
  c.g1_c1 = j.at("g1_c1").get<int>();
  c.g1_hidden = j.at("g1_hidden").get<int>();
  c.g1_d1 = j.at("g1_d1").get<int>();
  c.g1_d2 = j.at("g1_d2").get<int>();
  c.g2_hidden = j.at("g2_hidden").get<int>();
  c.cr_c1 = j.at("cr_c1").get<int>();
  c.cr_c2 = j.at("cr_c2").get<int>();
  c.cr_c3 = j.at("cr_c3").get<int>();
  c.dv_c1 = j.at("dv_c1").get<int>();
  c.dv_c2 = j.at("dv_c2").get<int>();
  c.dv_c3 = j.at("dv_c3").get<int>();
  return c;
}

json shape_to_json(const Shape& s) {
  json a = json::array();
  for (int i = 0; i < s.rank; ++i) a.push_back(s[i]);
  return a;
}

Shape shape_from_json(const json& a) {
  if (!a.is_array() || a.size() > 5) throw std::runtime_error("checkpoint: bad shape");
  Shape s;
  s.rank = static_cast<int>(a.size());
  for (int i = 0; i < s.rank; ++i) s.d[i] = a[static_cast<size_t>(i)].get<int>();
  return s;
}

json read_manifest(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw std::invalid_argument("checkpoint: no manifest in " + dir);
  return json::parse(in);
}

CheckpointMeta meta_from_manifest(const json& j) {
  CheckpointMeta meta;
  meta.format_version = j.at("format_version").get<int>();
  if (meta.format_version != 1) throw std::runtime_error("checkpoint: unsupported format version");
  meta.stage = j.at("stage").get<std::string>();
  meta.config = config_from_json(j.at("config"));
  meta.config_hash = j.at("config_hash").get<std::string>();
  if (meta.config_hash != model_config_hash(meta.config))
    throw std::runtime_error("checkpoint: config hash mismatch");
  meta.include_xp = j.value("include_xp", false);
  return meta;
}

}  // namespace

std::string model_config_json(const ModelConfig& cfg) { return config_to_json(cfg).dump(2); }

ModelConfig model_config_from_json(const std::string& text) {
  return config_from_json(json::parse(text));
}

std::string model_config_hash(const ModelConfig& cfg) {
  return hex64(fnv1a64(model_config_json(cfg)));
}

void save_checkpoint(const std::string& dir, const CheckpointMeta& meta,
                     const ParamList& params) {
  fs::create_directories(dir);

  json jparams = json::array();
  size_t offset = 0;
  for (const auto& [name, p] : params) {
    jparams.push_back(json{{"name", name},
                           {"shape", shape_to_json(p->value.shape)},
                           {"dtype", "f32"},
                           {"offset", offset}});
    offset += static_cast<size_t>(p->value.size()) * sizeof(float);
  }

  json jm{{"format_version", meta.format_version},
          {"stage", meta.stage},
          {"config", config_to_json(meta.config)},
          {"config_hash", model_config_hash(meta.config)},
          {"include_xp", meta.include_xp},
          {"params", jparams}};
  {
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw std::runtime_error("checkpoint: cannot write manifest in " + dir);
    out << jm.dump(2) << "\n";
  }
  std::ofstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("checkpoint: cannot write params.bin in " + dir);
  for (const auto& [name, p] : params)
    bin.write(reinterpret_cast<const char*>(p->value.v.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(float)));
}

CheckpointMeta read_checkpoint_meta(const std::string& dir) {
  return meta_from_manifest(read_manifest(dir));
}

CheckpointMeta load_checkpoint(const std::string& dir, const ParamList& params) {
  json j = read_manifest(dir);
  CheckpointMeta meta = meta_from_manifest(j);

  const json& jparams = j.at("params");
  if (jparams.size() != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch in " + dir);

  std::ifstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("checkpoint: no params.bin in " + dir);

  for (size_t i = 0; i < params.size(); ++i) {
    const json& e = jparams[i];
    const auto& [name, p] = params[i];
    if (e.at("name").get<std::string>() != name)
      throw std::runtime_error("checkpoint: parameter name mismatch: manifest has " +
                               e.at("name").get<std::string>() + ", model expects " + name);
    if (shape_from_json(e.at("shape")) != p->value.shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    if (e.at("dtype").get<std::string>() != "f32")
      throw std::runtime_error("checkpoint: unsupported dtype for " + name);
    bin.seekg(static_cast<std::streamoff>(e.at("offset").get<size_t>()));
    bin.read(reinterpret_cast<char*>(p->value.v.data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    if (!bin) throw std::runtime_error("checkpoint: short read for " + name);
  }
  return meta;
}

}  // namespace draw
