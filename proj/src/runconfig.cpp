#include "draw/runconfig.hpp"

#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "draw/digest.hpp"

namespace draw {

using json = nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw std::invalid_argument("config: unknown key " + where + "." + key);
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& into) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      into = it->get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument("config: bad value for " + std::string(key));
    }
  }
}

json view_json(const ViewConfig& v) {
  return json{{"n_views", v.n_views},
              {"image_size", v.image_size},
              {"camera_distance", v.camera_distance},
              {"near", v.near},
              {"far", v.far},
              {"elevation_deg", v.elevation_deg},
              {"ortho_half", v.ortho_half}};
}

void view_parse(const json& j, ViewConfig& v) {
  check_keys(j, "datagen.view",
             {"n_views", "image_size", "camera_distance", "near", "far", "elevation_deg",
              "ortho_half"});
  get_if(j, "n_views", v.n_views);
  get_if(j, "image_size", v.image_size);
  get_if(j, "camera_distance", v.camera_distance);
  get_if(j, "near", v.near);
  get_if(j, "far", v.far);
  get_if(j, "elevation_deg", v.elevation_deg);
  get_if(j, "ortho_half", v.ortho_half);
}

json datagen_json(const DatasetConfig& c) {
  return json{{"n_train", c.n_train},
              {"n_test", c.n_test},
              {"k_retain", c.k_retain},
              {"seed", c.seed},
              {"appearance_base", c.appearance_base},
              {"min_parts", c.bounds.min_parts},
              {"max_parts", c.bounds.max_parts},
              {"view", view_json(c.view)}};
}

void datagen_parse(const json& j, DatasetConfig& c) {
  check_keys(j, "datagen",
             {"n_train", "n_test", "k_retain", "seed", "appearance_base", "min_parts",
              "max_parts", "view"});
  get_if(j, "n_train", c.n_train);
  get_if(j, "n_test", c.n_test);
  get_if(j, "k_retain", c.k_retain);
  get_if(j, "seed", c.seed);
  get_if(j, "appearance_base", c.appearance_base);
  get_if(j, "min_parts", c.bounds.min_parts);
  get_if(j, "max_parts", c.bounds.max_parts);
  if (auto it = j.find("view"); it != j.end()) view_parse(*it, c.view);
}

constexpr std::initializer_list<const char*> kModelKeys = {
    "image_size", "n_views", "f_c1",   "f_c2",   "f_c3",     "enc_c1",    "enc_c2",
    "enc_c3",     "shape_ch", "app_dim", "dec_c1", "dec_c2",   "dec_c3",    "dec_c4",
    "g1_c1",      "g1_hidden", "g1_d1",  "g1_d2",  "g2_hidden", "cr_c1",     "cr_c2",
    "cr_c3",      "dv_c1",    "dv_c2",  "dv_c3"};

json model_json(const ModelConfig& c) {
  return json{{"image_size", c.image_size}, {"n_views", c.n_views},
              {"f_c1", c.f_c1},             {"f_c2", c.f_c2},
              {"f_c3", c.f_c3},             {"enc_c1", c.enc_c1},
              {"enc_c2", c.enc_c2},         {"enc_c3", c.enc_c3},
              {"shape_ch", c.shape_ch},     {"app_dim", c.app_dim},
              {"dec_c1", c.dec_c1},         {"dec_c2", c.dec_c2},
              {"dec_c3", c.dec_c3},         {"dec_c4", c.dec_c4},
              {"g1_c1", c.g1_c1},           {"g1_hidden", c.g1_hidden},
              {"g1_d1", c.g1_d1},           {"g1_d2", c.g1_d2},
              {"g2_hidden", c.g2_hidden},   {"cr_c1", c.cr_c1},
              {"cr_c2", c.cr_c2},           {"cr_c3", c.cr_c3},
              {"dv_c1", c.dv_c1},           {"dv_c2", c.dv_c2},
              {"dv_c3", c.dv_c3}};
}

void model_parse(const json& j, ModelConfig& c) {
  check_keys(j, "model", kModelKeys);
  get_if(j, "image_size", c.image_size);
  get_if(j, "n_views", c.n_views);
  get_if(j, "f_c1", c.f_c1);
  get_if(j, "f_c2", c.f_c2);
  get_if(j, "f_c3", c.f_c3);
  get_if(j, "enc_c1", c.enc_c1);
  get_if(j, "enc_c2", c.enc_c2);
  get_if(j, "enc_c3", c.enc_c3);
  get_if(j, "shape_ch", c.shape_ch);
  get_if(j, "app_dim", c.app_dim);
  get_if(j, "dec_c1", c.dec_c1);
  get_if(j, "dec_c2", c.dec_c2);
  get_if(j, "dec_c3", c.dec_c3);
  get_if(j, "dec_c4", c.dec_c4);
  get_if(j, "g1_c1", c.g1_c1);
  get_if(j, "g1_hidden", c.g1_hidden);
  get_if(j, "g1_d1", c.g1_d1);
  get_if(j, "g1_d2", c.g1_d2);
  get_if(j, "g2_hidden", c.g2_hidden);
  get_if(j, "cr_c1", c.cr_c1);
  get_if(j, "cr_c2", c.cr_c2);
  get_if(j, "cr_c3", c.cr_c3);
  get_if(j, "dv_c1", c.dv_c1);
  get_if(j, "dv_c2", c.dv_c2);
  get_if(j, "dv_c3", c.dv_c3);
}

json train_section_json(const TrainSection& t) {
  return json{{"steps", t.steps},
              {"batch_size", t.batch_size},
              {"seed", t.seed},
              {"log_every", t.log_every},
              {"lr", t.lr},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"eps", t.eps},
              {"lambda_f", t.weights.lambda_f},
              {"lambda_3d", t.weights.lambda_3d},
              {"lambda_g", t.weights.lambda_g},
              {"lambda_1", t.weights.lambda_1},
              {"lambda_2", t.weights.lambda_2},
              {"include_xp", t.include_xp}};
}

void train_section_parse(const json& j, const std::string& where, TrainSection& t) {
  check_keys(j, where,
             {"steps", "batch_size", "seed", "log_every", "lr", "beta1", "beta2", "eps",
              "lambda_f", "lambda_3d", "lambda_g", "lambda_1", "lambda_2", "include_xp"});
  get_if(j, "steps", t.steps);
  get_if(j, "batch_size", t.batch_size);
  get_if(j, "seed", t.seed);
  get_if(j, "log_every", t.log_every);
  get_if(j, "lr", t.lr);
  get_if(j, "beta1", t.beta1);
  get_if(j, "beta2", t.beta2);
  get_if(j, "eps", t.eps);
  get_if(j, "lambda_f", t.weights.lambda_f);
  get_if(j, "lambda_3d", t.weights.lambda_3d);
  get_if(j, "lambda_g", t.weights.lambda_g);
  get_if(j, "lambda_1", t.weights.lambda_1);
  get_if(j, "lambda_2", t.weights.lambda_2);
  get_if(j, "include_xp", t.include_xp);
}

json eval_json(const EvalSection& e) {
  return json{{"probe_shape_seed", e.probe_shape_seed},
              {"probe_app_seed_a", e.probe_app_seed_a},
              {"probe_app_seed_b", e.probe_app_seed_b},
              {"probe_view", e.probe_view}};
}

void eval_parse(const json& j, EvalSection& e) {
  check_keys(j, "eval",
             {"probe_shape_seed", "probe_app_seed_a", "probe_app_seed_b", "probe_view"});
  get_if(j, "probe_shape_seed", e.probe_shape_seed);
  get_if(j, "probe_app_seed_a", e.probe_app_seed_a);
  get_if(j, "probe_app_seed_b", e.probe_app_seed_b);
  get_if(j, "probe_view", e.probe_view);
}

}  // namespace

TrainConfig TrainSection::to_train_config() const {
  TrainConfig c;
  c.steps = steps;
  c.batch_size = batch_size;
  c.seed = seed;
  c.log_every = log_every;
  c.opt.lr = lr;
  c.opt.beta1 = beta1;
  c.opt.beta2 = beta2;
  c.opt.eps = eps;
  c.weights = weights;
  c.include_xp = include_xp;
  return c;
}

std::string run_config_json(const RunConfig& cfg) {
  return json{{"schema_version", cfg.schema_version},
              {"datagen", datagen_json(cfg.datagen)},
              {"model", model_json(cfg.model)},
              {"train",
               json{{"stage1", train_section_json(cfg.stage1)},
                    {"stage2", train_section_json(cfg.stage2)},
                    {"baseline", train_section_json(cfg.baseline)}}},
              {"eval", eval_json(cfg.eval)}}
      .dump(2);
}

std::string run_config_hash(const RunConfig& cfg) {
  return hex64(fnv1a64(run_config_json(cfg)));
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: parse error: ") + e.what());
  }
  check_keys(j, "<root>", {"schema_version", "datagen", "model", "train", "eval"});
  RunConfig cfg;
  get_if(j, "schema_version", cfg.schema_version);
  if (cfg.schema_version != 1)
    throw std::invalid_argument("config: unsupported schema_version " +
                                std::to_string(cfg.schema_version));
  if (auto it = j.find("datagen"); it != j.end()) datagen_parse(*it, cfg.datagen);
  if (auto it = j.find("model"); it != j.end()) model_parse(*it, cfg.model);
  if (auto it = j.find("train"); it != j.end()) {
    check_keys(*it, "train", {"stage1", "stage2", "baseline"});
    if (auto s = it->find("stage1"); s != it->end())
      train_section_parse(*s, "train.stage1", cfg.stage1);
    if (auto s = it->find("stage2"); s != it->end())
      train_section_parse(*s, "train.stage2", cfg.stage2);
    if (auto s = it->find("baseline"); s != it->end())
      train_section_parse(*s, "train.baseline", cfg.baseline);
  }
  if (auto it = j.find("eval"); it != j.end()) eval_parse(*it, cfg.eval);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  return run_config_from_json(
      std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));
}

}  // namespace draw
