#include "san/config.hpp"

#include <filesystem>
#include <fstream>

#include "san/check.hpp"

using json = nlohmann::json;

namespace san {

json model_config_to_json(const ModelConfig& c) {
  json j;
  j["backbone"] = c.backbone;
  j["tiny_widths"] = c.tiny_widths;
  j["input_size"] = c.input_size;
  j["q"] = c.q;
  j["d"] = c.d;
  j["num_identities"] = c.num_identities;
  j["num_attributes"] = c.num_attributes;
  j["branch"] = branch_to_string(c.branch);
  j["reducer_bn_relu"] = c.reducer_bn_relu;
  j["l2_normalize"] = c.l2_normalize;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.backbone = j.value("backbone", c.backbone);
    if (j.contains("tiny_widths"))
      c.tiny_widths = j["tiny_widths"].get<std::vector<int>>();
    c.input_size = j.value("input_size", c.input_size);
    c.q = j.value("q", c.q);
    c.d = j.value("d", c.d);
    c.num_identities = j.value("num_identities", c.num_identities);
    c.num_attributes = j.value("num_attributes", c.num_attributes);
    if (j.contains("branch"))
      c.branch = branch_from_string(j["branch"].get<std::string>());
    c.reducer_bn_relu = j.value("reducer_bn_relu", c.reducer_bn_relu);
    c.l2_normalize = j.value("l2_normalize", c.l2_normalize);
  } catch (const json::exception& e) {
    throw ConfigError(strcat("bad model config: ", e.what()));
  }
  return c;
}

json preprocess_to_json(const PreprocessOptions& p) {
  json j;
  j["size"] = p.size;
  j["mean"] = p.mean;
  j["std"] = p.std;
  return j;
}

PreprocessOptions preprocess_from_json(const json& j) {
  PreprocessOptions p;
  try {
    p.size = j.value("size", p.size);
    if (j.contains("mean")) p.mean = j["mean"].get<std::array<double, 3>>();
    if (j.contains("std")) p.std = j["std"].get<std::array<double, 3>>();
  } catch (const json::exception& e) {
    throw ConfigError(strcat("bad preprocess config: ", e.what()));
  }
  return p;
}

json train_options_to_json(const TrainOptions& t) {
  json j;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["lr"] = t.lr;
  j["momentum"] = t.momentum;
  j["weight_decay"] = t.weight_decay;
  j["lr_step"] = t.lr_step;
  j["lr_gamma"] = t.lr_gamma;
  j["flip_augment"] = t.flip_augment;
  j["loss_weights"] = t.loss.weights;
  j["label_smoothing"] = t.loss.label_smoothing;
  j["checkpoint_every"] = t.checkpoint_every;
  return j;
}

TrainOptions train_options_from_json(const json& j) {
  TrainOptions t;
  try {
    t.epochs = j.value("epochs", t.epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.lr = j.value("lr", t.lr);
    t.momentum = j.value("momentum", t.momentum);
    t.weight_decay = j.value("weight_decay", t.weight_decay);
    t.lr_step = j.value("lr_step", t.lr_step);
    t.lr_gamma = j.value("lr_gamma", t.lr_gamma);
    t.flip_augment = j.value("flip_augment", t.flip_augment);
    if (j.contains("loss_weights"))
      t.loss.weights = j["loss_weights"].get<std::array<double, 3>>();
    t.loss.label_smoothing = j.value("label_smoothing", t.loss.label_smoothing);
    t.checkpoint_every = j.value("checkpoint_every", t.checkpoint_every);
  } catch (const json::exception& e) {
    throw ConfigError(strcat("bad optimizer config: ", e.what()));
  }
  return t;
}

json RunConfig::to_json() const {
  json j;
  j["schema_version"] = schema_version;
  j["dataset"] = {{"train_manifest", train_manifest},
                  {"eval_manifest", eval_manifest},
                  {"protocol", protocol}};
  j["model"] = model_config_to_json(model);
  j["preprocess"] = preprocess_to_json(preprocess);
  j["optim"] = train_options_to_json(train);
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    c.schema_version = j.value("schema_version", 1);
    SAN_CHECK_CONFIG(c.schema_version == 1, "unsupported config schema version ",
                     c.schema_version);
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      c.train_manifest = d.value("train_manifest", std::string());
      c.eval_manifest = d.value("eval_manifest", std::string());
      c.protocol = d.value("protocol", c.protocol);
    }
    if (j.contains("model")) c.model = model_config_from_json(j["model"]);
    if (j.contains("preprocess"))
      c.preprocess = preprocess_from_json(j["preprocess"]);
    if (j.contains("optim")) c.train = train_options_from_json(j["optim"]);
    c.seed = j.value("seed", std::uint64_t{0});
    c.out_dir = j.value("out_dir", c.out_dir);
  } catch (const json::exception& e) {
    throw ConfigError(strcat("bad run config: ", e.what()));
  }
  // The preprocess size must agree with the model's input size; a single
  // knob would hide the relationship, so we validate instead.
  SAN_CHECK_CONFIG(c.preprocess.size == c.model.input_size,
                   "preprocess.size (", c.preprocess.size,
                   ") must equal model.input_size (", c.model.input_size, ")");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  SAN_CHECK_CONFIG(in.good(), "cannot open config ", path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(strcat("config ", path, ": parse error: ", e.what()));
  }
  return RunConfig::from_json(j);
}

void write_run_config(const RunConfig& config, const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  SAN_CHECK_CONFIG(out.good(), "cannot write config ", path);
  out << config.to_json().dump(2) << "\n";
}

}  // namespace san
