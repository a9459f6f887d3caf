#include "san/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "san/config.hpp"

using json = nlohmann::json;

namespace san {

namespace {
constexpr char kMagic[8] = {'S', 'A', 'N', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(SanModel& model, const PreprocessOptions& prep,
                     const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());

  const std::vector<Param*> params = model.params();
  json header;
  header["version"] = 1;
  header["model"] = model_config_to_json(model.config());
  header["preprocess"] = preprocess_to_json(prep);
  json tensors = json::array();
  std::map<std::string, bool> seen;
  for (const Param* pr : params) {
    SAN_CHECK(!pr->name.empty(), "unnamed parameter cannot be checkpointed");
    SAN_CHECK(!seen.count(pr->name), "duplicate parameter name ", pr->name);
    seen[pr->name] = true;
    tensors.push_back({{"name", pr->name}, {"shape", pr->value.shape()}});
  }
  header["tensors"] = tensors;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  SAN_CHECK_DATA(out.good(), "cannot write checkpoint ", path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(len));
  for (const Param* pr : params) {
    out.write(reinterpret_cast<const char*>(pr->value.data()),
              static_cast<std::streamsize>(pr->value.size() * sizeof(double)));
  }
  SAN_CHECK_DATA(out.good(), "short write on checkpoint ", path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  SAN_CHECK_DATA(in.good(), "cannot open checkpoint ", path);
  char magic[8];
  in.read(magic, sizeof(magic));
  SAN_CHECK_DATA(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
                 path, " is not a checkpoint file");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  SAN_CHECK_DATA(in.good() && len > 0 && len < (1ULL << 30),
                 "corrupt checkpoint header in ", path);
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  SAN_CHECK_DATA(in.good(), "truncated checkpoint header in ", path);

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw DataError(strcat("checkpoint ", path, ": bad header: ", e.what()));
  }
  SAN_CHECK_DATA(header.value("version", 0) == 1,
                 "unsupported checkpoint version in ", path);

  LoadedCheckpoint loaded;
  loaded.config = model_config_from_json(header.at("model"));
  loaded.prep = preprocess_from_json(header.at("preprocess"));
  loaded.model = std::make_unique<SanModel>(loaded.config);

  std::map<std::string, Param*> by_name;
  for (Param* pr : loaded.model->params()) by_name[pr->name] = pr;
  SAN_CHECK_DATA(header.at("tensors").size() == by_name.size(), "checkpoint ",
                 path, " stores ", header.at("tensors").size(),
                 " tensors but the model has ", by_name.size());

  for (const json& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
    auto it = by_name.find(name);
    SAN_CHECK_DATA(it != by_name.end(), "checkpoint ", path,
                   " holds unknown tensor ", name);
    SAN_CHECK_DATA(it->second->value.shape() == shape, "checkpoint ", path,
                   " tensor ", name, " has mismatched shape");
    in.read(reinterpret_cast<char*>(it->second->value.data()),
            static_cast<std::streamsize>(it->second->value.size() *
                                         sizeof(double)));
    SAN_CHECK_DATA(in.good(), "truncated tensor ", name, " in ", path);
  }
  return loaded;
}

void verify_checkpoint_against_manifest(const ModelConfig& config,
                                        const DatasetManifest& manifest,
                                        bool require_identities,
                                        bool require_attributes) {
  if (require_identities) {
    SAN_CHECK_CONFIG(config.num_identities == manifest.num_identities,
                     "checkpoint was trained with C=", config.num_identities,
                     " identities but the manifest has C=",
                     manifest.num_identities);
  }
  if (require_attributes) {
    SAN_CHECK_CONFIG(config.num_attributes == manifest.num_attributes,
                     "checkpoint was trained with M=", config.num_attributes,
                     " attributes but the manifest has M=",
                     manifest.num_attributes);
  }
}

}  // namespace san
