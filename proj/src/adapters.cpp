#include "san/adapters.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "san/check.hpp"

namespace fs = std::filesystem;

namespace san {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  SAN_CHECK_DATA(in.good(), "cannot open ", path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
      line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::pair<std::string, int> parse_name_id(const std::string& line,
                                          const std::string& path, int line_no) {
  std::istringstream ss(line);
  std::string name;
  long long id = -1;
  ss >> name >> id;
  SAN_CHECK_DATA(!name.empty() && id >= 0, path, " line ", line_no,
                 ": expected '<name> <id>', got '", line, "'");
  return {name, static_cast<int>(id)};
}

std::string with_jpg(const std::string& name) {
  return name.find('.') == std::string::npos ? name + ".jpg" : name;
}

std::map<int, int> load_id_attr_file(const std::string& path) {
  std::map<int, int> out;
  if (!fs::exists(path)) return out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::istringstream ss(lines[i]);
    long long vid = -1, attr = -1;
    ss >> vid >> attr;
    SAN_CHECK_DATA(vid >= 0 && attr >= 0, path, " line ", i + 1,
                   ": expected '<vehicle_id> <attr_id>', got '", lines[i], "'");
    out[static_cast<int>(vid)] = static_cast<int>(attr);
  }
  return out;
}

}  // namespace

DatasetManifest load_vehicleid(const std::string& root, int test_size,
                               const LoadOptions& opts) {
  const fs::path base(root);
  DatasetManifest manifest;
  manifest.name = "vehicleid_test" + std::to_string(test_size);
  manifest.base_dir = root;

  const auto model_attr =
      load_id_attr_file((base / "attribute" / "model_attr.txt").string());

  const std::string train_list =
      (base / "train_test_split" / "train_list.txt").string();
  const auto train_lines = read_lines(train_list);
  for (std::size_t i = 0; i < train_lines.size(); ++i) {
    auto [name, vid] = parse_name_id(train_lines[i], train_list, i + 1);
    VehicleRecord r;
    r.image_path = "image/" + with_jpg(name);
    r.orig_identity = vid;
    auto it = model_attr.find(vid);
    if (it != model_attr.end()) r.orig_attribute = it->second;
    r.split = Split::kTrain;
    manifest.records.push_back(std::move(r));
  }

  const std::string test_list =
      (base / "train_test_split" /
       ("test_list_" + std::to_string(test_size) + ".txt"))
          .string();
  const auto test_lines = read_lines(test_list);
  std::set<int> seen_test_ids;
  for (std::size_t i = 0; i < test_lines.size(); ++i) {
    auto [name, vid] = parse_name_id(test_lines[i], test_list, i + 1);
    VehicleRecord r;
    r.image_path = "image/" + with_jpg(name);
    r.orig_identity = vid;
    auto it = model_attr.find(vid);
    if (it != model_attr.end()) r.orig_attribute = it->second;
    // First listed image of each identity serves as its gallery entry.
    r.split = seen_test_ids.insert(vid).second ? Split::kGallery : Split::kProbe;
    manifest.records.push_back(std::move(r));
  }
  SAN_CHECK_DATA(!manifest.records.empty(), "VehicleID root ", root,
                 " produced no records");

  finalize_manifest(manifest);
  if (opts.check_images) {
    for (const VehicleRecord& r : manifest.records)
      SAN_CHECK_DATA(fs::exists(manifest.resolve_image(r)), "missing image ",
                     manifest.resolve_image(r));
  }
  return manifest;
}

namespace {

// "0002_c002_00030600_0.jpg" -> id 2, camera 2.
std::pair<int, int> parse_veri_name(const std::string& name) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : name) {
    if (ch == '_' || ch == '.') {
      if (!cur.empty()) tokens.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  SAN_CHECK_DATA(tokens.size() >= 2 && !tokens[1].empty() && tokens[1][0] == 'c',
                 "VeRi file name '", name, "' is not '<id>_c<cam>_...'");
  try {
    const int id = std::stoi(tokens[0]);
    const int cam = std::stoi(tokens[1].substr(1));
    return {id, cam};
  } catch (const std::exception&) {
    throw DataError("VeRi file name '" + name + "' has non-numeric id or camera");
  }
}

}  // namespace

DatasetManifest load_veri(const std::string& root, const LoadOptions& opts) {
  const fs::path base(root);
  DatasetManifest manifest;
  manifest.name = "veri";
  manifest.base_dir = root;

  const auto type_attr = load_id_attr_file((base / "vehicle_type.txt").string());

  const struct {
    const char* list;
    const char* dir;
    Split split;
  } sections[] = {
      {"name_train.txt", "image_train", Split::kTrain},
      {"name_test.txt", "image_test", Split::kGallery},
      {"name_query.txt", "image_query", Split::kProbe},
  };
  for (const auto& sec : sections) {
    const std::string list_path = (base / sec.list).string();
    const auto lines = read_lines(list_path);
    for (const std::string& name : lines) {
      auto [vid, cam] = parse_veri_name(name);
      VehicleRecord r;
      r.image_path = std::string(sec.dir) + "/" + name;
      r.orig_identity = vid;
      r.camera = cam;
      auto it = type_attr.find(vid);
      if (it != type_attr.end()) r.orig_attribute = it->second;
      r.split = sec.split;
      manifest.records.push_back(std::move(r));
    }
  }
  SAN_CHECK_DATA(!manifest.records.empty(), "VeRi root ", root,
                 " produced no records");

  finalize_manifest(manifest);
  if (opts.check_images) {
    for (const VehicleRecord& r : manifest.records)
      SAN_CHECK_DATA(fs::exists(manifest.resolve_image(r)), "missing image ",
                     manifest.resolve_image(r));
  }
  return manifest;
}

}  // namespace san
