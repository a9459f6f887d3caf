#include "san/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "san/check.hpp"
#include "san/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace san {

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "gallery") return Split::kGallery;
  if (s == "probe") return Split::kProbe;
  throw DataError("unknown split '" + s + "' (expected train|gallery|probe)");
}

std::string split_to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kGallery: return "gallery";
    case Split::kProbe: return "probe";
  }
  return "train";
}

std::string DatasetManifest::resolve_image(const VehicleRecord& r) const {
  fs::path p(r.image_path);
  if (p.is_absolute() || base_dir.empty()) return r.image_path;
  return (fs::path(base_dir) / p).string();
}

std::vector<int> DatasetManifest::split_indices(Split s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == s) out.push_back(static_cast<int>(i));
  return out;
}

int DatasetManifest::orig_attribute_for(int index) const {
  for (const auto& [orig, idx] : attribute_map)
    if (idx == index) return orig;
  throw ContractError(strcat("attribute index ", index, " not in manifest map"));
}

void finalize_manifest(DatasetManifest& manifest) {
  manifest.identity_map.clear();
  manifest.attribute_map.clear();

  // Train identities first, in order of appearance, then eval-only ones.
  int next_id = 0;
  for (const VehicleRecord& r : manifest.records)
    if (r.split == Split::kTrain && !manifest.identity_map.count(r.orig_identity))
      manifest.identity_map[r.orig_identity] = next_id++;
  manifest.num_identities = next_id;
  for (const VehicleRecord& r : manifest.records)
    if (!manifest.identity_map.count(r.orig_identity))
      manifest.identity_map[r.orig_identity] = next_id++;

  int next_attr = 0;
  for (const VehicleRecord& r : manifest.records)
    if (r.orig_attribute && !manifest.attribute_map.count(*r.orig_attribute))
      manifest.attribute_map[*r.orig_attribute] = next_attr++;
  manifest.num_attributes = next_attr;

  for (VehicleRecord& r : manifest.records) {
    r.identity = manifest.identity_map.at(r.orig_identity);
    if (r.orig_attribute)
      r.attribute = manifest.attribute_map.at(*r.orig_attribute);
    else
      r.attribute.reset();
    SAN_CHECK_DATA(!r.attribute_is_soft || r.attribute.has_value(),
                   "record ", r.image_path,
                   " is marked attr_soft but has no attribute");
  }
}

DatasetManifest load_manifest(const std::string& path, const LoadOptions& opts) {
  std::ifstream in(path);
  SAN_CHECK_DATA(in.good(), "cannot open manifest ", path);

  DatasetManifest manifest;
  manifest.name = fs::path(path).stem().string();
  manifest.base_dir = fs::path(path).parent_path().string();

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(strcat("manifest ", path, " line ", line_no,
                             ": parse error: ", e.what()));
    }
    try {
      VehicleRecord r;
      r.image_path = obj.at("path").get<std::string>();
      r.orig_identity = obj.at("id").get<int>();
      SAN_CHECK_DATA(r.orig_identity >= 0, "manifest ", path, " line ", line_no,
                     ": negative id");
      if (obj.contains("attr") && !obj["attr"].is_null())
        r.orig_attribute = obj["attr"].get<int>();
      r.attribute_is_soft =
          obj.contains("attr_soft") && !obj["attr_soft"].is_null() &&
          obj["attr_soft"].get<bool>();
      if (obj.contains("camera") && !obj["camera"].is_null())
        r.camera = obj["camera"].get<int>();
      r.split = split_from_string(obj.at("split").get<std::string>());
      manifest.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(strcat("manifest ", path, " line ", line_no,
                             ": bad record: ", e.what()));
    }
  }
  SAN_CHECK_DATA(!manifest.records.empty(), "manifest ", path,
                 " contains no records");

  finalize_manifest(manifest);

  if (opts.check_images) {
    for (const VehicleRecord& r : manifest.records) {
      const std::string img = manifest.resolve_image(r);
      SAN_CHECK_DATA(fs::exists(img), "manifest ", path,
                     " references missing image ", img);
    }
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  SAN_CHECK_DATA(out.good(), "cannot write manifest ", path);
  for (const VehicleRecord& r : manifest.records) {
    json obj;
    obj["path"] = r.image_path;
    obj["id"] = r.orig_identity;
    obj["attr"] = r.orig_attribute ? json(*r.orig_attribute) : json(nullptr);
    obj["attr_soft"] = r.attribute_is_soft;
    obj["camera"] = r.camera ? json(*r.camera) : json(nullptr);
    obj["split"] = split_to_string(r.split);
    out << obj.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

Tensor load_image(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  SAN_CHECK_DATA(!img.empty(), "cannot decode image ", path);
  Tensor out({img.rows, img.cols, 3});
  for (int y = 0; y < img.rows; ++y) {
    const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      // BGR -> RGB
      out.at(y, x, 0) = row[x][2] / 255.0;
      out.at(y, x, 1) = row[x][1] / 255.0;
      out.at(y, x, 2) = row[x][0] / 255.0;
    }
  }
  return out;
}

Tensor hflip(const Tensor& hwc) {
  SAN_CHECK(hwc.ndim() == 3, "hflip expects (h, w, c)");
  const int h = hwc.dim(0), w = hwc.dim(1), c = hwc.dim(2);
  Tensor out({h, w, c});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        out.at(y, x, ch) = hwc.at(y, w - 1 - x, ch);
  return out;
}

Tensor preprocess(const Tensor& raw_rgb01, const PreprocessOptions& opts,
                  bool flip) {
  SAN_CHECK(raw_rgb01.ndim() == 3 && raw_rgb01.dim(2) == 3,
            "preprocess expects (h, w, 3)");
  SAN_CHECK_CONFIG(opts.size > 0, "preprocess size must be positive");
  const int h = raw_rgb01.dim(0), w = raw_rgb01.dim(1);

  cv::Mat src(h, w, CV_64FC3, const_cast<double*>(raw_rgb01.data()));
  cv::Mat resized;
  if (h == opts.size && w == opts.size) {
    resized = src.clone();
  } else {
    cv::resize(src, resized, cv::Size(opts.size, opts.size), 0, 0,
               cv::INTER_LINEAR);
  }

  Tensor out({opts.size, opts.size, 3});
  for (int y = 0; y < opts.size; ++y) {
    const cv::Vec3d* row = resized.ptr<cv::Vec3d>(y);
    for (int x = 0; x < opts.size; ++x) {
      const int sx = flip ? opts.size - 1 - x : x;
      for (int ch = 0; ch < 3; ++ch)
        out.at(y, x, ch) = (row[sx][ch] - opts.mean[ch]) / opts.std[ch];
    }
  }
  return out;
}

ImageTensor load_and_preprocess(const DatasetManifest& manifest,
                                const VehicleRecord& record,
                                const PreprocessOptions& opts, bool flip) {
  const std::string path = manifest.resolve_image(record);
  return ImageTensor{preprocess(load_image(path), opts, flip), path};
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace {

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  return {r + (v - c), g + (v - c), b + (v - c)};
}

std::array<double, 3> attr_color(int attr, int num_attrs) {
  return hsv_to_rgb(360.0 * attr / num_attrs, 0.8, 0.85);
}

void fill_rect(Tensor& img, int y0, int y1, int x0, int x1,
               const std::array<double, 3>& color) {
  y0 = std::max(y0, 0);
  x0 = std::max(x0, 0);
  y1 = std::min(y1, img.dim(0));
  x1 = std::min(x1, img.dim(1));
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = color[ch];
}

void save_png(const Tensor& img, const std::string& path) {
  const int h = img.dim(0), w = img.dim(1);
  cv::Mat mat(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    cv::Vec3b* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      auto to_u8 = [](double v) {
        return static_cast<unsigned char>(
            std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      };
      // RGB -> BGR
      row[x][0] = to_u8(img.at(y, x, 2));
      row[x][1] = to_u8(img.at(y, x, 1));
      row[x][2] = to_u8(img.at(y, x, 0));
    }
  }
  SAN_CHECK_DATA(cv::imwrite(path, mat, {cv::IMWRITE_PNG_COMPRESSION, 3}),
                 "cannot write image ", path);
}

}  // namespace

std::pair<int, int> synth_mark_band(int img_size) {
  return {img_size / 4, img_size / 2};
}

Tensor synth_render_base(const SynthOptions& opts, int identity) {
  const int s = opts.img_size;
  Tensor img({s, s, 3});
  fill_rect(img, 0, s, 0, s, {0.15, 0.15, 0.15});

  const int attr = identity % opts.num_attrs;
  const auto body = attr_color(attr, opts.num_attrs);
  const int by0 = s / 8, by1 = s - s / 8;
  const int bx0 = s / 6, bx1 = s - s / 6;
  const int shape = attr % 3;
  if (shape == 0) {
    fill_rect(img, by0, by1, bx0, bx1, body);
  } else {
    const double cy = 0.5 * (by0 + by1), cx = 0.5 * (bx0 + bx1);
    const double ry = 0.5 * (by1 - by0), rx = 0.5 * (bx1 - bx0);
    for (int y = by0; y < by1; ++y) {
      for (int x = bx0; x < bx1; ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        const bool inside =
            shape == 1 ? dy * dy + dx * dx <= 1.0
                       : std::fabs(dy) + std::fabs(dx) <= 1.0;
        if (inside)
          for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = body[ch];
      }
    }
  }

  // Identity-unique mark: a few small blocks confined to the band, so part
  // features over those rows carry strictly more information than the
  // image-wide average.
  const auto [band_lo, band_hi] = synth_mark_band(s);
  Rng mark_rng = Rng(opts.seed).fork(0x4d41524bULL).fork(identity);
  const int block = std::max(4, s / 16);
  for (int k = 0; k < 3; ++k) {
    const int y = mark_rng.uniform_int(band_lo, band_hi - block - 1);
    const int x = mark_rng.uniform_int(bx0 + 2, bx1 - block - 3);
    const auto col = hsv_to_rgb(mark_rng.uniform(0.0, 360.0),
                                mark_rng.uniform(0.5, 1.0),
                                mark_rng.uniform(0.3, 1.0));
    fill_rect(img, y, y + block, x, x + block, col);
  }
  return img;
}

DatasetManifest synth_generate(const SynthOptions& opts) {
  SAN_CHECK_CONFIG(opts.num_ids >= 2, "synth needs num_ids >= 2");
  SAN_CHECK_CONFIG(opts.imgs_per_id >= 2, "synth needs imgs_per_id >= 2");
  SAN_CHECK_CONFIG(opts.num_attrs >= 2, "synth needs num_attrs >= 2");
  SAN_CHECK_CONFIG(!opts.out_dir.empty(), "synth needs an output directory");
  SAN_CHECK_CONFIG(opts.unlabeled_fraction >= 0.0 && opts.unlabeled_fraction <= 1.0,
                   "unlabeled_fraction must be in [0, 1]");

  const int s = opts.img_size;
  fs::create_directories(fs::path(opts.out_dir) / "images");

  DatasetManifest manifest;
  manifest.name = "synth";
  manifest.base_dir = opts.out_dir;

  const int n_train = std::max(1, (3 * opts.imgs_per_id) / 4);
  const int rest = opts.imgs_per_id - n_train;
  const int n_gallery = rest / 2;

  Rng root(opts.seed);
  for (int id = 0; id < opts.num_ids; ++id) {
    const Tensor base = synth_render_base(opts, id);
    const std::string id_dir = "images/id_" + std::to_string(id);
    fs::create_directories(fs::path(opts.out_dir) / id_dir);
    Rng id_rng = root.fork(0x494d47ULL).fork(id);
    for (int j = 0; j < opts.imgs_per_id; ++j) {
      const double brightness = id_rng.uniform(0.9, 1.1);
      const int dx = id_rng.uniform_int(-s / 32, s / 32);
      Tensor img({s, s, 3});
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          int sx = x - dx;
          sx = std::clamp(sx, 0, s - 1);
          for (int ch = 0; ch < 3; ++ch)
            img.at(y, x, ch) = std::clamp(base.at(y, sx, ch) * brightness, 0.0, 1.0);
        }
      }
      const std::string rel = id_dir + "/img_" + std::to_string(j) + ".png";
      save_png(img, (fs::path(opts.out_dir) / rel).string());

      VehicleRecord r;
      r.image_path = rel;
      r.orig_identity = id;
      const bool withhold = opts.unlabeled_fraction > 0.0 &&
                            id_rng.uniform() < opts.unlabeled_fraction;
      if (!withhold) r.orig_attribute = id % opts.num_attrs;
      r.camera = j;
      r.split = j < n_train              ? Split::kTrain
                : j < n_train + n_gallery ? Split::kGallery
                                          : Split::kProbe;
      manifest.records.push_back(std::move(r));
    }
  }

  finalize_manifest(manifest);
  write_manifest(manifest, (fs::path(opts.out_dir) / "manifest.jsonl").string());
  return manifest;
}

std::pair<DatasetManifest, std::vector<int>> withhold_attributes(
    const DatasetManifest& manifest, double fraction, std::uint64_t seed) {
  SAN_CHECK(fraction >= 0.0 && fraction <= 1.0, "fraction must be in [0, 1]");
  DatasetManifest out = manifest;
  std::vector<int> withheld(manifest.records.size(), -1);

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < out.records.size(); ++i)
    if (out.records[i].orig_attribute) candidates.push_back(i);

  Rng rng(seed);
  rng.shuffle(candidates);
  const std::size_t n_drop =
      static_cast<std::size_t>(std::llround(fraction * candidates.size()));
  // Index maps and M are kept from the input manifest so that attribute
  // indices stay comparable before and after withholding.
  for (std::size_t k = 0; k < n_drop; ++k) {
    VehicleRecord& r = out.records[candidates[k]];
    withheld[candidates[k]] = *r.attribute;
    r.orig_attribute.reset();
    r.attribute.reset();
    r.attribute_is_soft = false;
  }
  return {std::move(out), std::move(withheld)};
}

}  // namespace san
