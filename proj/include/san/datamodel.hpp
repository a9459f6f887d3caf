#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "san/tensor.hpp"

namespace san {

enum class Split { kTrain, kGallery, kProbe };

Split split_from_string(const std::string& s);
std::string split_to_string(Split s);

struct VehicleRecord {
  std::string image_path;  // relative to the manifest's directory
  int identity = 0;        // contiguous index after re-indexing
  std::optional<int> attribute;  // model/type class, re-indexed
  bool attribute_is_soft = false;
  std::optional<int> camera;
  Split split = Split::kTrain;

  // Labels as they appeared on disk; writers emit these so a manifest
  // round-trips unchanged.
  int orig_identity = 0;
  std::optional<int> orig_attribute;
};

struct DatasetManifest {
  std::string name;
  std::string base_dir;  // directory image paths are resolved against
  std::vector<VehicleRecord> records;
  int num_identities = 0;  // C: distinct identities among train records
  int num_attributes = 0;  // M: distinct attribute labels present
  std::map<int, int> identity_map;   // original id -> contiguous index
  std::map<int, int> attribute_map;  // original attribute -> contiguous index

  std::string resolve_image(const VehicleRecord& r) const;
  std::vector<int> split_indices(Split s) const;
  // Inverse of attribute_map; used when a predicted attribute index has to
  // be written back in the manifest's original label space.
  int orig_attribute_for(int index) const;
};

// Re-indexes identities and attributes in place and fills the sidecar maps.
// Train identities take [0, C); identities seen only in gallery/probe follow
// from C upward so equality tests still work for open-set evaluation.
void finalize_manifest(DatasetManifest& manifest);

struct LoadOptions {
  bool check_images = true;
};

// JSON-lines manifest: one object per line with keys
// (path, id, attr, attr_soft, camera, split).
DatasetManifest load_manifest(const std::string& path, const LoadOptions& opts = {});
void write_manifest(const DatasetManifest& manifest, const std::string& path);

// ---------------------------------------------------------------------------
// Image preprocessing
// ---------------------------------------------------------------------------

struct PreprocessOptions {
  int size = 256;
  std::array<double, 3> mean = {0.5, 0.5, 0.5};
  std::array<double, 3> std = {0.5, 0.5, 0.5};
};

struct ImageTensor {
  Tensor data;         // (size, size, 3), (value - mean) / std per channel
  std::string source;  // image path the tensor came from
};

// Decodes a PNG/JPEG file into (h, w, 3) RGB in [0, 1].
Tensor load_image(const std::string& path);

// Square resize + per-channel normalization + optional horizontal mirror.
Tensor preprocess(const Tensor& raw_rgb01, const PreprocessOptions& opts,
                  bool flip);

ImageTensor load_and_preprocess(const DatasetManifest& manifest,
                                const VehicleRecord& record,
                                const PreprocessOptions& opts, bool flip);

// Mirror around the vertical axis; an involution.
Tensor hflip(const Tensor& hwc);

// ---------------------------------------------------------------------------
// Synthetic toy dataset
// ---------------------------------------------------------------------------

struct SynthOptions {
  int num_ids = 20;
  int imgs_per_id = 8;
  int num_attrs = 4;
  std::uint64_t seed = 0;
  int img_size = 128;
  std::string out_dir;
  // Probability of emitting a record without its attribute label.
  double unlabeled_fraction = 0.0;
};

// Deterministic generator: each identity is a body whose shape and color
// encode its attribute class, plus an identity-unique mark confined to rows
// [h/4, h/2); per-image jitter moves brightness and horizontal position only.
DatasetManifest synth_generate(const SynthOptions& opts);

// The jitter-free identity render; exposed so tests can diff two identities
// pixel by pixel.
Tensor synth_render_base(const SynthOptions& opts, int identity);

// Band that contains every identity mark: [h/4, h/2).
std::pair<int, int> synth_mark_band(int img_size);

// Returns a copy with a deterministic fraction of attribute labels removed,
// plus the withheld values (index-aligned, -1 where nothing was withheld).
std::pair<DatasetManifest, std::vector<int>> withhold_attributes(
    const DatasetManifest& manifest, double fraction, std::uint64_t seed);

}  // namespace san
