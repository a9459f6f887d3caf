#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "san/datamodel.hpp"
#include "test_util.hpp"

using namespace san;
using test::TempDir;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("identities re-index to a contiguous range") {
  TempDir tmp("manifest");
  const std::string path = tmp.str() + "/m.jsonl";
  write_file(path,
             R"({"path":"a.png","id":7,"attr":null,"attr_soft":false,"camera":null,"split":"train"}
{"path":"b.png","id":7,"attr":null,"attr_soft":false,"camera":null,"split":"train"}
{"path":"c.png","id":9,"attr":null,"attr_soft":false,"camera":null,"split":"train"}
{"path":"d.png","id":9,"attr":null,"attr_soft":false,"camera":null,"split":"train"}
)");
  DatasetManifest m = load_manifest(path, {.check_images = false});
  CHECK(m.num_identities == 2);
  std::set<int> ids;
  for (const VehicleRecord& r : m.records) {
    ids.insert(r.identity);
    CHECK(r.identity < m.num_identities);
  }
  CHECK(ids == std::set<int>{0, 1});
  // Bijection back to the originals.
  CHECK(m.identity_map.at(7) != m.identity_map.at(9));
}

TEST_CASE("re-indexing is a bijection from train identities onto [0, C)") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    DatasetManifest m;
    m.name = "prop";
    const int n = rng.uniform_int(2, 40);
    for (int i = 0; i < n; ++i) {
      VehicleRecord r;
      r.image_path = "x.png";
      r.orig_identity = rng.uniform_int(0, 400);  // gaps and repeats
      r.split = rng.uniform() < 0.7 ? Split::kTrain : Split::kProbe;
      m.records.push_back(r);
    }
    if (m.records[0].split != Split::kTrain) m.records[0].split = Split::kTrain;
    finalize_manifest(m);

    std::set<int> train_orig, train_new;
    for (const VehicleRecord& r : m.records) {
      if (r.split != Split::kTrain) continue;
      train_orig.insert(r.orig_identity);
      train_new.insert(r.identity);
      CHECK(m.identity_map.at(r.orig_identity) == r.identity);
    }
    // Injective on the originals, onto the contiguous range.
    CHECK(train_new.size() == train_orig.size());
    CHECK(static_cast<int>(train_orig.size()) == m.num_identities);
    for (int id : train_new) CHECK(id < m.num_identities);
  }
}

TEST_CASE("gallery-only identities are allowed and sit above C") {
  TempDir tmp("openset");
  const std::string path = tmp.str() + "/m.jsonl";
  write_file(path,
             R"({"path":"a.png","id":1,"attr":null,"attr_soft":false,"camera":null,"split":"train"}
{"path":"b.png","id":5,"attr":null,"attr_soft":false,"camera":null,"split":"gallery"}
{"path":"c.png","id":5,"attr":null,"attr_soft":false,"camera":null,"split":"probe"}
)");
  DatasetManifest m = load_manifest(path, {.check_images = false});
  CHECK(m.num_identities == 1);
  CHECK(m.records[1].identity >= m.num_identities);
  CHECK(m.records[1].identity == m.records[2].identity);
}

TEST_CASE("malformed lines report their line number") {
  TempDir tmp("badline");
  const std::string path = tmp.str() + "/m.jsonl";
  write_file(path,
             R"({"path":"a.png","id":1,"split":"train"}
this is not json
)");
  try {
    load_manifest(path, {.check_images = false});
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("empty manifests are an error, not an empty dataset") {
  TempDir tmp("empty");
  const std::string path = tmp.str() + "/m.jsonl";
  write_file(path, "");
  CHECK_THROWS_AS(load_manifest(path, {.check_images = false}), DataError);
}

TEST_CASE("soft flag without attribute is rejected") {
  TempDir tmp("softbad");
  const std::string path = tmp.str() + "/m.jsonl";
  write_file(path,
             R"({"path":"a.png","id":1,"attr":null,"attr_soft":true,"camera":null,"split":"train"}
)");
  CHECK_THROWS_AS(load_manifest(path, {.check_images = false}), DataError);
}

TEST_CASE("manifest write/load round-trips byte-identically") {
  TempDir tmp("roundtrip");
  const std::string p1 = tmp.str() + "/m.jsonl";
  write_file(p1,
             R"({"path":"a.png","id":3,"attr":9,"attr_soft":false,"camera":2,"split":"train"}
{"path":"b.png","id":8,"attr":null,"attr_soft":false,"camera":null,"split":"probe"}
)");
  DatasetManifest m1 = load_manifest(p1, {.check_images = false});
  const std::string p2 = tmp.str() + "/m2.jsonl";
  write_manifest(m1, p2);
  DatasetManifest m2 = load_manifest(p2, {.check_images = false});
  const std::string p3 = tmp.str() + "/m3.jsonl";
  write_manifest(m2, p3);
  CHECK(slurp(p2) == slurp(p3));
  CHECK(m2.records.size() == m1.records.size());
  for (std::size_t i = 0; i < m1.records.size(); ++i) {
    CHECK(m2.records[i].orig_identity == m1.records[i].orig_identity);
    CHECK(m2.records[i].identity == m1.records[i].identity);
  }
}

TEST_CASE("preprocess resizes to a square and normalizes") {
  Tensor raw({480, 640, 3});
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = 0.25;
  PreprocessOptions opts;
  opts.size = 256;
  Tensor out = preprocess(raw, opts, false);
  CHECK(out.shape() == std::vector<int>{256, 256, 3});
  CHECK(out.at(10, 10, 0) == doctest::Approx((0.25 - 0.5) / 0.5));
}

TEST_CASE("normalization constants come from the options") {
  Tensor raw({4, 4, 3});
  raw.fill(0.8);
  PreprocessOptions opts;
  opts.size = 4;
  opts.mean = {0.4, 0.5, 0.6};
  opts.std = {0.2, 0.25, 0.4};
  Tensor out = preprocess(raw, opts, false);
  CHECK(out.at(1, 1, 0) == doctest::Approx((0.8 - 0.4) / 0.2));
  CHECK(out.at(1, 1, 1) == doctest::Approx((0.8 - 0.5) / 0.25));
  CHECK(out.at(1, 1, 2) == doctest::Approx((0.8 - 0.6) / 0.4));
}

TEST_CASE("flip is an involution") {
  Rng rng(3);
  Tensor raw = test::random_tensor({17, 23, 3}, rng, 0.0, 1.0);
  Tensor twice = hflip(hflip(raw));
  CHECK(test::max_abs_diff(raw, twice) == 0.0);
}

TEST_CASE("preprocess flip mirrors the resized image") {
  Rng rng(5);
  Tensor raw = test::random_tensor({32, 32, 3}, rng, 0.0, 1.0);
  PreprocessOptions opts;
  opts.size = 32;
  Tensor a = preprocess(raw, opts, true);
  Tensor b = hflip(preprocess(raw, opts, false));
  CHECK(test::max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("degenerate 1x1 input upscales to a constant image") {
  Tensor raw({1, 1, 3});
  raw[0] = 0.2;
  raw[1] = 0.4;
  raw[2] = 0.6;
  PreprocessOptions opts;
  opts.size = 256;
  Tensor out = preprocess(raw, opts, false);
  CHECK(out.shape() == std::vector<int>{256, 256, 3});
  for (int y = 0; y < 256; y += 37)
    for (int x = 0; x < 256; x += 41) {
      CHECK(out.at(y, x, 0) == doctest::Approx(out.at(0, 0, 0)));
      CHECK(out.at(y, x, 2) == doctest::Approx(out.at(0, 0, 2)));
    }
}

TEST_CASE("undecodable images name the path") {
  TempDir tmp("badimg");
  const std::string path = tmp.str() + "/not_an_image.png";
  write_file(path, "garbage bytes");
  try {
    load_image(path);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("not_an_image.png") != std::string::npos);
  }
}

TEST_CASE("synthetic generation is deterministic in its arguments") {
  TempDir tmp1("synth1"), tmp2("synth2");
  SynthOptions opts;
  opts.num_ids = 4;
  opts.imgs_per_id = 3;
  opts.num_attrs = 2;
  opts.seed = 12;
  opts.img_size = 64;
  opts.out_dir = tmp1.str();
  DatasetManifest m1 = synth_generate(opts);
  opts.out_dir = tmp2.str();
  DatasetManifest m2 = synth_generate(opts);

  CHECK(slurp(tmp1.str() + "/manifest.jsonl") ==
        slurp(tmp2.str() + "/manifest.jsonl"));
  for (const VehicleRecord& r : m1.records) {
    CHECK(slurp(m1.resolve_image(r)) ==
          slurp(tmp2.str() + "/" + r.image_path));
  }
}

TEST_CASE("every image of one identity carries the same attribute") {
  TempDir tmp("synthattr");
  SynthOptions opts;
  opts.num_ids = 6;
  opts.imgs_per_id = 4;
  opts.num_attrs = 3;
  opts.seed = 5;
  opts.img_size = 64;
  opts.out_dir = tmp.str();
  DatasetManifest m = synth_generate(opts);
  std::map<int, int> attr_of;
  for (const VehicleRecord& r : m.records) {
    REQUIRE(r.attribute.has_value());
    auto [it, inserted] = attr_of.emplace(r.identity, *r.attribute);
    if (!inserted) CHECK(it->second == *r.attribute);
  }
}

TEST_CASE("identities sharing an attribute differ only inside the mark band") {
  SynthOptions opts;
  opts.num_ids = 8;
  opts.imgs_per_id = 2;
  opts.num_attrs = 4;
  opts.seed = 9;
  opts.img_size = 64;
  opts.out_dir = "unused";
  // ids 0 and 4 share attribute 0.
  Tensor a = synth_render_base(opts, 0);
  Tensor b = synth_render_base(opts, 4);
  const auto [lo, hi] = synth_mark_band(opts.img_size);
  double outside = 0.0, inside = 0.0;
  for (int y = 0; y < opts.img_size; ++y)
    for (int x = 0; x < opts.img_size; ++x)
      for (int c = 0; c < 3; ++c) {
        const double d = std::fabs(a.at(y, x, c) - b.at(y, x, c));
        if (y >= lo && y < hi)
          inside += d;
        else
          outside += d;
      }
  CHECK(outside == 0.0);
  CHECK(inside > 0.0);
}

TEST_CASE("splits cover train, gallery and probe per identity") {
  TempDir tmp("synthsplit");
  SynthOptions opts;
  opts.num_ids = 3;
  opts.imgs_per_id = 8;
  opts.num_attrs = 2;
  opts.seed = 1;
  opts.img_size = 64;
  opts.out_dir = tmp.str();
  DatasetManifest m = synth_generate(opts);
  int train = 0, gallery = 0, probe = 0;
  for (const VehicleRecord& r : m.records) {
    if (r.split == Split::kTrain) ++train;
    if (r.split == Split::kGallery) ++gallery;
    if (r.split == Split::kProbe) ++probe;
  }
  CHECK(train == 18);
  CHECK(gallery == 3);
  CHECK(probe == 3);
}

TEST_CASE("withholding attributes keeps index maps stable") {
  TempDir tmp("withhold");
  SynthOptions opts;
  opts.num_ids = 6;
  opts.imgs_per_id = 4;
  opts.num_attrs = 3;
  opts.seed = 21;
  opts.img_size = 64;
  opts.out_dir = tmp.str();
  DatasetManifest m = synth_generate(opts);
  auto [stripped, withheld] = withhold_attributes(m, 0.5, 99);

  CHECK(stripped.num_attributes == m.num_attributes);
  CHECK(stripped.attribute_map == m.attribute_map);
  int dropped = 0;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    if (withheld[i] >= 0) {
      ++dropped;
      CHECK(!stripped.records[i].attribute.has_value());
      CHECK(withheld[i] == *m.records[i].attribute);
    } else {
      CHECK(stripped.records[i].attribute == m.records[i].attribute);
    }
  }
  CHECK(dropped == 12);  // 50% of 24
}
