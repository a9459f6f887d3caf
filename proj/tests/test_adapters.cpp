#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "san/adapters.hpp"
#include "san/eval.hpp"
#include "test_util.hpp"

using namespace san;
using test::TempDir;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::filesystem::create_directories(
      std::filesystem::path(path).parent_path());
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("vehicleid fixture: first test image per id becomes the gallery") {
  TempDir tmp("vid");
  const std::string root = tmp.str();
  write_file(root + "/train_test_split/train_list.txt",
             "t0 100\n"
             "t1 100\n"
             "t2 200\n");
  write_file(root + "/train_test_split/test_list_800.txt",
             "e0 300\n"
             "e1 300\n"
             "e2 300\n"
             "e3 400\n"
             "e4 400\n");
  write_file(root + "/attribute/model_attr.txt",
             "100 7\n"
             "300 8\n");

  DatasetManifest m = load_vehicleid(root, 800, {.check_images = false});
  CHECK(m.num_identities == 2);  // train ids 100, 200
  CHECK(m.num_attributes == 2);  // models 7, 8

  const auto gallery = m.split_indices(Split::kGallery);
  const auto probe = m.split_indices(Split::kProbe);
  CHECK(gallery.size() == 2);  // one per test identity
  CHECK(probe.size() == 3);

  // Attributes attach by vehicle id; id 200 and 400 have none.
  CHECK(m.records[0].attribute.has_value());
  CHECK(!m.records[2].attribute.has_value());
  // Extension appended when missing.
  CHECK(m.records[0].image_path == "image/t0.jpg");

  Protocol p = build_protocol(m, "vehicleid");
  CHECK(p.query_idx.size() == 3);
  CHECK(p.gallery_idx.size() == 2);
}

TEST_CASE("veri fixture: names carry identity and camera; same camera excluded") {
  TempDir tmp("veri");
  const std::string root = tmp.str();
  write_file(root + "/name_train.txt",
             "0001_c001_000100_0.jpg\n"
             "0001_c002_000200_0.jpg\n");
  write_file(root + "/name_test.txt",
             "0005_c001_000300_0.jpg\n"
             "0005_c002_000400_0.jpg\n"
             "0006_c003_000500_0.jpg\n");
  write_file(root + "/name_query.txt", "0005_c001_000300_0.jpg\n");
  write_file(root + "/vehicle_type.txt", "1 3\n5 4\n");

  DatasetManifest m = load_veri(root, {.check_images = false});
  CHECK(m.num_identities == 1);
  const auto gallery = m.split_indices(Split::kGallery);
  const auto probe = m.split_indices(Split::kProbe);
  CHECK(gallery.size() == 3);
  CHECK(probe.size() == 1);
  for (const VehicleRecord& r : m.records) REQUIRE(r.camera.has_value());
  CHECK(*m.records[0].camera == 1);
  CHECK(*m.records[1].camera == 2);

  Protocol p = build_protocol(m, "veri");
  // The query is 0005_c001; gallery entry 0 shares camera 1 and is excluded.
  CHECK(p.exclusions[0] == 1);
  CHECK(p.exclusions[1] == 0);
  CHECK(p.exclusions[2] == 0);
}

TEST_CASE("veri names that do not parse are data errors") {
  TempDir tmp("veribad");
  const std::string root = tmp.str();
  write_file(root + "/name_train.txt", "no_camera_token.jpg\n");
  write_file(root + "/name_test.txt", "0005_c001_000300_0.jpg\n");
  write_file(root + "/name_query.txt", "0005_c001_000300_0.jpg\n");
  CHECK_THROWS_AS(load_veri(root, {.check_images = false}), DataError);
}

// The official split sizes; exercised only when the real datasets are
// mounted (SAN_VEHICLEID_DIR / SAN_VERI_DIR).
TEST_CASE("official vehicleid split counts") {
  const char* root = std::getenv("SAN_VEHICLEID_DIR");
  if (!root) return;  // dataset not mounted
  const struct {
    int size;
    int gallery;
    int probe;
  } expect[] = {{800, 800, 6532}, {1600, 1600, 11395}, {2400, 2400, 17638}};
  for (const auto& e : expect) {
    DatasetManifest m = load_vehicleid(root, e.size, {.check_images = false});
    CHECK(m.split_indices(Split::kGallery).size() ==
          static_cast<std::size_t>(e.gallery));
    CHECK(m.split_indices(Split::kProbe).size() ==
          static_cast<std::size_t>(e.probe));
  }
}

TEST_CASE("official veri split counts") {
  const char* root = std::getenv("SAN_VERI_DIR");
  if (!root) return;  // dataset not mounted
  DatasetManifest m = load_veri(root, {.check_images = false});
  CHECK(m.split_indices(Split::kProbe).size() == 1678u);
  CHECK(m.split_indices(Split::kGallery).size() == 11579u);
}
