#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "shiftlens/datagen.hpp"

using namespace shiftlens;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("shiftlens_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("dataset save/load round trip is exact") {
  auto ds = datagen::generate_rooms(40, 17);
  auto dir = temp_dir("roundtrip");
  datagen::save_dataset(ds, dir);
  auto loaded = datagen::load_dataset(dir);
  CHECK(loaded.n == ds.n);
  CHECK(loaded.images == ds.images);
  CHECK(loaded.concept_labels == ds.concept_labels);
  CHECK(loaded.task_labels == ds.task_labels);
  CHECK(loaded.seed == ds.seed);
  CHECK(loaded.schema.name == ds.schema.name);
  CHECK(loaded.schema.concepts.size() == ds.schema.concepts.size());
  fs::remove_all(dir);
}

TEST_CASE("truncated blobs are rejected, not partially loaded") {
  auto ds = datagen::generate_sprites(10, 3);
  auto dir = temp_dir("truncated");
  datagen::save_dataset(ds, dir);
  fs::resize_file(dir / "images.bin", 100);
  CHECK_THROWS_WITH_AS(datagen::load_dataset(dir),
                       doctest::Contains("expected"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("checksum mismatches are detected") {
  auto ds = datagen::generate_sprites(10, 3);
  auto dir = temp_dir("checksum");
  datagen::save_dataset(ds, dir);
  {
    std::fstream f(dir / "images.bin",
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(42);
    char byte = 7;
    f.write(&byte, 1);
  }
  CHECK_THROWS_WITH_AS(datagen::load_dataset(dir),
                       doctest::Contains("checksum"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("unknown schema names are reported by name") {
  auto ds = datagen::generate_sprites(10, 3);
  auto dir = temp_dir("badschema");
  datagen::save_dataset(ds, dir);
  {
    std::ifstream in(dir / "manifest.json");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    auto pos = text.find("\"sprites\"");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 9, "\"blobsss\"");
    std::ofstream out(dir / "manifest.json");
    out << text;
  }
  CHECK_THROWS_WITH_AS(datagen::load_dataset(dir), doctest::Contains("blobsss"),
                       std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("malformed manifest is a clean error") {
  auto dir = temp_dir("badjson");
  std::ofstream(dir / "manifest.json") << "{not json";
  CHECK_THROWS_WITH_AS(datagen::load_dataset(dir), doctest::Contains("manifest"),
                       std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("split sizes follow the ratios") {
  auto s = datagen::split(100, {0.7, 0.15, 0.15}, 1);
  CHECK(s.train.size() == 70);
  CHECK(s.validation.size() == 15);
  CHECK(s.test.size() == 15);

  // largest-remainder rule, ties to the earlier split
  auto t = datagen::split(10, {0.5, 0.25, 0.25}, 1);
  CHECK(t.train.size() == 5);
  CHECK(t.validation.size() == 3);
  CHECK(t.test.size() == 2);
}

TEST_CASE("split partitions are disjoint, complete and seed-deterministic") {
  for (int n : {10, 57, 1000}) {
    auto s = datagen::split(n, {0.7, 0.15, 0.15}, 99);
    std::set<int> seen;
    for (const auto* part : {&s.train, &s.validation, &s.test})
      for (int i : *part) {
        CHECK(i >= 0);
        CHECK(i < n);
        CHECK(seen.insert(i).second);  // disjoint
      }
    CHECK(static_cast<int>(seen.size()) == n);
  }
  auto a = datagen::split(500, {0.7, 0.15, 0.15}, 4);
  auto b = datagen::split(500, {0.7, 0.15, 0.15}, 4);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  CHECK(a.test == b.test);
  auto c = datagen::split(500, {0.7, 0.15, 0.15}, 5);
  CHECK(a.train != c.train);
}

TEST_CASE("bad split ratios are rejected") {
  CHECK_THROWS_AS(datagen::split(10, {0.7, 0.15, 0.2}, 1), std::invalid_argument);
  CHECK_THROWS_AS(datagen::split(10, {1.0, 0.0, 0.0}, 1), std::invalid_argument);
}

TEST_CASE("gather copies the selected rows in order") {
  auto ds = datagen::generate_sprites(20, 8);
  std::vector<int> rows{3, 17, 5};
  auto sub = datagen::gather(ds, rows);
  REQUIRE(sub.n == 3);
  for (int i = 0; i < 3; ++i) {
    auto want = ds.image(rows[static_cast<std::size_t>(i)]);
    auto got = sub.image(i);
    CHECK(std::equal(want.begin(), want.end(), got.begin()));
    CHECK(sub.task_labels[static_cast<std::size_t>(i)] ==
          ds.task_labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])]);
  }
  CHECK_THROWS_AS(datagen::gather(ds, std::vector<int>{25}), std::out_of_range);
}
