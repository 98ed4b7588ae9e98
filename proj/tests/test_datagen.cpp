#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "shiftlens/datagen.hpp"

using namespace shiftlens;
using datagen::LatentFactorDataset;

namespace {

std::vector<std::uint8_t> render_sprite_with(
    const datagen::ConceptSchema& schema, std::array<std::int32_t, 5> labels) {
  std::vector<std::uint8_t> img(static_cast<std::size_t>(schema.pixels_per_image()));
  datagen::render_sprite(schema, labels, img);
  return img;
}

int count_nonzero(const std::vector<std::uint8_t>& img) {
  int n = 0;
  for (auto p : img) n += p != 0;
  return n;
}

}  // namespace

TEST_CASE("schemas match the published factor tables") {
  auto sprites = datagen::sprites_schema();
  REQUIRE(sprites.concepts.size() == 5);
  CHECK(sprites.concepts[0].name == "shape");
  CHECK(sprites.concepts[0].cardinality == 3);
  CHECK(sprites.concepts[1].name == "scale");
  CHECK(sprites.concepts[1].cardinality == 6);
  CHECK(sprites.concepts[1].value_grid.front() == doctest::Approx(0.5));
  CHECK(sprites.concepts[1].value_grid.back() == doctest::Approx(1.0));
  CHECK(sprites.concepts[2].cardinality == 40);
  CHECK(sprites.concepts[3].cardinality == 32);
  CHECK(sprites.concepts[4].cardinality == 32);
  CHECK(sprites.num_task_classes == 3);
  CHECK(sprites.channels == 1);

  auto rooms = datagen::rooms_schema();
  REQUIRE(rooms.concepts.size() == 6);
  CHECK(rooms.concepts[0].name == "floor_hue");
  CHECK(rooms.concepts[0].cardinality == 10);
  CHECK(rooms.concepts[3].name == "scale");
  CHECK(rooms.concepts[3].cardinality == 8);
  CHECK(rooms.concepts[4].cardinality == 4);
  CHECK(rooms.concepts[5].cardinality == 15);
  CHECK(rooms.concepts[5].value_grid.front() == doctest::Approx(-30.0));
  CHECK(rooms.concepts[5].value_grid.back() == doctest::Approx(30.0));
  CHECK(rooms.num_task_classes == 32);
  CHECK(rooms.channels == 3);
}

TEST_CASE("forced square renders as a centered axis-aligned filled rectangle") {
  auto schema = datagen::sprites_schema();
  // shape=square, scale=max, rotation=0, x and y at the middle grid value
  auto img = render_sprite_with(schema, {0, 5, 0, 16, 16});

  int min_x = 64, max_x = -1, min_y = 64, max_y = -1;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (img[static_cast<std::size_t>(y * 64 + x)]) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
  REQUIRE(max_x >= 0);
  // filled: every pixel inside the bounding box is set
  for (int y = min_y; y <= max_y; ++y)
    for (int x = min_x; x <= max_x; ++x)
      CHECK(img[static_cast<std::size_t>(y * 64 + x)] == 255);
  CHECK(max_x - min_x == max_y - min_y);  // square
  CHECK(std::abs((min_x + max_x) / 2.0 - 31.5) < 2.0);
  CHECK(std::abs((min_y + max_y) / 2.0 - 31.5) < 2.0);
}

TEST_CASE("sprites images are binary and reproducible from labels") {
  auto ds = datagen::generate_sprites(64, 99);
  for (auto p : ds.images) CHECK((p == 0 || p == 255));

  std::vector<std::uint8_t> re(static_cast<std::size_t>(ds.schema.pixels_per_image()));
  for (int i = 0; i < ds.n; i += 7) {
    datagen::render_image(ds.schema, ds.labels(i), re);
    auto img = ds.image(i);
    CHECK(std::equal(img.begin(), img.end(), re.begin()));
  }
}

TEST_CASE("generation is deterministic and thread-count independent") {
  auto a = datagen::generate_sprites(200, 5, 1);
  auto b = datagen::generate_sprites(200, 5, 4);
  CHECK(a.images == b.images);
  CHECK(a.concept_labels == b.concept_labels);
  CHECK(a.task_labels == b.task_labels);

  auto c = datagen::generate_rooms(100, 5, 1);
  auto d = datagen::generate_rooms(100, 5, 3);
  CHECK(c.images == d.images);
  CHECK(c.concept_labels == d.concept_labels);
}

TEST_CASE("sprite shape marginals are uniform within 3 sigma") {
  const int n = 30000;
  auto ds = datagen::generate_sprites(n, 123, 4);
  std::array<int, 3> counts{0, 0, 0};
  for (auto t : ds.task_labels) counts[static_cast<std::size_t>(t)]++;
  // multinomial: sd = sqrt(n * p * (1-p)), p = 1/3 -> 3 sd ~ 245
  for (int c = 0; c < 3; ++c)
    CHECK(std::abs(counts[static_cast<std::size_t>(c)] - n / 3.0) < 245.0);
}

TEST_CASE("rooms label marginals are uniform within 3 sigma") {
  const int n = 20000;
  auto ds = datagen::generate_rooms(n, 321, 4);
  for (int c = 0; c < ds.schema.num_concepts(); ++c) {
    const int card = ds.schema.concepts[static_cast<std::size_t>(c)].cardinality;
    std::vector<int> counts(static_cast<std::size_t>(card), 0);
    for (int i = 0; i < n; ++i)
      counts[static_cast<std::size_t>(ds.labels(i)[static_cast<std::size_t>(c)])]++;
    const double p = 1.0 / card;
    const double bound = 3.0 * std::sqrt(n * p * (1 - p));
    for (int v = 0; v < card; ++v)
      CHECK(std::abs(counts[static_cast<std::size_t>(v)] - n * p) < bound);
  }
}

TEST_CASE("sprite pixel count strictly increases with scale") {
  auto schema = datagen::sprites_schema();
  for (std::int32_t shape = 0; shape < 3; ++shape) {
    for (std::int32_t rot : {0, 7, 23}) {
      int prev = -1;
      for (std::int32_t s = 0; s < 6; ++s) {
        auto img = render_sprite_with(schema, {shape, s, rot, 10, 20});
        const int count = count_nonzero(img);
        CHECK(count > prev);
        prev = count;
      }
    }
  }
}

TEST_CASE("equal hue indices give identical wall and floor colors") {
  auto schema = datagen::rooms_schema();
  std::array<std::int32_t, 6> labels{3, 3, 7, 4, 1, 7};
  std::vector<std::uint8_t> img(static_cast<std::size_t>(schema.pixels_per_image()));
  datagen::render_room(schema, labels, img);
  // corner pixels are always background
  for (int ch = 0; ch < 3; ++ch)
    CHECK(img[static_cast<std::size_t>(ch)] ==
          img[static_cast<std::size_t>((63 * 64 + 0) * 3 + ch)]);
}

TEST_CASE("changing floor hue only touches the bottom half") {
  auto schema = datagen::rooms_schema();
  std::array<std::int32_t, 6> a{2, 5, 7, 4, 2, 7};
  std::array<std::int32_t, 6> b{9, 5, 7, 4, 2, 7};
  std::vector<std::uint8_t> img_a(static_cast<std::size_t>(schema.pixels_per_image()));
  std::vector<std::uint8_t> img_b = img_a;
  datagen::render_room(schema, a, img_a);
  datagen::render_room(schema, b, img_b);
  bool bottom_changed = false;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        const auto idx = static_cast<std::size_t>((y * 64 + x) * 3 + ch);
        if (y < 32) {
          CHECK(img_a[idx] == img_b[idx]);
        } else if (img_a[idx] != img_b[idx]) {
          bottom_changed = true;
        }
      }
  CHECK(bottom_changed);
}

TEST_CASE("invalid generation counts are rejected") {
  CHECK_THROWS_AS(datagen::generate_sprites(0, 1), std::invalid_argument);
  CHECK_THROWS_AS(datagen::generate("nope", 10, 1), std::invalid_argument);
}

TEST_CASE("task labels follow the task rules") {
  auto sprites = datagen::generate_sprites(500, 11);
  for (int i = 0; i < sprites.n; ++i)
    CHECK(sprites.task_labels[static_cast<std::size_t>(i)] == sprites.labels(i)[0]);
  auto rooms = datagen::generate_rooms(500, 11);
  for (int i = 0; i < rooms.n; ++i) {
    auto row = rooms.labels(i);
    CHECK(rooms.task_labels[static_cast<std::size_t>(i)] == row[3] * 4 + row[4]);
  }
  CHECK_NOTHROW(sprites.validate());
  CHECK_NOTHROW(rooms.validate());
}
