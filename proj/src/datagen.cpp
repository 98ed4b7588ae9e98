#include "shiftlens/datagen.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "shiftlens/rng.hpp"
#include "shiftlens/thread_pool.hpp"

namespace shiftlens::datagen {

namespace {

std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> v(static_cast<std::size_t>(count));
  if (count == 1) {
    v[0] = lo;
    return v;
  }
  for (int i = 0; i < count; ++i)
    v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
  return v;
}

// Sprite geometry. Shapes are normalized to the unit disk and scaled by a
// half-extent of kMaxRadius * scale pixels; kMargin keeps any rotation of the
// largest shape fully on the canvas. The radius is sized so one scale-grid
// step moves the square's half-side by at least a full pixel, which keeps
// rasterized pixel counts strictly increasing in the scale index.
constexpr double kMaxRadius = 14.2;
constexpr double kMargin = 15.0;
constexpr int kCanvas = 64;

bool inside_square(double u, double v) {
  constexpr double h = std::numbers::sqrt2 / 2.0;
  return std::abs(u) <= h && std::abs(v) <= h;
}

bool inside_ellipse(double u, double v) {
  double q = v / 0.62;
  return u * u + q * q <= 1.0;
}

// Implicit heart curve (a^2 + b^2 - 1)^3 <= a^2 b^3, affinely mapped so the
// filled region sits centered inside the unit disk.
bool inside_heart(double u, double v) {
  double a = 1.34 * u;
  double b = 1.34 * (-v) + 0.118;
  double q = a * a + b * b - 1.0;
  return q * q * q - a * a * b * b * b <= 0.0;
}

bool inside_triangle(double u, double v) {
  // Upward triangle inscribed in the unit disk.
  double y = -v;
  if (y > 1.0 || y < -0.5) return false;
  double half_width = (1.0 - y) * std::numbers::sqrt3 / 2.0 / 1.5;
  return std::abs(u) <= half_width;
}

bool inside_diamond(double u, double v) { return std::abs(u) + std::abs(v) <= 1.0; }

bool inside_circle(double u, double v) { return u * u + v * v <= 1.0; }

struct Rgb {
  std::uint8_t r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  double c = v * s;
  double hp = h * 6.0;
  double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  double m = v - c;
  auto to8 = [](double t) {
    return static_cast<std::uint8_t>(std::lround(t * 255.0));
  };
  return {to8(r + m), to8(g + m), to8(b + m)};
}

}  // namespace

ConceptSchema sprites_schema() {
  ConceptSchema s;
  s.name = "sprites";
  s.height = kCanvas;
  s.width = kCanvas;
  s.channels = 1;
  s.num_task_classes = 3;
  s.concepts = {
      {"shape", 3, {0, 1, 2}},
      {"scale", 6, linspace(0.5, 1.0, 6)},
      {"rotation", 40, linspace(0.0, 2.0 * std::numbers::pi, 40)},
      {"x", 32, linspace(0.0, 1.0, 32)},
      {"y", 32, linspace(0.0, 1.0, 32)},
  };
  s.validate();
  return s;
}

ConceptSchema rooms_schema() {
  ConceptSchema s;
  s.name = "rooms";
  s.height = kCanvas;
  s.width = kCanvas;
  s.channels = 3;
  s.num_task_classes = 32;
  s.concepts = {
      {"floor_hue", 10, linspace(0.0, 1.0, 10)},
      {"wall_hue", 10, linspace(0.0, 1.0, 10)},
      {"object_hue", 10, linspace(0.0, 1.0, 10)},
      {"scale", 8, linspace(0.0, 1.0, 8)},
      {"shape", 4, {0, 1, 2, 3}},
      {"orientation", 15, linspace(-30.0, 30.0, 15)},
  };
  s.validate();
  return s;
}

void render_sprite(const ConceptSchema& schema,
                   std::span<const std::int32_t> labels,
                   std::span<std::uint8_t> out) {
  const int shape = labels[0];
  const double scale = schema.concepts[1].value_grid[static_cast<std::size_t>(labels[1])];
  const double theta = schema.concepts[2].value_grid[static_cast<std::size_t>(labels[2])];
  const double xf = schema.concepts[3].value_grid[static_cast<std::size_t>(labels[3])];
  const double yf = schema.concepts[4].value_grid[static_cast<std::size_t>(labels[4])];

  const double r = kMaxRadius * scale;
  const double cx = kMargin + xf * (kCanvas - 2.0 * kMargin);
  const double cy = kMargin + yf * (kCanvas - 2.0 * kMargin);
  const double ct = std::cos(theta), st = std::sin(theta);

  for (int py = 0; py < kCanvas; ++py) {
    for (int px = 0; px < kCanvas; ++px) {
      const double dx = (px + 0.5) - cx;
      const double dy = (py + 0.5) - cy;
      // Rotate the pixel into the shape frame.
      const double u = (ct * dx + st * dy) / r;
      const double v = (-st * dx + ct * dy) / r;
      bool in = false;
      switch (shape) {
        case 0: in = inside_square(u, v); break;
        case 1: in = inside_ellipse(u, v); break;
        default: in = inside_heart(u, v); break;
      }
      out[static_cast<std::size_t>(py * kCanvas + px)] = in ? 255 : 0;
    }
  }
}

void render_room(const ConceptSchema& schema,
                 std::span<const std::int32_t> labels,
                 std::span<std::uint8_t> out) {
  const double floor_hue = schema.concepts[0].value_grid[static_cast<std::size_t>(labels[0])];
  const double wall_hue = schema.concepts[1].value_grid[static_cast<std::size_t>(labels[1])];
  const double object_hue = schema.concepts[2].value_grid[static_cast<std::size_t>(labels[2])];
  const double scale = schema.concepts[3].value_grid[static_cast<std::size_t>(labels[3])];
  const int shape = labels[4];
  const double orientation = schema.concepts[5].value_grid[static_cast<std::size_t>(labels[5])];

  const Rgb wall = hsv_to_rgb(wall_hue, 1.0, 1.0);
  const Rgb floor = hsv_to_rgb(floor_hue, 1.0, 1.0);
  // Objects use a darker value so the silhouette survives hue collisions.
  const Rgb object = hsv_to_rgb(object_hue, 1.0, 0.75);

  const double r = 6.0 + 10.0 * scale;
  const double cx = kCanvas / 2.0 + orientation / 30.0 * 12.0;
  const double cy = kCanvas / 2.0;

  for (int py = 0; py < kCanvas; ++py) {
    for (int px = 0; px < kCanvas; ++px) {
      const double u = ((px + 0.5) - cx) / r;
      const double v = ((py + 0.5) - cy) / r;
      bool in = false;
      switch (shape) {
        case 0: in = inside_square(u, v); break;
        case 1: in = inside_circle(u, v); break;
        case 2: in = inside_triangle(u, v); break;
        default: in = inside_diamond(u, v); break;
      }
      const Rgb& c = in ? object : (py < kCanvas / 2 ? wall : floor);
      std::size_t base = 3 * static_cast<std::size_t>(py * kCanvas + px);
      out[base] = c.r;
      out[base + 1] = c.g;
      out[base + 2] = c.b;
    }
  }
}

void render_image(const ConceptSchema& schema,
                  std::span<const std::int32_t> labels,
                  std::span<std::uint8_t> out) {
  if (schema.name == "sprites") {
    render_sprite(schema, labels, out);
  } else if (schema.name == "rooms") {
    render_room(schema, labels, out);
  } else {
    throw std::runtime_error("no renderer for schema '" + schema.name + "'");
  }
}

namespace {

LatentFactorDataset generate_impl(const ConceptSchema& schema, int count,
                                  std::uint64_t seed, int num_threads) {
  if (count < 1) throw std::invalid_argument("count must be >= 1");
  LatentFactorDataset ds;
  ds.schema = schema;
  ds.seed = seed;
  ds.n = count;
  const std::size_t stride = static_cast<std::size_t>(schema.pixels_per_image());
  const std::size_t k = static_cast<std::size_t>(schema.num_concepts());
  ds.images.resize(static_cast<std::size_t>(count) * stride);
  ds.concept_labels.resize(static_cast<std::size_t>(count) * k);
  ds.task_labels.resize(static_cast<std::size_t>(count));

  const Rng root(seed);
  parallel_for(static_cast<std::size_t>(count), num_threads, [&](std::size_t i) {
    Rng rng = root.fork(i);
    std::int32_t* labels = ds.concept_labels.data() + i * k;
    for (std::size_t c = 0; c < k; ++c)
      labels[c] = static_cast<std::int32_t>(
          rng.below(static_cast<std::uint64_t>(schema.concepts[c].cardinality)));
    std::span<const std::int32_t> row{labels, k};
    ds.task_labels[i] = schema.task_label(row);
    render_image(schema, row, {ds.images.data() + i * stride, stride});
  });
  return ds;
}

}  // namespace

LatentFactorDataset generate_sprites(int count, std::uint64_t seed, int num_threads) {
  return generate_impl(sprites_schema(), count, seed, num_threads);
}

LatentFactorDataset generate_rooms(int count, std::uint64_t seed, int num_threads) {
  return generate_impl(rooms_schema(), count, seed, num_threads);
}

LatentFactorDataset generate(const std::string& schema_name, int count,
                             std::uint64_t seed, int num_threads) {
  if (schema_name == "sprites") return generate_sprites(count, seed, num_threads);
  if (schema_name == "rooms") return generate_rooms(count, seed, num_threads);
  throw std::invalid_argument("unknown schema '" + schema_name + "'");
}

}  // namespace shiftlens::datagen
