#pragma once

#include <cstdint>
#include <span>

#include "shiftlens/dataset.hpp"

namespace shiftlens::datagen {

// Table 1 factors: shape(3), scale(6 in [0.5,1]), rotation(40 in [0,2pi]),
// x(32 in [0,1]), y(32 in [0,1]). 64x64x1 binary images, task = shape.
ConceptSchema sprites_schema();

// Table 2 factors: floor_hue(10), wall_hue(10), object_hue(10) in [0,1],
// scale(8 in [0,1]), shape(4), orientation(15 in [-30,30]). 64x64x3 images,
// task = scale_index * 4 + shape_index (32 classes).
ConceptSchema rooms_schema();

// Rendering is a pure function of the concept-label row; generators sample
// latent grid indices uniformly with replacement, keyed by (seed, sample).
void render_sprite(const ConceptSchema& schema,
                   std::span<const std::int32_t> labels,
                   std::span<std::uint8_t> out);
void render_room(const ConceptSchema& schema,
                 std::span<const std::int32_t> labels,
                 std::span<std::uint8_t> out);
void render_image(const ConceptSchema& schema,
                  std::span<const std::int32_t> labels,
                  std::span<std::uint8_t> out);

LatentFactorDataset generate_sprites(int count, std::uint64_t seed,
                                     int num_threads = 1);
LatentFactorDataset generate_rooms(int count, std::uint64_t seed,
                                   int num_threads = 1);
LatentFactorDataset generate(const std::string& schema_name, int count,
                             std::uint64_t seed, int num_threads = 1);

}  // namespace shiftlens::datagen
