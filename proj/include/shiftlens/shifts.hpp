#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shiftlens/dataset.hpp"

namespace shiftlens::shifts {

enum class ShiftKind { None, Gaussian, Knockout, Concept, Image, Combination };

enum class ShiftIntensity { Small, Medium, Large };

enum class ConceptMode { Remove, KeepOnly };

struct ConceptTarget {
  std::string concept_name;
  int value_index = 0;
  ConceptMode mode = ConceptMode::Remove;
};

enum class ImageOp { Translate, Rotate, Zoom, Shear, Flip };

struct ShiftSpec {
  ShiftKind kind = ShiftKind::None;
  ShiftIntensity intensity = ShiftIntensity::Medium;
  double delta = 1.0;  // one of {0.1, 0.5, 1.0}
  std::uint64_t seed = 0;

  std::optional<int> knockout_class;  // default: majority class, ties -> lowest
  std::vector<ConceptTarget> concept_targets;
  std::vector<ImageOp> image_ops;
  std::vector<ShiftSpec> combination;

  void validate() const;
  std::string describe() const;  // e.g. "gaussian[medium,d=0.5]"
  std::string kind_name() const;
  std::string intensity_name() const;
};

// Pinned magnitudes per intensity (small/medium/large):
//   gaussian sigma: 1 / 10 / 100 (0-255 pixel scale)
//   translate: 5 / 10 / 15 px (applied to both axes)
//   rotate: 10 / 40 / 90 degrees
//   zoom: 10 / 20 / 40 % (direction drawn per sample)
//   shear: 10 / 20 / 40 degrees
double gaussian_sigma(ShiftIntensity intensity);
double translate_pixels(ShiftIntensity intensity);
double rotate_degrees(ShiftIntensity intensity);
double zoom_fraction(ShiftIntensity intensity);
double shear_degrees(ShiftIntensity intensity);

// Applies the shift to a copy of the dataset. The affected subset is the
// first round(delta * eligible) samples ordered by a per-sample uniform draw
// keyed on (spec seed, sample index), so affected sets are nested across
// increasing delta. Knockout/concept removal drop rows; gaussian/image shifts
// rewrite pixels and leave concept labels untouched.
datagen::LatentFactorDataset apply_shift(const datagen::LatentFactorDataset& ds,
                                         const ShiftSpec& spec);

std::string to_json_string(const ShiftSpec& spec);
ShiftSpec shift_spec_from_json_string(const std::string& text);

}  // namespace shiftlens::shifts
