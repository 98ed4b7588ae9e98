#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace shiftlens::datagen {

struct ConceptSpec {
  std::string name;
  int cardinality = 0;
  std::vector<double> value_grid;  // one entry per concept value
};

// Ordered concept list plus the image geometry and task rule of a dataset
// family ("sprites" or "rooms").
struct ConceptSchema {
  std::string name;
  std::vector<ConceptSpec> concepts;
  int height = 0;
  int width = 0;
  int channels = 0;
  int num_task_classes = 0;

  int num_concepts() const { return static_cast<int>(concepts.size()); }
  int pixels_per_image() const { return height * width * channels; }
  int concept_index(const std::string& concept_name) const;  // -1 if absent

  // Task rule: sprites -> shape label; rooms -> scale_index * 4 + shape_index.
  int task_label(std::span<const std::int32_t> concept_labels) const;

  void validate() const;  // throws on duplicate names / cardinality mismatch
};

struct LatentFactorDataset {
  ConceptSchema schema;
  int n = 0;
  std::vector<std::uint8_t> images;          // n * H * W * C, row-major
  std::vector<std::int32_t> concept_labels;  // n * k, grid indices
  std::vector<std::int32_t> task_labels;     // n
  std::uint64_t seed = 0;

  std::span<const std::uint8_t> image(int i) const;
  std::span<const std::int32_t> labels(int i) const;
  std::span<std::uint8_t> mutable_image(int i);

  void validate() const;  // label bounds and task-rule consistency
};

// Copies the selected samples into a new dataset (order preserved).
LatentFactorDataset gather(const LatentFactorDataset& ds, std::span<const int> indices);

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
  std::uint64_t seed = 0;
};

struct SplitRatios {
  double train = 0.7;
  double validation = 0.15;
  double test = 0.15;
};

// Random disjoint partition. Sizes follow the ratios by the largest-remainder
// rule with ties resolved in (train, validation, test) order.
SplitIndices split(int n, const SplitRatios& ratios, std::uint64_t seed);

// Dataset directory format: manifest.json + images.bin + labels.bin.
// labels.bin holds per sample the k concept columns then the task column,
// little-endian int32. Checksums of both blobs live in the manifest.
void save_dataset(const LatentFactorDataset& ds, const std::filesystem::path& dir);
LatentFactorDataset load_dataset(const std::filesystem::path& dir);

}  // namespace shiftlens::datagen
