#include "shiftlens/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "shiftlens/rng.hpp"

namespace shiftlens::datagen {

using nlohmann::json;

int ConceptSchema::concept_index(const std::string& concept_name) const {
  for (std::size_t i = 0; i < concepts.size(); ++i)
    if (concepts[i].name == concept_name) return static_cast<int>(i);
  return -1;
}

int ConceptSchema::task_label(std::span<const std::int32_t> labels) const {
  if (name == "sprites") {
    return labels[static_cast<std::size_t>(concept_index("shape"))];
  }
  if (name == "rooms") {
    auto scale = labels[static_cast<std::size_t>(concept_index("scale"))];
    auto shape = labels[static_cast<std::size_t>(concept_index("shape"))];
    return scale * 4 + shape;
  }
  throw std::runtime_error("unknown task rule for schema '" + name + "'");
}

void ConceptSchema::validate() const {
  std::set<std::string> names;
  for (const auto& c : concepts) {
    if (!names.insert(c.name).second)
      throw std::invalid_argument("duplicate concept name: " + c.name);
    if (c.cardinality < 1 ||
        c.cardinality != static_cast<int>(c.value_grid.size()))
      throw std::invalid_argument("concept '" + c.name +
                                  "': cardinality must equal value grid size");
  }
  if (height < 1 || width < 1 || channels < 1)
    throw std::invalid_argument("invalid image geometry");
}

std::span<const std::uint8_t> LatentFactorDataset::image(int i) const {
  const std::size_t stride = static_cast<std::size_t>(schema.pixels_per_image());
  return {images.data() + static_cast<std::size_t>(i) * stride, stride};
}

std::span<std::uint8_t> LatentFactorDataset::mutable_image(int i) {
  const std::size_t stride = static_cast<std::size_t>(schema.pixels_per_image());
  return {images.data() + static_cast<std::size_t>(i) * stride, stride};
}

std::span<const std::int32_t> LatentFactorDataset::labels(int i) const {
  const std::size_t k = static_cast<std::size_t>(schema.num_concepts());
  return {concept_labels.data() + static_cast<std::size_t>(i) * k, k};
}

void LatentFactorDataset::validate() const {
  schema.validate();
  const std::size_t k = static_cast<std::size_t>(schema.num_concepts());
  if (images.size() != static_cast<std::size_t>(n) *
                           static_cast<std::size_t>(schema.pixels_per_image()) ||
      concept_labels.size() != static_cast<std::size_t>(n) * k ||
      task_labels.size() != static_cast<std::size_t>(n))
    throw std::runtime_error("dataset buffer sizes inconsistent with n");
  for (int i = 0; i < n; ++i) {
    auto row = labels(i);
    for (std::size_t c = 0; c < k; ++c) {
      if (row[c] < 0 || row[c] >= schema.concepts[c].cardinality)
        throw std::runtime_error("concept label out of range at sample " +
                                 std::to_string(i));
    }
    if (task_labels[static_cast<std::size_t>(i)] != schema.task_label(row))
      throw std::runtime_error("task label violates task rule at sample " +
                               std::to_string(i));
  }
}

LatentFactorDataset gather(const LatentFactorDataset& ds, std::span<const int> indices) {
  LatentFactorDataset out;
  out.schema = ds.schema;
  out.seed = ds.seed;
  out.n = static_cast<int>(indices.size());
  const std::size_t stride = static_cast<std::size_t>(ds.schema.pixels_per_image());
  const std::size_t k = static_cast<std::size_t>(ds.schema.num_concepts());
  out.images.resize(static_cast<std::size_t>(out.n) * stride);
  out.concept_labels.resize(static_cast<std::size_t>(out.n) * k);
  out.task_labels.resize(static_cast<std::size_t>(out.n));
  for (int i = 0; i < out.n; ++i) {
    const int src = indices[static_cast<std::size_t>(i)];
    if (src < 0 || src >= ds.n) throw std::out_of_range("gather index out of range");
    auto img = ds.image(src);
    std::copy(img.begin(), img.end(),
              out.images.begin() + static_cast<std::ptrdiff_t>(
                                       static_cast<std::size_t>(i) * stride));
    auto lab = ds.labels(src);
    std::copy(lab.begin(), lab.end(),
              out.concept_labels.begin() +
                  static_cast<std::ptrdiff_t>(static_cast<std::size_t>(i) * k));
    out.task_labels[static_cast<std::size_t>(i)] =
        ds.task_labels[static_cast<std::size_t>(src)];
  }
  return out;
}

SplitIndices split(int n, const SplitRatios& ratios, std::uint64_t seed) {
  const double parts[3] = {ratios.train, ratios.validation, ratios.test};
  double sum = parts[0] + parts[1] + parts[2];
  if (parts[0] <= 0 || parts[1] <= 0 || parts[2] <= 0 ||
      std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios must be positive and sum to 1");

  // Largest-remainder apportionment; ties go to the earlier split.
  int sizes[3];
  double remainders[3];
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double quota = parts[i] * n;
    sizes[i] = static_cast<int>(std::floor(quota));
    remainders[i] = quota - sizes[i];
    assigned += sizes[i];
  }
  int leftover = n - assigned;
  int order[3] = {0, 1, 2};
  std::stable_sort(order, order + 3,
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (int i = 0; i < leftover; ++i) sizes[order[i]] += 1;

  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(perm);

  SplitIndices out;
  out.seed = seed;
  out.train.assign(perm.begin(), perm.begin() + sizes[0]);
  out.validation.assign(perm.begin() + sizes[0], perm.begin() + sizes[0] + sizes[1]);
  out.test.assign(perm.begin() + sizes[0] + sizes[1], perm.end());
  return out;
}

namespace {

void write_blob(const std::filesystem::path& path, const void* data, std::size_t len) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::vector<char> read_blob(const std::filesystem::path& path, std::size_t expected) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  auto size = static_cast<std::size_t>(f.tellg());
  if (size != expected)
    throw std::runtime_error(path.string() + ": expected " +
                             std::to_string(expected) + " bytes, found " +
                             std::to_string(size));
  f.seekg(0);
  std::vector<char> buf(size);
  f.read(buf.data(), static_cast<std::streamsize>(size));
  if (!f) throw std::runtime_error("read failed: " + path.string());
  return buf;
}

}  // namespace

void save_dataset(const LatentFactorDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t k = static_cast<std::size_t>(ds.schema.num_concepts());

  // labels.bin: k concept columns then the task column, row-major int32 LE.
  std::vector<std::int32_t> labels(static_cast<std::size_t>(ds.n) * (k + 1));
  for (int i = 0; i < ds.n; ++i) {
    auto row = ds.labels(i);
    std::size_t base = static_cast<std::size_t>(i) * (k + 1);
    for (std::size_t c = 0; c < k; ++c) labels[base + c] = row[c];
    labels[base + k] = ds.task_labels[static_cast<std::size_t>(i)];
  }

  write_blob(dir / "images.bin", ds.images.data(), ds.images.size());
  write_blob(dir / "labels.bin", labels.data(), labels.size() * sizeof(std::int32_t));

  json manifest;
  manifest["schema"] = ds.schema.name;
  manifest["n"] = ds.n;
  manifest["height"] = ds.schema.height;
  manifest["width"] = ds.schema.width;
  manifest["channels"] = ds.schema.channels;
  manifest["num_task_classes"] = ds.schema.num_task_classes;
  manifest["seed"] = ds.seed;
  json concepts = json::array();
  for (const auto& c : ds.schema.concepts) {
    concepts.push_back({{"name", c.name},
                        {"cardinality", c.cardinality},
                        {"values", c.value_grid}});
  }
  manifest["concepts"] = concepts;
  manifest["task_rule"] = ds.schema.name;
  manifest["images_crc32"] = crc32(ds.images.data(), ds.images.size());
  manifest["labels_crc32"] =
      crc32(labels.data(), labels.size() * sizeof(std::int32_t));

  std::ofstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("cannot write manifest in " + dir.string());
  mf << manifest.dump(2) << "\n";
}

LatentFactorDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("missing manifest.json in " + dir.string());
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest.json: " + std::string(e.what()));
  }

  LatentFactorDataset ds;
  ds.schema.name = manifest.at("schema").get<std::string>();
  if (ds.schema.name != "sprites" && ds.schema.name != "rooms")
    throw std::runtime_error("unknown schema name '" + ds.schema.name + "'");
  ds.n = manifest.at("n").get<int>();
  ds.schema.height = manifest.at("height").get<int>();
  ds.schema.width = manifest.at("width").get<int>();
  ds.schema.channels = manifest.at("channels").get<int>();
  ds.schema.num_task_classes = manifest.at("num_task_classes").get<int>();
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  for (const auto& c : manifest.at("concepts")) {
    ConceptSpec spec;
    spec.name = c.at("name").get<std::string>();
    spec.cardinality = c.at("cardinality").get<int>();
    spec.value_grid = c.at("values").get<std::vector<double>>();
    ds.schema.concepts.push_back(std::move(spec));
  }
  ds.schema.validate();

  const std::size_t k = static_cast<std::size_t>(ds.schema.num_concepts());
  const std::size_t image_bytes =
      static_cast<std::size_t>(ds.n) *
      static_cast<std::size_t>(ds.schema.pixels_per_image());
  const std::size_t label_bytes =
      static_cast<std::size_t>(ds.n) * (k + 1) * sizeof(std::int32_t);

  auto images = read_blob(dir / "images.bin", image_bytes);
  auto labels_raw = read_blob(dir / "labels.bin", label_bytes);

  auto expect_crc = [&](const char* key, const std::vector<char>& blob) {
    auto want = manifest.at(key).get<std::uint32_t>();
    auto got = crc32(blob.data(), blob.size());
    if (want != got)
      throw std::runtime_error(std::string(key) + " checksum mismatch in " +
                               dir.string());
  };
  expect_crc("images_crc32", images);
  expect_crc("labels_crc32", labels_raw);

  ds.images.assign(images.begin(), images.end());
  ds.concept_labels.resize(static_cast<std::size_t>(ds.n) * k);
  ds.task_labels.resize(static_cast<std::size_t>(ds.n));
  const auto* labels = reinterpret_cast<const std::int32_t*>(labels_raw.data());
  for (int i = 0; i < ds.n; ++i) {
    std::size_t base = static_cast<std::size_t>(i) * (k + 1);
    for (std::size_t c = 0; c < k; ++c)
      ds.concept_labels[static_cast<std::size_t>(i) * k + c] = labels[base + c];
    ds.task_labels[static_cast<std::size_t>(i)] = labels[base + k];
  }
  ds.validate();
  return ds;
}

}  // namespace shiftlens::datagen
