#include <algorithm>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "shiftlens/datagen.hpp"
#include "shiftlens/harness.hpp"

using namespace shiftlens;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

harness::ExperimentConfig tiny_config() {
  harness::ExperimentConfig c;
  c.dataset = "sprites";
  c.dataset_n = 600;
  c.master_seed = 11;
  c.methods = {"pca", "srp"};
  c.sample_sizes = {10, 20};
  c.runs_per_cell = 6;
  c.repetitions = 2;
  c.pca_fit_samples = 200;

  shifts::ShiftSpec none;
  none.kind = shifts::ShiftKind::None;
  none.seed = 1;
  shifts::ShiftSpec gaussian;
  gaussian.kind = shifts::ShiftKind::Gaussian;
  gaussian.intensity = shifts::ShiftIntensity::Large;
  gaussian.delta = 1.0;
  gaussian.seed = 2;
  c.shift_specs = {none, gaussian};
  return c;
}

}  // namespace

TEST_CASE("default configs validate and round-trip through JSON") {
  for (const auto* dataset : {"sprites", "rooms"}) {
    auto config = harness::desk_default_config(dataset, 3);
    CHECK_NOTHROW(config.validate());
    auto text = harness::config_to_json_string(config);
    auto back = harness::config_from_json_string(text);
    CHECK(harness::config_to_json_string(back) == text);
    CHECK(back.methods.size() == 6);
    CHECK(back.shift_specs.size() == 5);
    CHECK(back.shift_specs[0].kind == shifts::ShiftKind::None);
  }
  auto bad = harness::desk_default_config("sprites", 3);
  bad.methods = {"nope"};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("concept shift helper pins the intensity conventions") {
  auto schema = datagen::sprites_schema();
  auto small = harness::concept_shift(schema, "scale",
                                      shifts::ShiftIntensity::Small, 0.5, 1);
  REQUIRE(small.concept_targets.size() == 1);
  CHECK(small.concept_targets[0].value_index == 5);
  CHECK(small.concept_targets[0].mode == shifts::ConceptMode::Remove);

  auto medium = harness::concept_shift(schema, "scale",
                                       shifts::ShiftIntensity::Medium, 0.5, 1);
  CHECK(medium.concept_targets.size() == 3);  // upper half of 6 values

  auto large = harness::concept_shift(schema, "scale",
                                      shifts::ShiftIntensity::Large, 1.0, 1);
  REQUIRE(large.concept_targets.size() == 1);
  CHECK(large.concept_targets[0].mode == shifts::ConceptMode::KeepOnly);
  CHECK_THROWS_AS(harness::concept_shift(schema, "nope",
                                         shifts::ShiftIntensity::Small, 0.5, 1),
                  std::invalid_argument);
}

TEST_CASE("tiny grid: bookkeeping, determinism across thread counts, reports") {
  auto config = tiny_config();
  auto dir = fs::temp_directory_path() / "shiftlens_harness_test";
  fs::remove_all(dir);

  config.threads = 1;
  auto results1 = harness::run_experiment(config, dir / "cache");
  config.threads = 4;
  auto results4 = harness::run_experiment(config, dir / "cache");

  REQUIRE(results1.cells.size() == 2 * 2 * 2);  // shifts x methods x sizes
  REQUIRE(results4.cells.size() == results1.cells.size());

  for (std::size_t i = 0; i < results1.cells.size(); ++i) {
    const auto& a = results1.cells[i];
    const auto& b = results4.cells[i];
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.run_p == b.run_p);
    CHECK(a.run_detected == b.run_detected);

    // accuracy equals correct decisions / runs recomputed from the log
    int correct = 0;
    for (auto d : a.run_detected)
      correct += a.is_shift ? (d != 0) : (d == 0);
    CHECK(a.accuracy ==
          static_cast<double>(correct) / static_cast<double>(a.runs));
    CHECK(a.runs == config.runs_per_cell * config.repetitions);
  }

  harness::emit_reports(results1, dir / "out1");
  harness::emit_reports(results4, dir / "out4");
  CHECK(slurp(dir / "out1" / "accuracy.csv") == slurp(dir / "out4" / "accuracy.csv"));

  // accuracy.csv has one row per cell plus comment and header
  const auto csv = slurp(dir / "out1" / "accuracy.csv");
  const auto rows = std::count(csv.begin(), csv.end(), '\n');
  CHECK(rows == static_cast<long>(results1.cells.size()) + 2);

  // re-emission from the same results is byte-identical
  harness::emit_reports(results1, dir / "out1");
  CHECK(slurp(dir / "out1" / "accuracy.csv") == csv);

  // results.json reload -> emit reproduces the same reports
  auto reloaded = harness::load_results(dir / "out1" / "results.json");
  harness::emit_reports(reloaded, dir / "reload");
  CHECK(slurp(dir / "reload" / "accuracy.csv") == csv);
  CHECK(slurp(dir / "reload" / "css.csv") == slurp(dir / "out1" / "css.csv"));
  CHECK(slurp(dir / "reload" / "pvalues.csv") ==
        slurp(dir / "out1" / "pvalues.csv"));

  // SVGs exist for each shift kind
  CHECK(fs::exists(dir / "out1" / "accuracy_none.svg"));
  CHECK(fs::exists(dir / "out1" / "accuracy_gaussian.svg"));

  fs::remove_all(dir);
}

TEST_CASE("no-shift cells stay near the nominal false-positive rate") {
  auto config = tiny_config();
  config.methods = {"pca"};
  config.sample_sizes = {50};
  config.runs_per_cell = 20;
  config.repetitions = 2;
  auto dir = fs::temp_directory_path() / "shiftlens_harness_null";
  fs::remove_all(dir);
  auto results = harness::run_experiment(config, dir / "cache");
  for (const auto& cell : results.cells) {
    if (cell.is_shift) continue;
    // accuracy on the no-shift cell = 1 - false positive rate
    CHECK(cell.accuracy >= 0.7);
  }
  fs::remove_all(dir);
}

TEST_CASE("oversized sample requests are rejected with the pool size") {
  auto config = tiny_config();
  config.sample_sizes = {5000};  // test pool is 90 samples
  auto dir = fs::temp_directory_path() / "shiftlens_harness_oversize";
  fs::remove_all(dir);
  CHECK_THROWS_WITH_AS(harness::run_experiment(config, dir / "cache"),
                       doctest::Contains("exceeds"), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("model cache makes reruns byte-identical") {
  auto config = tiny_config();
  auto dir = fs::temp_directory_path() / "shiftlens_harness_cache";
  fs::remove_all(dir);
  auto first = harness::run_experiment(config, dir / "cache");
  auto second = harness::run_experiment(config, dir / "cache");  // cache hit
  harness::emit_reports(first, dir / "a");
  harness::emit_reports(second, dir / "b");
  CHECK(slurp(dir / "a" / "accuracy.csv") == slurp(dir / "b" / "accuracy.csv"));
  CHECK(fs::exists(dir / "cache"));
  fs::remove_all(dir);
}
