#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "shiftlens/dataset.hpp"
#include "shiftlens/detector.hpp"
#include "shiftlens/models.hpp"
#include "shiftlens/shifts.hpp"

namespace shiftlens::harness {

struct ExperimentConfig {
  std::string dataset = "sprites";
  int dataset_n = 30000;
  std::uint64_t master_seed = 7;
  std::vector<std::string> methods;  // subset of pca/srp/bbsds/bbsdh/cbsds/cbsdh
  std::string continuous_test = "ks";  // ks | mmd (hard methods always chi2)
  std::vector<int> sample_sizes;
  std::vector<shifts::ShiftSpec> shift_specs;  // include a "none" spec for FP cells
  int runs_per_cell = 100;
  int repetitions = 5;
  double alpha = 0.05;
  int mmd_permutations = 200;
  bool css_df_normalize = false;
  models::TrainConfig train;
  int pca_fit_samples = 2000;
  double pca_variance_target = 0.80;
  datagen::SplitRatios split_ratios;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

// Desk-scale grid: all six methods, the size ladder up to 2000, and one shift
// of each kind plus the no-shift cell.
ExperimentConfig desk_default_config(const std::string& dataset,
                                     std::uint64_t master_seed = 7);

std::string config_to_json_string(const ExperimentConfig& config);
ExperimentConfig config_from_json_string(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& file);

// Harness conventions for building concept shifts of a given strength:
// small removes the top grid value, medium removes the upper half of the
// grid, large keeps only the top value.
shifts::ShiftSpec concept_shift(const datagen::ConceptSchema& schema,
                                const std::string& concept_name,
                                shifts::ShiftIntensity intensity, double delta,
                                std::uint64_t seed);

struct ConceptCssAggregate {
  std::string concept_name;
  double mean_css = 0.0;
  double ci95 = 0.0;
};

struct CellResult {
  std::string dataset;
  std::string method;
  std::string test;
  std::string shift_kind;  // detailed, e.g. "concept(scale:5:keep_only)"
  std::string intensity;
  double delta = 0.0;
  bool is_shift = false;
  int sample_size = 0;
  int runs = 0;
  double accuracy = 0.0;  // correct decisions / runs, exact
  double ci95 = 0.0;      // 1.96 * sd / sqrt(reps) over repetition means
  double mean_p = 0.0;
  std::vector<std::uint8_t> run_detected;
  std::vector<double> run_p;
  std::vector<ConceptCssAggregate> css;  // concept methods only, schema order
  std::vector<double> run_css;           // runs x concepts, flattened row-major
};

struct ModelSummary {
  std::string type;
  int output_dims = 0;
  std::vector<models::HeadAccuracy> head_accuracies;
  double label_validation_accuracy = 0.0;
};

struct ExperimentResults {
  ExperimentConfig config;
  std::vector<CellResult> cells;
  std::vector<ModelSummary> model_summaries;
};

// Trained reducers for one dataset, cached on disk keyed by configuration.
struct ModelBundle {
  std::optional<models::FittedModel> pca;
  std::optional<models::FittedModel> srp;
  std::optional<models::FittedModel> task;
  std::optional<models::FittedModel> cbm;
};

ModelBundle fit_models(const datagen::LatentFactorDataset& ds,
                       const datagen::SplitIndices& split,
                       const ExperimentConfig& config,
                       const std::filesystem::path& cache_dir);

// Runs the full grid. Randomness per run is keyed by (master seed, cell id,
// run id); results are identical for any thread count.
ExperimentResults run_experiment(const ExperimentConfig& config,
                                 const std::filesystem::path& cache_dir);

// accuracy.csv, css.csv, pvalues.csv, results.json and SVG charts.
void emit_reports(const ExperimentResults& results,
                  const std::filesystem::path& outdir);

ExperimentResults load_results(const std::filesystem::path& results_json);

}  // namespace shiftlens::harness
