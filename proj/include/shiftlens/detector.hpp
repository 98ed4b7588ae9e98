#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "shiftlens/models.hpp"
#include "shiftlens/stattests.hpp"

namespace shiftlens::detector {

enum class TestChoice { Auto, Ks, Mmd, Chi2 };

TestChoice test_choice_from(const std::string& name);
std::string test_choice_name(TestChoice choice);

struct ConceptResult {
  std::string concept_name;
  double statistic = 0.0;             // chi2 value, or max KS D in the block
  double normalized_statistic = 0.0;  // chi2/df when normalization is on
  double p_value = 1.0;               // block-Bonferroni min p (softmax blocks)
  double css = 0.0;
  int block_dims = 1;
  bool degenerate = false;
};

struct DetectOptions {
  int mmd_permutations = 1000;
  std::uint64_t seed = 0;
  // Divide chi-squared concept statistics by their degrees of freedom
  // before computing CSS. Off by default: raw statistics rank concepts by
  // absolute effect; the normalized variant suppresses the baseline
  // advantage high-cardinality concepts have under the null, at the cost
  // of down-weighting genuinely shifted wide concepts.
  bool css_df_normalize = false;
  std::string method_label;  // e.g. "cbsds"; cosmetic, used in reports
  std::map<std::string, std::string> provenance;
};

struct DetectionReport {
  std::string method;
  std::string test_used;
  double alpha = 0.05;
  bool shift_detected = false;
  double combined_p = 1.0;
  std::vector<stats::TestResult> per_dimension;
  std::vector<ConceptResult> per_concept;  // sorted by css descending
  bool css_degenerate = false;
  bool css_df_normalized = false;
  int source_n = 0;
  int target_m = 0;
  std::map<std::string, std::string> provenance;
};

// CSS_i = t_i / sum(t). All-zero input yields the uniform vector and sets
// *degenerate. Negative entries are an error.
std::vector<double> concept_shift_score(std::span<const double> t,
                                        bool* degenerate = nullptr);

// Two-sample decision on reduced representations:
//   continuous columns -> per-column KS + Bonferroni (hierarchical over
//     concept blocks when groups are present) or one multivariate MMD;
//   single categorical column -> chi-squared;
//   multiple categorical columns -> per-concept chi-squared + Bonferroni.
// Concept-grouped representations additionally get per-concept statistics,
// p-values and the CSS ranking.
DetectionReport detect(const models::Representation& source,
                       const models::Representation& target,
                       TestChoice test_choice, double alpha,
                       const DetectOptions& options = {});

// Concept-level section only; requires groups.
std::vector<ConceptResult> explain(const models::Representation& source,
                                   const models::Representation& target,
                                   double alpha, const DetectOptions& options = {});

std::string report_to_json_string(const DetectionReport& report);

}  // namespace shiftlens::detector
