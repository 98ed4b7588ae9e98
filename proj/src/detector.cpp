#include "shiftlens/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace shiftlens::detector {

using models::Representation;
using nlohmann::json;

TestChoice test_choice_from(const std::string& name) {
  if (name == "auto") return TestChoice::Auto;
  if (name == "ks") return TestChoice::Ks;
  if (name == "mmd") return TestChoice::Mmd;
  if (name == "chi2") return TestChoice::Chi2;
  throw std::invalid_argument("unknown test '" + name + "'");
}

std::string test_choice_name(TestChoice choice) {
  switch (choice) {
    case TestChoice::Auto: return "auto";
    case TestChoice::Ks: return "ks";
    case TestChoice::Mmd: return "mmd";
    default: return "chi2";
  }
}

std::vector<double> concept_shift_score(std::span<const double> t, bool* degenerate) {
  if (t.empty()) throw std::invalid_argument("concept_shift_score: empty vector");
  double total = 0.0;
  for (double v : t) {
    if (v < 0.0)
      throw std::invalid_argument("concept_shift_score: negative statistic");
    total += v;
  }
  std::vector<double> css(t.size());
  if (total <= 0.0) {
    std::fill(css.begin(), css.end(), 1.0 / static_cast<double>(t.size()));
    if (degenerate) *degenerate = true;
    return css;
  }
  if (degenerate) *degenerate = false;
  for (std::size_t i = 0; i < t.size(); ++i) css[i] = t[i] / total;
  return css;
}

namespace {

std::vector<double> column(const Eigen::MatrixXd& m, int c) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    v[static_cast<std::size_t>(i)] = m(i, c);
  return v;
}

std::vector<int> int_column(const Eigen::MatrixXd& m, int c) {
  std::vector<int> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    v[static_cast<std::size_t>(i)] = static_cast<int>(m(i, c));
  return v;
}

void check_compatible(const Representation& a, const Representation& b) {
  if (a.dims() != b.dims())
    throw std::invalid_argument("detect: representation dimensionality mismatch");
  if (a.columns.size() != b.columns.size())
    throw std::invalid_argument("detect: column metadata mismatch");
  for (std::size_t c = 0; c < a.columns.size(); ++c)
    if (a.columns[c].categorical != b.columns[c].categorical ||
        a.columns[c].cardinality != b.columns[c].cardinality)
      throw std::invalid_argument("detect: column kinds differ between samples");
  if (a.samples() < 1 || b.samples() < 1)
    throw std::invalid_argument("detect: empty representation");
}

void finalize_css(std::vector<ConceptResult>& concepts, bool normalize,
                  bool* css_degenerate) {
  std::vector<double> stats;
  stats.reserve(concepts.size());
  for (const auto& c : concepts)
    stats.push_back(normalize ? c.normalized_statistic : c.statistic);
  bool degenerate = false;
  auto css = concept_shift_score(stats, &degenerate);
  for (std::size_t i = 0; i < concepts.size(); ++i) concepts[i].css = css[i];
  if (css_degenerate) *css_degenerate = degenerate;
  std::stable_sort(concepts.begin(), concepts.end(),
                   [](const ConceptResult& a, const ConceptResult& b) {
                     return a.css > b.css;
                   });
}

// Per-concept results for softmax-block representations: KS on every
// dimension of the block, statistic = max D, p = block-Bonferroni min p.
std::vector<ConceptResult> explain_continuous(const Representation& src,
                                              const Representation& tgt,
                                              std::vector<stats::TestResult>* dims_out) {
  std::vector<ConceptResult> out;
  for (const auto& g : src.groups) {
    ConceptResult cr;
    cr.concept_name = g.name;
    cr.block_dims = g.end - g.begin;
    double min_p = 1.0;
    for (int c = g.begin; c < g.end; ++c) {
      auto r = stats::ks_test(column(src.matrix, c), column(tgt.matrix, c));
      cr.statistic = std::max(cr.statistic, r.statistic);
      min_p = std::min(min_p, r.p_value);
      if (dims_out) dims_out->push_back(std::move(r));
    }
    cr.normalized_statistic = cr.statistic;  // KS statistics share a scale
    cr.p_value = std::min(1.0, static_cast<double>(cr.block_dims) * min_p);
    out.push_back(std::move(cr));
  }
  return out;
}

// Per-concept chi-squared on hard concept predictions.
std::vector<ConceptResult> explain_categorical(const Representation& src,
                                               const Representation& tgt,
                                               std::vector<stats::TestResult>* dims_out) {
  std::vector<ConceptResult> out;
  for (const auto& g : src.groups) {
    const int c = g.begin;
    auto r = stats::chi2_test(int_column(src.matrix, c), int_column(tgt.matrix, c),
                              g.cardinality);
    ConceptResult cr;
    cr.concept_name = g.name;
    cr.block_dims = 1;
    cr.statistic = r.statistic;
    cr.p_value = r.p_value;
    cr.degenerate = r.degenerate;
    // Occupied categories minus one; recover df from the samples.
    std::vector<char> seen(static_cast<std::size_t>(g.cardinality), 0);
    for (int v : int_column(src.matrix, c)) seen[static_cast<std::size_t>(v)] = 1;
    for (int v : int_column(tgt.matrix, c)) seen[static_cast<std::size_t>(v)] = 1;
    int occupied = 0;
    for (char s : seen) occupied += s;
    const int df = std::max(occupied - 1, 1);
    cr.normalized_statistic = r.statistic / static_cast<double>(df);
    if (dims_out) dims_out->push_back(std::move(r));
    out.push_back(std::move(cr));
  }
  return out;
}

}  // namespace

std::vector<ConceptResult> explain(const Representation& source,
                                   const Representation& target, double alpha,
                                   const DetectOptions& options) {
  check_compatible(source, target);
  if (source.groups.empty())
    throw std::invalid_argument("explain: representation carries no concept groups");
  (void)alpha;
  std::vector<ConceptResult> concepts =
      source.all_continuous() ? explain_continuous(source, target, nullptr)
                              : explain_categorical(source, target, nullptr);
  bool degenerate = false;
  finalize_css(concepts, options.css_df_normalize, &degenerate);
  return concepts;
}

DetectionReport detect(const Representation& source, const Representation& target,
                       TestChoice test_choice, double alpha,
                       const DetectOptions& options) {
  check_compatible(source, target);
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("detect: alpha must be in (0,1)");

  DetectionReport report;
  report.method = options.method_label;
  report.alpha = alpha;
  report.source_n = source.samples();
  report.target_m = target.samples();
  report.provenance = options.provenance;
  report.css_df_normalized = options.css_df_normalize;

  const bool continuous = source.all_continuous();
  const bool categorical = source.all_categorical();
  if (!continuous && !categorical)
    throw std::invalid_argument("detect: mixed column kinds are not supported");

  if (continuous) {
    if (test_choice == TestChoice::Chi2)
      throw std::invalid_argument("detect: chi2 requires categorical columns");
    const bool use_mmd = test_choice == TestChoice::Mmd;

    if (use_mmd) {
      stats::MmdOptions mmd_options;
      mmd_options.num_permutations = options.mmd_permutations;
      mmd_options.seed = options.seed;
      auto r = stats::mmd_test(source.matrix, target.matrix, mmd_options);
      report.test_used = "mmd";
      report.combined_p = r.p_value;
      report.shift_detected = r.p_value < alpha;
      report.per_dimension.push_back(std::move(r));
      if (!source.groups.empty()) {
        report.per_concept = explain_continuous(source, target, nullptr);
        finalize_css(report.per_concept, options.css_df_normalize,
                     &report.css_degenerate);
      }
      return report;
    }

    if (!source.groups.empty()) {
      // Hierarchical: Bonferroni inside each softmax block, then across
      // concepts. A shift is declared when at least one concept rejects.
      report.per_concept =
          explain_continuous(source, target, &report.per_dimension);
      const double k = static_cast<double>(report.per_concept.size());
      double min_concept_p = 1.0;
      for (const auto& c : report.per_concept)
        min_concept_p = std::min(min_concept_p, c.p_value);
      report.test_used = "ks+bonferroni(blocks)";
      report.combined_p = std::min(1.0, k * min_concept_p);
      report.shift_detected = min_concept_p < alpha / k;
      finalize_css(report.per_concept, options.css_df_normalize,
                   &report.css_degenerate);
      return report;
    }

    std::vector<stats::TestResult> per_dim;
    for (int c = 0; c < source.dims(); ++c)
      per_dim.push_back(
          stats::ks_test(column(source.matrix, c), column(target.matrix, c)));
    auto multi = stats::bonferroni(per_dim, alpha);
    report.test_used = "ks+bonferroni";
    report.combined_p = multi.combined_p;
    report.shift_detected = multi.reject;
    report.per_dimension = std::move(per_dim);
    return report;
  }

  // Categorical representations.
  if (test_choice == TestChoice::Ks || test_choice == TestChoice::Mmd)
    throw std::invalid_argument("detect: " + test_choice_name(test_choice) +
                                " requires continuous columns");

  if (source.dims() == 1 && source.groups.empty()) {
    auto r = stats::chi2_test(int_column(source.matrix, 0),
                              int_column(target.matrix, 0),
                              source.columns[0].cardinality);
    report.test_used = "chi2";
    report.combined_p = r.p_value;
    report.shift_detected = r.p_value < alpha;
    report.per_dimension.push_back(std::move(r));
    return report;
  }

  // Multiple categorical columns: per-concept chi-squared + Bonferroni.
  Representation src = source;
  if (src.groups.empty()) {
    for (int c = 0; c < src.dims(); ++c)
      src.groups.push_back({"dim" + std::to_string(c), c, c + 1,
                            src.columns[static_cast<std::size_t>(c)].cardinality});
  }
  report.per_concept = explain_categorical(src, target, &report.per_dimension);
  const double k = static_cast<double>(report.per_concept.size());
  double min_p = 1.0;
  for (const auto& c : report.per_concept) min_p = std::min(min_p, c.p_value);
  report.test_used = "chi2+bonferroni";
  report.combined_p = std::min(1.0, k * min_p);
  report.shift_detected = min_p < alpha / k;
  finalize_css(report.per_concept, options.css_df_normalize, &report.css_degenerate);
  return report;
}

std::string report_to_json_string(const DetectionReport& report) {
  json j;
  j["method"] = report.method;
  j["test"] = report.test_used;
  j["alpha"] = report.alpha;
  j["shift_detected"] = report.shift_detected;
  j["combined_p"] = report.combined_p;
  j["source_n"] = report.source_n;
  j["target_m"] = report.target_m;
  j["css_df_normalized"] = report.css_df_normalized;
  json dims = json::array();
  for (const auto& d : report.per_dimension)
    dims.push_back({{"test", d.test_name},
                    {"statistic", d.statistic},
                    {"p_value", d.p_value},
                    {"degenerate", d.degenerate}});
  j["per_dimension"] = dims;
  if (!report.per_concept.empty() || report.css_degenerate) {
    json concepts = json::array();
    for (const auto& c : report.per_concept)
      concepts.push_back({{"concept", c.concept_name},
                          {"statistic", c.statistic},
                          {"normalized_statistic", c.normalized_statistic},
                          {"p_value", c.p_value},
                          {"css", c.css},
                          {"degenerate", c.degenerate}});
    j["per_concept"] = concepts;
    j["css_degenerate"] = report.css_degenerate;
  }
  if (!report.provenance.empty()) j["provenance"] = report.provenance;
  return j.dump(2);
}

}  // namespace shiftlens::detector
