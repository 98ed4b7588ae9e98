#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace shiftlens::stats {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::string test_name;
  int dims_tested = 1;
  bool degenerate = false;
};

struct MultiTestResult {
  std::vector<TestResult> per_dimension;
  double combined_p = 1.0;  // min(1, K * min p)
  double max_statistic = 0.0;
  bool reject = false;  // min p < alpha / K
  double alpha = 0.0;
};

// Two-sample Kolmogorov-Smirnov. D is the exact sup-norm ECDF distance from a
// merge scan; the p-value uses the asymptotic Kolmogorov series with the
// finite-size correction lambda = (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) * D,
// ne = |a||b|/(|a|+|b|). Biased for samples under ~20 points.
TestResult ks_test(std::span<const double> a, std::span<const double> b);

// Chi-squared homogeneity test on a 2 x cardinality contingency table.
// Categories with zero total count are dropped from the degrees of freedom;
// a table with fewer than two occupied categories is degenerate (p = 1).
TestResult chi2_test(std::span<const int> a, std::span<const int> b, int cardinality);

struct MmdOptions {
  int num_permutations = 1000;
  std::uint64_t seed = 0;
};

// Kernel two-sample test: unbiased MMD^2 estimate with an RBF kernel whose
// bandwidth follows the median heuristic (sigma^2 = median pairwise squared
// distance of the pooled sample / 2). The p-value is a permutation p-value,
// (1 + #{permuted >= observed}) / (1 + P). Permutation draws are keyed by
// (seed, content hash of the pooled rows), so the result does not depend on
// row order within either sample. The reported statistic is clamped at zero;
// the permutation comparison uses the raw estimate.
TestResult mmd_test(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                    const MmdOptions& options = {});

// Raw estimators, exposed for oracle comparisons.
double mmd_statistic_unbiased(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                              double sigma2);
double mmd_statistic_biased(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            double sigma2);
double mmd_median_heuristic_sigma2(const Eigen::MatrixXd& a,
                                   const Eigen::MatrixXd& b);

MultiTestResult bonferroni(const std::vector<TestResult>& results, double alpha);

// Survival function of the chi-squared distribution (regularized upper
// incomplete gamma Q(df/2, x/2)).
double chi2_survival(double x, double df);

// Asymptotic Kolmogorov survival probability 2 * sum (-1)^{j-1} exp(-2 j^2 t^2).
double kolmogorov_survival(double lambda);

}  // namespace shiftlens::stats
