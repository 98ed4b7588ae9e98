#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "shiftlens/rng.hpp"
#include "shiftlens/stattests.hpp"

using namespace shiftlens;
using shiftlens::stats::TestResult;

namespace oracle {

// Sup-norm ECDF distance evaluated by a double loop over all pooled points.
double ks_statistic(std::span<const double> a, std::span<const double> b) {
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  double d = 0.0;
  for (double v : pooled) {
    double fa = 0, fb = 0;
    for (double x : a) fa += x <= v;
    for (double x : b) fb += x <= v;
    d = std::max(d, std::abs(fa / static_cast<double>(a.size()) -
                             fb / static_cast<double>(b.size())));
  }
  return d;
}

// Textbook chi-squared homogeneity statistic from the 2 x C table.
double chi2_statistic(const std::vector<int>& ca, const std::vector<int>& cb) {
  const double ta = std::accumulate(ca.begin(), ca.end(), 0.0);
  const double tb = std::accumulate(cb.begin(), cb.end(), 0.0);
  const double grand = ta + tb;
  double stat = 0.0;
  for (std::size_t c = 0; c < ca.size(); ++c) {
    const double col = ca[c] + cb[c];
    if (col == 0) continue;
    const double ea = ta * col / grand;
    const double eb = tb * col / grand;
    stat += (ca[c] - ea) * (ca[c] - ea) / ea + (cb[c] - eb) * (cb[c] - eb) / eb;
  }
  return stat;
}

double rbf(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y, double sigma2) {
  return std::exp(-(x - y).squaredNorm() / (2.0 * sigma2));
}

// Unbiased MMD^2 by direct double loops.
double mmd_unbiased(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                    double sigma2) {
  const auto n = a.rows(), m = b.rows();
  double kxx = 0, kyy = 0, kxy = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) kxx += rbf(a.row(i), a.row(j), sigma2);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j) kyy += rbf(b.row(i), b.row(j), sigma2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) kxy += rbf(a.row(i), b.row(j), sigma2);
  return kxx / (static_cast<double>(n) * (n - 1)) +
         kyy / (static_cast<double>(m) * (m - 1)) -
         2.0 * kxy / (static_cast<double>(n) * m);
}

}  // namespace oracle

TEST_CASE("ks: identical samples give D = 0, p = 1") {
  std::vector<double> a{1.0, 2.0, 3.0, 4.0};
  auto r = stats::ks_test(a, a);
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("ks: disjoint supports give D = 1") {
  std::vector<double> a{-3.0, -2.0, -1.0, 0.0};
  std::vector<double> b{1.0, 2.0, 3.0};
  auto r = stats::ks_test(a, b);
  CHECK(r.statistic == 1.0);
  CHECK(r.p_value < 0.2);
}

TEST_CASE("ks: frozen example matches the brute-force oracle and series") {
  std::vector<double> a{1, 2, 3, 4, 5};
  std::vector<double> b{1.5, 2.5, 3.5, 4.5, 5.5};
  auto r = stats::ks_test(a, b);
  CHECK(r.statistic == oracle::ks_statistic(a, b));
  CHECK(r.statistic == doctest::Approx(0.2).epsilon(1e-12));
  // independent evaluation of the asymptotic series with the ne correction
  CHECK(r.p_value == doctest::Approx(0.9996217060534519).epsilon(1e-9));
}

TEST_CASE("ks: statistic equals the oracle exactly on 100 random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int na = 1 + static_cast<int>(rng.below(12));
    const int nb = 1 + static_cast<int>(rng.below(12));
    std::vector<double> a, b;
    for (int i = 0; i < na; ++i)
      a.push_back(std::floor(rng.gaussian() * 4.0) / 2.0);  // force ties
    for (int i = 0; i < nb; ++i) b.push_back(std::floor(rng.gaussian() * 4.0) / 2.0);
    auto r = stats::ks_test(a, b);
    CHECK(r.statistic == oracle::ks_statistic(a, b));
  }
}

TEST_CASE("ks: symmetric and invariant under strictly increasing transforms") {
  Rng rng(5);
  std::vector<double> a, b;
  for (int i = 0; i < 40; ++i) a.push_back(rng.gaussian());
  for (int i = 0; i < 25; ++i) b.push_back(rng.gaussian() + 0.3);

  auto r1 = stats::ks_test(a, b);
  auto r2 = stats::ks_test(b, a);
  CHECK(r1.statistic == r2.statistic);
  CHECK(r1.p_value == r2.p_value);

  auto monotone = [](double x) { return std::exp(x) + x * x * x; };
  std::vector<double> ta, tb;
  for (double x : a) ta.push_back(monotone(x));
  for (double x : b) tb.push_back(monotone(x));
  auto r3 = stats::ks_test(ta, tb);
  CHECK(r3.statistic == r1.statistic);
}

TEST_CASE("ks: empty samples are rejected") {
  std::vector<double> a{1.0}, empty;
  CHECK_THROWS_AS(stats::ks_test(empty, a), std::invalid_argument);
  CHECK_THROWS_AS(stats::ks_test(a, empty), std::invalid_argument);
}

TEST_CASE("chi2: identical count vectors give 0 statistic, p = 1") {
  std::vector<int> a{0, 0, 1, 1, 2, 2};
  auto r = stats::chi2_test(a, a, 3);
  CHECK(r.statistic == doctest::Approx(0.0));
  CHECK(r.p_value == doctest::Approx(1.0));
}

TEST_CASE("chi2: hand-computed 2x2 table") {
  std::vector<int> a(50, 0), b(50, 1);
  auto r = stats::chi2_test(a, b, 2);
  CHECK(r.statistic == doctest::Approx(100.0).epsilon(1e-12));
  // chi2 survival at 100 with df=1
  CHECK(r.p_value == doctest::Approx(1.5239706048320995e-23).epsilon(1e-9));
}

TEST_CASE("chi2: matches the textbook formula on 50 random tables") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const int card = 2 + static_cast<int>(rng.below(6));
    std::vector<int> a, b;
    const int na = 20 + static_cast<int>(rng.below(100));
    const int nb = 20 + static_cast<int>(rng.below(100));
    for (int i = 0; i < na; ++i)
      a.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(card))));
    for (int i = 0; i < nb; ++i)
      b.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(card))));
    std::vector<int> ca(static_cast<std::size_t>(card), 0),
        cb(static_cast<std::size_t>(card), 0);
    for (int v : a) ca[static_cast<std::size_t>(v)]++;
    for (int v : b) cb[static_cast<std::size_t>(v)]++;
    auto r = stats::chi2_test(a, b, card);
    CHECK(r.statistic == doctest::Approx(oracle::chi2_statistic(ca, cb)).epsilon(1e-12));
  }
}

TEST_CASE("chi2: asymptotic p is close to a permutation oracle") {
  // fixed table: a has 10/10/5, b has 10/10/20 over 3 categories
  std::vector<int> a, b;
  for (int i = 0; i < 10; ++i) a.push_back(0);
  for (int i = 0; i < 10; ++i) a.push_back(1);
  for (int i = 0; i < 5; ++i) a.push_back(2);
  for (int i = 0; i < 10; ++i) b.push_back(0);
  for (int i = 0; i < 10; ++i) b.push_back(1);
  for (int i = 0; i < 20; ++i) b.push_back(2);

  auto r = stats::chi2_test(a, b, 3);

  std::vector<int> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  Rng rng(11);
  int at_least = 0;
  const int perms = 10000;
  for (int p = 0; p < perms; ++p) {
    auto shuffled = pooled;
    Rng perm_rng = rng.fork(static_cast<std::uint64_t>(p));
    perm_rng.shuffle(shuffled);
    std::vector<int> pa(shuffled.begin(), shuffled.begin() + 25);
    std::vector<int> pb(shuffled.begin() + 25, shuffled.end());
    std::vector<int> ca(3, 0), cb(3, 0);
    for (int v : pa) ca[static_cast<std::size_t>(v)]++;
    for (int v : pb) cb[static_cast<std::size_t>(v)]++;
    if (oracle::chi2_statistic(ca, cb) >= r.statistic - 1e-12) ++at_least;
  }
  const double p_mc = static_cast<double>(at_least) / perms;
  CHECK(std::abs(r.p_value - p_mc) < 0.02);
}

TEST_CASE("chi2: degenerate single-category table") {
  std::vector<int> a(30, 2), b(10, 2);
  auto r = stats::chi2_test(a, b, 5);
  CHECK(r.degenerate);
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("chi2: symmetric in the two samples") {
  std::vector<int> a{0, 1, 1, 2, 2, 2}, b{0, 0, 1, 2};
  auto r1 = stats::chi2_test(a, b, 3);
  auto r2 = stats::chi2_test(b, a, 3);
  CHECK(r1.statistic == doctest::Approx(r2.statistic).epsilon(1e-14));
  CHECK(r1.p_value == doctest::Approx(r2.p_value).epsilon(1e-14));
}

TEST_CASE("chi2 survival function spot values") {
  CHECK(stats::chi2_survival(3.84, 1) ==
        doctest::Approx(0.05004352124870519).epsilon(1e-10));
  CHECK(stats::chi2_survival(10, 4) ==
        doctest::Approx(0.04042768199451279).epsilon(1e-10));
  CHECK(stats::chi2_survival(0.5, 3) ==
        doctest::Approx(0.9188914116546758).epsilon(1e-10));
  CHECK(stats::chi2_survival(25, 40) ==
        doctest::Approx(0.9694058710730035).epsilon(1e-10));
}

TEST_CASE("mmd: biased statistic vanishes when B is a copy of A") {
  Rng rng(3);
  Eigen::MatrixXd a(8, 3);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = rng.gaussian();
  CHECK(stats::mmd_statistic_biased(a, a, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("mmd: unbiased statistic matches the double-loop oracle") {
  Rng rng(4);
  Eigen::MatrixXd a(10, 4), b(10, 4);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = rng.gaussian();
  for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.gaussian() + 0.5;
  const double sigma2 = stats::mmd_median_heuristic_sigma2(a, b);
  const double got = stats::mmd_statistic_unbiased(a, b, sigma2);
  const double want = oracle::mmd_unbiased(a, b, sigma2);
  CHECK(got == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("mmd: permutation p-value is deterministic and row-order invariant") {
  Rng rng(6);
  Eigen::MatrixXd a(20, 2), b(25, 2);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = rng.gaussian();
  for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.gaussian() + 1.0;

  stats::MmdOptions opt;
  opt.num_permutations = 200;
  opt.seed = 9;
  auto r1 = stats::mmd_test(a, b, opt);
  auto r2 = stats::mmd_test(a, b, opt);
  CHECK(r1.p_value == r2.p_value);
  CHECK(r1.p_value >= 1.0 / 201.0);

  // permute rows within a sample
  Eigen::MatrixXd pa(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) pa.row(i) = a.row(a.rows() - 1 - i);
  auto r3 = stats::mmd_test(pa, b, opt);
  CHECK(r3.statistic == doctest::Approx(r1.statistic).epsilon(1e-12));
  CHECK(r3.p_value == r1.p_value);
}

TEST_CASE("mmd: detects a clear mean shift") {
  Rng rng(8);
  Eigen::MatrixXd a(40, 2), b(40, 2);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = rng.gaussian();
  for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.gaussian() + 2.0;
  stats::MmdOptions opt;
  opt.num_permutations = 500;
  auto r = stats::mmd_test(a, b, opt);
  CHECK(r.p_value < 0.01);
  CHECK(r.statistic > 0.0);
}

TEST_CASE("mmd: identical pooled points fall back to unit bandwidth") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 2);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(4, 2);
  stats::MmdOptions opt;
  opt.num_permutations = 50;
  auto r = stats::mmd_test(a, b, opt);
  CHECK(r.degenerate);
  CHECK(r.p_value > 0.5);
}

TEST_CASE("mmd: argument validation") {
  Eigen::MatrixXd a(1, 2), b(5, 2), c(5, 3);
  a.setZero();
  b.setZero();
  c.setZero();
  CHECK_THROWS_AS(stats::mmd_test(a, b), std::invalid_argument);
  CHECK_THROWS_AS(stats::mmd_test(b, c), std::invalid_argument);
}

TEST_CASE("mmd: null p-values are calibrated") {
  // same-distribution draws; fraction rejecting at 0.05 should be near 0.05
  int rejections = 0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng(1000 + rep);
    Eigen::MatrixXd a(30, 3), b(30, 3);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = rng.gaussian();
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.gaussian();
    stats::MmdOptions opt;
    opt.num_permutations = 100;
    opt.seed = static_cast<std::uint64_t>(rep);
    if (stats::mmd_test(a, b, opt).p_value < 0.05) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / reps;
  CHECK(rate >= 0.01);
  CHECK(rate <= 0.10);
}

TEST_CASE("bonferroni combines correctly") {
  auto make = [](double p) {
    TestResult r;
    r.p_value = p;
    r.statistic = 1.0 - p;
    r.test_name = "ks";
    return r;
  };
  auto single = stats::bonferroni({make(0.2)}, 0.05);
  CHECK(single.combined_p == doctest::Approx(0.2));
  CHECK_FALSE(single.reject);

  auto multi = stats::bonferroni({make(0.01), make(0.9), make(0.9)}, 0.05);
  CHECK(multi.reject);  // 0.01 < 0.05/3
  CHECK(multi.combined_p == doctest::Approx(0.03));
  CHECK(multi.max_statistic == doctest::Approx(0.99));

  auto none = stats::bonferroni({make(1.0), make(1.0)}, 0.05);
  CHECK_FALSE(none.reject);
  CHECK(none.combined_p == doctest::Approx(1.0));

  CHECK_THROWS_AS(stats::bonferroni({}, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(stats::bonferroni({make(0.5)}, 1.5), std::invalid_argument);
}

TEST_CASE("null false-positive rates sit in the 3-sigma band") {
  // ks on n=100 normal samples
  int ks_rejections = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    Rng rng(5000 + t);
    std::vector<double> a, b;
    for (int i = 0; i < 100; ++i) a.push_back(rng.gaussian());
    for (int i = 0; i < 100; ++i) b.push_back(rng.gaussian());
    if (stats::ks_test(a, b).p_value < 0.05) ++ks_rejections;
  }
  const double band = 3.0 * std::sqrt(0.05 * 0.95 / trials);
  CHECK(std::abs(ks_rejections / static_cast<double>(trials) - 0.05) < band + 0.01);

  // chi2 on uniform categorical data, 4 categories
  int chi2_rejections = 0;
  for (int t = 0; t < trials; ++t) {
    Rng rng(9000 + t);
    std::vector<int> a, b;
    for (int i = 0; i < 200; ++i) a.push_back(static_cast<int>(rng.below(4)));
    for (int i = 0; i < 200; ++i) b.push_back(static_cast<int>(rng.below(4)));
    if (stats::chi2_test(a, b, 4).p_value < 0.05) ++chi2_rejections;
  }
  CHECK(std::abs(chi2_rejections / static_cast<double>(trials) - 0.05) < band + 0.01);
}

TEST_CASE("kolmogorov survival is monotone and bounded") {
  double prev = 1.0;
  for (double lam = 0.0; lam < 3.0; lam += 0.05) {
    const double p = stats::kolmogorov_survival(lam);
    CHECK(p >= 0.0);
    CHECK(p <= prev + 1e-12);
    prev = p;
  }
}
