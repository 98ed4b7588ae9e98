#include "shiftlens/stattests.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "shiftlens/rng.hpp"

namespace shiftlens::stats {

namespace {

// Regularized incomplete gamma, series expansion (x < a + 1).
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma via Lentz continued fraction (x >= a + 1).
double gamma_q_cf(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q domain");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

}  // namespace

double chi2_survival(double x, double df) { return gamma_q(df / 2.0, x / 2.0); }

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  const double e = -2.0 * lambda * lambda;
  for (int j = 1; j <= 1000; ++j) {
    double term = 2.0 * std::exp(e * j * j);
    sum += sign * term;
    if (term < 1e-10) return std::clamp(sum, 0.0, 1.0);
    sign = -sign;
  }
  return 1.0;  // series converges too slowly only for lambda ~ 0, where p = 1
}

TestResult ks_test(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_test: empty sample");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());

  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }

  TestResult r;
  r.test_name = "ks";
  r.dims_tested = 1;
  r.statistic = d;
  if (d == 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double ne = na * nb / (na + nb);
  const double sqrt_ne = std::sqrt(ne);
  const double lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
  r.p_value = kolmogorov_survival(lambda);
  return r;
}

TestResult chi2_test(std::span<const int> a, std::span<const int> b, int cardinality) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chi2_test: empty sample");
  if (cardinality < 1) throw std::invalid_argument("chi2_test: bad cardinality");
  std::vector<double> ca(static_cast<std::size_t>(cardinality), 0.0);
  std::vector<double> cb(static_cast<std::size_t>(cardinality), 0.0);
  for (int v : a) {
    if (v < 0 || v >= cardinality)
      throw std::invalid_argument("chi2_test: value outside cardinality");
    ca[static_cast<std::size_t>(v)] += 1.0;
  }
  for (int v : b) {
    if (v < 0 || v >= cardinality)
      throw std::invalid_argument("chi2_test: value outside cardinality");
    cb[static_cast<std::size_t>(v)] += 1.0;
  }

  const double ta = static_cast<double>(a.size());
  const double tb = static_cast<double>(b.size());
  const double grand = ta + tb;
  int occupied = 0;
  double stat = 0.0;
  for (int c = 0; c < cardinality; ++c) {
    const double col = ca[static_cast<std::size_t>(c)] + cb[static_cast<std::size_t>(c)];
    if (col == 0.0) continue;
    ++occupied;
    const double ea = ta * col / grand;
    const double eb = tb * col / grand;
    const double da = ca[static_cast<std::size_t>(c)] - ea;
    const double db = cb[static_cast<std::size_t>(c)] - eb;
    stat += da * da / ea + db * db / eb;
  }

  TestResult r;
  r.test_name = "chi2";
  r.dims_tested = 1;
  const int df = occupied - 1;
  if (df < 1) {
    r.degenerate = true;
    r.statistic = 0.0;
    r.p_value = 1.0;
    return r;
  }
  r.statistic = stat;
  r.p_value = std::clamp(chi2_survival(stat, df), 0.0, 1.0);
  return r;
}

namespace {

Eigen::MatrixXd rbf_kernel_matrix(const Eigen::MatrixXd& pooled, double sigma2) {
  const Eigen::Index n = pooled.rows();
  Eigen::VectorXd sq = pooled.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = sq.replicate(1, n) + sq.transpose().replicate(n, 1) -
                       2.0 * (pooled * pooled.transpose());
  return (-d2.cwiseMax(0.0) / (2.0 * sigma2)).array().exp();
}

// Unbiased MMD^2 over an assignment of pooled rows: the first n indices of
// `order` belong to sample A, the rest to B.
double mmd_from_kernel(const Eigen::MatrixXd& k, std::span<const int> order,
                       Eigen::Index n) {
  const Eigen::Index total = k.rows();
  const Eigen::Index m = total - n;
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (Eigen::Index i = 0; i < total; ++i) {
    const int oi = order[static_cast<std::size_t>(i)];
    const bool i_in_a = i < n;
    for (Eigen::Index j = i + 1; j < total; ++j) {
      const double v = k(oi, order[static_cast<std::size_t>(j)]);
      const bool j_in_a = j < n;
      if (i_in_a && j_in_a)
        kxx += v;
      else if (!i_in_a && !j_in_a)
        kyy += v;
      else
        kxy += v;
    }
  }
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  return 2.0 * kxx / (dn * (dn - 1.0)) + 2.0 * kyy / (dm * (dm - 1.0)) -
         2.0 * kxy / (dn * dm);
}

std::uint64_t content_hash(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  // Row-order-invariant digest: hash each row, sort, hash the sorted list.
  std::vector<std::uint32_t> row_hashes;
  row_hashes.reserve(static_cast<std::size_t>(a.rows() + b.rows()));
  auto add_rows = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      Eigen::RowVectorXd row = m.row(i);
      row_hashes.push_back(crc32(row.data(),
                                 static_cast<std::size_t>(row.size()) * sizeof(double)));
    }
  };
  add_rows(a);
  add_rows(b);
  std::sort(row_hashes.begin(), row_hashes.end());
  std::uint32_t lo = crc32(row_hashes.data(), row_hashes.size() * sizeof(std::uint32_t));
  std::uint32_t hi = crc32(row_hashes.data(), row_hashes.size() * sizeof(std::uint32_t),
                           0x9e3779b9u);
  return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

}  // namespace

double mmd_median_heuristic_sigma2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  const Eigen::Index n = pooled.rows();
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      d2.push_back((pooled.row(i) - pooled.row(j)).squaredNorm());
  if (d2.empty()) return 1.0;
  // Lower median, deterministic.
  auto mid = d2.begin() + static_cast<std::ptrdiff_t>((d2.size() - 1) / 2);
  std::nth_element(d2.begin(), mid, d2.end());
  return *mid / 2.0;
}

double mmd_statistic_unbiased(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                              double sigma2) {
  Eigen::MatrixXd pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  Eigen::MatrixXd k = rbf_kernel_matrix(pooled, sigma2);
  std::vector<int> order(static_cast<std::size_t>(pooled.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  return mmd_from_kernel(k, order, a.rows());
}

double mmd_statistic_biased(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            double sigma2) {
  Eigen::MatrixXd pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  Eigen::MatrixXd k = rbf_kernel_matrix(pooled, sigma2);
  const Eigen::Index n = a.rows(), m = b.rows();
  const double kxx = k.topLeftCorner(n, n).sum() / (static_cast<double>(n) * n);
  const double kyy = k.bottomRightCorner(m, m).sum() / (static_cast<double>(m) * m);
  const double kxy = k.topRightCorner(n, m).sum() / (static_cast<double>(n) * m);
  return kxx + kyy - 2.0 * kxy;
}

TestResult mmd_test(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                    const MmdOptions& options) {
  if (a.rows() < 2 || b.rows() < 2)
    throw std::invalid_argument("mmd_test: need at least 2 samples per side");
  if (a.cols() != b.cols())
    throw std::invalid_argument("mmd_test: dimension mismatch");
  if (options.num_permutations < 1)
    throw std::invalid_argument("mmd_test: need at least 1 permutation");

  TestResult r;
  r.test_name = "mmd";
  r.dims_tested = static_cast<int>(a.cols());

  double sigma2 = mmd_median_heuristic_sigma2(a, b);
  if (sigma2 <= 0.0) {
    sigma2 = 1.0;
    r.degenerate = true;
  }

  Eigen::MatrixXd pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  const Eigen::MatrixXd k = rbf_kernel_matrix(pooled, sigma2);
  const Eigen::Index n = a.rows();
  const Eigen::Index total = pooled.rows();

  std::vector<int> order(static_cast<std::size_t>(total));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  const double observed = mmd_from_kernel(k, order, n);

  Rng rng(options.seed ^ content_hash(a, b));
  int at_least = 0;
  for (int p = 0; p < options.num_permutations; ++p) {
    Rng perm_rng = rng.fork(static_cast<std::uint64_t>(p));
    std::vector<int> shuffled = order;
    perm_rng.shuffle(shuffled);
    if (mmd_from_kernel(k, shuffled, n) >= observed) ++at_least;
  }

  r.statistic = std::max(observed, 0.0);
  r.p_value = (1.0 + at_least) / (1.0 + options.num_permutations);
  return r;
}

MultiTestResult bonferroni(const std::vector<TestResult>& results, double alpha) {
  if (results.empty()) throw std::invalid_argument("bonferroni: empty result list");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("bonferroni: alpha must be in (0,1)");
  MultiTestResult out;
  out.per_dimension = results;
  out.alpha = alpha;
  double min_p = std::numeric_limits<double>::infinity();
  for (const auto& r : results) {
    min_p = std::min(min_p, r.p_value);
    out.max_statistic = std::max(out.max_statistic, r.statistic);
  }
  const double k = static_cast<double>(results.size());
  out.combined_p = std::min(1.0, k * min_p);
  out.reject = min_p < alpha / k;
  return out;
}

}  // namespace shiftlens::stats
