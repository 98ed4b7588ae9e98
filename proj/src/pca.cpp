#include <Eigen/Dense>
#include <stdexcept>

#include "shiftlens/models.hpp"

namespace shiftlens::models {

namespace {

struct Spectrum {
  Eigen::VectorXd eigenvalues;   // descending, clamped at 0
  Eigen::MatrixXd components;    // rows are principal axes
  double total_variance = 0.0;
};

// Full spectrum (up to rank) of the sample covariance of x.
Spectrum decompose(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n < 2) throw std::invalid_argument("fit_pca: need at least 2 samples");

  Spectrum s;
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean;
  s.total_variance = centered.squaredNorm() / static_cast<double>(n - 1);
  if (s.total_variance <= 0.0)
    throw std::invalid_argument("fit_pca: data has zero variance");

  if (d <= n) {
    Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("fit_pca: eigendecomposition failed");
    // Eigen returns ascending order; reverse.
    s.eigenvalues = es.eigenvalues().reverse().cwiseMax(0.0);
    s.components = es.eigenvectors().rowwise().reverse().transpose();
  } else {
    // Gram route: eigenvectors of (1/(n-1)) X Xt lift to covariance axes.
    Eigen::MatrixXd gram =
        centered * centered.transpose() / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("fit_pca: eigendecomposition failed");
    Eigen::VectorXd vals = es.eigenvalues().reverse().cwiseMax(0.0);
    Eigen::MatrixXd u = es.eigenvectors().rowwise().reverse();
    const double tol = vals(0) * 1e-12;
    Eigen::Index rank = 0;
    while (rank < vals.size() && vals(rank) > tol) ++rank;
    s.eigenvalues = vals.head(rank);
    s.components.resize(rank, d);
    for (Eigen::Index i = 0; i < rank; ++i) {
      Eigen::VectorXd axis = centered.transpose() * u.col(i);
      s.components.row(i) = axis.normalized();
    }
  }
  return s;
}

PcaModel take(const Eigen::MatrixXd& x, const Spectrum& s, int m) {
  if (m < 1 || m > s.components.rows())
    throw std::invalid_argument("fit_pca: target dimension out of range");
  PcaModel model;
  model.mean = x.colwise().mean();
  model.components = s.components.topRows(m);
  model.explained_variance_ratio = s.eigenvalues.head(m) / s.total_variance;
  return model;
}

}  // namespace

PcaModel fit_pca(const Eigen::MatrixXd& x, int m) {
  if (m < 1 || m > std::min(x.rows(), x.cols()))
    throw std::invalid_argument("fit_pca: target dimension out of range");
  return take(x, decompose(x), m);
}

PcaModel fit_pca_auto(const Eigen::MatrixXd& x, double variance_target) {
  if (!(variance_target > 0.0 && variance_target <= 1.0))
    throw std::invalid_argument("fit_pca_auto: variance target in (0, 1]");
  Spectrum s = decompose(x);
  double cumulative = 0.0;
  int m = static_cast<int>(s.eigenvalues.size());
  for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i) {
    cumulative += s.eigenvalues(i) / s.total_variance;
    if (cumulative >= variance_target) {
      m = static_cast<int>(i) + 1;
      break;
    }
  }
  return take(x, s, m);
}

Eigen::MatrixXd PcaModel::transform(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size())
    throw std::invalid_argument("pca transform: dimension mismatch");
  return (x.rowwise() - mean.transpose()) * components.transpose();
}

}  // namespace shiftlens::models
