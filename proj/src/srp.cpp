#include <cmath>
#include <stdexcept>
#include <vector>

#include "shiftlens/models.hpp"
#include "shiftlens/rng.hpp"

namespace shiftlens::models {

// Achlioptas/Li sparse projection: density 1/sqrt(d0), entries +-s with
// probability density/2 each, s = sqrt(1/(density * m)).
SrpModel fit_srp(int input_dims, int output_dims, std::uint64_t seed) {
  if (input_dims < 1 || output_dims < 1)
    throw std::invalid_argument("fit_srp: dimensions must be positive");

  SrpModel model;
  model.input_dims = input_dims;
  model.output_dims = output_dims;
  model.density = 1.0 / std::sqrt(static_cast<double>(input_dims));
  model.scale = std::sqrt(1.0 / (model.density * output_dims));
  model.seed = seed;

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(
      model.density * input_dims * output_dims * 1.2 + 16));
  const Rng root(seed);
  for (int r = 0; r < output_dims; ++r) {
    Rng rng = root.fork(static_cast<std::uint64_t>(r));
    for (int c = 0; c < input_dims; ++c) {
      const double u = rng.uniform();
      if (u < model.density / 2.0)
        entries.emplace_back(r, c, model.scale);
      else if (u < model.density)
        entries.emplace_back(r, c, -model.scale);
    }
  }
  model.projection.resize(output_dims, input_dims);
  model.projection.setFromTriplets(entries.begin(), entries.end());
  model.projection.makeCompressed();
  return model;
}

Eigen::MatrixXd SrpModel::transform(const Eigen::MatrixXd& x) const {
  if (x.cols() != input_dims)
    throw std::invalid_argument("srp transform: dimension mismatch");
  return (projection * x.transpose()).transpose();
}

}  // namespace shiftlens::models
