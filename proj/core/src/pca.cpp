#include "msan/pca.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "msan/errors.hpp"

namespace msan::io {

Projection pca_project(const Tensor& x, std::size_t components) {
  if (x.rank() != 2 || x.rows() == 0) throw ArgumentError("PCA needs a non-empty matrix");
  const auto n = static_cast<Eigen::Index>(x.rows());
  const auto d = static_cast<Eigen::Index>(x.cols());
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> data(x.data().data(), n, d);
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Eigen::MatrixXd centred = data.rowwise() - mean;
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw ArgumentError("PCA eigen-decomposition failed");

  Projection p;
  const std::size_t k = std::min<std::size_t>(components, static_cast<std::size_t>(d));
  p.components = Tensor({components, x.cols()});
  p.scores = Tensor({x.rows(), components});
  p.mean.assign(mean.data(), mean.data() + d);
  for (std::size_t c = 0; c < components; ++c) {
    if (c >= k) {
      p.eigenvalues.push_back(0.0);
      continue;
    }
    // Eigen sorts ascending.
    const Eigen::Index col = d - 1 - static_cast<Eigen::Index>(c);
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0.0) v = -v;
    p.eigenvalues.push_back(std::max(0.0, solver.eigenvalues()(col)));
    for (Eigen::Index j = 0; j < d; ++j) p.components.at(c, static_cast<std::size_t>(j)) = v(j);
    const Eigen::VectorXd proj = centred * v;
    for (Eigen::Index i = 0; i < n; ++i) p.scores.at(static_cast<std::size_t>(i), c) = proj(i);
  }
  return p;
}

}  // namespace msan::io
