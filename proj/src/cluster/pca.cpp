#include <cmath>

#include <Eigen/Dense>

#include "lens/cluster.hpp"
#include "lens/error.hpp"

namespace lens::cluster {

PointSet PointSet::from_embeddings(const std::vector<embed::EmbeddingVector>& vectors) {
  if (vectors.empty()) return {};
  PointSet out(vectors.size(), vectors.front().dim());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].dim() != out.cols) throw ContractError("embeddings have mixed dimensions");
    for (std::size_t j = 0; j < out.cols; ++j) out.at(i, j) = vectors[i][j];
  }
  return out;
}

PcaModel fit_pca(const PointSet& points, std::size_t target_dim) {
  const auto n = points.rows;
  const auto d = points.cols;
  if (n < 2) throw ContractError("PCA needs at least two points");
  if (target_dim < 1 || target_dim >= d) {
    throw ConfigError("reducer target_dim must be in [1, " + std::to_string(d) + ")");
  }

  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMatrix> x(points.data.data(), static_cast<Eigen::Index>(n),
                                      static_cast<Eigen::Index>(d));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const RowMatrix centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("PCA eigendecomposition did not converge");
  const auto& values = solver.eigenvalues();   // ascending
  const auto& vectors = solver.eigenvectors();

  PcaModel model;
  model.mean.assign(mean.data(), mean.data() + d);
  model.components = PointSet(target_dim, d);
  model.explained_variance.resize(target_dim);
  for (std::size_t k = 0; k < target_dim; ++k) {
    const auto col = static_cast<Eigen::Index>(d - 1 - k);
    model.explained_variance[k] = std::max(0.0, values(col));
    std::size_t argmax = 0;
    for (std::size_t j = 1; j < d; ++j) {
      if (std::abs(vectors(static_cast<Eigen::Index>(j), col)) >
          std::abs(vectors(static_cast<Eigen::Index>(argmax), col))) {
        argmax = j;
      }
    }
    const double sign = vectors(static_cast<Eigen::Index>(argmax), col) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      model.components.at(k, j) = sign * vectors(static_cast<Eigen::Index>(j), col);
    }
  }
  return model;
}

PointSet project(const PcaModel& model, const PointSet& points) {
  const auto d = model.mean.size();
  if (points.cols != d) throw ContractError("projection input has the wrong dimension");
  const auto k = model.components.rows;
  PointSet out(points.rows, k);
  for (std::size_t i = 0; i < points.rows; ++i) {
    const double* row = points.row(i);
    for (std::size_t c = 0; c < k; ++c) {
      const double* comp = model.components.row(c);
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (row[j] - model.mean[j]) * comp[j];
      out.at(i, c) = s;
    }
  }
  return out;
}

PointSet reduce(const PointSet& points, const ReducerConfig& cfg) {
  if (points.rows < 2) throw ContractError("reduce needs at least two points");
  switch (cfg.method) {
    case ReducerMethod::none:
      return points;
    case ReducerMethod::pca:
      return project(fit_pca(points, cfg.target_dim), points);
  }
  throw ConfigError("unknown reducer method");
}

}  // namespace lens::cluster
