#include "fpdecomp/grid.hpp"

#include <algorithm>
#include <cmath>

#include "fpdecomp/error.hpp"

namespace fpdecomp {

Grid::Grid(Box bounds, std::vector<int> cells) : bounds_(std::move(bounds)), cells_(std::move(cells)) {
  if (cells_.empty() || cells_.size() != bounds_.size()) {
    throw validation_error("DimensionMismatch", "grid needs one cell count per domain axis");
  }
  const int n = dimension();
  h_.resize(n);
  stride_.assign(n, 1);
  size_ = 1;
  volume_ = 1.0;
  for (int i = 0; i < n; ++i) {
    if (cells_[i] < 1) throw validation_error("SchemaError", "cell counts must be positive");
    if (!(bounds_[i].lo < bounds_[i].hi)) {
      throw validation_error("SchemaError", "grid bounds must satisfy lo < hi");
    }
    h_[i] = bounds_[i].width() / cells_[i];
    volume_ *= h_[i];
    size_ *= static_cast<std::size_t>(cells_[i]);
  }
  for (int i = n - 2; i >= 0; --i) stride_[i] = stride_[i + 1] * static_cast<std::size_t>(cells_[i + 1]);
}

std::vector<int> Grid::multi_index(std::size_t cell) const {
  std::vector<int> idx(dimension());
  for (int i = 0; i < dimension(); ++i) idx[i] = coordinate(cell, i);
  return idx;
}

std::size_t Grid::linear_index(std::span<const int> idx) const {
  std::size_t k = 0;
  for (int i = 0; i < dimension(); ++i) k += static_cast<std::size_t>(idx[i]) * stride_[i];
  return k;
}

Eigen::VectorXd Grid::center(std::size_t cell) const {
  Eigen::VectorXd x(dimension());
  for (int i = 0; i < dimension(); ++i) x[i] = center(i, coordinate(cell, i));
  return x;
}

std::optional<std::size_t> Grid::locate(const Eigen::VectorXd& x) const {
  std::size_t k = 0;
  for (int i = 0; i < dimension(); ++i) {
    if (!bounds_[i].contains(x[i])) return std::nullopt;
    int c = static_cast<int>(std::floor((x[i] - bounds_[i].lo) / h_[i]));
    c = std::clamp(c, 0, cells_[i] - 1);
    k += static_cast<std::size_t>(c) * stride_[i];
  }
  return k;
}

Grid Grid::refined(int factor) const {
  std::vector<int> c = cells_;
  for (int& m : c) m *= factor;
  return Grid(bounds_, c);
}

bool Grid::operator==(const Grid& other) const {
  if (cells_ != other.cells_) return false;
  for (int i = 0; i < dimension(); ++i) {
    if (bounds_[i].lo != other.bounds_[i].lo || bounds_[i].hi != other.bounds_[i].hi) return false;
  }
  return true;
}

GridField::GridField(Grid g, Eigen::VectorXd v) : grid(std::move(g)), values(std::move(v)) {
  if (static_cast<std::size_t>(values.size()) != grid.size()) {
    throw validation_error("GridMismatch", "field length does not match the grid");
  }
}

GridField GridField::normalized() const {
  const double m = mass();
  if (!(m > 0.0) || !std::isfinite(m)) {
    throw validation_error("ValidationFailure", "cannot normalise a field with non-positive mass");
  }
  return GridField(grid, values / m);
}

GridVectorField::GridVectorField(Grid g, Eigen::MatrixXd v) : grid(std::move(g)), values(std::move(v)) {
  if (static_cast<std::size_t>(values.rows()) != grid.size()) {
    throw validation_error("GridMismatch", "field length does not match the grid");
  }
}

void require_same_grid(const Grid& a, const Grid& b) {
  if (!(a == b)) throw validation_error("GridMismatch", "fields live on different grids");
}

GridField sample(const Grid& g, const std::function<double(const Eigen::VectorXd&)>& f) {
  Eigen::VectorXd v(g.size());
  for (std::size_t c = 0; c < g.size(); ++c) v[c] = f(g.center(c));
  return GridField(g, std::move(v));
}

GridField gaussian_density(const Grid& g, const Eigen::VectorXd& mean, double sigma) {
  if (mean.size() != g.dimension()) {
    throw validation_error("DimensionMismatch", "Gaussian mean has the wrong dimension");
  }
  if (!(sigma > 0.0)) throw validation_error("ValidationFailure", "sigma must be positive");
  const double s2 = sigma * sigma;
  return sample(g, [&](const Eigen::VectorXd& x) {
           return std::exp(-0.5 * (x - mean).squaredNorm() / s2);
         }).normalized();
}

GridField uniform_density(const Grid& g) {
  return GridField(g, Eigen::VectorXd::Constant(g.size(), 1.0)).normalized();
}

}  // namespace fpdecomp
