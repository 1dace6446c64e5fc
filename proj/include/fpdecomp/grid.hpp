#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fpdecomp/model.hpp"

namespace fpdecomp {

/// Uniform rectangular grid of cells. Linear indices are row-major: the last
/// axis varies fastest.
class Grid {
 public:
  Grid(Box bounds, std::vector<int> cells);

  int dimension() const { return static_cast<int>(cells_.size()); }
  const Box& bounds() const { return bounds_; }
  const std::vector<int>& cells() const { return cells_; }
  int cells(int axis) const { return cells_[axis]; }
  double spacing(int axis) const { return h_[axis]; }
  double cell_volume() const { return volume_; }
  std::size_t size() const { return size_; }
  std::size_t stride(int axis) const { return stride_[axis]; }

  /// Index of cell `cell` along `axis`.
  int coordinate(std::size_t cell, int axis) const {
    return static_cast<int>((cell / stride_[axis]) % static_cast<std::size_t>(cells_[axis]));
  }
  std::vector<int> multi_index(std::size_t cell) const;
  std::size_t linear_index(std::span<const int> idx) const;

  double center(int axis, int k) const { return bounds_[axis].lo + (k + 0.5) * h_[axis]; }
  Eigen::VectorXd center(std::size_t cell) const;
  /// Cell containing x, or nothing if x is outside the grid. Points on the
  /// upper boundary belong to the last cell.
  std::optional<std::size_t> locate(const Eigen::VectorXd& x) const;

  /// Same bounds, every axis refined by `factor`.
  Grid refined(int factor) const;

  bool operator==(const Grid& other) const;

 private:
  Box bounds_;
  std::vector<int> cells_;
  std::vector<double> h_;
  std::vector<std::size_t> stride_;
  std::size_t size_ = 0;
  double volume_ = 0.0;
};

/// Scalar values per cell (cell averages or center samples).
struct GridField {
  Grid grid;
  Eigen::VectorXd values;

  GridField(Grid g, Eigen::VectorXd v);

  /// sum(values) * cell volume
  double mass() const { return values.sum() * grid.cell_volume(); }
  GridField normalized() const;
};

/// n components per cell, stored as an N x n matrix.
struct GridVectorField {
  Grid grid;
  Eigen::MatrixXd values;

  GridVectorField(Grid g, Eigen::MatrixXd v);
};

/// Throws GridMismatch unless a and b are the same grid.
void require_same_grid(const Grid& a, const Grid& b);

GridField sample(const Grid& g, const std::function<double(const Eigen::VectorXd&)>& f);

/// Normalised isotropic Gaussian with the given mean, sampled at cell centers
/// and renormalised to unit discrete mass.
GridField gaussian_density(const Grid& g, const Eigen::VectorXd& mean, double sigma);

GridField uniform_density(const Grid& g);

}  // namespace fpdecomp
