#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <optional>
#include <string>
#include <vector>

#include "fpdecomp/grid.hpp"
#include "fpdecomp/model.hpp"

/// Finite-volume discretisation of L(phi) = div(A grad phi) - div(b phi) with
/// no-flux boundaries, and everything built on top of it.
namespace fpdecomp::fpegrid {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class OperatorKind { Full, Symmetric, Antisymmetric };

/// Sparse generator acting on cell-averaged densities. Boundaries are always
/// no-flux, so every column sums to zero.
struct DiscreteOperator {
  Grid grid;
  SparseMatrix matrix;
  OperatorKind kind = OperatorKind::Full;
  /// The stationary density the operator was split against (split parts only).
  std::optional<Eigen::VectorXd> reference;

  double max_abs_column_sum() const;
  double max_abs_entry() const;
};

/// Model fields sampled once per grid: drift, diffusion and its inverse at
/// cell centres, and per-axis face data. Face arrays are indexed by the lower
/// cell of the face; entries for cells on the upper boundary are unused.
struct SampledModel {
  Grid grid;
  int n = 0;
  Eigen::MatrixXd b;      // N x n
  Eigen::MatrixXd A;      // N x n*n, column-major per cell
  Eigen::MatrixXd A_inv;  // N x n*n, NaN where A is singular
  std::vector<Eigen::VectorXd> face_P;  // integral of b_i / A_ii between centres
  std::vector<Eigen::MatrixXd> face_A;  // A at face centres, N x n*n

  bool has_upper_face(std::size_t cell, int axis) const {
    return grid.coordinate(cell, axis) + 1 < grid.cells(axis);
  }
  double max_peclet() const;
};

SampledModel sample_model(const DiffusionModel& m, const Grid& g);

struct DiscretizationOptions {
  double peclet_warn = 2.0;
  double peclet_max = 50.0;
};

/// Exponentially fitted (Scharfetter-Gummel / Chang-Cooper) fluxes for the
/// drift and the diagonal of A; off-diagonal A terms use averaged central
/// differences. Throws GridTooCoarse if the cell Peclet number exceeds
/// `peclet_max`. If `warnings` is given, a note is appended above `peclet_warn`.
DiscreteOperator discretize_generator(const DiffusionModel& m, const Grid& g,
                                      const DiscretizationOptions& opt = {},
                                      std::vector<std::string>* warnings = nullptr);
DiscreteOperator assemble_generator(const SampledModel& s, const DiscretizationOptions& opt = {},
                                    std::vector<std::string>* warnings = nullptr);

/// Normalised null vector of L_h.
GridField stationary_density(const DiscreteOperator& L);

/// ||L rho||_inf / (max|L| * ||rho||_inf)
double stationary_residual(const DiscreteOperator& L, const Eigen::VectorXd& rho);

struct OperatorSplit {
  DiscreteOperator symmetric;
  DiscreteOperator antisymmetric;
};

/// Ls = (L + Ldag) / 2 and La = (L - Ldag) / 2 with Ldag = D^-1 L^T D,
/// D = diag(1/rho). The diagonal of Ldag is set so its columns sum to zero
/// exactly; Ls + La reproduces L bit for bit.
OperatorSplit split_operators(const DiscreteOperator& L, const GridField& rho);

/// sum(phi psi / rho) * cell volume
double weighted_inner(const Eigen::VectorXd& phi, const Eigen::VectorXd& psi, const GridField& rho);

/// max|D M -+ (D M)^T| / max|D M| with D = diag(1/rho); `anti` selects the
/// antisymmetric test.
double symmetry_defect(const SparseMatrix& M, const Eigen::VectorXd& rho, bool anti);

/// Gradient of ln v at cell centres: central differences inside, second-order
/// one-sided stencils on boundary cells. v must be positive.
Eigen::MatrixXd grad_log(const Grid& g, const Eigen::VectorXd& v);

struct CirculationResult {
  GridVectorField j;             // b - A grad ln rho at centres
  GridField divergence;          // finite-volume divergence of rho j per cell
  double divergence_l1 = 0.0;    // sum |div| * cell volume
};

CirculationResult circulation_field(const DiffusionModel& m, const GridField& rho);

enum class Scheme { Implicit, ExplicitUpwind };

struct Snapshot {
  double t = 0.0;
  Eigen::VectorXd u;
};

/// Upwind transport generator built from the stationary face fluxes of an
/// antisymmetric part: monotone, conservative, and it still annihilates rho.
SparseMatrix upwind_generator(const DiscreteOperator& La);

/// Largest stable explicit step (CFL number 0.9) for `scheme` on `op`.
double max_explicit_step(const DiscreteOperator& op);

/// Integrates du/dt = op u. Implicit Euler for Scheme::Implicit; two-stage
/// SSP Runge-Kutta for Scheme::ExplicitUpwind, using the upwind generator
/// when `op` is an antisymmetric part. Snapshots every `snapshot_every`
/// steps, always including t = 0 and t = T.
std::vector<Snapshot> evolve(const DiscreteOperator& op, const GridField& u0, double T, double dt,
                             Scheme scheme, int snapshot_every = 1);

struct DecompositionResult {
  GridField rho;
  CirculationResult circulation;
  DiscreteOperator L;
  DiscreteOperator Ls;
  DiscreteOperator La;
  double max_peclet = 0.0;
  std::vector<std::string> warnings;
};

DecompositionResult decompose_grid(const DiffusionModel& m, const Grid& g);

struct QuasiPotentialLevel {
  double eps = 0.0;
  bool usable = false;
  std::string failure;            // error kind when not usable
  std::optional<GridField> U;     // -eps ln rho_eps, shifted to min 0
  std::optional<GridField> rho;
};

/// Replaces A by eps I for each eps (decreasing, positive) and returns the
/// shifted quasi-potential. Levels that fail numerically are reported, not thrown.
std::vector<QuasiPotentialLevel> quasi_potential(const DiffusionModel& m, const Grid& g,
                                                 const std::vector<double>& eps_list);

}  // namespace fpdecomp::fpegrid
