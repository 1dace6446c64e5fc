#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fpdecomp/expr.hpp"
#include "fpdecomp/fpegrid.hpp"
#include "fpdecomp/grid.hpp"
#include "fpdecomp/lindecomp.hpp"
#include "fpdecomp/model.hpp"

/// The conservative ODE x' = j(x) that carries the antisymmetric part of a
/// diffusion, with its invariant density rho.
namespace fpdecomp::consdyn {

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

struct ConservativeSystem {
  int n = 0;
  VectorFieldFn j;
  ScalarFn rho;  // invariant density, not necessarily normalised
  Box domain;
  /// False for grid-interpolated fields; widens classification tolerances.
  bool exact = true;
  /// Length scale of the underlying data (grid spacing); 0 for analytic fields.
  double resolution = 0.0;

  Eigen::VectorXd velocity(const Eigen::VectorXd& x) const;
};

/// j = J x with the Gaussian invariant density of covariance Xi.
ConservativeSystem from_linear(const lindecomp::LinearDecomposition& d, Box domain);
ConservativeSystem from_linear(const Eigen::MatrixXd& J, const Eigen::MatrixXd& Xi, Box domain);

/// j = b - A grad ln rho for an analytic density.
ConservativeSystem from_density(const DiffusionModel& m, ScalarFn rho,
                                std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad_log_rho);

/// Multilinear interpolation of j_h and rho_h between cell centres (clamped
/// to the outermost centres).
ConservativeSystem from_grid(const GridVectorField& j, const GridField& rho);

/// j = (rho^-1 dH/dy, -rho^-1 dH/dx); derivatives of H by central differences
/// with step `fd_step`. Throws DimensionError unless the domain is planar.
ConservativeSystem planar_hamiltonian(const Expr& H, ScalarFn rho, Box domain, double fd_step = 1e-5);

/// Finite-difference div(rho j) / rho at x, relative to the size of the
/// individual derivative terms.
double divergence_defect(const ConservativeSystem& sys, const Eigen::VectorXd& x, double fd_step = 1e-4);

struct Trajectory {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

struct IntegrateOptions {
  double tol = 1e-9;
  /// If non-empty, record exactly at these (increasing) times; otherwise at
  /// every accepted step.
  std::vector<double> output_times;
  double min_step = 1e-14;
  std::size_t max_steps = 10'000'000;
};

/// Dormand-Prince 5(4) with rtol = atol = tol. Throws LeftDomain when the
/// state leaves `domain` and StepUnderflow when the step collapses.
Trajectory integrate(const VectorFieldFn& f, int n, const Eigen::VectorXd& x0, double T,
                     const Box& domain, const IntegrateOptions& opt);

Trajectory integrate_conservative(const ConservativeSystem& sys, const Eigen::VectorXd& x0, double T,
                                  double tol);

enum class FixedPointClass { Center, Saddle, Degenerate };

std::string to_string(FixedPointClass c);

struct FixedPointReport {
  Eigen::VectorXd location;
  Eigen::MatrixXd jacobian;
  double trace = 0.0;
  Eigen::VectorXcd eigenvalues;
  FixedPointClass classification = FixedPointClass::Degenerate;
  /// Plain linear type ignoring conservativity: center, saddle, node, focus
  /// or degenerate. Nodes and foci are reported as Degenerate above.
  std::string linear_type;
  double tolerance = 0.0;
  bool trace_ok = true;  // |trace| <= tolerance * ||jacobian||
};

/// Requires |j(x)| <= 1e-8 (1e-3 for grid fields), else NotAFixedPoint.
/// `fd_step` <= 0 picks 1e-5 for analytic fields and the grid spacing for
/// interpolated ones.
FixedPointReport classify_fixed_point(const ConservativeSystem& sys, const Eigen::VectorXd& x,
                                      double fd_step = 0.0);

struct TimeChangeResult {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> canonical;      // x(t) from x' = j
  std::vector<Eigen::VectorXd> microcanonical; // xhat(tau(t)) from xhat' = rho j
  std::vector<double> tau;
  double max_deviation = 0.0;
};

/// Integrates the microcanonical field rho j in its own time tau together
/// with the clock dt/dtau = rho(xhat), i.e. dtau/dt = 1 / rho, and compares
/// xhat(tau(t)) with the canonical trajectory at `samples` equally spaced
/// times. Throws ClockBlowup if 1/rho exceeds 1e8 on the path.
TimeChangeResult time_change_map(const ConservativeSystem& sys, const Eigen::VectorXd& x0, double T,
                                 double tol, int samples = 200);

/// Integrand G of the functional sum u G(u / rho) * cell volume.
enum class Functional { Log, Linear, Square, Abs, SLogS };

std::string to_string(Functional g);
Functional functional_from_string(const std::string& s);

/// sum u G(u / rho) * cell volume; Log gives the free energy, Linear the
/// weighted norm <u, u>_h.
double functional_value(Functional g, const GridField& u, const GridField& rho);

struct ConservationEntry {
  Functional g;
  double drift_coarse = 0.0;  // |value(T) - value(0)| on the coarse grid
  double drift_fine = 0.0;    // same on the grid refined by two
  double ratio = 0.0;         // drift_fine / drift_coarse (0 if both vanish)
};

struct ConservationReport {
  double h_coarse = 0.0;
  double h_fine = 0.0;
  std::vector<ConservationEntry> entries;
};

/// Evolves u0 under the upwinded antisymmetric part La_h on `coarse` and on
/// its refinement by two, for time T, and reports functional drifts.
/// `cfl` is the fraction of the largest stable explicit step.
ConservationReport conservation_audit(const DiffusionModel& m, const Grid& coarse,
                                      const std::function<GridField(const Grid&)>& u0, double T,
                                      const std::vector<Functional>& tags, double cfl = 0.5);

}  // namespace fpdecomp::consdyn
