#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fpdecomp/grid.hpp"
#include "fpdecomp/model.hpp"

/// Euler-Maruyama ensembles driven by a counter-based generator.
namespace fpdecomp::sdesim {

/// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// Standard normals for one path. Normal number q comes from Philox block
/// q / 2 under key = seed and counter = (path, block), so any (path, q) pair
/// is reproducible on its own.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t path);
  double operator()(std::uint64_t q);

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t path_;
  std::uint64_t cached_block_ = ~std::uint64_t{0};
  double cached_[2] = {0.0, 0.0};
};

/// Itô SDE dx = drift(x) dt + noise(x) dW.
struct ItoSystem {
  int n = 0;
  VectorFieldFn drift;
  MatrixFieldFn noise;  // n x n, column-major
  bool noise_constant = false;
  Box domain;
  std::string name = "sde";
};

/// The Itô form of a model. Its drift is b + div A (row-wise divergence, by
/// central differences; omitted for constant A), which is the process whose
/// forward equation is div(A grad u) - div(b u).
ItoSystem ito_system(const DiffusionModel& m, double fd_step = 1e-5);

struct SimulateOptions {
  /// Paths leaving this box are stopped and flagged. Defaults to the domain
  /// inflated by 50% on each side.
  std::optional<Box> kill_box;
  /// Record every this many steps (plus the final time); 0 keeps only the
  /// initial and final states.
  std::size_t record_every = 0;
};

struct PathEnsemble {
  std::uint64_t seed = 0;
  std::string model;
  int n = 0;
  double dt = 0.0;
  double T = 0.0;
  std::size_t steps = 0;
  std::vector<double> times;
  /// positions[r] is K x n at times[r]; rows of stopped paths are NaN after
  /// the stopping time.
  std::vector<Eigen::MatrixXd> positions;
  std::vector<char> killed;
  std::vector<double> kill_time;  // NaN for surviving paths

  std::size_t paths() const { return killed.size(); }
  std::size_t killed_count() const;
  /// Index into `times`; throws ValidationFailure if t was not recorded.
  std::size_t record_index(double t) const;
};

/// K Euler-Maruyama paths from x0 with step dt up to T (the last step is
/// shortened if dt does not divide T).
PathEnsemble simulate(const ItoSystem& sys, const Eigen::VectorXd& x0, double dt, double T,
                      std::size_t K, std::uint64_t seed, const SimulateOptions& opt = {});
PathEnsemble simulate(const DiffusionModel& m, const Eigen::VectorXd& x0, double dt, double T,
                      std::size_t K, std::uint64_t seed, const SimulateOptions& opt = {});

using GradLogFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Drifts of the symmetric process with invariant density rho, written for
/// the three integration conventions.
struct DriftForms {
  VectorFieldFn ito;           // A grad ln rho + div A
  VectorFieldFn stratonovich;  // A grad ln rho + 1/2 sum_jk Gamma_ik d_j Gamma_jk
  VectorFieldFn divergence;    // A grad ln rho
};

DriftForms drift_forms(const DiffusionModel& m, GradLogFn grad_log_rho, double fd_step = 1e-5);

/// grad ln rho_h of a grid density, piecewise constant on cells.
GradLogFn grid_grad_log(const GridField& rho);

/// Evaluates a field at each point; rows of the result are the values.
Eigen::MatrixXd evaluate(const VectorFieldFn& f, int n, const std::vector<Eigen::VectorXd>& points);

/// Histogram of surviving paths inside the grid at a recorded time, as a
/// density. Empty histograms give the zero field.
GridField ensemble_density(const PathEnsemble& pe, const Grid& g, double t);

/// Mean and covariance of surviving paths at a recorded time.
Eigen::VectorXd sample_mean(const PathEnsemble& pe, double t);
Eigen::MatrixXd sample_covariance(const PathEnsemble& pe, double t);

/// 1/2 sum |p - q| * cell volume
double tv_distance(const GridField& p, const GridField& q);

/// Two-sample Kolmogorov-Smirnov statistic and its asymptotic critical value.
double ks_statistic(std::vector<double> a, std::vector<double> b);
double ks_critical(std::size_t n, std::size_t m, double alpha = 0.01);

}  // namespace fpdecomp::sdesim
