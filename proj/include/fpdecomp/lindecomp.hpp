#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "fpdecomp/model.hpp"

/// Exact decomposition algebra for Ornstein-Uhlenbeck models dx = Bx dt + Gamma dW.
namespace fpdecomp::lindecomp {

struct LinearModel {
  Eigen::MatrixXd B;
  Eigen::MatrixXd A;
  std::optional<Eigen::MatrixXd> Gamma;

  int dimension() const { return static_cast<int>(B.rows()); }
  /// Gamma if given, otherwise the principal square root of 2A.
  Eigen::MatrixXd noise_factor() const;
};

/// Checks shapes, stability of B, positive definiteness of A and, if present,
/// A = Gamma Gamma^T / 2. Throws on the first violation.
LinearModel make_linear_model(Eigen::MatrixXd B, Eigen::MatrixXd A,
                              std::optional<Eigen::MatrixXd> Gamma = std::nullopt);

/// Reads B and A off a DiffusionModel whose drift is linear and whose
/// diffusion is constant; throws NotLinear otherwise.
LinearModel extract_linear(const DiffusionModel& m);

/// Throws UnstableDrift unless every eigenvalue of B has Re < -1e-12.
void require_stable(const Eigen::MatrixXd& B);

enum class LyapunovMethod { Auto, Kronecker, Schur };

/// Solves B Xi + Xi B^T + 2A = 0. Auto uses the Kronecker system for n <= 8
/// and the complex-Schur (Bartels-Stewart) recursion above that.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A,
                               LyapunovMethod method = LyapunovMethod::Auto);

/// ||B Xi + Xi B^T + 2A||_F / ||A||_F
double lyapunov_residual(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A,
                         const Eigen::MatrixXd& Xi);

/// rho(x) = exp(-x^T Xi^{-1} x / 2) / sqrt((2 pi)^n det Xi)
class GaussianDensity {
 public:
  explicit GaussianDensity(const Eigen::MatrixXd& covariance);

  int dimension() const { return static_cast<int>(covariance_.rows()); }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  const Eigen::MatrixXd& precision() const { return precision_; }
  /// ln of the normalising prefactor, -(n ln(2 pi) + ln det Xi) / 2.
  double log_normalization() const { return log_norm_; }

  double log_density(const Eigen::VectorXd& x) const;
  double density(const Eigen::VectorXd& x) const;
  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& x) const;

 private:
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd precision_;
  double log_norm_ = 0.0;
};

GaussianDensity stationary_gaussian(const Eigen::MatrixXd& Xi);

/// J = B + A Xi^{-1}
Eigen::MatrixXd circulation_matrix(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A,
                                   const Eigen::MatrixXd& Xi);

/// R = -(B Xi + A)
Eigen::MatrixXd antisymmetric_R(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A,
                                const Eigen::MatrixXd& Xi);

struct AoForm {
  Eigen::MatrixXd M;   // (A + R)^{-1}
  Eigen::MatrixXd Pi;  // (A + R)^{-1} Gamma
};

AoForm ao_transform(const Eigen::MatrixXd& A, const Eigen::MatrixXd& R,
                    const Eigen::MatrixXd& Gamma);

/// max over xs of |(Xi^{-1} x) . (J x)| / (1 + |x|^2)
double check_orthogonality(const Eigen::MatrixXd& Xi, const Eigen::MatrixXd& J,
                           const std::vector<Eigen::VectorXd>& xs);

struct LinearResiduals {
  double lyapunov = 0.0;        // ||B Xi + Xi B^T + 2A||_F / ||A||_F
  double antisymmetry = 0.0;    // ||R + R^T||_F / (1 + ||R||_F)
  double circulation = 0.0;     // ||(B + A Xi^-1) + R Xi^-1||_F / (1 + ||J||_F)
  double reconstruction = 0.0;  // ||B + (A + R) Xi^-1||_F / ||B||_F
  double ao = 0.0;              // ||M + M^T - Pi Pi^T||_F / ||Pi Pi^T||_F
  double orthogonality = 0.0;   // check_orthogonality on the probe points
  double trace_J = 0.0;         // |Tr J|
};

struct LinearDecomposition {
  Eigen::MatrixXd Xi;
  Eigen::MatrixXd J;
  Eigen::MatrixXd R;
  Eigen::MatrixXd M;
  Eigen::MatrixXd Pi;
  LinearResiduals residuals;
};

/// Full pipeline. When `probe_points` is empty, 100 deterministic pseudo-random
/// points are used for the orthogonality residual.
LinearDecomposition decompose_linear(const LinearModel& model,
                                     std::vector<Eigen::VectorXd> probe_points = {});

}  // namespace fpdecomp::lindecomp
