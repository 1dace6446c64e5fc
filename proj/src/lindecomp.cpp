#include "fpdecomp/lindecomp.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "fpdecomp/error.hpp"

namespace fpdecomp::lindecomp {

namespace {

constexpr double kStabilityMargin = 1e-12;
constexpr double kNoiseTol = 1e-10;
constexpr int kKroneckerMaxDim = 8;

void require_square(const Eigen::MatrixXd& m, Eigen::Index n, const char* what) {
  if (m.rows() != n || m.cols() != n) {
    throw validation_error("DimensionMismatch", std::string(what) + " must be " +
                                                    std::to_string(n) + "x" + std::to_string(n));
  }
}

void require_spd(const Eigen::MatrixXd& A, const char* kind) {
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw numerical_error(kind, "matrix is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw numerical_error(kind, "matrix is not positive definite");
}

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& Xi) {
  Eigen::LLT<Eigen::MatrixXd> llt(Xi);
  if (llt.info() != Eigen::Success) {
    throw numerical_error("SingularCovariance", "covariance is not positive definite");
  }
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(Xi.rows(), Xi.cols()));
  return 0.5 * (inv + inv.transpose());
}

Eigen::MatrixXd solve_kronecker(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A) {
  const Eigen::Index n = B.rows();
  const Eigen::Index nn = n * n;
  // Column-major vec: vec(B X) = (I kron B) vec X, vec(X B^T) = (B kron I) vec X.
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nn, nn);
  for (Eigen::Index i = 0; i < n; ++i) {
    K.block(i * n, i * n, n, n) += B;
    for (Eigen::Index j = 0; j < n; ++j) {
      K.block(i * n, j * n, n, n).diagonal().array() += B(i, j);
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (lu.rank() < nn || lu.rcond() < 1e-14) {
    throw numerical_error("SingularSystem", "Kronecker Lyapunov system is numerically singular");
  }
  const Eigen::VectorXd rhs = -2.0 * Eigen::Map<const Eigen::VectorXd>(A.data(), nn);
  Eigen::VectorXd x = lu.solve(rhs);
  // One step of iterative refinement.
  x += lu.solve(rhs - K * x);
  Eigen::MatrixXd Xi = Eigen::Map<Eigen::MatrixXd>(x.data(), n, n);
  return 0.5 * (Xi + Xi.transpose());
}

Eigen::MatrixXd solve_schur(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A) {
  using C = std::complex<double>;
  const Eigen::Index n = B.rows();
  Eigen::ComplexSchur<Eigen::MatrixXd> schur(B);
  const Eigen::MatrixXcd& T = schur.matrixT();
  const Eigen::MatrixXcd& U = schur.matrixU();
  // B = U T U^H, so B Xi + Xi B^T = C becomes T Y + Y T^H = U^H C U with Y = U^H Xi U.
  const Eigen::MatrixXcd F = U.adjoint() * (-2.0 * A).cast<C>() * U;
  Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      C s = F(i, j);
      for (Eigen::Index k = i + 1; k < n; ++k) s -= T(i, k) * Y(k, j);
      for (Eigen::Index k = j + 1; k < n; ++k) s -= Y(i, k) * std::conj(T(j, k));
      const C denom = T(i, i) + std::conj(T(j, j));
      if (std::abs(denom) < 1e-14 * std::max(1.0, T.cwiseAbs().maxCoeff())) {
        throw numerical_error("SingularSystem", "Schur Lyapunov recursion hit a zero divisor");
      }
      Y(i, j) = s / denom;
    }
  }
  Eigen::MatrixXd Xi = (U * Y * U.adjoint()).real();
  return 0.5 * (Xi + Xi.transpose());
}

}  // namespace

Eigen::MatrixXd LinearModel::noise_factor() const {
  if (Gamma) return *Gamma;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(2.0 * A);
  return es.operatorSqrt();
}

void require_stable(const Eigen::MatrixXd& B) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(B, false);
  if (es.info() != Eigen::Success) {
    throw numerical_error("UnstableDrift", "eigenvalue computation for B failed");
  }
  const double worst = es.eigenvalues().real().maxCoeff();
  if (!(worst < -kStabilityMargin)) {
    throw numerical_error("UnstableDrift", "drift matrix has an eigenvalue with real part " +
                                               std::to_string(worst) + " (need < -1e-12)");
  }
}

LinearModel make_linear_model(Eigen::MatrixXd B, Eigen::MatrixXd A,
                              std::optional<Eigen::MatrixXd> Gamma) {
  const Eigen::Index n = B.rows();
  if (n < 1) throw validation_error("DimensionMismatch", "empty drift matrix");
  require_square(B, n, "B");
  require_square(A, n, "A");
  require_spd(A, "NotPositiveDefinite");
  require_stable(B);
  if (Gamma) {
    require_square(*Gamma, n, "Gamma");
    const double defect = (A - 0.5 * (*Gamma) * Gamma->transpose()).norm() / A.norm();
    if (defect > kNoiseTol) {
      throw validation_error("ValidationFailure", "noise factor does not satisfy A = Gamma Gamma^T / 2");
    }
  }
  return LinearModel{std::move(B), std::move(A), std::move(Gamma)};
}

LinearModel extract_linear(const DiffusionModel& m) {
  const int n = m.dimension();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd b0 = m.drift(zero);
  Eigen::MatrixXd B(n, n);
  for (int k = 0; k < n; ++k) B.col(k) = m.drift(Eigen::VectorXd::Unit(n, k)) - b0;
  const double scale = std::max(1.0, B.cwiseAbs().maxCoeff());
  if (b0.cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw validation_error("NotLinear", "drift does not vanish at the origin");
  }
  const Eigen::MatrixXd A = m.diffusion(zero);
  for (const auto& x : lattice_points(m.domain(), 3)) {
    const double err = (m.drift(x) - B * x).cwiseAbs().maxCoeff();
    if (err > 1e-9 * scale * (1.0 + x.norm())) {
      throw validation_error("NotLinear", "drift is not linear in x");
    }
    if ((m.diffusion(x) - A).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff())) {
      throw validation_error("NotLinear", "diffusion is not constant");
    }
  }
  std::optional<Eigen::MatrixXd> gamma;
  if (m.has_noise_factor()) gamma = m.noise_factor(zero);
  return make_linear_model(B, A, gamma);
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A,
                               LyapunovMethod method) {
  const Eigen::Index n = B.rows();
  require_square(B, n, "B");
  require_square(A, n, "A");
  require_stable(B);
  require_spd(A, "NotPositiveDefinite");
  if (method == LyapunovMethod::Auto) {
    method = n <= kKroneckerMaxDim ? LyapunovMethod::Kronecker : LyapunovMethod::Schur;
  }
  return method == LyapunovMethod::Kronecker ? solve_kronecker(B, A) : solve_schur(B, A);
}

double lyapunov_residual(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A,
                         const Eigen::MatrixXd& Xi) {
  return (B * Xi + Xi * B.transpose() + 2.0 * A).norm() / A.norm();
}

GaussianDensity::GaussianDensity(const Eigen::MatrixXd& covariance) : covariance_(covariance) {
  const Eigen::Index n = covariance.rows();
  require_square(covariance, n, "covariance");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, covariance.cwiseAbs().maxCoeff())) {
    throw numerical_error("NotPositiveDefinite", "covariance is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) {
    throw numerical_error("NotPositiveDefinite", "covariance is not positive definite");
  }
  precision_ = llt.solve(Eigen::MatrixXd::Identity(n, n));
  precision_ = 0.5 * (precision_ + precision_.transpose());
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  log_norm_ = -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + log_det);
}

double GaussianDensity::log_density(const Eigen::VectorXd& x) const {
  return log_norm_ - 0.5 * x.dot(precision_ * x);
}

double GaussianDensity::density(const Eigen::VectorXd& x) const { return std::exp(log_density(x)); }

Eigen::VectorXd GaussianDensity::grad_log_density(const Eigen::VectorXd& x) const {
  return -(precision_ * x);
}

GaussianDensity stationary_gaussian(const Eigen::MatrixXd& Xi) { return GaussianDensity(Xi); }

Eigen::MatrixXd circulation_matrix(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A,
                                   const Eigen::MatrixXd& Xi) {
  return B + A * inverse_spd(Xi);
}

Eigen::MatrixXd antisymmetric_R(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A,
                                const Eigen::MatrixXd& Xi) {
  return -(B * Xi + A);
}

AoForm ao_transform(const Eigen::MatrixXd& A, const Eigen::MatrixXd& R,
                    const Eigen::MatrixXd& Gamma) {
  const Eigen::Index n = A.rows();
  require_square(R, n, "R");
  require_square(Gamma, n, "Gamma");
  const Eigen::MatrixXd AR = A + R;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(AR);
  if (!lu.isInvertible() || lu.rcond() < 1e-14) {
    throw numerical_error("SingularAoMatrix", "A + R is singular");
  }
  AoForm out;
  out.M = lu.inverse();
  out.Pi = out.M * Gamma;
  return out;
}

double check_orthogonality(const Eigen::MatrixXd& Xi, const Eigen::MatrixXd& J,
                           const std::vector<Eigen::VectorXd>& xs) {
  if (xs.empty()) throw validation_error("SchemaError", "need at least one probe point");
  const Eigen::MatrixXd P = inverse_spd(Xi);
  double worst = 0.0;
  for (const auto& x : xs) {
    const double v = std::abs((P * x).dot(J * x)) / (1.0 + x.squaredNorm());
    worst = std::max(worst, v);
  }
  return worst;
}

LinearDecomposition decompose_linear(const LinearModel& model,
                                     std::vector<Eigen::VectorXd> probe_points) {
  const int n = model.dimension();
  LinearDecomposition d;
  d.Xi = solve_lyapunov(model.B, model.A);
  const Eigen::MatrixXd Xi_inv = inverse_spd(d.Xi);
  d.J = model.B + model.A * Xi_inv;
  d.R = antisymmetric_R(model.B, model.A, d.Xi);
  const AoForm ao = ao_transform(model.A, d.R, model.noise_factor());
  d.M = ao.M;
  d.Pi = ao.Pi;

  if (probe_points.empty()) {
    std::mt19937_64 gen(20120101);
    std::normal_distribution<double> normal;
    for (int k = 0; k < 100; ++k) {
      Eigen::VectorXd x(n);
      for (int i = 0; i < n; ++i) x[i] = normal(gen);
      probe_points.push_back(std::move(x));
    }
  }

  LinearResiduals& r = d.residuals;
  r.lyapunov = lyapunov_residual(model.B, model.A, d.Xi);
  r.antisymmetry = (d.R + d.R.transpose()).norm() / (1.0 + d.R.norm());
  r.circulation = (d.J + d.R * Xi_inv).norm() / (1.0 + d.J.norm());
  r.reconstruction = (model.B + (model.A + d.R) * Xi_inv).norm() / model.B.norm();
  const Eigen::MatrixXd PP = d.Pi * d.Pi.transpose();
  r.ao = (d.M + d.M.transpose() - PP).norm() / PP.norm();
  r.orthogonality = check_orthogonality(d.Xi, d.J, probe_points);
  r.trace_J = std::abs(d.J.trace());
  return d;
}

}  // namespace fpdecomp::lindecomp
