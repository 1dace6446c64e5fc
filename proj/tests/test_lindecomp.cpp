#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fpdecomp/error.hpp"
#include "fpdecomp/lindecomp.hpp"

using namespace fpdecomp;
using namespace fpdecomp::lindecomp;

namespace {

Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd X(n, n);
  for (int i = 0; i < n * n; ++i) X.data()[i] = g(rng);
  return X * X.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

Eigen::MatrixXd random_stable(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd B(n, n);
  for (int i = 0; i < n * n; ++i) B.data()[i] = g(rng);
  const double shift = B.eigenvalues().real().maxCoeff();
  return B - (shift + 0.5) * Eigen::MatrixXd::Identity(n, n);
}

// Steady state of dS/dt = B S + S B^T + 2A by classical RK4.
Eigen::MatrixXd covariance_by_relaxation(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A) {
  auto f = [&](const Eigen::MatrixXd& S) -> Eigen::MatrixXd { return B * S + S * B.transpose() + 2.0 * A; };
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(B.rows(), B.cols());
  const double h = 0.01;
  for (int k = 0; k < 20000; ++k) {
    const Eigen::MatrixXd k1 = f(S), k2 = f(S + 0.5 * h * k1), k3 = f(S + 0.5 * h * k2), k4 = f(S + h * k3);
    S += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return S;
}

}  // namespace

TEST_SUITE("lindecomp") {
  TEST_CASE("one-dimensional OU variance is a/b") {
    Eigen::MatrixXd B(1, 1), A(1, 1);
    B << -2.0;
    A << 3.0;
    CHECK(solve_lyapunov(B, A)(0, 0) == doctest::Approx(1.5).epsilon(1e-15));
  }

  TEST_CASE("rotation model: Xi = I and J is the rotation generator") {
    Eigen::Matrix2d B, Jexp, Rexp;
    B << -1, 1, -1, -1;
    Jexp << 0, 1, -1, 0;
    Rexp << 0, -1, 1, 0;
    const auto d = decompose_linear(make_linear_model(B, Eigen::Matrix2d::Identity()));
    CHECK((d.Xi - Eigen::Matrix2d::Identity()).norm() < 1e-14);
    CHECK((d.J - Jexp).norm() < 1e-14);
    CHECK((d.R - Rexp).norm() < 1e-14);
    CHECK(d.residuals.trace_J < 1e-14);
  }

  TEST_CASE("Lyapunov solution matches a relaxation oracle") {
    std::mt19937_64 rng(11);
    for (int n : {2, 3}) {
      const Eigen::MatrixXd B = random_stable(rng, n), A = random_spd(rng, n);
      const Eigen::MatrixXd ref = covariance_by_relaxation(B, A);
      CHECK((solve_lyapunov(B, A) - ref).norm() < 1e-8 * ref.norm());
    }
  }

  TEST_CASE("Kronecker and Schur solvers agree; Schur handles larger n") {
    std::mt19937_64 rng(3);
    for (int n : {2, 4, 6}) {
      const Eigen::MatrixXd B = random_stable(rng, n), A = random_spd(rng, n);
      const Eigen::MatrixXd k = solve_lyapunov(B, A, LyapunovMethod::Kronecker);
      const Eigen::MatrixXd s = solve_lyapunov(B, A, LyapunovMethod::Schur);
      CHECK((k - s).norm() < 1e-10 * k.norm());
    }
    for (int n : {9, 12}) {
      const Eigen::MatrixXd B = random_stable(rng, n), A = random_spd(rng, n);
      const Eigen::MatrixXd Xi = solve_lyapunov(B, A);
      CHECK(lyapunov_residual(B, A, Xi) < 1e-10);
      CHECK((Xi - Xi.transpose()).norm() < 1e-12 * Xi.norm());
    }
  }

  TEST_CASE("reversibility: R = 0 iff B Xi symmetric iff J = 0") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 2 + trial % 3;
      const Eigen::MatrixXd A = random_spd(rng, n), Xi = random_spd(rng, n);
      // Reversible by construction: B = -A Xi^-1.
      const Eigen::MatrixXd B = -A * Xi.inverse();
      const auto d = decompose_linear(make_linear_model(B, A));
      CHECK(d.R.norm() < 1e-10 * (1 + A.norm()));
      CHECK(d.J.norm() < 1e-10 * (1 + B.norm()));
      CHECK((d.Xi - Xi).norm() < 1e-9 * Xi.norm());
      // Adding an antisymmetric part Q Xi^-1 breaks it.
      Eigen::MatrixXd Q = random_spd(rng, n);
      Q = Q - Q.transpose().eval();
      Q(0, n - 1) += 1.0;
      Q(n - 1, 0) -= 1.0;
      const Eigen::MatrixXd B2 = -(A + Q) * Xi.inverse();
      const auto d2 = decompose_linear(make_linear_model(B2, A));
      CHECK((d2.R - Q).norm() < 1e-9 * (1 + Q.norm()));
      CHECK(d2.J.norm() > 1e-3);
      const Eigen::MatrixXd BXi = B2 * d2.Xi;
      CHECK((BXi - BXi.transpose()).norm() > 1e-3);
    }
  }

  TEST_CASE("all residuals small on random systems") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 2 + trial % 3;
      const auto d = decompose_linear(make_linear_model(random_stable(rng, n), random_spd(rng, n)));
      CHECK(d.residuals.lyapunov <= 1e-10);
      CHECK(d.residuals.antisymmetry <= 1e-12);
      CHECK(d.residuals.reconstruction <= 1e-10);
      CHECK(d.residuals.ao <= 1e-10);
      CHECK(d.residuals.orthogonality <= 1e-10);
      CHECK(d.residuals.trace_J <= 1e-10);
    }
  }

  TEST_CASE("stability is required") {
    Eigen::Matrix2d B;
    B << 0.5, 1, -1, 0.2;
    try {
      make_linear_model(B, Eigen::Matrix2d::Identity());
      FAIL("expected UnstableDrift");
    } catch (const Error& e) {
      CHECK(e.kind() == "UnstableDrift");
      CHECK(e.category() == ErrorCategory::Numerical);
    }
    Eigen::Matrix2d marginal;
    marginal << -1e-13, 0, 0, -1;
    CHECK_THROWS_AS(require_stable(marginal), Error);
  }

  TEST_CASE("A must be positive definite and match Gamma") {
    Eigen::Matrix2d A;
    A << 1, 0, 0, -1;
    CHECK_THROWS_AS(make_linear_model(-Eigen::Matrix2d::Identity(), A), Error);
    Eigen::Matrix2d G = Eigen::Matrix2d::Identity();
    CHECK_THROWS_AS(make_linear_model(-Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity(), Eigen::MatrixXd(G)),
                    Error);
    CHECK_NOTHROW(make_linear_model(-Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity(),
                                    Eigen::MatrixXd(std::sqrt(2.0) * G)));
  }

  TEST_CASE("Gaussian density normalisation") {
    const GaussianDensity g(Eigen::Matrix2d::Identity());
    CHECK(g.density(Eigen::Vector2d::Zero()) == doctest::Approx(1.0 / (2.0 * std::numbers::pi)));
    Eigen::Matrix2d S;
    S << 4, 0, 0, 1;
    const GaussianDensity h(S);
    CHECK(h.density(Eigen::Vector2d(2, 0)) ==
          doctest::Approx(std::exp(-0.5) / (2.0 * std::numbers::pi * 2.0)).epsilon(1e-14));
    CHECK((h.grad_log_density(Eigen::Vector2d(2, 1)) - Eigen::Vector2d(-0.5, -1)).norm() < 1e-15);
  }

  TEST_CASE("extract_linear reads B and A off a model") {
    const auto m = load_model(R"({"name":"l","dimension":2,"drift":["-2*x1 + x2","-x1 - x2"],
                                  "diffusion":{"constant":[[1,0.2],[0.2,0.5]]},"domain":[[-5,5],[-5,5]]})");
    const auto lm = extract_linear(m);
    Eigen::Matrix2d B;
    B << -2, 1, -1, -1;
    CHECK((lm.B - B).norm() < 1e-14);
    CHECK(lm.A(0, 1) == 0.2);
    const auto nl = load_model(R"({"name":"n","dimension":1,"drift":["x1 - x1^3"],
                                   "diffusion":{"constant":[[1]]},"domain":[[-3,3]]})");
    try {
      extract_linear(nl);
      FAIL("expected NotLinear");
    } catch (const Error& e) {
      CHECK(e.kind() == "NotLinear");
    }
  }
}
