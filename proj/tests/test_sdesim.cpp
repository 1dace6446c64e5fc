#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fpdecomp/error.hpp"
#include "fpdecomp/sdesim.hpp"

using namespace fpdecomp;
using namespace fpdecomp::sdesim;

namespace {

DiffusionModel ou1(double a = 1.0) {
  Eigen::MatrixXd B(1, 1), A(1, 1);
  B << -1;
  A << a;
  return DiffusionModel::linear(B, A, {{-6, 6}}, "ou1");
}

DiffusionModel multiplicative() {
  return load_model(R"({"name":"mult","dimension":1,"drift":["-x1"],
                        "diffusion":{"exprs":[["1 + x1^2/10"]]},"domain":[[-6,6]]})");
}

std::vector<double> column(const Eigen::MatrixXd& P, int i) {
  std::vector<double> v;
  for (Eigen::Index k = 0; k < P.rows(); ++k) {
    if (std::isfinite(P(k, i))) v.push_back(P(k, i));
  }
  return v;
}

}  // namespace

TEST_SUITE("sdesim") {
  TEST_CASE("Philox4x32-10 known answers") {
    using A4 = std::array<std::uint32_t, 4>;
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({~0u, ~0u, ~0u, ~0u}, {~0u, ~0u}) == A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
  }

  TEST_CASE("normal stream moments and random access") {
    NormalStream s(42, 7);
    double m1 = 0, m2 = 0;
    const int N = 200000;
    for (int q = 0; q < N; ++q) {
      const double z = s(static_cast<std::uint64_t>(q));
      m1 += z;
      m2 += z * z;
    }
    CHECK(std::abs(m1 / N) < 0.01);
    CHECK(std::abs(m2 / N - 1.0) < 0.01);
    NormalStream t(42, 7);
    CHECK(t(12345) == s(12345));
    CHECK(t(3) == NormalStream(42, 7)(3));
    CHECK(NormalStream(43, 7)(3) != t(3));
  }

  TEST_CASE("noiseless limit decays like exp(-t)") {
    const auto pe = simulate(ou1(0.0), Eigen::VectorXd::Constant(1, 2.0), 1e-3, 1.0, 3, 1);
    for (int k = 0; k < 3; ++k) CHECK(pe.positions.back()(k, 0) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-3));
  }

  TEST_CASE("OU endpoint variance") {
    const auto pe = simulate(ou1(), Eigen::VectorXd::Zero(1), 0.01, 6.0, 20000, 9);
    CHECK(sample_covariance(pe, 6.0)(0, 0) == doctest::Approx(1.0).epsilon(0.04));
    CHECK(std::abs(sample_mean(pe, 6.0)[0]) < 0.05);
  }

  TEST_CASE("rotation model endpoint covariance is the identity") {
    Eigen::Matrix2d B;
    B << -1, 1, -1, -1;
    const auto m = DiffusionModel::linear(B, Eigen::Matrix2d::Identity(), {{-6, 6}, {-6, 6}});
    const auto pe = simulate(m, Eigen::Vector2d::Zero(), 0.01, 6.0, 20000, 3);
    CHECK((sample_covariance(pe, 6.0) - Eigen::Matrix2d::Identity()).norm() <= 0.03 * std::sqrt(2.0));
  }

  TEST_CASE("bit-identical reruns and path independence") {
    const auto a = simulate(ou1(), Eigen::VectorXd::Zero(1), 0.01, 2.0, 50, 5);
    const auto b = simulate(ou1(), Eigen::VectorXd::Zero(1), 0.01, 2.0, 50, 5);
    const auto c = simulate(ou1(), Eigen::VectorXd::Zero(1), 0.01, 2.0, 20, 5);
    const auto d = simulate(ou1(), Eigen::VectorXd::Zero(1), 0.01, 2.0, 50, 6);
    CHECK((a.positions.back().array() == b.positions.back().array()).all());
    CHECK((a.positions.back().topRows(20).array() == c.positions.back().array()).all());
    CHECK_FALSE((a.positions.back().array() == d.positions.back().array()).all());
  }

  TEST_CASE("drift forms coincide for constant noise") {
    Eigen::Matrix2d A;
    A << 1, 0.3, 0.3, 2;
    Eigen::Matrix2d B;
    B << -1, 0.5, -1, -2;
    const auto m = DiffusionModel::linear(B, A, {{-3, 3}, {-3, 3}});
    const auto f = drift_forms(m, [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -x; });
    const auto pts = lattice_points(m.domain(), 5);
    const Eigen::MatrixXd i = evaluate(f.ito, 2, pts), s = evaluate(f.stratonovich, 2, pts),
                          dv = evaluate(f.divergence, 2, pts);
    CHECK((i - dv).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((s - dv).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("drift forms for A(x) = 1 + x^2/10") {
    const auto m = multiplicative();
    // Gaussian rho: grad ln rho = -x
    const auto f = drift_forms(m, [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -x; });
    for (double x : {-2.0, -0.5, 0.0, 1.0, 3.0}) {
      const std::vector<Eigen::VectorXd> p{Eigen::VectorXd::Constant(1, x)};
      const double ito = evaluate(f.ito, 1, p)(0, 0);
      const double strat = evaluate(f.stratonovich, 1, p)(0, 0);
      const double div = evaluate(f.divergence, 1, p)(0, 0);
      CHECK(div == doctest::Approx(-(1 + x * x / 10) * x).epsilon(1e-14));
      CHECK(std::abs((ito - div) - x / 5) <= 1e-6);
      // Gamma = sqrt(2A), so Gamma Gamma' / 2 = A' / 2 = x / 10.
      CHECK(std::abs((strat - div) - x / 10) <= 1e-6);
    }
  }

  TEST_CASE("ensemble density: single path and t = 0") {
    const Grid g({{-6, 6}}, {12});
    const auto one = simulate(ou1(), Eigen::VectorXd::Constant(1, 0.5), 0.01, 1.0, 1, 2);
    const GridField d1 = ensemble_density(one, g, 1.0);
    CHECK((d1.values.array() > 0).count() == 1);
    CHECK(d1.mass() == doctest::Approx(1.0));
    const auto many = simulate(ou1(), Eigen::VectorXd::Constant(1, 0.5), 0.01, 1.0, 100, 2, {std::nullopt, 10});
    const GridField d0 = ensemble_density(many, g, 0.0);
    CHECK(d0.values[6] == doctest::Approx(1.0 / g.cell_volume()));
    CHECK(ensemble_density(many, g, 0.5).mass() == doctest::Approx(1.0));
    CHECK_THROWS_AS(ensemble_density(many, g, 0.55), Error);
  }

  TEST_CASE("ensemble density approaches the stationary Gaussian") {
    const Grid g({{-6, 6}}, {60});
    const auto pe = simulate(ou1(), Eigen::VectorXd::Zero(1), 0.01, 5.0, 100000, 17);
    const GridField emp = ensemble_density(pe, g, 5.0);
    const GridField exact = sample(g, [](const Eigen::VectorXd& x) {
      return std::exp(-0.5 * x[0] * x[0]) / std::sqrt(2 * std::numbers::pi);
    });
    CHECK(tv_distance(emp, exact) <= 0.02);
  }

  TEST_CASE("KS statistic") {
    CHECK(ks_statistic({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(ks_statistic({1, 2}, {3, 4}) == 1.0);
    CHECK(ks_critical(100000, 100000) == doctest::Approx(1.6276 * std::sqrt(2.0 / 100000)).epsilon(1e-3));
    const auto a = simulate(ou1(), Eigen::VectorXd::Zero(1), 0.01, 5.0, 20000, 100);
    const auto b = simulate(ou1(), Eigen::VectorXd::Zero(1), 0.01, 5.0, 20000, 200);
    CHECK(ks_statistic(column(a.positions.back(), 0), column(b.positions.back(), 0)) < ks_critical(20000, 20000));
  }

  TEST_CASE("kill box stops and flags paths") {
    SimulateOptions opt;
    opt.kill_box = Box{{-0.1, 0.1}};
    const auto pe = simulate(ou1(), Eigen::VectorXd::Zero(1), 0.01, 2.0, 50, 1, opt);
    CHECK(pe.killed_count() > 0);
    for (std::size_t k = 0; k < pe.paths(); ++k) {
      if (pe.killed[k]) {
        CHECK(std::isnan(pe.positions.back()(static_cast<Eigen::Index>(k), 0)));
        CHECK(pe.kill_time[k] > 0.0);
      }
    }
  }

  TEST_CASE("input validation") {
    CHECK_THROWS_AS(simulate(ou1(), Eigen::VectorXd::Zero(1), 0.0, 1.0, 1, 1), Error);
    CHECK_THROWS_AS(simulate(ou1(), Eigen::VectorXd::Zero(2), 0.1, 1.0, 1, 1), Error);
    CHECK_THROWS_AS(simulate(ou1(), Eigen::VectorXd::Zero(1), 0.1, 1.0, 0, 1), Error);
  }
}
