#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fpdecomp/error.hpp"
#include "fpdecomp/fpegrid.hpp"

using namespace fpdecomp;
using namespace fpdecomp::fpegrid;

namespace {

DiffusionModel ou1() {
  Eigen::MatrixXd B(1, 1), A(1, 1);
  B << -1;
  A << 1;
  return DiffusionModel::linear(B, A, {{-6, 6}}, "ou1");
}

DiffusionModel rotation() {
  Eigen::Matrix2d B;
  B << -1, 1, -1, -1;
  return DiffusionModel::linear(B, Eigen::Matrix2d::Identity(), {{-6, 6}, {-6, 6}}, "rot");
}

DiffusionModel double_well() {
  return load_model(R"({"name":"dw","dimension":1,"drift":["x1 - x1^3"],
                        "diffusion":{"constant":[[1]]},"domain":[[-3.5,3.5]]})");
}

// Standard normal density renormalised to [-6, 6].
double truncated_normal(double x) {
  const double mass = std::erf(6.0 / std::sqrt(2.0));
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi) / mass;
}

double ou_error(int m) {
  const Grid g({{-6, 6}}, {m});
  const GridField rho = stationary_density(discretize_generator(ou1(), g));
  double err = 0.0, peak = 0.0;
  for (std::size_t c = 0; c < g.size(); ++c) {
    const double exact = truncated_normal(g.center(c)[0]);
    err = std::max(err, std::abs(rho.values[static_cast<Eigen::Index>(c)] - exact));
    peak = std::max(peak, exact);
  }
  return err / peak;
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> g;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

}  // namespace

TEST_SUITE("fpegrid") {
  TEST_CASE("generator conserves mass and is an M-matrix") {
    for (const auto& m : {ou1(), double_well()}) {
      const Grid g(m.domain(), {80});
      const auto L = discretize_generator(m, g);
      CHECK(L.max_abs_column_sum() <= 1e-12 * L.max_abs_entry());
      for (int k = 0; k < L.matrix.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(L.matrix, k); it; ++it) {
          if (it.row() != it.col()) CHECK(it.value() >= 0.0);
        }
      }
    }
    const Grid g2({{-6, 6}, {-6, 6}}, {30, 30});
    const auto L2 = discretize_generator(rotation(), g2);
    CHECK(L2.max_abs_column_sum() <= 1e-12 * L2.max_abs_entry());
  }

  TEST_CASE("1-D OU stationary density is second order") {
    const double e50 = ou_error(50), e100 = ou_error(100), e200 = ou_error(200);
    CHECK(e200 <= 1e-3);
    CHECK(std::log2(e50 / e100) >= 1.9);
    CHECK(std::log2(e100 / e200) >= 1.9);
  }

  TEST_CASE("reversible 1-D model: grid density equals exp(-U) up to O(h^2)") {
    const Grid g({{-3.5, 3.5}}, {200});
    const GridField rho = stationary_density(discretize_generator(double_well(), g));
    double z = 0.0;
    for (std::size_t c = 0; c < g.size(); ++c) {
      const double x = g.center(c)[0];
      z += std::exp(-(x * x * x * x / 4 - x * x / 2)) * g.cell_volume();
    }
    double err = 0.0;
    for (std::size_t c = 0; c < g.size(); ++c) {
      const double x = g.center(c)[0];
      err = std::max(err, std::abs(rho.values[static_cast<Eigen::Index>(c)] - std::exp(-(x * x * x * x / 4 - x * x / 2)) / z));
    }
    CHECK(err < 1e-3);
  }

  TEST_CASE("split on the rotation model") {
    const Grid g({{-6, 6}, {-6, 6}}, {40, 40});
    const auto d = decompose_grid(rotation(), g);
    // Reconstruction is exact wherever fl(s + a) == l is representable; when
    // |s|, |a| sit in a coarser binade than l it can miss by one ulp of l.
    const SparseMatrix sum = d.Ls.matrix + d.La.matrix;
    for (int k = 0; k < sum.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(sum, k); it; ++it) {
        const double l = d.L.matrix.coeff(it.row(), k);
        const double s = d.Ls.matrix.coeff(it.row(), k), a = d.La.matrix.coeff(it.row(), k);
        if (it.value() == l) continue;
        auto ulp = [](double v) { return std::nextafter(std::abs(v), 1e300) - std::abs(v); };
        // sums of s and a live on a lattice of spacing min(ulp(s), ulp(a))
        CHECK(std::min(ulp(s), ulp(a)) > ulp(l));
        CHECK(std::abs(it.value() - l) <= 0.5 * std::min(ulp(s), ulp(a)));
      }
    }
    CHECK(symmetry_defect(d.Ls.matrix, d.rho.values, false) <= 1e-12);
    CHECK(symmetry_defect(d.La.matrix, d.rho.values, true) <= 1e-12);
    const double scale = d.L.max_abs_entry() * d.rho.values.cwiseAbs().maxCoeff();
    CHECK((d.Ls.matrix * d.rho.values).cwiseAbs().maxCoeff() <= 1e-10 * scale);
    CHECK((d.La.matrix * d.rho.values).cwiseAbs().maxCoeff() <= 1e-10 * scale);
    std::mt19937_64 rng(8);
    for (int k = 0; k < 20; ++k) {
      const Eigen::VectorXd u = random_vector(rng, static_cast<Eigen::Index>(g.size()));
      const double q = weighted_inner(d.Ls.matrix * u, u, d.rho);
      CHECK(q <= 1e-12 * weighted_inner(u, u, d.rho) * d.L.max_abs_entry());
      // antisymmetric part is skew in the weighted product
      CHECK(std::abs(weighted_inner(d.La.matrix * u, u, d.rho)) <=
            1e-10 * weighted_inner(u, u, d.rho) * d.L.max_abs_entry());
    }
  }

  TEST_CASE("reversible model has a vanishing antisymmetric part") {
    const Grid g({{-3.5, 3.5}}, {200});
    const auto d = decompose_grid(double_well(), g);
    CHECK(d.La.matrix.norm() <= 1e-8 * d.L.matrix.norm());
    // the pointwise circulation only vanishes to truncation order
    const double j200 = d.circulation.j.values.cwiseAbs().maxCoeff();
    const double j100 =
        decompose_grid(double_well(), Grid({{-3.5, 3.5}}, {100})).circulation.j.values.cwiseAbs().maxCoeff();
    CHECK(j200 < 1e-2);
    CHECK(std::log2(j100 / j200) >= 1.9);
  }

  TEST_CASE("circulation of the rotation model is (x2, -x1)") {
    const Grid g({{-6, 6}, {-6, 6}}, {60, 60});
    const auto d = decompose_grid(rotation(), g);
    double err = 0.0;
    for (std::size_t c = 0; c < g.size(); ++c) {
      const Eigen::VectorXd x = g.center(c);
      if (x.norm() > 3.0) continue;
      const Eigen::Vector2d exact(x[1], -x[0]);
      err = std::max(err, (d.circulation.j.values.row(static_cast<Eigen::Index>(c)).transpose() - exact).norm());
    }
    CHECK(err < 0.05);
  }

  TEST_CASE("evolution conserves mass and relaxes to rho") {
    const Grid g({{-6, 6}}, {100});
    const auto d = decompose_grid(ou1(), g);
    const GridField u0 = gaussian_density(g, Eigen::VectorXd::Constant(1, 2.0), 0.5);
    const auto snaps = evolve(d.L, u0, 8.0, 0.01, Scheme::Implicit, 100);
    for (const auto& s : snaps) CHECK(GridField(g, s.u).mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((snaps.back().u - d.rho.values).cwiseAbs().maxCoeff() < 1e-3);
  }

  TEST_CASE("upwind transport by La conserves mass, stays positive and fixes rho") {
    const Grid g({{-6, 6}, {-6, 6}}, {40, 40});
    const auto d = decompose_grid(rotation(), g);
    const double dt = 0.5 * max_explicit_step(d.La);
    const GridField u0 = gaussian_density(g, Eigen::Vector2d(1.0, 0.0), 0.7);
    const auto snaps = evolve(d.La, u0, 1.0, dt, Scheme::ExplicitUpwind, 1000000);
    CHECK(GridField(g, snaps.back().u).mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(snaps.back().u.minCoeff() >= 0.0);
    const auto fixed = evolve(d.La, d.rho, 1.0, dt, Scheme::ExplicitUpwind, 1000000);
    CHECK((fixed.back().u - d.rho.values).cwiseAbs().maxCoeff() <= 1e-10 * d.rho.values.maxCoeff());
    CHECK_THROWS_AS(evolve(d.La, u0, 1.0, 3.0 * max_explicit_step(d.La), Scheme::ExplicitUpwind), Error);
  }

  TEST_CASE("coarse grids are refused") {
    Eigen::MatrixXd B(1, 1), A(1, 1);
    B << -1;
    A << 1e-4;
    const auto m = DiffusionModel::linear(B, A, {{-6, 6}});
    try {
      discretize_generator(m, Grid({{-6, 6}}, {10}));
      FAIL("expected GridTooCoarse");
    } catch (const Error& e) {
      CHECK(e.kind() == "GridTooCoarse");
    }
  }

  TEST_CASE("quasi-potential of OU is x^2 / 2") {
    const Grid g({{-3, 3}}, {120});
    const auto levels = quasi_potential(ou1(), g, {0.5, 0.2, 0.1});
    for (const auto& l : levels) {
      REQUIRE(l.usable);
      double lo = 1e300, hi = -1e300;
      for (std::size_t c = 0; c < g.size(); ++c) {
        if (!(l.rho->values[static_cast<Eigen::Index>(c)] > 1e-12)) continue;
        const double x = g.center(c)[0];
        const double d = l.U->values[static_cast<Eigen::Index>(c)] - x * x / 2;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
      }
      CHECK((hi - lo) / 2 <= 1e-3);
    }
    CHECK_THROWS_AS(quasi_potential(ou1(), g, {0.1, 0.2}), Error);
  }

  TEST_CASE("dimension mismatch") {
    CHECK_THROWS_AS(discretize_generator(rotation(), Grid({{-6, 6}}, {10})), Error);
  }
}
