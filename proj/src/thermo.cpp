#include "fpdecomp/thermo.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fpdecomp/error.hpp"

namespace fpdecomp::thermo {

namespace {

constexpr double kLogFloor = 1e-300;

struct FaceStencil {
  // Weights on the faces c-2s|c-s, c-s|c, c|c+s, c+s|c+2s.
  double mm = 0.0, m = 0.0, p = 0.0, pp = 0.0;
};

// Derivative stencil at `c` along `axis` expressed on face differences:
// central when both neighbours are usable, otherwise second-order one-sided
// (first-order if only one face is available).
FaceStencil face_stencil(const Grid& g, std::size_t c, int axis, const std::vector<char>& ok) {
  FaceStencil st;
  const int mi = g.cells(axis);
  if (mi < 2) return st;
  const int k = g.coordinate(c, axis);
  const std::size_t s = g.stride(axis);
  const double h = g.spacing(axis);
  const bool lo = k > 0 && ok[c - s];
  const bool hi = k + 1 < mi && ok[c + s];
  if (lo && hi) {
    st.m = st.p = 0.5 / h;
  } else if (hi) {
    if (k + 2 < mi && ok[c + 2 * s]) {
      st.p = 1.5 / h;
      st.pp = -0.5 / h;
    } else {
      st.p = 1.0 / h;
    }
  } else if (lo) {
    if (k > 1 && ok[c - 2 * s]) {
      st.m = 1.5 / h;
      st.mm = -0.5 / h;
    } else {
      st.m = 1.0 / h;
    }
  }
  return st;
}

// Row c of an N x n*n table as an n x n matrix.
Eigen::MatrixXd cell_matrix(const Eigen::MatrixXd& rows, std::size_t c, int n) {
  Eigen::MatrixXd M(n, n);
  for (int q = 0; q < n * n; ++q) M.data()[q] = rows(static_cast<Eigen::Index>(c), q);
  return M;
}

Eigen::MatrixXd force(const fpegrid::SampledModel& s, const Eigen::VectorXd& v, double floor) {
  const Grid& g = s.grid;
  const int n = s.n;
  const std::size_t N = g.size();
  if (static_cast<std::size_t>(v.size()) != N) throw validation_error("GridMismatch", "field size");
  std::vector<char> ok(N);
  Eigen::VectorXd lv(N);
  for (std::size_t c = 0; c < N; ++c) {
    ok[c] = v[c] > floor;
    lv[c] = ok[c] ? std::log(v[c]) : 0.0;
  }
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(N, n);
  Eigen::VectorXd grad(n), bbar(n);
  for (std::size_t c = 0; c < N; ++c) {
    if (!ok[c]) continue;
    for (int i = 0; i < n; ++i) {
      const FaceStencil st = face_stencil(g, c, i, ok);
      const std::size_t sd = g.stride(i);
      const Eigen::VectorXd& P = s.face_P[i];
      double dpsi = 0.0, dlog = 0.0;
      if (st.p != 0.0) {
        dpsi += st.p * P[c];
        dlog += st.p * (lv[c + sd] - lv[c]);
      }
      if (st.pp != 0.0) {
        dpsi += st.pp * P[c + sd];
        dlog += st.pp * (lv[c + 2 * sd] - lv[c + sd]);
      }
      if (st.m != 0.0) {
        dpsi += st.m * P[c - sd];
        dlog += st.m * (lv[c] - lv[c - sd]);
      }
      if (st.mm != 0.0) {
        dpsi += st.mm * P[c - 2 * sd];
        dlog += st.mm * (lv[c - sd] - lv[c - 2 * sd]);
      }
      bbar[i] = s.A(c, i + i * n) * dpsi;
      grad[i] = dlog;
    }
    X.row(c) = (bbar - cell_matrix(s.A, c, n) * grad).transpose();
  }
  return X;
}

double quadratic_sum(const fpegrid::SampledModel& s, const Eigen::VectorXd& u,
                     const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  const int n = s.n;
  double total = 0.0;
  for (std::size_t c = 0; c < s.grid.size(); ++c) {
    if (!(u[c] > kDensityFloor)) continue;
    const Eigen::MatrixXd Ainv = cell_matrix(s.A_inv, c, n);
    if (!Ainv.allFinite()) {
      throw numerical_error("SingularDiffusion", "diffusion matrix is singular at a counted cell");
    }
    total += u[c] * X.row(c).dot(Ainv * Y.row(c).transpose());
  }
  return total * s.grid.cell_volume();
}

void check_inputs(const GridField& u, const GridField& rho, const fpegrid::SampledModel& s) {
  require_same_grid(u.grid, rho.grid);
  require_same_grid(u.grid, s.grid);
}

}  // namespace

double free_energy(const GridField& u, const GridField& rho) {
  require_same_grid(u.grid, rho.grid);
  double total = 0.0;
  for (Eigen::Index c = 0; c < u.values.size(); ++c) {
    const double uc = u.values[c];
    if (!(uc > kLogFloor)) continue;
    if (!(rho.values[c] > 0.0)) {
      throw numerical_error("ZeroDensityCell", "reference density vanishes where u does not");
    }
    total += uc * std::log(uc / rho.values[c]);
  }
  return total * u.grid.cell_volume();
}

double boltzmann_H(const GridField& u) {
  double total = 0.0;
  for (Eigen::Index c = 0; c < u.values.size(); ++c) {
    const double uc = u.values[c];
    if (uc > kLogFloor) total -= uc * std::log(uc);
  }
  return total * u.grid.cell_volume();
}

Eigen::MatrixXd thermodynamic_force(const fpegrid::SampledModel& s, const Eigen::VectorXd& v) {
  return force(s, v, kDensityFloor);
}

double entropy_production(const GridField& u, const GridField& rho, const fpegrid::SampledModel& s) {
  check_inputs(u, rho, s);
  const Eigen::MatrixXd X = force(s, u.values, kDensityFloor);
  return quadratic_sum(s, u.values, X, X);
}

double entropy_production(const GridField& u, const GridField& rho, const DiffusionModel& m) {
  return entropy_production(u, rho, fpegrid::sample_model(m, u.grid));
}

double housekeeping_heat(const GridField& u, const GridField& rho, const fpegrid::SampledModel& s) {
  check_inputs(u, rho, s);
  const Eigen::MatrixXd j = force(s, rho.values, 0.0);
  return quadratic_sum(s, u.values, j, j);
}

double housekeeping_heat(const GridField& u, const GridField& rho, const DiffusionModel& m) {
  return housekeeping_heat(u, rho, fpegrid::sample_model(m, u.grid));
}

double housekeeping_heat_unreduced(const GridField& u, const GridField& rho,
                                   const fpegrid::SampledModel& s) {
  check_inputs(u, rho, s);
  const Eigen::MatrixXd j = force(s, rho.values, 0.0);
  const Eigen::MatrixXd X = force(s, u.values, kDensityFloor);
  return quadratic_sum(s, u.values, j, X);
}

double free_energy_rate(const fpegrid::DiscreteOperator& L, const GridField& u, const GridField& rho) {
  require_same_grid(L.grid, u.grid);
  require_same_grid(u.grid, rho.grid);
  const Eigen::VectorXd Lu = L.matrix * u.values;
  double total = 0.0;
  for (Eigen::Index c = 0; c < Lu.size(); ++c) {
    if (u.values[c] > kLogFloor && rho.values[c] > 0.0) {
      total += Lu[c] * std::log(u.values[c] / rho.values[c]);
    }
  }
  return total * u.grid.cell_volume();
}

ThermoLedger balance_audit(const std::vector<fpegrid::Snapshot>& snapshots, const GridField& rho,
                           const fpegrid::SampledModel& s, const AuditOptions& opt) {
  const std::size_t K = snapshots.size();
  if (K < 3) throw validation_error("InsufficientSnapshots", "balance audit needs at least 3 snapshots");
  const double dt = snapshots[1].t - snapshots[0].t;
  if (!(dt > 0.0)) throw validation_error("ValidationFailure", "snapshot times must increase");
  for (std::size_t k = 1; k < K; ++k) {
    if (std::abs((snapshots[k].t - snapshots[k - 1].t) - dt) > 1e-9 * std::max(1.0, std::abs(dt))) {
      throw validation_error("ValidationFailure", "snapshots must be equally spaced");
    }
  }
  if (opt.La) require_same_grid(opt.La->grid, rho.grid);

  ThermoLedger ledger;
  ledger.records.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const GridField u(rho.grid, snapshots[k].u);
    ThermoRecord& r = ledger.records[k];
    r.t = snapshots[k].t;
    r.F = free_energy(u, rho);
    r.ep = entropy_production(u, rho, s);
    r.Ein = housekeeping_heat(u, rho, s);
    if (opt.La) r.antisymmetric_rate = free_energy_rate(*opt.La, u, rho);
  }
  auto F = [&](std::size_t k) { return ledger.records[k].F; };
  for (std::size_t k = 0; k < K; ++k) {
    double d;
    if (k == 0) {
      d = (-3.0 * F(0) + 4.0 * F(1) - F(2)) / (2.0 * dt);
    } else if (k == K - 1) {
      d = (3.0 * F(K - 1) - 4.0 * F(K - 2) + F(K - 3)) / (2.0 * dt);
    } else {
      d = (F(k + 1) - F(k - 1)) / (2.0 * dt);
    }
    ThermoRecord& r = ledger.records[k];
    r.dFdt = d;
    r.residual = std::abs(r.dFdt - r.Ein + r.ep);
    auto flag = [&](const char* what, double value) {
      std::ostringstream msg;
      msg << "t=" << r.t << ": " << what << " = " << value;
      ledger.violations.push_back(msg.str());
    };
    if (r.ep < -1e-10) flag("e_p", r.ep);
    if (r.Ein < -1e-10) flag("E_in", r.Ein);
    if (opt.dissipative && r.dFdt > 1e-10) flag("dF/dt", r.dFdt);
  }
  return ledger;
}

ThermoLedger balance_audit(const std::vector<fpegrid::Snapshot>& snapshots, const GridField& rho,
                           const DiffusionModel& m, const AuditOptions& opt) {
  return balance_audit(snapshots, rho, fpegrid::sample_model(m, rho.grid), opt);
}

}  // namespace fpdecomp::thermo
