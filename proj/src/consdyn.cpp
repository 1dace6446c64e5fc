#include "fpdecomp/consdyn.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "fpdecomp/error.hpp"

namespace fpdecomp::consdyn {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                 b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

using Rhs = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct StepResult {
  Eigen::VectorXd y;
  Eigen::VectorXd k7;  // f(y), reused as the next k1
  Eigen::VectorXd err;
};

StepResult dopri_step(const Rhs& f, const Eigen::VectorXd& y, const Eigen::VectorXd& k1, double h) {
  const Eigen::VectorXd k2 = f(y + h * (a21 * k1));
  const Eigen::VectorXd k3 = f(y + h * (a31 * k1 + a32 * k2));
  const Eigen::VectorXd k4 = f(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
  const Eigen::VectorXd k5 = f(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
  const Eigen::VectorXd k6 = f(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
  StepResult r;
  r.y = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  r.k7 = f(r.y);
  r.err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * r.k7);
  return r;
}

// `relative` limits how many leading components get the relative part of
// the scale; the rest are controlled absolutely.
double error_norm(const StepResult& r, const Eigen::VectorXd& y, double tol,
                  Eigen::Index relative = -1) {
  Eigen::ArrayXd scale = tol + tol * y.array().abs().max(r.y.array().abs());
  if (relative >= 0) scale.tail(scale.size() - relative) = tol;
  return std::sqrt((r.err.array() / scale).square().mean());
}

double initial_step(const Eigen::VectorXd& y, const Eigen::VectorXd& f0, double tol) {
  const double d0 = y.norm(), d1 = f0.norm();
  double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  return std::max(h * std::pow(tol / 1e-6, 0.2), 1e-10);
}

double step_factor(double err) {
  if (err == 0.0) return 5.0;
  return std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
}

bool inside(const Box& domain, const Eigen::VectorXd& x) {
  for (std::size_t i = 0; i < domain.size(); ++i) {
    if (!domain[i].contains(x[static_cast<Eigen::Index>(i)])) return false;
  }
  return true;
}

Rhs wrap(const VectorFieldFn& f, int n) {
  return [f, n](const Eigen::VectorXd& x) {
    Eigen::VectorXd out(n);
    f(as_span(x), as_span(out));
    return out;
  };
}

// Multilinear interpolation weights for x on the lattice of cell centres.
void interpolation_stencil(const Grid& g, const Eigen::VectorXd& x,
                           std::vector<std::pair<std::size_t, double>>& out) {
  const int n = g.dimension();
  std::vector<int> base(n);
  std::vector<double> frac(n);
  for (int i = 0; i < n; ++i) {
    const int m = g.cells(i);
    if (m == 1) {
      base[i] = 0;
      frac[i] = 0.0;
      continue;
    }
    const double t = std::clamp((x[i] - g.bounds()[i].lo) / g.spacing(i) - 0.5, 0.0, m - 1.0);
    base[i] = std::min(static_cast<int>(std::floor(t)), m - 2);
    frac[i] = t - base[i];
  }
  out.clear();
  std::vector<int> idx(n);
  for (int corner = 0; corner < (1 << n); ++corner) {
    double w = 1.0;
    for (int i = 0; i < n; ++i) {
      const bool up = (corner >> i) & 1;
      if (up && g.cells(i) == 1) {
        w = 0.0;
        break;
      }
      idx[i] = base[i] + (up ? 1 : 0);
      w *= up ? frac[i] : 1.0 - frac[i];
    }
    if (w != 0.0) out.emplace_back(g.linear_index(idx), w);
  }
}

}  // namespace

Eigen::VectorXd ConservativeSystem::velocity(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out(n);
  j(as_span(x), as_span(out));
  return out;
}

ConservativeSystem from_linear(const Eigen::MatrixXd& J, const Eigen::MatrixXd& Xi, Box domain) {
  const auto n = static_cast<int>(J.rows());
  if (J.cols() != n || Xi.rows() != n || Xi.cols() != n || static_cast<int>(domain.size()) != n) {
    throw validation_error("DimensionMismatch", "J, Xi and domain must share one dimension");
  }
  const lindecomp::GaussianDensity g(Xi);
  ConservativeSystem sys;
  sys.n = n;
  sys.j = [J](std::span<const double> x, std::span<double> out) {
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())) = J * xv;
  };
  sys.rho = [g](const Eigen::VectorXd& x) { return g.density(x); };
  sys.domain = std::move(domain);
  return sys;
}

ConservativeSystem from_linear(const lindecomp::LinearDecomposition& d, Box domain) {
  return from_linear(d.J, d.Xi, std::move(domain));
}

ConservativeSystem from_density(const DiffusionModel& m, ScalarFn rho,
                                std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad_log_rho) {
  ConservativeSystem sys;
  sys.n = m.dimension();
  sys.j = [m, grad_log_rho](std::span<const double> x, std::span<double> out) {
    const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::VectorXd v = m.drift(xv) - m.diffusion(xv) * grad_log_rho(xv);
    std::copy(v.data(), v.data() + v.size(), out.begin());
  };
  sys.rho = std::move(rho);
  sys.domain = m.domain();
  return sys;
}

ConservativeSystem from_grid(const GridVectorField& j, const GridField& rho) {
  require_same_grid(j.grid, rho.grid);
  const Grid& g = rho.grid;
  const int n = g.dimension();
  if (j.values.cols() != n) throw validation_error("DimensionMismatch", "j has the wrong width");
  ConservativeSystem sys;
  sys.n = n;
  sys.domain = g.bounds();
  sys.exact = false;
  for (int i = 0; i < n; ++i) sys.resolution = std::max(sys.resolution, g.spacing(i));
  const Eigen::MatrixXd jv = j.values;
  sys.j = [g, jv](std::span<const double> x, std::span<double> out) {
    std::vector<std::pair<std::size_t, double>> st;
    interpolation_stencil(g, Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())), st);
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& [c, w] : st) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * jv(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i));
    }
  };
  const Eigen::VectorXd rv = rho.values;
  sys.rho = [g, rv](const Eigen::VectorXd& x) {
    std::vector<std::pair<std::size_t, double>> st;
    interpolation_stencil(g, x, st);
    double v = 0.0;
    for (const auto& [c, w] : st) v += w * rv[static_cast<Eigen::Index>(c)];
    return v;
  };
  return sys;
}

ConservativeSystem planar_hamiltonian(const Expr& H, ScalarFn rho, Box domain, double fd_step) {
  if (domain.size() != 2 || H.max_variable() > 2) {
    throw validation_error("DimensionError", "planar Hamiltonian systems need exactly two dimensions");
  }
  if (!(fd_step > 0.0)) throw validation_error("ValidationFailure", "fd_step must be positive");
  const CompiledExpr h(H);
  ConservativeSystem sys;
  sys.n = 2;
  sys.domain = std::move(domain);
  sys.rho = rho;
  sys.j = [h, rho, fd_step](std::span<const double> x, std::span<double> out) {
    const double d = fd_step;
    const std::array<double, 2> xp{x[0] + d, x[1]}, xm{x[0] - d, x[1]};
    const std::array<double, 2> yp{x[0], x[1] + d}, ym{x[0], x[1] - d};
    const double Hx = (h.eval(xp) - h.eval(xm)) / (2.0 * d);
    const double Hy = (h.eval(yp) - h.eval(ym)) / (2.0 * d);
    const double r = rho(Eigen::Vector2d(x[0], x[1]));
    out[0] = Hy / r;
    out[1] = -Hx / r;
  };
  return sys;
}

double divergence_defect(const ConservativeSystem& sys, const Eigen::VectorXd& x, double fd_step) {
  const int n = sys.n;
  auto q = [&](const Eigen::VectorXd& p) { return Eigen::VectorXd(sys.rho(p) * sys.velocity(p)); };
  double div = 0.0, scale = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd e = fd_step * Eigen::VectorXd::Unit(n, i);
    const Eigen::VectorXd dq = (q(x + e) - q(x - e)) / (2.0 * fd_step);
    div += dq[i];
    scale = std::max(scale, dq.cwiseAbs().maxCoeff());
  }
  return scale > 0.0 ? std::abs(div) / scale : std::abs(div);
}

Trajectory integrate(const VectorFieldFn& field, int n, const Eigen::VectorXd& x0, double T,
                     const Box& domain, const IntegrateOptions& opt) {
  if (x0.size() != n) throw validation_error("DimensionMismatch", "x0 has the wrong dimension");
  if (!(opt.tol > 0.0)) throw validation_error("ValidationFailure", "tol must be positive");
  if (!(T >= 0.0)) throw validation_error("ValidationFailure", "T must be non-negative");
  if (!inside(domain, x0)) throw numerical_error("LeftDomain", "x0 lies outside the domain");
  for (std::size_t k = 0; k < opt.output_times.size(); ++k) {
    const double to = opt.output_times[k];
    if (to < 0.0 || to > T * (1.0 + 1e-12) || (k > 0 && to <= opt.output_times[k - 1])) {
      throw validation_error("ValidationFailure", "output times must increase within [0, T]");
    }
  }
  const Rhs f = wrap(field, n);
  Trajectory tr;
  const bool every_step = opt.output_times.empty();
  std::size_t next_out = 0;
  double t = 0.0;
  Eigen::VectorXd y = x0;
  Eigen::VectorXd k1 = f(y);
  if (every_step || (next_out < opt.output_times.size() && opt.output_times[0] == 0.0)) {
    tr.t.push_back(0.0);
    tr.x.push_back(y);
    if (!every_step) ++next_out;
  }
  double h = std::min(initial_step(y, k1, opt.tol), T > 0.0 ? T : 1.0);
  while (t < T) {
    if (tr.accepted + tr.rejected >= opt.max_steps) {
      throw numerical_error("StepUnderflow", "step budget exhausted before reaching T");
    }
    double target = T;
    if (!every_step && next_out < opt.output_times.size()) target = std::min(target, opt.output_times[next_out]);
    const bool clipped = t + h >= target;
    const double step = clipped ? target - t : h;
    if (step < opt.min_step && !clipped) {
      throw numerical_error("StepUnderflow", "step size fell below the minimum");
    }
    const StepResult r = dopri_step(f, y, k1, step);
    if (!r.y.allFinite()) throw numerical_error("NonFiniteState", "integration produced a non-finite state");
    const double err = error_norm(r, y, opt.tol);
    if (err <= 1.0) {
      t = clipped ? target : t + step;
      y = r.y;
      k1 = r.k7;
      ++tr.accepted;
      if (!inside(domain, y)) {
        std::ostringstream msg;
        msg << "trajectory left the domain at t = " << t;
        throw numerical_error("LeftDomain", msg.str());
      }
      if (every_step) {
        tr.t.push_back(t);
        tr.x.push_back(y);
      } else if (clipped && next_out < opt.output_times.size() && target == opt.output_times[next_out]) {
        tr.t.push_back(t);
        tr.x.push_back(y);
        ++next_out;
      }
      // A clipped step says nothing about the natural step size; keep h.
      if (!clipped) h = step * step_factor(err);
    } else {
      ++tr.rejected;
      h = step * std::max(0.2, 0.9 * std::pow(err, -0.2));
      if (h < opt.min_step) throw numerical_error("StepUnderflow", "step size fell below the minimum");
    }
  }
  return tr;
}

Trajectory integrate_conservative(const ConservativeSystem& sys, const Eigen::VectorXd& x0, double T,
                                  double tol) {
  IntegrateOptions opt;
  opt.tol = tol;
  return integrate(sys.j, sys.n, x0, T, sys.domain, opt);
}

std::string to_string(FixedPointClass c) {
  switch (c) {
    case FixedPointClass::Center:
      return "center";
    case FixedPointClass::Saddle:
      return "saddle";
    case FixedPointClass::Degenerate:
      return "degenerate";
  }
  return "degenerate";
}

FixedPointReport classify_fixed_point(const ConservativeSystem& sys, const Eigen::VectorXd& x,
                                      double fd_step) {
  const int n = sys.n;
  if (x.size() != n) throw validation_error("DimensionMismatch", "point has the wrong dimension");
  const double speed_tol = sys.exact ? 1e-8 : 1e-3;
  const Eigen::VectorXd v = sys.velocity(x);
  if (v.norm() > speed_tol) {
    std::ostringstream msg;
    msg << "|j(x)| = " << v.norm() << " exceeds " << speed_tol;
    throw numerical_error("NotAFixedPoint", msg.str());
  }
  const double d = fd_step > 0.0 ? fd_step : (sys.exact ? 1e-5 : sys.resolution);
  FixedPointReport rep;
  rep.location = x;
  rep.jacobian.resize(n, n);
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd e = d * Eigen::VectorXd::Unit(n, k);
    rep.jacobian.col(k) = (sys.velocity(x + e) - sys.velocity(x - e)) / (2.0 * d);
  }
  rep.trace = rep.jacobian.trace();
  rep.tolerance = sys.exact ? 1e-6 : 1e-3;
  const double norm = rep.jacobian.norm();
  rep.trace_ok = std::abs(rep.trace) <= rep.tolerance * std::max(norm, 1e-300);
  Eigen::EigenSolver<Eigen::MatrixXd> es(rep.jacobian, false);
  rep.eigenvalues = es.eigenvalues();

  const double tol = rep.tolerance;
  const double big = rep.eigenvalues.cwiseAbs().maxCoeff();
  bool any_zero = false, all_imag = true, all_real = true, pos = false, neg = false, same_sign_re = true;
  for (const auto& lam : rep.eigenvalues) {
    const double mag = std::abs(lam);
    if (mag <= tol * std::max(big, 1e-300) || big == 0.0) any_zero = true;
    if (std::abs(lam.real()) > tol * mag) all_imag = false;
    if (std::abs(lam.imag()) > tol * mag) all_real = false;
    if (lam.real() > 0.0) pos = true;
    if (lam.real() < 0.0) neg = true;
  }
  same_sign_re = !(pos && neg);
  if (any_zero) {
    rep.linear_type = "degenerate";
  } else if (all_imag) {
    rep.linear_type = "center";
  } else if (all_real && pos && neg) {
    rep.linear_type = "saddle";
  } else if (all_real && same_sign_re) {
    rep.linear_type = "node";
  } else if (same_sign_re) {
    rep.linear_type = "focus";
  } else {
    rep.linear_type = "degenerate";
  }
  if (rep.linear_type == "center") {
    rep.classification = FixedPointClass::Center;
  } else if (rep.linear_type == "saddle") {
    rep.classification = FixedPointClass::Saddle;
  } else {
    rep.classification = FixedPointClass::Degenerate;
  }
  return rep;
}

TimeChangeResult time_change_map(const ConservativeSystem& sys, const Eigen::VectorXd& x0, double T,
                                 double tol, int samples) {
  const int n = sys.n;
  if (!(T > 0.0)) throw validation_error("ValidationFailure", "T must be positive");
  if (samples < 1) throw validation_error("ValidationFailure", "samples must be >= 1");
  TimeChangeResult res;
  for (int k = 1; k <= samples; ++k) res.t.push_back(T * k / samples);

  IntegrateOptions copt;
  copt.tol = tol;
  copt.output_times = res.t;
  res.canonical = integrate(sys.j, n, x0, T, sys.domain, copt).x;

  // Augmented microcanonical state z = (xhat, t) advanced in tau.
  const Rhs F = [&sys, n](const Eigen::VectorXd& z) {
    const Eigen::VectorXd x = z.head(n);
    const double r = sys.rho(x);
    if (!(r > 0.0) || 1.0 / r > 1e8) {
      std::ostringstream msg;
      msg << "clock rate 1/rho = " << (r > 0.0 ? 1.0 / r : std::numeric_limits<double>::infinity())
          << " exceeds 1e8";
      throw numerical_error("ClockBlowup", msg.str());
    }
    Eigen::VectorXd out(n + 1);
    out.head(n) = r * sys.velocity(x);
    out[n] = r;
    return out;
  };
  Eigen::VectorXd z(n + 1);
  z.head(n) = x0;
  z[n] = 0.0;
  Eigen::VectorXd k1 = F(z);
  double tau = 0.0;
  double h = initial_step(z, k1, tol);
  std::size_t next = 0, budget = 0;
  while (next < res.t.size()) {
    if (++budget > 10'000'000) throw numerical_error("StepUnderflow", "step budget exhausted");
    const StepResult r = dopri_step(F, z, k1, h);
    // The clock is compared in absolute terms, so it gets no relative slack.
    const double err = error_norm(r, z, tol, n);
    if (err > 1.0) {
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      if (h < 1e-14) throw numerical_error("StepUnderflow", "step size fell below the minimum");
      continue;
    }
    // Locate every requested canonical time inside this step by Newton on
    // the step length, using dt/dtau = rho.
    while (next < res.t.size() && r.y[n] >= res.t[next]) {
      const double target = res.t[next];
      double sigma = h * (target - z[n]) / (r.y[n] - z[n]);
      Eigen::VectorXd zs = r.y;
      for (int it = 0; it < 20; ++it) {
        zs = dopri_step(F, z, k1, sigma).y;
        const double g = zs[n] - target;
        if (std::abs(g) <= 1e-15 * std::max(1.0, T)) break;
        sigma -= g / sys.rho(zs.head(n));
      }
      res.microcanonical.push_back(zs.head(n));
      res.tau.push_back(tau + sigma);
      ++next;
    }
    tau += h;
    z = r.y;
    k1 = r.k7;
    if (!inside(sys.domain, z.head(n))) throw numerical_error("LeftDomain", "microcanonical path left the domain");
    h *= step_factor(err);
  }
  for (std::size_t k = 0; k < res.t.size(); ++k) {
    res.max_deviation = std::max(res.max_deviation, (res.canonical[k] - res.microcanonical[k]).norm());
  }
  return res;
}

std::string to_string(Functional g) {
  switch (g) {
    case Functional::Log:
      return "ln";
    case Functional::Linear:
      return "s";
    case Functional::Square:
      return "s2";
    case Functional::Abs:
      return "abs";
    case Functional::SLogS:
      return "slns";
  }
  return "ln";
}

Functional functional_from_string(const std::string& s) {
  for (Functional g : {Functional::Log, Functional::Linear, Functional::Square, Functional::Abs,
                       Functional::SLogS}) {
    if (to_string(g) == s) return g;
  }
  throw validation_error("ValidationFailure", "unknown functional tag '" + s + "' (ln, s, s2, abs, slns)");
}

double functional_value(Functional g, const GridField& u, const GridField& rho) {
  require_same_grid(u.grid, rho.grid);
  double total = 0.0;
  for (Eigen::Index c = 0; c < u.values.size(); ++c) {
    const double uc = u.values[c];
    if (std::abs(uc) <= 1e-300) continue;
    const double s = uc / rho.values[c];
    double G = 0.0;
    switch (g) {
      case Functional::Log:
        G = std::log(s);
        break;
      case Functional::Linear:
        G = s;
        break;
      case Functional::Square:
        G = s * s;
        break;
      case Functional::Abs:
        G = std::abs(s);
        break;
      case Functional::SLogS:
        G = s * std::log(s);
        break;
    }
    total += uc * G;
  }
  return total * u.grid.cell_volume();
}

ConservationReport conservation_audit(const DiffusionModel& m, const Grid& coarse,
                                      const std::function<GridField(const Grid&)>& u0, double T,
                                      const std::vector<Functional>& tags, double cfl) {
  if (!(cfl > 0.0 && cfl <= 1.0)) throw validation_error("ValidationFailure", "cfl must lie in (0, 1]");
  ConservationReport rep;
  const Grid fine = coarse.refined(2);
  rep.h_coarse = coarse.spacing(0);
  rep.h_fine = fine.spacing(0);
  std::vector<double> drifts[2];
  const Grid* grids[2] = {&coarse, &fine};
  for (int level = 0; level < 2; ++level) {
    const fpegrid::DecompositionResult d = fpegrid::decompose_grid(m, *grids[level]);
    const GridField start = u0(*grids[level]);
    const double dt = cfl * fpegrid::max_explicit_step(d.La);
    const auto snaps = fpegrid::evolve(d.La, start, T, dt, fpegrid::Scheme::ExplicitUpwind,
                                       std::numeric_limits<int>::max());
    const GridField end(*grids[level], snaps.back().u);
    for (Functional g : tags) {
      drifts[level].push_back(std::abs(functional_value(g, end, d.rho) - functional_value(g, start, d.rho)));
    }
  }
  for (std::size_t k = 0; k < tags.size(); ++k) {
    ConservationEntry e{tags[k], drifts[0][k], drifts[1][k], 0.0};
    e.ratio = e.drift_coarse > 0.0 ? e.drift_fine / e.drift_coarse : 0.0;
    rep.entries.push_back(e);
  }
  return rep;
}

}  // namespace fpdecomp::consdyn
