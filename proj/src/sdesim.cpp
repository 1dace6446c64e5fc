#include "fpdecomp/sdesim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "fpdecomp/error.hpp"
#include "fpdecomp/fpegrid.hpp"

namespace fpdecomp::sdesim {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

// Uniform in (0, 1] from 53 bits.
double unit_open_closed(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

Eigen::MatrixXd eval_matrix(const MatrixFieldFn& f, int n, std::span<const double> x) {
  Eigen::MatrixXd M(n, n);
  f(x, std::span<double>(M.data(), static_cast<std::size_t>(n * n)));
  return M;
}

Box inflate(const Box& b, double fraction) {
  Box out = b;
  for (Interval& iv : out) {
    const double pad = fraction * iv.width();
    iv.lo -= pad;
    iv.hi += pad;
  }
  return out;
}

// Row-wise divergence sum_j d_j F_ij of a matrix field by central differences.
Eigen::VectorXd row_divergence(const MatrixFieldFn& F, int n, const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd div = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd xp = x, xm = x;
  for (int j = 0; j < n; ++j) {
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    const Eigen::MatrixXd d = (eval_matrix(F, n, as_span(xp)) - eval_matrix(F, n, as_span(xm))) / (2.0 * h);
    div += d.col(j);
    xp[j] = xm[j] = x[j];
  }
  return div;
}

std::vector<std::size_t> surviving_rows(const Eigen::MatrixXd& P) {
  std::vector<std::size_t> rows;
  for (Eigen::Index k = 0; k < P.rows(); ++k) {
    if (P.row(k).allFinite()) rows.push_back(static_cast<std::size_t>(k));
  }
  return rows;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

NormalStream::NormalStream(std::uint64_t seed, std::uint64_t path)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, path_(path) {}

double NormalStream::operator()(std::uint64_t q) {
  const std::uint64_t block = q >> 1;
  if (block != cached_block_) {
    const auto r = philox4x32_10({static_cast<std::uint32_t>(path_), static_cast<std::uint32_t>(path_ >> 32),
                                  static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32)},
                                 key_);
    const double u1 = unit_open_closed(r[0], r[1]);
    const double u2 = unit_open_closed(r[2], r[3]);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    cached_[0] = rad * std::cos(ang);
    cached_[1] = rad * std::sin(ang);
    cached_block_ = block;
  }
  return cached_[q & 1];
}

ItoSystem ito_system(const DiffusionModel& m, double fd_step) {
  ItoSystem sys;
  sys.n = m.dimension();
  sys.domain = m.domain();
  sys.name = m.name();
  sys.noise_constant = m.noise_is_constant();
  const int n = sys.n;
  sys.noise = [m](std::span<const double> x, std::span<double> out) {
    const Eigen::MatrixXd G = m.noise_factor(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
    std::copy(G.data(), G.data() + G.size(), out.begin());
  };
  if (m.diffusion_is_constant()) {
    sys.drift = [m](std::span<const double> x, std::span<double> out) { m.drift(x, out); };
  } else {
    sys.drift = [m, n, fd_step](std::span<const double> x, std::span<double> out) {
      m.drift(x, out);
      const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
      const Eigen::VectorXd div = row_divergence(
          [&m](std::span<const double> p, std::span<double> o) { m.diffusion(p, o); }, n, xv, fd_step);
      for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] += div[i];
    };
  }
  return sys;
}

std::size_t PathEnsemble::killed_count() const {
  return static_cast<std::size_t>(std::count(killed.begin(), killed.end(), char{1}));
}

std::size_t PathEnsemble::record_index(double t) const {
  for (std::size_t r = 0; r < times.size(); ++r) {
    if (std::abs(times[r] - t) <= 1e-9 * std::max(1.0, T)) return r;
  }
  std::ostringstream msg;
  msg << "time " << t << " was not recorded (record_every controls snapshot times)";
  throw validation_error("ValidationFailure", msg.str());
}

PathEnsemble simulate(const ItoSystem& sys, const Eigen::VectorXd& x0, double dt, double T, std::size_t K,
                      std::uint64_t seed, const SimulateOptions& opt) {
  const int n = sys.n;
  if (x0.size() != n) throw validation_error("DimensionMismatch", "x0 has the wrong dimension");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw validation_error("ValidationFailure", "dt must be positive");
  if (!(T >= 0.0) || !std::isfinite(T)) throw validation_error("ValidationFailure", "T must be non-negative");
  if (K < 1) throw validation_error("ValidationFailure", "at least one path is required");
  const Box kill = opt.kill_box ? *opt.kill_box : inflate(sys.domain, 0.5);
  if (static_cast<int>(kill.size()) != n) throw validation_error("DimensionMismatch", "kill box dimension");

  PathEnsemble pe;
  pe.seed = seed;
  pe.model = sys.name;
  pe.n = n;
  pe.dt = dt;
  pe.T = T;
  pe.steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  std::vector<std::size_t> record_steps{0};
  if (opt.record_every > 0) {
    for (std::size_t s = opt.record_every; s < pe.steps; s += opt.record_every) record_steps.push_back(s);
  }
  if (pe.steps > 0) record_steps.push_back(pe.steps);
  for (std::size_t s : record_steps) {
    pe.times.push_back(s == pe.steps ? T : static_cast<double>(s) * dt);
    pe.positions.emplace_back(static_cast<Eigen::Index>(K), n);
  }
  pe.killed.assign(K, 0);
  pe.kill_time.assign(K, std::numeric_limits<double>::quiet_NaN());

  Eigen::MatrixXd G(n, n);
  if (sys.noise_constant) sys.noise(as_span(x0), std::span<double>(G.data(), static_cast<std::size_t>(n * n)));
  Eigen::VectorXd x(n), b(n), xi(n);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t k = 0; k < K; ++k) {
    NormalStream normal(seed, k);
    x = x0;
    std::size_t next_record = 0;
    auto record = [&](std::size_t s) {
      while (next_record < record_steps.size() && record_steps[next_record] == s) {
        pe.positions[next_record].row(static_cast<Eigen::Index>(k)) = x.transpose();
        ++next_record;
      }
    };
    record(0);
    for (std::size_t s = 0; s < pe.steps; ++s) {
      const double h = (s + 1 == pe.steps) ? T - static_cast<double>(s) * dt : dt;
      sys.drift(as_span(x), as_span(b));
      if (!sys.noise_constant) sys.noise(as_span(x), std::span<double>(G.data(), static_cast<std::size_t>(n * n)));
      for (int i = 0; i < n; ++i) xi[i] = normal(static_cast<std::uint64_t>(s) * n + i);
      const double sh = std::sqrt(h);
      for (int i = 0; i < n; ++i) {
        double noise = 0.0;
        for (int j = 0; j < n; ++j) noise += G(i, j) * xi[j];
        x[i] += h * b[i] + sh * noise;
      }
      if (!x.allFinite()) {
        std::ostringstream msg;
        msg << "path " << k << " became non-finite at step " << s + 1;
        throw numerical_error("NonFiniteState", msg.str());
      }
      bool out = false;
      for (int i = 0; i < n; ++i) out = out || !kill[i].contains(x[i]);
      if (out) {
        pe.killed[k] = 1;
        pe.kill_time[k] = static_cast<double>(s) * dt + h;
        for (std::size_t r = next_record; r < record_steps.size(); ++r) {
          pe.positions[r].row(static_cast<Eigen::Index>(k)).setConstant(nan);
        }
        break;
      }
      record(s + 1);
    }
  }
  return pe;
}

PathEnsemble simulate(const DiffusionModel& m, const Eigen::VectorXd& x0, double dt, double T, std::size_t K,
                      std::uint64_t seed, const SimulateOptions& opt) {
  return simulate(ito_system(m), x0, dt, T, K, seed, opt);
}

DriftForms drift_forms(const DiffusionModel& m, GradLogFn grad_log_rho, double fd_step) {
  const int n = m.dimension();
  auto base = [m, grad_log_rho, n](std::span<const double> x, std::span<double> out) {
    const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
    const Eigen::VectorXd v = m.diffusion(xv) * grad_log_rho(xv);
    std::copy(v.data(), v.data() + n, out.begin());
  };
  DriftForms f;
  f.divergence = base;
  if (m.diffusion_is_constant()) {
    f.ito = base;
  } else {
    f.ito = [m, base, n, fd_step](std::span<const double> x, std::span<double> out) {
      base(x, out);
      const Eigen::VectorXd div = row_divergence(
          [&m](std::span<const double> p, std::span<double> o) { m.diffusion(p, o); }, n,
          Eigen::Map<const Eigen::VectorXd>(x.data(), n), fd_step);
      for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] += div[i];
    };
  }
  if (m.noise_is_constant()) {
    f.stratonovich = base;
  } else {
    f.stratonovich = [m, base, n, fd_step](std::span<const double> x, std::span<double> out) {
      base(x, out);
      const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
      const Eigen::MatrixXd G = m.noise_factor(xv);
      // c_k = sum_j d_j Gamma_jk
      Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd xp = xv, xm = xv;
      for (int j = 0; j < n; ++j) {
        xp[j] = xv[j] + fd_step;
        xm[j] = xv[j] - fd_step;
        c += ((m.noise_factor(xp) - m.noise_factor(xm)).row(j) / (2.0 * fd_step)).transpose();
        xp[j] = xm[j] = xv[j];
      }
      const Eigen::VectorXd corr = 0.5 * G * c;
      for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] += corr[i];
    };
  }
  return f;
}

GradLogFn grid_grad_log(const GridField& rho) {
  const Grid g = rho.grid;
  const Eigen::MatrixXd grad = fpegrid::grad_log(g, rho.values);
  return [g, grad](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const auto c = g.locate(x);
    if (!c) throw numerical_error("LeftDomain", "point lies outside the density grid");
    return grad.row(static_cast<Eigen::Index>(*c)).transpose();
  };
}

Eigen::MatrixXd evaluate(const VectorFieldFn& f, int n, const std::vector<Eigen::VectorXd>& points) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(points.size()), n);
  Eigen::VectorXd v(n);
  for (std::size_t k = 0; k < points.size(); ++k) {
    f(as_span(points[k]), as_span(v));
    out.row(static_cast<Eigen::Index>(k)) = v.transpose();
  }
  return out;
}

GridField ensemble_density(const PathEnsemble& pe, const Grid& g, double t) {
  if (g.dimension() != pe.n) throw validation_error("DimensionMismatch", "grid and ensemble dimensions differ");
  const Eigen::MatrixXd& P = pe.positions[pe.record_index(t)];
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()));
  std::size_t inside = 0;
  for (std::size_t k : surviving_rows(P)) {
    const Eigen::VectorXd x = P.row(static_cast<Eigen::Index>(k)).transpose();
    const auto c = g.locate(x);
    if (!c) continue;
    counts[static_cast<Eigen::Index>(*c)] += 1.0;
    ++inside;
  }
  if (inside > 0) counts /= static_cast<double>(inside) * g.cell_volume();
  return GridField(g, counts);
}

Eigen::VectorXd sample_mean(const PathEnsemble& pe, double t) {
  const Eigen::MatrixXd& P = pe.positions[pe.record_index(t)];
  const auto rows = surviving_rows(P);
  if (rows.empty()) throw numerical_error("NoSurvivors", "every path was stopped before this time");
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(pe.n);
  for (std::size_t k : rows) mu += P.row(static_cast<Eigen::Index>(k)).transpose();
  return mu / static_cast<double>(rows.size());
}

Eigen::MatrixXd sample_covariance(const PathEnsemble& pe, double t) {
  const Eigen::MatrixXd& P = pe.positions[pe.record_index(t)];
  const auto rows = surviving_rows(P);
  if (rows.size() < 2) throw numerical_error("NoSurvivors", "covariance needs two surviving paths");
  const Eigen::VectorXd mu = sample_mean(pe, t);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(pe.n, pe.n);
  for (std::size_t k : rows) {
    const Eigen::VectorXd d = P.row(static_cast<Eigen::Index>(k)).transpose() - mu;
    C += d * d.transpose();
  }
  return C / static_cast<double>(rows.size() - 1);
}

double tv_distance(const GridField& p, const GridField& q) {
  require_same_grid(p.grid, q.grid);
  return 0.5 * (p.values - q.values).cwiseAbs().sum() * p.grid.cell_volume();
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw validation_error("ValidationFailure", "KS needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_critical(std::size_t n, std::size_t m, double alpha) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  return c * std::sqrt((nn + mm) / (nn * mm));
}

}  // namespace fpdecomp::sdesim
