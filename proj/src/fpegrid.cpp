#include "fpdecomp/fpegrid.hpp"

#include <Eigen/LU>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseLU>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

#include "fpdecomp/error.hpp"

namespace fpdecomp::fpegrid {

namespace {

using Triplet = Eigen::Triplet<double>;

// 5-point Gauss-Legendre on [0, 1]; exact for polynomials of degree 9.
constexpr std::array<double, 5> kGaussNodes = {
    0.5 - 0.4530899229693320, 0.5 - 0.2692346550528416, 0.5,
    0.5 + 0.2692346550528416, 0.5 + 0.4530899229693320};
constexpr std::array<double, 5> kGaussWeights = {0.1184634425280945, 0.2393143352496832,
                                                 0.2844444444444444, 0.2393143352496832,
                                                 0.1184634425280945};

double bernoulli(double z) {
  if (std::abs(z) < 1e-10) return 1.0 - 0.5 * z;
  return z / std::expm1(z);
}

// One-dimensional derivative stencil along `axis` at `cell`: central inside,
// first-order one-sided on boundary cells. Appends (cell, weight) pairs.
void derivative_stencil(const Grid& g, std::size_t cell, int axis,
                        std::vector<std::pair<std::size_t, double>>& out) {
  const int m = g.cells(axis);
  if (m < 2) return;
  const int k = g.coordinate(cell, axis);
  const std::size_t s = g.stride(axis);
  const double h = g.spacing(axis);
  if (k == 0) {
    out.emplace_back(cell + s, 1.0 / h);
    out.emplace_back(cell, -1.0 / h);
  } else if (k == m - 1) {
    out.emplace_back(cell, 1.0 / h);
    out.emplace_back(cell - s, -1.0 / h);
  } else {
    out.emplace_back(cell + s, 0.5 / h);
    out.emplace_back(cell - s, -0.5 / h);
  }
}

SparseMatrix build(std::size_t n, std::vector<Triplet>& t) {
  SparseMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

// Number of closed communicating classes of the jump graph c -> d (M(d,c) != 0).
std::size_t closed_classes(const SparseMatrix& M) {
  const auto n = static_cast<std::size_t>(M.cols());
  constexpr std::size_t kUnvisited = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> index(n, kUnvisited), low(n, 0), comp(n, kUnvisited);
  std::vector<char> on_stack(n, 0);
  std::vector<std::size_t> stack;
  std::size_t counter = 0, ncomp = 0;

  struct Frame {
    std::size_t v;
    SparseMatrix::InnerIterator it;
  };
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != kUnvisited) continue;
    std::vector<Frame> call;
    auto push = [&](std::size_t v) {
      index[v] = low[v] = counter++;
      stack.push_back(v);
      on_stack[v] = 1;
      call.push_back({v, SparseMatrix::InnerIterator(M, static_cast<Eigen::Index>(v))});
    };
    push(root);
    while (!call.empty()) {
      Frame& f = call.back();
      bool descended = false;
      for (; f.it; ++f.it) {
        const auto w = static_cast<std::size_t>(f.it.row());
        if (w == f.v || f.it.value() == 0.0) continue;
        if (index[w] == kUnvisited) {
          ++f.it;
          push(w);
          descended = true;
          break;
        }
        if (on_stack[w]) low[f.v] = std::min(low[f.v], index[w]);
      }
      if (descended) continue;
      const std::size_t v = f.v;
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] == index[v]) {
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = ncomp;
        } while (w != v);
        ++ncomp;
      }
    }
  }
  std::vector<char> leaks(ncomp, 0);
  for (Eigen::Index c = 0; c < M.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(M, c); it; ++it) {
      if (it.value() != 0.0 && comp[it.row()] != comp[c]) leaks[comp[c]] = 1;
    }
  }
  return static_cast<std::size_t>(std::count(leaks.begin(), leaks.end(), 0));
}

struct PinnedSolve {
  Eigen::VectorXd x;
  double growth = 0.0;  // estimate of ||M^-1|| from a short power iteration
};

PinnedSolve solve_pinned(const SparseMatrix& L, std::size_t r) {
  const Eigen::Index n = L.rows();
  const double diag = std::abs(L.coeff(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r)));
  const double s = diag > 0.0 ? diag : 1.0;
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(L.nonZeros()));
  for (Eigen::Index c = 0; c < L.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(L, c); it; ++it) {
      if (static_cast<std::size_t>(it.row()) != r) t.emplace_back(it.row(), it.col(), it.value());
    }
  }
  // Same sign as the other diagonal entries so the pinned matrix stays an M-matrix.
  t.emplace_back(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r), -s);
  SparseMatrix M(n, n);
  M.setFromTriplets(t.begin(), t.end());
  M.makeCompressed();

  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(M);
  lu.factorize(M);
  if (lu.info() != Eigen::Success) {
    throw numerical_error("NonUniqueNullspace", "pinned stationary system is singular");
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs[static_cast<Eigen::Index>(r)] = -s;
  PinnedSolve out;
  out.x = lu.solve(rhs);
  out.x += lu.solve(rhs - M * out.x);

  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  for (int k = 0; k < 8; ++k) {
    Eigen::VectorXd w = lu.solve(v);
    out.growth = w.norm();
    if (!(out.growth > 0.0) || !std::isfinite(out.growth)) break;
    v = w / out.growth;
  }
  return out;
}

// Adjusts s and a by rounding-level amounts until fl(s + a) == l.
std::pair<double, double> exact_pair(double l, double s, double a) {
  // a = l - s is exact whenever s and l are within a factor two (Sterbenz).
  for (int k = 0; k < 3; ++k) {
    a = l - s;
    if (s + a == l) return {s, a};
    s = l - a;
    if (s + a == l) return {s, a};
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  auto step = [&](double v, int k) {
    for (; k > 0; --k) v = std::nextafter(v, inf);
    for (; k < 0; ++k) v = std::nextafter(v, -inf);
    return v;
  };
  // Not always representable (|s|, |a| in a coarser binade than l); then keep
  // the closest pair seen.
  std::pair<double, double> best{s, a};
  double miss = std::abs((s + a) - l);
  for (int r = 1; r <= 4; ++r) {
    for (int da = -r; da <= r; ++da) {
      for (int ds = -r; ds <= r; ++ds) {
        const double s2 = step(s, ds), a2 = step(a, da);
        if (s2 + a2 == l) return {s2, a2};
        if (std::abs((s2 + a2) - l) < miss) {
          miss = std::abs((s2 + a2) - l);
          best = {s2, a2};
        }
      }
    }
  }
  return best;
}

}  // namespace

double DiscreteOperator::max_abs_column_sum() const {
  double worst = 0.0;
  for (Eigen::Index c = 0; c < matrix.outerSize(); ++c) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(matrix, c); it; ++it) s += it.value();
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

double DiscreteOperator::max_abs_entry() const {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < matrix.nonZeros(); ++k) {
    worst = std::max(worst, std::abs(matrix.valuePtr()[k]));
  }
  return worst;
}

double SampledModel::max_peclet() const {
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < grid.size(); ++c) {
      if (has_upper_face(c, i)) worst = std::max(worst, std::abs(face_P[i][c]));
    }
  }
  return worst;
}

SampledModel sample_model(const DiffusionModel& m, const Grid& g) {
  const int n = m.dimension();
  if (g.dimension() != n) {
    throw validation_error("DimensionMismatch", "grid dimension differs from model dimension");
  }
  const std::size_t N = g.size();
  SampledModel s{g, n, Eigen::MatrixXd(N, n), Eigen::MatrixXd(N, n * n), Eigen::MatrixXd(N, n * n),
                 {}, {}};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd bx(n), ax(n * n);
  for (std::size_t c = 0; c < N; ++c) {
    const Eigen::VectorXd x = g.center(c);
    m.drift(as_span(x), as_span(bx));
    m.diffusion(as_span(x), as_span(ax));
    s.b.row(c) = bx.transpose();
    s.A.row(c) = ax.transpose();
    const Eigen::Map<const Eigen::MatrixXd> a(ax.data(), n, n);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (lu.isInvertible() && lu.rcond() > 1e-14) {
      const Eigen::MatrixXd inv = lu.inverse();
      s.A_inv.row(c) = Eigen::Map<const Eigen::VectorXd>(inv.data(), n * n).transpose();
    } else {
      s.A_inv.row(c).setConstant(nan);
    }
  }
  s.face_P.assign(n, Eigen::VectorXd::Zero(N));
  s.face_A.assign(n, Eigen::MatrixXd::Zero(N, n * n));
  for (int i = 0; i < n; ++i) {
    const double h = g.spacing(i);
    for (std::size_t c = 0; c < N; ++c) {
      if (!s.has_upper_face(c, i)) continue;
      Eigen::VectorXd x = g.center(c);
      const double x0 = x[i];
      double P = 0.0;
      for (std::size_t q = 0; q < kGaussNodes.size(); ++q) {
        x[i] = x0 + kGaussNodes[q] * h;
        m.drift(as_span(x), as_span(bx));
        m.diffusion(as_span(x), as_span(ax));
        P += kGaussWeights[q] * bx[i] / ax[i + i * n];
      }
      s.face_P[i][c] = P * h;
      x[i] = x0 + 0.5 * h;
      m.diffusion(as_span(x), as_span(ax));
      s.face_A[i].row(c) = ax.transpose();
      if (!std::isfinite(s.face_P[i][c])) {
        throw numerical_error("EvalError", "non-finite drift/diffusion ratio on a cell face");
      }
    }
  }
  return s;
}

DiscreteOperator assemble_generator(const SampledModel& s, const DiscretizationOptions& opt,
                                    std::vector<std::string>* warnings) {
  const Grid& g = s.grid;
  const int n = s.n;
  const double pe = s.max_peclet();
  if (pe > opt.peclet_max) {
    std::ostringstream msg;
    msg << "cell Peclet number " << pe << " exceeds " << opt.peclet_max << "; refine the grid";
    throw numerical_error("GridTooCoarse", msg.str());
  }
  if (pe > opt.peclet_warn && warnings) {
    std::ostringstream msg;
    msg << "cell Peclet number " << pe << " exceeds " << opt.peclet_warn;
    warnings->push_back(msg.str());
  }

  std::vector<Triplet> t;
  t.reserve(g.size() * static_cast<std::size_t>(4 * n + 1));
  std::vector<std::pair<std::size_t, double>> flux;  // face flux as a combination of cells
  std::vector<std::pair<std::size_t, double>> stencil;
  for (int i = 0; i < n; ++i) {
    const double h = g.spacing(i);
    const std::size_t stride = g.stride(i);
    for (std::size_t lo = 0; lo < g.size(); ++lo) {
      if (!s.has_upper_face(lo, i)) continue;
      const std::size_t hi = lo + stride;
      const double D = s.face_A[i](lo, i + i * n);
      const double P = s.face_P[i][lo];
      flux.clear();
      flux.emplace_back(lo, D / h * bernoulli(-P));
      flux.emplace_back(hi, -D / h * bernoulli(P));
      for (int k = 0; k < n; ++k) {
        if (k == i) continue;
        const double Aik = s.face_A[i](lo, i + k * n);
        if (Aik == 0.0) continue;
        stencil.clear();
        derivative_stencil(g, lo, k, stencil);
        derivative_stencil(g, hi, k, stencil);
        for (const auto& [cell, w] : stencil) flux.emplace_back(cell, -0.5 * Aik * w);
      }
      for (const auto& [cell, w] : flux) {
        t.emplace_back(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(cell), -w / h);
        t.emplace_back(static_cast<Eigen::Index>(hi), static_cast<Eigen::Index>(cell), w / h);
      }
    }
  }
  DiscreteOperator op{g, build(g.size(), t), OperatorKind::Full, std::nullopt};
  return op;
}

DiscreteOperator discretize_generator(const DiffusionModel& m, const Grid& g,
                                      const DiscretizationOptions& opt,
                                      std::vector<std::string>* warnings) {
  return assemble_generator(sample_model(m, g), opt, warnings);
}

double stationary_residual(const DiscreteOperator& L, const Eigen::VectorXd& rho) {
  const double scale = L.max_abs_entry() * rho.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return (L.matrix * rho).cwiseAbs().maxCoeff() / scale;
}

GridField stationary_density(const DiscreteOperator& L) {
  const Grid& g = L.grid;
  const std::size_t N = g.size();
  if (N == 1) return uniform_density(g);
  if (closed_classes(L.matrix) != 1) {
    throw numerical_error("NonUniqueNullspace", "generator has more than one closed class");
  }
  std::size_t pin = N / 2;
  PinnedSolve sol = solve_pinned(L.matrix, pin);
  Eigen::Index top = 0;
  double peak = sol.x.maxCoeff(&top);
  if (std::isfinite(peak) && sol.x[static_cast<Eigen::Index>(pin)] < 1e-6 * peak) {
    // The pinned cell sits in a tail; re-pin at the mode for better scaling.
    pin = static_cast<std::size_t>(top);
    sol = solve_pinned(L.matrix, pin);
    peak = sol.x.maxCoeff();
  }
  if (!sol.x.allFinite() || !(peak > 0.0)) {
    throw numerical_error("NonUniqueNullspace", "stationary solve produced no usable null vector");
  }
  const double gap = 1.0 / sol.growth;
  if (gap < 1e-8 * L.max_abs_entry()) {
    std::ostringstream msg;
    msg << "second-smallest singular value estimate " << gap << " is below 1e-8 of the operator norm";
    throw numerical_error("NonUniqueNullspace", msg.str());
  }
  const double lowest = sol.x.minCoeff();
  if (lowest < -1e-12 * peak) {
    std::ostringstream msg;
    msg << "null vector has mixed signs (min/max = " << lowest / peak << ")";
    throw numerical_error("NegativeDensity", msg.str());
  }
  Eigen::VectorXd rho = sol.x.cwiseMax(0.0);
  rho /= rho.sum() * g.cell_volume();
  const double res = stationary_residual(L, rho);
  if (res > 1e-10) {
    std::ostringstream msg;
    msg << "stationary residual " << res << " exceeds 1e-10";
    throw numerical_error("NonUniqueNullspace", msg.str());
  }
  return GridField(g, std::move(rho));
}

OperatorSplit split_operators(const DiscreteOperator& L, const GridField& rho) {
  require_same_grid(L.grid, rho.grid);
  const Eigen::VectorXd& r = rho.values;
  if (!(r.minCoeff() > 0.0)) {
    throw numerical_error("ZeroDensityCell", "stationary density has a non-positive cell");
  }
  const Eigen::VectorXd r_inv = r.cwiseInverse();
  const SparseMatrix Lt = L.matrix.transpose();
  SparseMatrix Ldag = r.asDiagonal() * Lt * r_inv.asDiagonal();
  // Columns of Ldag sum to zero exactly: replace the diagonal.
  for (Eigen::Index c = 0; c < Ldag.outerSize(); ++c) {
    double off = 0.0;
    for (SparseMatrix::InnerIterator it(Ldag, c); it; ++it) {
      if (it.row() != c) off += it.value();
    }
    Ldag.coeffRef(c, c) = -off;
  }
  const SparseMatrix pattern = L.matrix + Ldag;
  std::vector<Triplet> ts, ta;
  ts.reserve(static_cast<std::size_t>(pattern.nonZeros()));
  ta.reserve(static_cast<std::size_t>(pattern.nonZeros()));
  for (Eigen::Index c = 0; c < pattern.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(pattern, c); it; ++it) {
      const double l = L.matrix.coeff(it.row(), c);
      const double ld = Ldag.coeff(it.row(), c);
      double la = 0.5 * (l - ld);
      double ls = l - la;
      if (ls + la != l) std::tie(ls, la) = exact_pair(l, ls, la);
      ts.emplace_back(it.row(), c, ls);
      ta.emplace_back(it.row(), c, la);
    }
  }
  const std::size_t N = L.grid.size();
  OperatorSplit out{
      DiscreteOperator{L.grid, build(N, ts), OperatorKind::Symmetric, r},
      DiscreteOperator{L.grid, build(N, ta), OperatorKind::Antisymmetric, r},
  };
  return out;
}

double weighted_inner(const Eigen::VectorXd& phi, const Eigen::VectorXd& psi, const GridField& rho) {
  return (phi.array() * psi.array() / rho.values.array()).sum() * rho.grid.cell_volume();
}

double symmetry_defect(const SparseMatrix& M, const Eigen::VectorXd& rho, bool anti) {
  const SparseMatrix DM = rho.cwiseInverse().asDiagonal() * M;
  const SparseMatrix DMt = DM.transpose();
  const SparseMatrix diff = anti ? SparseMatrix(DM + DMt) : SparseMatrix(DM - DMt);
  double num = 0.0, den = 0.0;
  for (Eigen::Index k = 0; k < diff.nonZeros(); ++k) num = std::max(num, std::abs(diff.valuePtr()[k]));
  for (Eigen::Index k = 0; k < DM.nonZeros(); ++k) den = std::max(den, std::abs(DM.valuePtr()[k]));
  return den > 0.0 ? num / den : 0.0;
}

Eigen::MatrixXd grad_log(const Grid& g, const Eigen::VectorXd& v) {
  const int n = g.dimension();
  const Eigen::VectorXd lv = v.array().log().matrix();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.size()), n);
  for (int i = 0; i < n; ++i) {
    const int m = g.cells(i);
    if (m < 2) continue;
    const std::size_t s = g.stride(i);
    const double h = g.spacing(i);
    for (std::size_t c = 0; c < g.size(); ++c) {
      const int k = g.coordinate(c, i);
      double d;
      if (k > 0 && k < m - 1) {
        d = (lv[c + s] - lv[c - s]) / (2.0 * h);
      } else if (m == 2) {
        d = k == 0 ? (lv[c + s] - lv[c]) / h : (lv[c] - lv[c - s]) / h;
      } else if (k == 0) {
        d = (-3.0 * lv[c] + 4.0 * lv[c + s] - lv[c + 2 * s]) / (2.0 * h);
      } else {
        d = (3.0 * lv[c] - 4.0 * lv[c - s] + lv[c - 2 * s]) / (2.0 * h);
      }
      out(c, i) = d;
    }
  }
  return out;
}

CirculationResult circulation_field(const DiffusionModel& m, const GridField& rho) {
  const Grid& g = rho.grid;
  const int n = m.dimension();
  if (g.dimension() != n) throw validation_error("DimensionMismatch", "grid and model dimensions differ");
  if (!(rho.values.minCoeff() > 0.0)) {
    throw numerical_error("ZeroDensityCell", "circulation needs a strictly positive density");
  }
  const std::size_t N = g.size();
  const Eigen::MatrixXd gl = grad_log(g, rho.values);
  Eigen::MatrixXd j(N, n);
  Eigen::VectorXd bx(n), ax(n * n);
  for (std::size_t c = 0; c < N; ++c) {
    const Eigen::VectorXd x = g.center(c);
    m.drift(as_span(x), as_span(bx));
    m.diffusion(as_span(x), as_span(ax));
    const Eigen::Map<const Eigen::MatrixXd> a(ax.data(), n, n);
    j.row(c) = (bx - a * gl.row(c).transpose()).transpose();
  }
  Eigen::VectorXd div = Eigen::VectorXd::Zero(N);
  for (int i = 0; i < n; ++i) {
    const int mi = g.cells(i);
    const std::size_t s = g.stride(i);
    const double h = g.spacing(i);
    auto q = [&](std::size_t c) { return rho.values[c] * j(c, i); };
    for (std::size_t c = 0; c < N; ++c) {
      const int k = g.coordinate(c, i);
      double upper, lower;
      if (mi == 1) {
        upper = lower = q(c);
      } else {
        upper = k + 1 < mi ? 0.5 * (q(c) + q(c + s)) : 1.5 * q(c) - 0.5 * q(c - s);
        lower = k > 0 ? 0.5 * (q(c) + q(c - s)) : 1.5 * q(c) - 0.5 * q(c + s);
      }
      div[c] += (upper - lower) / h;
    }
  }
  CirculationResult out{GridVectorField(g, std::move(j)), GridField(g, div), 0.0};
  out.divergence_l1 = out.divergence.values.cwiseAbs().sum() * g.cell_volume();
  return out;
}

SparseMatrix upwind_generator(const DiscreteOperator& La) {
  if (La.kind != OperatorKind::Antisymmetric || !La.reference) {
    throw validation_error("ValidationFailure", "upwind transport needs an antisymmetric split part");
  }
  const auto N = static_cast<std::size_t>(La.matrix.rows());
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(La.matrix.nonZeros()));
  // Net stationary flux c -> d is La(d,c) rho_c; move it with the upwind value u_c / rho_c.
  for (Eigen::Index c = 0; c < La.matrix.outerSize(); ++c) {
    double out = 0.0;
    for (SparseMatrix::InnerIterator it(La.matrix, c); it; ++it) {
      if (it.row() == c || it.value() <= 0.0) continue;
      t.emplace_back(it.row(), c, 2.0 * it.value());
      out += 2.0 * it.value();
    }
    t.emplace_back(c, c, -out);
  }
  return build(N, t);
}

namespace {

const SparseMatrix& explicit_matrix(const DiscreteOperator& op, SparseMatrix& storage) {
  if (op.kind == OperatorKind::Antisymmetric) {
    storage = upwind_generator(op);
    return storage;
  }
  return op.matrix;
}

double max_diagonal(const SparseMatrix& M) {
  double worst = 0.0;
  for (Eigen::Index c = 0; c < M.outerSize(); ++c) worst = std::max(worst, std::abs(M.coeff(c, c)));
  return worst;
}

}  // namespace

double max_explicit_step(const DiscreteOperator& op) {
  SparseMatrix storage;
  const double d = max_diagonal(explicit_matrix(op, storage));
  return d > 0.0 ? 0.9 / d : std::numeric_limits<double>::infinity();
}

std::vector<Snapshot> evolve(const DiscreteOperator& op, const GridField& u0, double T, double dt,
                             Scheme scheme, int snapshot_every) {
  require_same_grid(op.grid, u0.grid);
  if (!(dt > 0.0) || !std::isfinite(dt)) throw validation_error("ValidationFailure", "dt must be positive");
  if (!(T >= 0.0) || !std::isfinite(T)) throw validation_error("ValidationFailure", "T must be non-negative");
  if (snapshot_every < 1) throw validation_error("ValidationFailure", "snapshot interval must be >= 1");
  if (!u0.values.allFinite()) throw numerical_error("NonFiniteState", "initial state is not finite");

  std::vector<Snapshot> out;
  out.push_back({0.0, u0.values});
  if (T == 0.0) return out;
  const auto steps = static_cast<long>(std::max(1.0, std::ceil(T / dt - 1e-9)));
  const double h = T / static_cast<double>(steps);
  const auto N = static_cast<Eigen::Index>(op.grid.size());

  Eigen::VectorXd u = u0.values;
  auto record = [&](long k) {
    if (!u.allFinite()) {
      throw numerical_error("NonFiniteState", "state became non-finite at step " + std::to_string(k));
    }
    if (k % snapshot_every == 0 || k == steps) out.push_back({T * static_cast<double>(k) / steps, u});
  };

  if (scheme == Scheme::Implicit) {
    SparseMatrix I(N, N);
    I.setIdentity();
    const SparseMatrix M = I - h * op.matrix;
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
    lu.analyzePattern(M);
    lu.factorize(M);
    if (lu.info() != Eigen::Success) {
      throw numerical_error("SingularSystem", "implicit Euler matrix could not be factorised");
    }
    for (long k = 1; k <= steps; ++k) {
      u = lu.solve(u);
      record(k);
    }
  } else {
    SparseMatrix storage;
    const SparseMatrix& G = explicit_matrix(op, storage);
    const double cfl = h * max_diagonal(G);
    if (cfl > 0.9) {
      std::ostringstream msg;
      msg << "CFL number " << cfl << " exceeds 0.9; use dt <= " << 0.9 / max_diagonal(G);
      throw validation_error("CFLViolation", msg.str());
    }
    Eigen::VectorXd stage(N);
    for (long k = 1; k <= steps; ++k) {
      stage = u + h * (G * u);
      u = 0.5 * u + 0.5 * (stage + h * (G * stage));
      record(k);
    }
  }
  return out;
}

DecompositionResult decompose_grid(const DiffusionModel& m, const Grid& g) {
  std::vector<std::string> warnings;
  const SampledModel s = sample_model(m, g);
  DiscreteOperator L = assemble_generator(s, {}, &warnings);
  GridField rho = stationary_density(L);
  OperatorSplit split = split_operators(L, rho);
  CirculationResult circ = circulation_field(m, rho);
  return DecompositionResult{std::move(rho),       std::move(circ),
                             std::move(L),         std::move(split.symmetric),
                             std::move(split.antisymmetric), s.max_peclet(),
                             std::move(warnings)};
}

std::vector<QuasiPotentialLevel> quasi_potential(const DiffusionModel& m, const Grid& g,
                                                 const std::vector<double>& eps_list) {
  if (eps_list.empty()) throw validation_error("ValidationFailure", "eps list is empty");
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    if (!(eps_list[k] > 0.0)) throw validation_error("ValidationFailure", "eps values must be positive");
    if (k > 0 && !(eps_list[k] < eps_list[k - 1])) {
      throw validation_error("ValidationFailure", "eps values must be strictly decreasing");
    }
  }
  const int n = m.dimension();
  std::vector<QuasiPotentialLevel> out;
  for (double eps : eps_list) {
    QuasiPotentialLevel level;
    level.eps = eps;
    try {
      const Eigen::MatrixXd A = eps * Eigen::MatrixXd::Identity(n, n);
      const DiffusionModel me = m.with_diffusion(MatrixField::constant_matrix(A));
      GridField rho = stationary_density(discretize_generator(me, g));
      Eigen::VectorXd U = (-eps) * rho.values.cwiseMax(1e-300).array().log().matrix();
      U.array() -= U.minCoeff();
      level.U = GridField(g, std::move(U));
      level.rho = std::move(rho);
      level.usable = true;
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::Numerical) throw;
      level.failure = e.kind();
    }
    out.push_back(std::move(level));
  }
  return out;
}

}  // namespace fpdecomp::fpegrid
