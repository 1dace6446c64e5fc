#include "fpdecomp/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <optional>
#include <sstream>

#include "fpdecomp/consdyn.hpp"
#include "fpdecomp/error.hpp"
#include "fpdecomp/fpegrid.hpp"
#include "fpdecomp/lindecomp.hpp"
#include "fpdecomp/model.hpp"
#include "fpdecomp/sdesim.hpp"
#include "fpdecomp/thermo.hpp"

#ifndef FPDECOMP_VERSION
#define FPDECOMP_VERSION "0.0.0"
#endif

namespace fpdecomp::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

struct Options {
  std::string model;
  std::string grid;
  bool linear = false;
  std::string x0;
  double T = kUnset;
  double dt = kUnset;
  long long paths = 1000;
  unsigned long long seed = 0;
  std::string u0;
  std::string eps;
  std::string out = "out";
  double tol = kUnset;
  std::string at;
  double density_at = kUnset;
  std::string op = "full";
  std::string functionals = "ln,s,s2,abs";
  int every = 1;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

json matrix_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) { row_strings(header); }

  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) text_ += ',';
      text_ += fmt(values[i]);
    }
    text_ += '\n';
  }
  void row_strings(const std::vector<std::string>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) text_ += ',';
      text_ += values[i];
    }
    text_ += '\n';
  }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

class Run {
 public:
  Run(std::string subcommand, const Options& opt, const std::vector<std::string>& args)
      : start_(std::chrono::steady_clock::now()), dir_(opt.out) {
    manifest_["tool"] = "fpdecomp";
    manifest_["subcommand"] = std::move(subcommand);
    manifest_["arguments"] = args;
    manifest_["versions"] = {{"fpdecomp", FPDECOMP_VERSION},
                             {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                           std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                           std::to_string(EIGEN_MINOR_VERSION)},
                             {"compiler", __VERSION__}};
    manifest_["inputs"] = json::object();
    manifest_["tolerances"] = json::object();
    manifest_["outputs"] = json::array();
  }

  json& manifest() { return manifest_; }

  void write(const std::string& name, const std::string& contents) {
    fs::create_directories(dir_);
    const fs::path p = dir_ / name;
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw validation_error("IOError", "cannot write " + p.string());
    f << contents;
    if (!f) throw validation_error("IOError", "failed writing " + p.string());
    manifest_["outputs"].push_back(name);
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
  void write_csv(const std::string& name, const Csv& c) { write(name, c.text()); }

  void finish(const std::string& status, const json& error = nullptr) {
    manifest_["status"] = status;
    if (!error.is_null()) manifest_["error"] = error;
    manifest_["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    fs::create_directories(dir_);
    std::ofstream f(dir_ / "manifest.json", std::ios::binary | std::ios::trunc);
    f << manifest_.dump(2) << "\n";
  }

 private:
  std::chrono::steady_clock::time_point start_;
  fs::path dir_;
  json manifest_;
};

void require(bool given, const std::string& flag, const std::string& sub) {
  if (!given) throw UsageError(sub + " requires " + flag);
}

DiffusionModel load(const Options& o, Run& run, const std::string& sub) {
  require(!o.model.empty(), "--model", sub);
  DiffusionModel m = load_model_file(o.model);
  run.manifest()["inputs"]["model"] = o.model;
  run.manifest()["inputs"]["model_name"] = m.name();
  return m;
}

Grid make_grid(const DiffusionModel& m, const Options& o, Run& run, const std::string& sub) {
  require(!o.grid.empty(), "--grid", sub);
  const std::vector<int> cells = parse_ints(o.grid);
  if (static_cast<int>(cells.size()) != m.dimension()) {
    throw validation_error("DimensionMismatch", "--grid needs one cell count per model dimension");
  }
  run.manifest()["inputs"]["grid"] = cells;
  return Grid(m.domain(), cells);
}

Eigen::VectorXd point(const std::string& text, int n, const std::string& flag) {
  const std::vector<double> v = parse_reals(text);
  if (static_cast<int>(v.size()) != n) {
    throw validation_error("DimensionMismatch", flag + " needs " + std::to_string(n) + " components");
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

double positive(double v, const std::string& flag) {
  if (!(v > 0.0) || !std::isfinite(v)) throw validation_error("ValidationFailure", flag + " must be positive");
  return v;
}

std::vector<std::string> coordinate_header(int n) {
  std::vector<std::string> h;
  for (int i = 1; i <= n; ++i) h.push_back("x" + std::to_string(i));
  return h;
}

std::vector<double> centre(const Grid& g, std::size_t c) {
  const Eigen::VectorXd x = g.center(c);
  return {x.data(), x.data() + x.size()};
}

void write_field(Run& run, const std::string& name, const std::string& column, const GridField& f) {
  auto header = coordinate_header(f.grid.dimension());
  header.push_back(column);
  Csv csv(header);
  for (std::size_t c = 0; c < f.grid.size(); ++c) {
    auto row = centre(f.grid, c);
    row.push_back(f.values[static_cast<Eigen::Index>(c)]);
    csv.row(row);
  }
  run.write_csv(name, csv);
}

fpegrid::DiscreteOperator pick_operator(const fpegrid::DecompositionResult& d, const std::string& op) {
  if (op == "full") return d.L;
  if (op == "symmetric") return d.Ls;
  if (op == "antisymmetric") return d.La;
  throw UsageError("--operator must be full, symmetric or antisymmetric");
}

// ---------------------------------------------------------------------------

int cmd_decompose(const Options& o, Run& run) {
  const DiffusionModel m = load(o, run, "decompose");
  if (o.linear == !o.grid.empty()) throw UsageError("decompose needs exactly one of --linear and --grid");
  if (o.linear) {
    const auto lm = lindecomp::extract_linear(m);
    const auto d = lindecomp::decompose_linear(lm);
    const auto& r = d.residuals;
    json rep = {{"model", m.name()},
                {"method", "linear"},
                {"B", matrix_json(lm.B)},
                {"A", matrix_json(lm.A)},
                {"Xi", matrix_json(d.Xi)},
                {"J", matrix_json(d.J)},
                {"R", matrix_json(d.R)},
                {"M", matrix_json(d.M)},
                {"Pi", matrix_json(d.Pi)},
                {"residuals",
                 {{"lyapunov", r.lyapunov},
                  {"antisymmetry", r.antisymmetry},
                  {"circulation", r.circulation},
                  {"reconstruction", r.reconstruction},
                  {"ao", r.ao},
                  {"orthogonality", r.orthogonality},
                  {"trace_J", r.trace_J}}}};
    run.write_json("report.json", rep);
    std::cout << rep.dump(2) << "\n";
    return kExitOk;
  }
  const Grid g = make_grid(m, o, run, "decompose");
  const auto d = fpegrid::decompose_grid(m, g);
  write_field(run, "rho.csv", "rho", d.rho);
  auto header = coordinate_header(g.dimension());
  for (int i = 1; i <= g.dimension(); ++i) header.push_back("j" + std::to_string(i));
  Csv csv(header);
  for (std::size_t c = 0; c < g.size(); ++c) {
    auto row = centre(g, c);
    for (int i = 0; i < g.dimension(); ++i) row.push_back(d.circulation.j.values(static_cast<Eigen::Index>(c), i));
    csv.row(row);
  }
  run.write_csv("circulation.csv", csv);
  json rep = {{"model", m.name()},
              {"method", "grid"},
              {"cells", g.size()},
              {"mass", d.rho.mass()},
              {"stationary_residual", fpegrid::stationary_residual(d.L, d.rho.values)},
              {"symmetric_defect", fpegrid::symmetry_defect(d.Ls.matrix, d.rho.values, false)},
              {"antisymmetric_defect", fpegrid::symmetry_defect(d.La.matrix, d.rho.values, true)},
              {"circulation_divergence_l1", d.circulation.divergence_l1},
              {"max_peclet", d.max_peclet},
              {"warnings", d.warnings}};
  run.write_json("report.json", rep);
  return kExitOk;
}

int cmd_evolve(const Options& o, Run& run) {
  const DiffusionModel m = load(o, run, "evolve");
  const Grid g = make_grid(m, o, run, "evolve");
  require(!o.u0.empty(), "--u0", "evolve");
  const double T = positive(o.T, "--T"), dt = positive(o.dt, "--dt");
  if (o.every < 1) throw validation_error("ValidationFailure", "--every must be >= 1");
  const auto d = fpegrid::decompose_grid(m, g);
  const auto op = pick_operator(d, o.op);
  const GridField u0 = parse_initial_density(o.u0, g);
  const auto scheme =
      o.op == "antisymmetric" ? fpegrid::Scheme::ExplicitUpwind : fpegrid::Scheme::Implicit;
  const auto snaps = fpegrid::evolve(op, u0, T, dt, scheme, o.every);
  Csv csv({"t", "mass", "F", "min_u"});
  for (const auto& s : snaps) {
    const GridField u(g, s.u);
    csv.row({s.t, u.mass(), thermo::free_energy(u, d.rho), s.u.minCoeff()});
  }
  run.write_csv("summary.csv", csv);
  write_field(run, "final.csv", "u", GridField(g, snaps.back().u));
  run.manifest()["inputs"]["u0"] = o.u0;
  run.manifest()["inputs"]["operator"] = o.op;
  run.manifest()["inputs"]["T"] = T;
  run.manifest()["inputs"]["dt"] = dt;
  return kExitOk;
}

int cmd_thermo(const Options& o, Run& run) {
  const DiffusionModel m = load(o, run, "thermo");
  const Grid g = make_grid(m, o, run, "thermo");
  require(!o.u0.empty(), "--u0", "thermo");
  const double T = positive(o.T, "--T"), dt = positive(o.dt, "--dt");
  if (o.every < 1) throw validation_error("ValidationFailure", "--every must be >= 1");
  const auto d = fpegrid::decompose_grid(m, g);
  const GridField u0 = parse_initial_density(o.u0, g);
  const auto snaps = fpegrid::evolve(d.L, u0, T, dt, fpegrid::Scheme::Implicit, o.every);
  const auto s = fpegrid::sample_model(m, g);
  thermo::AuditOptions aopt;
  aopt.La = &d.La;
  const auto ledger = thermo::balance_audit(snaps, d.rho, s, aopt);
  Csv csv({"t", "F", "ep", "Ein", "dFdt", "residual", "La_rate"});
  for (const auto& r : ledger.records) csv.row({r.t, r.F, r.ep, r.Ein, r.dFdt, r.residual, r.antisymmetric_rate});
  run.write_csv("ledger.csv", csv);
  const double ep_stat = thermo::entropy_production(d.rho, d.rho, s);
  const double ein_stat = thermo::housekeeping_heat(d.rho, d.rho, s);
  run.write_json("report.json", {{"model", m.name()},
                                 {"snapshots", ledger.records.size()},
                                 {"violations", ledger.violations},
                                 {"stationary_ep", ep_stat},
                                 {"stationary_Ein", ein_stat},
                                 {"warnings", d.warnings}});
  run.manifest()["inputs"]["u0"] = o.u0;
  run.manifest()["inputs"]["T"] = T;
  run.manifest()["inputs"]["dt"] = dt;
  run.manifest()["tolerances"]["density_floor"] = thermo::kDensityFloor;
  return kExitOk;
}

consdyn::ConservativeSystem conservative_system(const DiffusionModel& m, const Options& o, Run& run,
                                                const std::string& sub) {
  if (o.linear == !o.grid.empty()) throw UsageError(sub + " needs exactly one of --linear and --grid");
  if (o.linear) {
    const auto d = lindecomp::decompose_linear(lindecomp::extract_linear(m));
    return consdyn::from_linear(d, m.domain());
  }
  const Grid g = make_grid(m, o, run, sub);
  const auto d = fpegrid::decompose_grid(m, g);
  return consdyn::from_grid(d.circulation.j, d.rho);
}

int cmd_conservative(const Options& o, Run& run) {
  const DiffusionModel m = load(o, run, "conservative");
  if (o.x0.empty() && o.u0.empty()) throw UsageError("conservative needs --x0 (trajectory) or --u0 (functionals)");
  const double T = positive(o.T, "--T");
  json rep = {{"model", m.name()}};
  if (!o.x0.empty()) {
    const double tol = std::isnan(o.tol) ? 1e-9 : positive(o.tol, "--tol");
    run.manifest()["tolerances"]["integrator"] = tol;
    const auto sys = conservative_system(m, o, run, "conservative");
    const auto tr = consdyn::integrate_conservative(sys, point(o.x0, m.dimension(), "--x0"), T, tol);
    auto header = coordinate_header(m.dimension());
    header.insert(header.begin(), "t");
    Csv csv(header);
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
      std::vector<double> row{tr.t[k]};
      for (Eigen::Index i = 0; i < tr.x[k].size(); ++i) row.push_back(tr.x[k][i]);
      csv.row(row);
    }
    run.write_csv("trajectory.csv", csv);
    rep["accepted_steps"] = tr.accepted;
    rep["rejected_steps"] = tr.rejected;
    rep["divergence_defect_x0"] = consdyn::divergence_defect(sys, tr.x.front());
  }
  if (!o.u0.empty()) {
    const Grid g = make_grid(m, o, run, "conservative");
    std::vector<consdyn::Functional> tags;
    std::stringstream ss(o.functionals);
    for (std::string tok; std::getline(ss, tok, ',');) tags.push_back(consdyn::functional_from_string(tok));
    const std::string text = o.u0;
    const auto rep_c = consdyn::conservation_audit(
        m, g, [&text](const Grid& gg) { return parse_initial_density(text, gg); }, T, tags);
    Csv csv({"functional", "h_coarse", "h_fine", "drift_coarse", "drift_fine", "ratio"});
    for (const auto& e : rep_c.entries) {
      csv.row_strings({consdyn::to_string(e.g), fmt(rep_c.h_coarse), fmt(rep_c.h_fine), fmt(e.drift_coarse),
                       fmt(e.drift_fine), fmt(e.ratio)});
    }
    run.write_csv("functionals.csv", csv);
    run.manifest()["inputs"]["u0"] = o.u0;
  }
  run.manifest()["inputs"]["T"] = T;
  run.write_json("report.json", rep);
  return kExitOk;
}

int cmd_fixedpoint(const Options& o, Run& run) {
  const DiffusionModel m = load(o, run, "fixedpoint");
  require(!o.at.empty(), "--at", "fixedpoint");
  const auto sys = conservative_system(m, o, run, "fixedpoint");
  const auto r = consdyn::classify_fixed_point(sys, point(o.at, m.dimension(), "--at"));
  json eig = json::array();
  for (const auto& l : r.eigenvalues) eig.push_back({l.real(), l.imag()});
  json rep = {{"model", m.name()},
              {"location", vector_json(r.location)},
              {"classification", consdyn::to_string(r.classification)},
              {"linear_type", r.linear_type},
              {"trace", r.trace},
              {"trace_ok", r.trace_ok},
              {"tolerance", r.tolerance},
              {"jacobian", matrix_json(r.jacobian)},
              {"eigenvalues", eig}};
  run.manifest()["tolerances"]["classification"] = r.tolerance;
  run.write_json("report.json", rep);
  std::cout << rep.dump(2) << "\n";
  return kExitOk;
}

int cmd_simulate(const Options& o, Run& run) {
  const DiffusionModel m = load(o, run, "simulate");
  require(!o.x0.empty(), "--x0", "simulate");
  const double T = positive(o.T, "--T"), dt = positive(o.dt, "--dt");
  if (o.paths < 1) throw validation_error("ValidationFailure", "--paths must be >= 1");
  sdesim::SimulateOptions sopt;
  const bool want_density = !std::isnan(o.density_at);
  if (want_density) {
    require(!o.grid.empty(), "--grid", "simulate --density-at");
    if (!(o.density_at >= 0.0 && o.density_at <= T)) {
      throw validation_error("ValidationFailure", "--density-at must lie in [0, T]");
    }
    if (o.density_at < T) {
      const double k = std::round(o.density_at / dt);
      if (k < 1.0 || std::abs(k * dt - o.density_at) > 1e-9 * std::max(1.0, o.density_at)) {
        throw validation_error("ValidationFailure", "--density-at must be a multiple of --dt");
      }
      sopt.record_every = static_cast<std::size_t>(k);
    }
  }
  const auto pe = sdesim::simulate(m, point(o.x0, m.dimension(), "--x0"), dt, T,
                                   static_cast<std::size_t>(o.paths), o.seed, sopt);
  auto header = coordinate_header(m.dimension());
  header.insert(header.begin(), {"path", "killed"});
  Csv csv(header);
  const Eigen::MatrixXd& end = pe.positions.back();
  for (std::size_t k = 0; k < pe.paths(); ++k) {
    std::vector<std::string> row{std::to_string(k), pe.killed[k] ? "1" : "0"};
    for (Eigen::Index i = 0; i < end.cols(); ++i) row.push_back(fmt(end(static_cast<Eigen::Index>(k), i)));
    csv.row_strings(row);
  }
  run.write_csv("endpoints.csv", csv);
  json rep = {{"model", m.name()}, {"paths", pe.paths()}, {"killed", pe.killed_count()}, {"seed", o.seed}};
  if (pe.killed_count() < pe.paths()) {
    rep["endpoint_mean"] = vector_json(sdesim::sample_mean(pe, T));
    if (pe.paths() - pe.killed_count() >= 2) rep["endpoint_covariance"] = matrix_json(sdesim::sample_covariance(pe, T));
  }
  if (want_density) {
    const Grid g = make_grid(m, o, run, "simulate");
    write_field(run, "density.csv", "density", sdesim::ensemble_density(pe, g, o.density_at));
    rep["density_at"] = o.density_at;
  }
  run.write_json("report.json", rep);
  run.manifest()["seed"] = o.seed;
  run.manifest()["inputs"]["T"] = T;
  run.manifest()["inputs"]["dt"] = dt;
  run.manifest()["inputs"]["paths"] = o.paths;
  return kExitOk;
}

int cmd_quasipotential(const Options& o, Run& run) {
  const DiffusionModel m = load(o, run, "quasipotential");
  const Grid g = make_grid(m, o, run, "quasipotential");
  require(!o.eps.empty(), "--eps", "quasipotential");
  const auto levels = fpegrid::quasi_potential(m, g, parse_reals(o.eps));
  auto header = coordinate_header(g.dimension());
  for (const auto& l : levels) header.push_back("U_eps=" + fmt(l.eps));
  Csv csv(header);
  for (std::size_t c = 0; c < g.size(); ++c) {
    auto row = centre(g, c);
    for (const auto& l : levels) row.push_back(l.usable ? l.U->values[static_cast<Eigen::Index>(c)] : kUnset);
    csv.row(row);
  }
  run.write_csv("quasipotential.csv", csv);
  json lv = json::array();
  for (const auto& l : levels) lv.push_back({{"eps", l.eps}, {"usable", l.usable}, {"failure", l.failure}});
  run.write_json("report.json", {{"model", m.name()}, {"levels", lv}});
  return kExitOk;
}

void emit_error(const std::string& kind, const std::string& category, const std::string& message, int code) {
  const json e = {{"error", {{"kind", kind}, {"category", category}, {"message", message}, {"exit_code", code}}}};
  std::cerr << e.dump() << "\n";
}

}  // namespace

std::vector<double> parse_reals(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) {
    double v = 0.0;
    const char* b = tok.data();
    const char* e = b + tok.size();
    while (b < e && *b == ' ') ++b;
    if (b < e && *b == '+') ++b;
    const auto r = std::from_chars(b, e, v);
    if (r.ec != std::errc() || r.ptr != e || !std::isfinite(v)) {
      throw validation_error("ValidationFailure", "cannot read '" + tok + "' as a real number");
    }
    out.push_back(v);
  }
  if (out.empty()) throw validation_error("ValidationFailure", "empty number list");
  return out;
}

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_reals(text)) {
    if (v != std::floor(v) || std::abs(v) > 1e9) {
      throw validation_error("ValidationFailure", "expected integers in '" + text + "'");
    }
    out.push_back(static_cast<int>(v));
  }
  return out;
}

GridField parse_initial_density(const std::string& text, const Grid& g) {
  if (text == "uniform") return uniform_density(g);
  if (text.rfind("gauss:", 0) == 0) {
    const std::string rest = text.substr(6);
    const auto colon = rest.find(':');
    if (colon == std::string::npos) {
      throw validation_error("ValidationFailure", "gauss density must read gauss:mu1,...:sigma");
    }
    const std::vector<double> mu = parse_reals(rest.substr(0, colon));
    const std::vector<double> sigma = parse_reals(rest.substr(colon + 1));
    if (sigma.size() != 1) throw validation_error("ValidationFailure", "gauss density takes one sigma");
    if (static_cast<int>(mu.size()) != g.dimension()) {
      throw validation_error("DimensionMismatch", "gauss mean has the wrong dimension");
    }
    return gaussian_density(g, Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size())),
                            sigma[0]);
  }
  std::ifstream in(text, std::ios::binary);
  if (!in) throw validation_error("IOError", "u0 '" + text + "' is neither gauss:..., uniform nor a readable CSV");
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    values.push_back(parse_reals(comma == std::string::npos ? line : line.substr(comma + 1)).front());
  }
  if (values.size() != g.size()) {
    throw validation_error("GridMismatch", "u0 CSV has " + std::to_string(values.size()) + " rows, grid has " +
                                               std::to_string(g.size()) + " cells");
  }
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  if ((v.array() < 0.0).any()) throw validation_error("ValidationFailure", "u0 CSV has negative entries");
  return GridField(g, v).normalized();
}

int run(const std::vector<std::string>& args) {
  Options o;
  CLI::App app{"Drift decomposition, Fokker-Planck grids, thermodynamics and SDE ensembles", "fpdecomp"};
  app.require_subcommand(1);

  auto add_model = [&](CLI::App* s) { s->add_option("--model", o.model, "model JSON file"); };
  auto add_grid = [&](CLI::App* s) { s->add_option("--grid", o.grid, "cells per axis, m1,m2,..."); };
  auto add_out = [&](CLI::App* s) { s->add_option("--out", o.out, "output directory")->capture_default_str(); };
  auto add_time = [&](CLI::App* s) {
    s->add_option("--T", o.T, "final time");
    s->add_option("--dt", o.dt, "time step");
  };

  auto* dec = app.add_subcommand("decompose", "linear or grid decomposition");
  add_model(dec);
  add_grid(dec);
  dec->add_flag("--linear", o.linear, "exact Ornstein-Uhlenbeck decomposition");
  add_out(dec);

  auto* evo = app.add_subcommand("evolve", "evolve a density under L, Ls or La");
  add_model(evo);
  add_grid(evo);
  evo->add_option("--u0", o.u0, "initial density");
  add_time(evo);
  evo->add_option("--operator", o.op, "full, symmetric or antisymmetric")->capture_default_str();
  evo->add_option("--every", o.every, "snapshot stride in steps")->capture_default_str();
  add_out(evo);

  auto* thm = app.add_subcommand("thermo", "free energy balance along a relaxation");
  add_model(thm);
  add_grid(thm);
  thm->add_option("--u0", o.u0, "initial density");
  add_time(thm);
  thm->add_option("--every", o.every, "snapshot stride in steps")->capture_default_str();
  add_out(thm);

  auto* con = app.add_subcommand("conservative", "conservative dynamics x' = j(x)");
  add_model(con);
  add_grid(con);
  con->add_flag("--linear", o.linear, "use the exact linear circulation");
  con->add_option("--x0", o.x0, "initial point");
  con->add_option("--u0", o.u0, "initial density for the functional audit");
  con->add_option("--T", o.T, "final time");
  con->add_option("--tol", o.tol, "integrator tolerance");
  con->add_option("--functionals", o.functionals, "ln, s, s2, abs, slns")->capture_default_str();
  add_out(con);

  auto* fix = app.add_subcommand("fixedpoint", "classify a fixed point of j");
  add_model(fix);
  add_grid(fix);
  fix->add_flag("--linear", o.linear, "use the exact linear circulation");
  fix->add_option("--at", o.at, "point a,b,...");
  add_out(fix);

  auto* sim = app.add_subcommand("simulate", "Euler-Maruyama ensemble");
  add_model(sim);
  add_grid(sim);
  sim->add_option("--x0", o.x0, "initial point");
  add_time(sim);
  sim->add_option("--paths", o.paths, "number of paths")->capture_default_str();
  sim->add_option("--seed", o.seed, "generator seed")->capture_default_str();
  sim->add_option("--density-at", o.density_at, "histogram time");
  add_out(sim);

  auto* qp = app.add_subcommand("quasipotential", "-eps ln rho_eps for decreasing eps");
  add_model(qp);
  add_grid(qp);
  qp->add_option("--eps", o.eps, "e1,e2,... strictly decreasing");
  add_out(qp);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("UsageError", "usage", e.what(), kExitUsage);
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string sub = chosen->get_name();
  std::optional<Run> run;
  try {
    run.emplace(sub, o, args);
    int code = kExitOk;
    if (sub == "decompose") code = cmd_decompose(o, *run);
    else if (sub == "evolve") code = cmd_evolve(o, *run);
    else if (sub == "thermo") code = cmd_thermo(o, *run);
    else if (sub == "conservative") code = cmd_conservative(o, *run);
    else if (sub == "fixedpoint") code = cmd_fixedpoint(o, *run);
    else if (sub == "simulate") code = cmd_simulate(o, *run);
    else if (sub == "quasipotential") code = cmd_quasipotential(o, *run);
    run->finish("ok");
    return code;
  } catch (const UsageError& e) {
    emit_error("UsageError", "usage", e.what(), kExitUsage);
    return kExitUsage;
  } catch (const Error& e) {
    const bool validation = e.category() == ErrorCategory::Validation;
    const int code = validation ? kExitValidation : kExitNumerical;
    const std::string category = validation ? "validation" : "numerical";
    emit_error(e.kind(), category, e.what(), code);
    try {
      if (run) run->finish("error", {{"kind", e.kind()}, {"category", category}, {"message", e.what()}});
    } catch (const std::exception&) {
    }
    return code;
  } catch (const fs::filesystem_error& e) {
    emit_error("IOError", "validation", e.what(), kExitValidation);
    return kExitValidation;
  } catch (const std::exception& e) {
    emit_error("InternalError", "numerical", e.what(), kExitNumerical);
    return kExitNumerical;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace fpdecomp::cli
