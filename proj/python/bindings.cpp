#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fpdecomp/cli.hpp"
#include "fpdecomp/consdyn.hpp"
#include "fpdecomp/error.hpp"
#include "fpdecomp/expr.hpp"
#include "fpdecomp/fpegrid.hpp"
#include "fpdecomp/lindecomp.hpp"
#include "fpdecomp/model.hpp"
#include "fpdecomp/sdesim.hpp"
#include "fpdecomp/thermo.hpp"

namespace py = pybind11;
using namespace fpdecomp;

namespace {

Box to_box(const std::vector<std::pair<double, double>>& d) {
  Box b;
  for (const auto& [lo, hi] : d) b.push_back({lo, hi});
  return b;
}

Eigen::MatrixXd centres(const Grid& g) {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(g.size()), g.dimension());
  for (std::size_t k = 0; k < g.size(); ++k) c.row(static_cast<Eigen::Index>(k)) = g.center(k).transpose();
  return c;
}

Grid model_grid(const DiffusionModel& m, const std::vector<int>& cells) { return Grid(m.domain(), cells); }

py::dict decompose_linear_dict(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A) {
  const auto d = lindecomp::decompose_linear(lindecomp::make_linear_model(B, A));
  py::dict out;
  out["Xi"] = d.Xi;
  out["J"] = d.J;
  out["R"] = d.R;
  out["M"] = d.M;
  out["Pi"] = d.Pi;
  py::dict r;
  r["lyapunov"] = d.residuals.lyapunov;
  r["antisymmetry"] = d.residuals.antisymmetry;
  r["circulation"] = d.residuals.circulation;
  r["reconstruction"] = d.residuals.reconstruction;
  r["ao"] = d.residuals.ao;
  r["orthogonality"] = d.residuals.orthogonality;
  r["trace_J"] = d.residuals.trace_J;
  out["residuals"] = r;
  return out;
}

py::dict decompose_grid_dict(const DiffusionModel& m, const std::vector<int>& cells) {
  const Grid g = model_grid(m, cells);
  const auto d = fpegrid::decompose_grid(m, g);
  py::dict out;
  out["centres"] = centres(g);
  out["cell_volume"] = g.cell_volume();
  out["rho"] = d.rho.values;
  out["j"] = d.circulation.j.values;
  out["divergence_l1"] = d.circulation.divergence_l1;
  out["max_peclet"] = d.max_peclet;
  out["warnings"] = d.warnings;
  out["symmetric_defect"] = fpegrid::symmetry_defect(d.Ls.matrix, d.rho.values, false);
  out["antisymmetric_defect"] = fpegrid::symmetry_defect(d.La.matrix, d.rho.values, true);
  return out;
}

py::dict balance_dict(const DiffusionModel& m, const std::vector<int>& cells, const std::string& u0, double T,
                      double dt, int every) {
  const Grid g = model_grid(m, cells);
  const auto d = fpegrid::decompose_grid(m, g);
  const auto snaps = fpegrid::evolve(d.L, cli::parse_initial_density(u0, g), T, dt, fpegrid::Scheme::Implicit, every);
  const auto ledger = thermo::balance_audit(snaps, d.rho, m);
  const auto K = static_cast<Eigen::Index>(ledger.records.size());
  Eigen::VectorXd t(K), F(K), ep(K), Ein(K), dF(K), res(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& r = ledger.records[static_cast<std::size_t>(k)];
    t[k] = r.t;
    F[k] = r.F;
    ep[k] = r.ep;
    Ein[k] = r.Ein;
    dF[k] = r.dFdt;
    res[k] = r.residual;
  }
  py::dict out;
  out["t"] = t;
  out["F"] = F;
  out["ep"] = ep;
  out["Ein"] = Ein;
  out["dFdt"] = dF;
  out["residual"] = res;
  out["violations"] = ledger.violations;
  return out;
}

py::dict fixed_point_dict(const consdyn::FixedPointReport& r) {
  py::dict out;
  out["classification"] = consdyn::to_string(r.classification);
  out["linear_type"] = r.linear_type;
  out["trace"] = r.trace;
  out["trace_ok"] = r.trace_ok;
  out["jacobian"] = r.jacobian;
  out["eigenvalues"] = Eigen::VectorXcd(r.eigenvalues);
  return out;
}

py::dict simulate_dict(const DiffusionModel& m, const Eigen::VectorXd& x0, double dt, double T, std::size_t K,
                       std::uint64_t seed) {
  const auto pe = sdesim::simulate(m, x0, dt, T, K, seed);
  py::dict out;
  out["endpoints"] = pe.positions.back();
  std::vector<bool> killed(pe.killed.begin(), pe.killed.end());
  out["killed"] = killed;
  out["seed"] = pe.seed;
  return out;
}

py::list quasi_potential_list(const DiffusionModel& m, const std::vector<int>& cells, const std::vector<double>& eps) {
  const Grid g = model_grid(m, cells);
  py::list out;
  for (const auto& l : fpegrid::quasi_potential(m, g, eps)) {
    py::dict d;
    d["eps"] = l.eps;
    d["usable"] = l.usable;
    d["failure"] = l.failure;
    if (l.U) d["U"] = l.U->values;
    if (l.rho) d["rho"] = l.rho->values;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Drift decomposition of diffusion processes.";

  static py::exception<Error> exc(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const char* category = e.category() == ErrorCategory::Validation ? "validation" : "numerical";
      PyErr_SetObject(exc.ptr(), py::make_tuple(e.kind(), category, e.what()).ptr());
    }
  });

  py::class_<Expr>(m, "Expr")
      .def("eval", [](const Expr& e, const std::vector<double>& x) { return e.eval(x); })
      .def("max_variable", &Expr::max_variable)
      .def("__str__", &Expr::to_string)
      .def("__eq__", [](const Expr& a, const Expr& b) { return a == b; });
  m.def("parse_expression", [](const std::string& src, int dim) { return parse_expression(src, dim); },
        py::arg("source"), py::arg("dimension"));

  py::class_<DiffusionModel>(m, "DiffusionModel")
      .def_property_readonly("name", &DiffusionModel::name)
      .def_property_readonly("dimension", &DiffusionModel::dimension)
      .def_property_readonly("domain",
                             [](const DiffusionModel& d) {
                               std::vector<std::pair<double, double>> out;
                               for (const auto& iv : d.domain()) out.emplace_back(iv.lo, iv.hi);
                               return out;
                             })
      .def("drift", [](const DiffusionModel& d, const Eigen::VectorXd& x) { return d.drift(x); })
      .def("diffusion", [](const DiffusionModel& d, const Eigen::VectorXd& x) { return d.diffusion(x); })
      .def("noise_factor", &DiffusionModel::noise_factor);

  m.def("load_model", [](const std::string& path) { return load_model_file(path); }, py::arg("path"));
  m.def("model_from_json", [](const std::string& text) { return load_model(text); }, py::arg("text"));
  m.def("linear_model",
        [](const Eigen::MatrixXd& B, const Eigen::MatrixXd& A, const std::vector<std::pair<double, double>>& domain) {
          return DiffusionModel::linear(B, A, to_box(domain));
        },
        py::arg("B"), py::arg("A"), py::arg("domain"));

  m.def("solve_lyapunov", [](const Eigen::MatrixXd& B, const Eigen::MatrixXd& A) {
    return lindecomp::solve_lyapunov(B, A);
  });
  m.def("decompose_linear", &decompose_linear_dict, py::arg("B"), py::arg("A"));
  m.def("decompose_grid", &decompose_grid_dict, py::arg("model"), py::arg("cells"));
  m.def("balance", &balance_dict, py::arg("model"), py::arg("cells"), py::arg("u0"), py::arg("T"),
        py::arg("dt"), py::arg("every") = 1);

  m.def("classify_linear_fixed_point",
        [](const Eigen::MatrixXd& J, const Eigen::MatrixXd& Xi, const Eigen::VectorXd& at) {
          Box b(static_cast<std::size_t>(J.rows()), Interval{-1e6, 1e6});
          return fixed_point_dict(consdyn::classify_fixed_point(consdyn::from_linear(J, Xi, b), at));
        },
        py::arg("J"), py::arg("Xi"), py::arg("at"));

  m.def("simulate", &simulate_dict, py::arg("model"), py::arg("x0"), py::arg("dt"), py::arg("T"),
        py::arg("paths"), py::arg("seed"));
  m.def("quasi_potential", &quasi_potential_list, py::arg("model"), py::arg("cells"), py::arg("eps"));

  m.def("run_cli", [](const std::vector<std::string>& args) { return cli::run(args); }, py::arg("args"));
  m.attr("__version__") = FPDECOMP_VERSION;
}
