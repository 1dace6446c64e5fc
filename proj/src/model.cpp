#include "fpdecomp/model.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fpdecomp/error.hpp"
#include "fpdecomp/expr.hpp"
#include "json.hpp"

namespace fpdecomp {

using json = nlohmann::json;

MatrixField MatrixField::constant_matrix(const Eigen::MatrixXd& m) {
  return MatrixField{[m](std::span<const double>, std::span<double> out) {
                       std::copy(m.data(), m.data() + m.size(), out.begin());
                     },
                     true};
}

DiffusionModel::DiffusionModel(int dimension, VectorFieldFn drift, MatrixField diffusion,
                               Box domain, std::optional<MatrixField> noise_factor,
                               std::string name)
    : n_(dimension),
      drift_(std::move(drift)),
      diffusion_(std::move(diffusion)),
      noise_(std::move(noise_factor)),
      domain_(std::move(domain)),
      name_(std::move(name)) {
  if (n_ < 1) throw validation_error("DimensionMismatch", "model dimension must be >= 1");
  if (static_cast<int>(domain_.size()) != n_) {
    throw validation_error("DimensionMismatch", "domain has " + std::to_string(domain_.size()) +
                                                    " intervals for a " + std::to_string(n_) +
                                                    "-dimensional model");
  }
  for (const auto& iv : domain_) {
    if (!(iv.lo < iv.hi)) throw validation_error("SchemaError", "domain bounds need lo < hi");
  }
  if (!drift_ || !diffusion_.fn) {
    throw validation_error("SchemaError", "drift and diffusion must be provided");
  }
}

DiffusionModel DiffusionModel::linear(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A,
                                      Box domain, std::string name) {
  const int n = static_cast<int>(B.rows());
  if (B.cols() != n || A.rows() != n || A.cols() != n) {
    throw validation_error("DimensionMismatch", "linear model needs square B and A of equal size");
  }
  VectorFieldFn drift = [B](std::span<const double> x, std::span<double> out) {
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    Eigen::Map<Eigen::VectorXd> ov(out.data(), static_cast<Eigen::Index>(out.size()));
    ov.noalias() = B * xv;
  };
  return DiffusionModel(n, std::move(drift), MatrixField::constant_matrix(A), std::move(domain),
                        std::nullopt, std::move(name));
}

Eigen::VectorXd DiffusionModel::drift(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out(n_);
  drift_(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
         std::span<double>(out.data(), static_cast<std::size_t>(n_)));
  return out;
}

Eigen::MatrixXd DiffusionModel::diffusion(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd out(n_, n_);
  diffusion_.fn(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                std::span<double>(out.data(), static_cast<std::size_t>(n_ * n_)));
  return out;
}

Eigen::MatrixXd DiffusionModel::noise_factor(const Eigen::VectorXd& x) const {
  if (noise_) {
    Eigen::MatrixXd out(n_, n_);
    noise_->fn(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
               std::span<double>(out.data(), static_cast<std::size_t>(n_ * n_)));
    return out;
  }
  const Eigen::MatrixXd a = diffusion(x);
  // a + a^T is 2A for symmetric A.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a + a.transpose());
  return es.operatorSqrt();
}

DiffusionModel DiffusionModel::with_diffusion(MatrixField diffusion,
                                              std::optional<MatrixField> noise_factor) const {
  return DiffusionModel(n_, drift_, std::move(diffusion), domain_, std::move(noise_factor), name_);
}

DiffusionModel DiffusionModel::with_drift(VectorFieldFn drift) const {
  return DiffusionModel(n_, std::move(drift), diffusion_, domain_, noise_, name_);
}

// ---------------------------------------------------------------------------
// Model files

namespace {

[[noreturn]] void schema_fail(const std::string& what) {
  throw validation_error("SchemaError", what);
}

[[noreturn]] void dim_fail(const std::string& what) {
  throw validation_error("DimensionMismatch", what);
}

double as_number(const json& j, const std::string& where) {
  if (!j.is_number()) schema_fail(where + " must be a number");
  return j.get<double>();
}

Eigen::MatrixXd parse_matrix(const json& j, int n, const std::string& where) {
  if (!j.is_array()) schema_fail(where + " must be an array of rows");
  if (static_cast<int>(j.size()) != n) {
    dim_fail(where + " has " + std::to_string(j.size()) + " rows, expected " + std::to_string(n));
  }
  Eigen::MatrixXd m(n, n);
  for (int r = 0; r < n; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array()) schema_fail(where + " rows must be arrays");
    if (static_cast<int>(row.size()) != n) dim_fail(where + " must be " + std::to_string(n) + "x" +
                                                    std::to_string(n));
    for (int c = 0; c < n; ++c) m(r, c) = as_number(row[static_cast<std::size_t>(c)], where);
  }
  return m;
}

void require_keys(const json& obj, const std::set<std::string>& required,
                  const std::set<std::string>& optional, const std::string& where) {
  if (!obj.is_object()) schema_fail(where + " must be a JSON object");
  for (const auto& k : required) {
    if (!obj.contains(k)) schema_fail(where + " is missing key '" + k + "'");
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!required.count(it.key()) && !optional.count(it.key())) {
      schema_fail(where + " has unexpected key '" + it.key() + "'");
    }
  }
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

ModelFile parse_model_file(std::string_view contents) {
  json doc;
  try {
    doc = json::parse(contents.begin(), contents.end());
  } catch (const json::parse_error& e) {
    schema_fail(std::string("model file is not valid JSON: ") + e.what());
  }
  require_keys(doc, {"name", "dimension", "drift", "diffusion", "domain"},
               {"noise_factor", "metadata"}, "model file");

  ModelFile f;
  if (!doc["name"].is_string()) schema_fail("'name' must be a string");
  f.name = doc["name"].get<std::string>();
  if (!doc["dimension"].is_number_integer()) schema_fail("'dimension' must be an integer");
  f.dimension = doc["dimension"].get<int>();
  if (f.dimension < 1) dim_fail("'dimension' must be >= 1");
  const int n = f.dimension;

  const json& drift = doc["drift"];
  if (!drift.is_array()) schema_fail("'drift' must be an array of strings");
  if (static_cast<int>(drift.size()) != n) {
    dim_fail("'drift' has " + std::to_string(drift.size()) + " entries for dimension " +
             std::to_string(n));
  }
  for (const auto& s : drift) {
    if (!s.is_string()) schema_fail("'drift' entries must be strings");
    f.drift.push_back(s.get<std::string>());
  }

  const json& diff = doc["diffusion"];
  if (!diff.is_object() || diff.size() != 1) {
    schema_fail("'diffusion' must be {\"constant\": ...} or {\"exprs\": ...}");
  }
  if (diff.contains("constant")) {
    f.diffusion = parse_matrix(diff["constant"], n, "diffusion.constant");
  } else if (diff.contains("exprs")) {
    const json& rows = diff["exprs"];
    if (!rows.is_array()) schema_fail("diffusion.exprs must be an array of rows");
    if (static_cast<int>(rows.size()) != n) dim_fail("diffusion.exprs must have n rows");
    std::vector<std::vector<std::string>> exprs;
    for (const auto& row : rows) {
      if (!row.is_array()) schema_fail("diffusion.exprs rows must be arrays");
      if (static_cast<int>(row.size()) != n) dim_fail("diffusion.exprs must be n x n");
      std::vector<std::string> r;
      for (const auto& s : row) {
        if (!s.is_string()) schema_fail("diffusion.exprs entries must be strings");
        r.push_back(s.get<std::string>());
      }
      exprs.push_back(std::move(r));
    }
    f.diffusion = std::move(exprs);
  } else {
    schema_fail("'diffusion' must contain 'constant' or 'exprs'");
  }

  if (doc.contains("noise_factor")) {
    const json& nf = doc["noise_factor"];
    require_keys(nf, {"constant"}, {}, "noise_factor");
    f.noise_factor = parse_matrix(nf["constant"], n, "noise_factor.constant");
  }

  const json& dom = doc["domain"];
  if (!dom.is_array()) schema_fail("'domain' must be an array of [lo, hi] pairs");
  if (static_cast<int>(dom.size()) != n) dim_fail("'domain' must have one [lo, hi] per axis");
  for (const auto& pair : dom) {
    if (!pair.is_array() || pair.size() != 2) schema_fail("'domain' entries must be [lo, hi]");
    Interval iv{as_number(pair[0], "domain"), as_number(pair[1], "domain")};
    if (!(iv.lo < iv.hi)) schema_fail("domain bounds need lo < hi");
    f.domain.push_back(iv);
  }

  if (doc.contains("metadata")) {
    const json& md = doc["metadata"];
    if (!md.is_object()) schema_fail("'metadata' must be an object");
    for (auto it = md.begin(); it != md.end(); ++it) f.metadata[it.key()] = it.value().dump();
  }
  return f;
}

std::string to_json(const ModelFile& f) {
  json doc;
  doc["name"] = f.name;
  doc["dimension"] = f.dimension;
  doc["drift"] = f.drift;
  if (const auto* m = std::get_if<Eigen::MatrixXd>(&f.diffusion)) {
    doc["diffusion"] = {{"constant", matrix_json(*m)}};
  } else {
    doc["diffusion"] = {{"exprs", std::get<std::vector<std::vector<std::string>>>(f.diffusion)}};
  }
  if (f.noise_factor) doc["noise_factor"] = {{"constant", matrix_json(*f.noise_factor)}};
  json dom = json::array();
  for (const auto& iv : f.domain) dom.push_back({iv.lo, iv.hi});
  doc["domain"] = dom;
  if (!f.metadata.empty()) {
    json md = json::object();
    for (const auto& [k, v] : f.metadata) md[k] = json::parse(v);
    doc["metadata"] = md;
  }
  return doc.dump(2);
}

DiffusionModel build_model(const ModelFile& f) {
  const int n = f.dimension;
  if (static_cast<int>(f.drift.size()) != n) dim_fail("drift length must equal dimension");

  std::vector<CompiledExpr> drift;
  drift.reserve(f.drift.size());
  for (const auto& s : f.drift) drift.emplace_back(parse_expression(s, n));
  VectorFieldFn drift_fn = [drift = std::move(drift)](std::span<const double> x,
                                                      std::span<double> out) {
    for (std::size_t i = 0; i < drift.size(); ++i) out[i] = drift[i].eval(x);
  };

  MatrixField diffusion;
  if (const auto* m = std::get_if<Eigen::MatrixXd>(&f.diffusion)) {
    if (m->rows() != n || m->cols() != n) dim_fail("diffusion must be n x n");
    diffusion = MatrixField::constant_matrix(*m);
  } else {
    const auto& rows = std::get<std::vector<std::vector<std::string>>>(f.diffusion);
    if (static_cast<int>(rows.size()) != n) dim_fail("diffusion must be n x n");
    std::vector<CompiledExpr> entries;  // column-major
    std::vector<Expr> parsed(static_cast<std::size_t>(n * n), Expr::number(0.0));
    for (int r = 0; r < n; ++r) {
      if (static_cast<int>(rows[r].size()) != n) dim_fail("diffusion must be n x n");
      for (int c = 0; c < n; ++c) parsed[static_cast<std::size_t>(c * n + r)] =
          parse_expression(rows[r][c], n);
    }
    bool constant = true;
    for (const auto& e : parsed) {
      constant = constant && e.max_variable() == 0;
      entries.emplace_back(e);
    }
    diffusion = MatrixField{[entries = std::move(entries)](std::span<const double> x,
                                                           std::span<double> out) {
                              for (std::size_t i = 0; i < entries.size(); ++i) {
                                out[i] = entries[i].eval(x);
                              }
                            },
                            constant};
  }

  std::optional<MatrixField> noise;
  if (f.noise_factor) {
    if (f.noise_factor->rows() != n || f.noise_factor->cols() != n) {
      dim_fail("noise_factor must be n x n");
    }
    noise = MatrixField::constant_matrix(*f.noise_factor);
  }
  return DiffusionModel(n, std::move(drift_fn), std::move(diffusion), f.domain, std::move(noise),
                        f.name);
}

DiffusionModel load_model(std::string_view contents) {
  return build_model(parse_model_file(contents));
}

DiffusionModel load_model_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("IOError", "cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_model(ss.str());
}

// ---------------------------------------------------------------------------
// Validation

namespace {
constexpr double kSymmetryTol = 1e-12;
constexpr double kNoiseTol = 1e-10;
}  // namespace

void ValidationReport::raise_if_failed() const {
  if (passed) return;
  std::ostringstream msg;
  msg << "model validation failed (" << failure_kind << ")";
  if (first_failure) {
    const ProbeResult& p = probes[*first_failure];
    msg << " at point (";
    for (Eigen::Index i = 0; i < p.point.size(); ++i) msg << (i ? ", " : "") << p.point[i];
    msg << "): asymmetry " << p.asymmetry << ", min eigenvalue " << p.min_eigenvalue;
  }
  throw validation_error("ValidationFailure", msg.str());
}

std::vector<Eigen::VectorXd> lattice_points(const Box& domain, int per_axis) {
  if (per_axis < 1) throw validation_error("SchemaError", "need at least one point per axis");
  const int n = static_cast<int>(domain.size());
  std::vector<Eigen::VectorXd> pts;
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  while (true) {
    Eigen::VectorXd p(n);
    for (int d = 0; d < n; ++d) {
      const auto& iv = domain[static_cast<std::size_t>(d)];
      p[d] = per_axis == 1 ? 0.5 * (iv.lo + iv.hi)
                           : iv.lo + iv.width() * idx[static_cast<std::size_t>(d)] / (per_axis - 1);
    }
    pts.push_back(std::move(p));
    int d = n - 1;
    while (d >= 0 && ++idx[static_cast<std::size_t>(d)] == per_axis) {
      idx[static_cast<std::size_t>(d)] = 0;
      --d;
    }
    if (d < 0) break;
  }
  return pts;
}

ValidationReport validate_model(const DiffusionModel& m,
                                 const std::vector<Eigen::VectorXd>& probe_points) {
  if (probe_points.empty()) {
    throw validation_error("SchemaError", "validate_model needs at least one probe point");
  }
  ValidationReport report;
  for (const auto& x : probe_points) {
    if (x.size() != m.dimension()) dim_fail("probe point has wrong dimension");
    ProbeResult pr;
    pr.point = x;
    const Eigen::MatrixXd a = m.diffusion(x);
    pr.asymmetry = (a - a.transpose()).cwiseAbs().maxCoeff();
    const double scale = a.cwiseAbs().maxCoeff();
    const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    pr.min_eigenvalue = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .minCoeff();
    if (m.has_noise_factor()) {
      const Eigen::MatrixXd g = m.noise_factor(x);
      const double na = a.norm();
      pr.noise_defect = (a - 0.5 * g * g.transpose()).norm() / (na > 0 ? na : 1.0);
    }

    std::string kind;
    if (!a.allFinite()) {
      kind = "non-finite";
    } else if (pr.asymmetry > kSymmetryTol * (scale > 0 ? scale : 1.0)) {
      kind = "asymmetric";
    } else if (!(pr.min_eigenvalue > 0.0)) {
      kind = "not-positive-definite";
    } else if (pr.noise_defect > kNoiseTol) {
      kind = "noise-factor-mismatch";
    }
    if (!kind.empty() && report.passed) {
      report.passed = false;
      report.first_failure = report.probes.size();
      report.failure_kind = kind;
    }
    report.probes.push_back(std::move(pr));
  }
  return report;
}

ValidationReport validate_model(const DiffusionModel& m) {
  return validate_model(m, lattice_points(m.domain()));
}

}  // namespace fpdecomp
