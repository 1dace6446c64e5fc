#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fpdecomp {

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
inline std::span<double> as_span(Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Axis-aligned box, one interval per dimension.
using Box = std::vector<Interval>;

/// out = f(x); `out` has the dimension of the model.
using VectorFieldFn = std::function<void(std::span<const double> x, std::span<double> out)>;
/// out = F(x) stored column-major, n*n entries.
using MatrixFieldFn = std::function<void(std::span<const double> x, std::span<double> out)>;

struct MatrixField {
  MatrixFieldFn fn;
  bool constant = false;

  static MatrixField constant_matrix(const Eigen::MatrixXd& m);
};

/// A diffusion process through its forward operator
///     L(phi) = div(A grad phi) - div(b phi).
///
/// Holds drift b, diffusion A and optionally a noise factor Gamma with
/// A = Gamma Gamma^T / 2, together with the box the model is meant to live on.
/// Instances are immutable and their fields may be evaluated concurrently.
class DiffusionModel {
 public:
  DiffusionModel(int dimension, VectorFieldFn drift, MatrixField diffusion, Box domain,
                 std::optional<MatrixField> noise_factor = std::nullopt,
                 std::string name = "model");

  /// b(x) = B x, constant A.
  static DiffusionModel linear(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A, Box domain,
                               std::string name = "linear");

  int dimension() const { return n_; }
  const std::string& name() const { return name_; }
  const Box& domain() const { return domain_; }

  Eigen::VectorXd drift(const Eigen::VectorXd& x) const;
  void drift(std::span<const double> x, std::span<double> out) const { drift_(x, out); }

  Eigen::MatrixXd diffusion(const Eigen::VectorXd& x) const;
  void diffusion(std::span<const double> x, std::span<double> out) const {
    diffusion_.fn(x, out);
  }
  bool diffusion_is_constant() const { return diffusion_.constant; }

  bool has_noise_factor() const { return noise_.has_value(); }
  /// The declared Gamma, or the principal square root of 2A when none was given.
  Eigen::MatrixXd noise_factor(const Eigen::VectorXd& x) const;
  bool noise_is_constant() const { return noise_ ? noise_->constant : diffusion_.constant; }

  /// Same drift and domain, different diffusion (and noise factor).
  DiffusionModel with_diffusion(MatrixField diffusion,
                                std::optional<MatrixField> noise_factor = std::nullopt) const;
  DiffusionModel with_drift(VectorFieldFn drift) const;

 private:
  int n_;
  VectorFieldFn drift_;
  MatrixField diffusion_;
  std::optional<MatrixField> noise_;
  Box domain_;
  std::string name_;
};

/// Declarative model description; the on-disk form is JSON.
struct ModelFile {
  std::string name;
  int dimension = 0;
  std::vector<std::string> drift;
  /// Either a constant matrix or n*n expression strings (row-major rows).
  std::variant<Eigen::MatrixXd, std::vector<std::vector<std::string>>> diffusion;
  std::optional<Eigen::MatrixXd> noise_factor;
  Box domain;
  /// Free-form metadata; values are kept as raw JSON text.
  std::map<std::string, std::string> metadata;
};

ModelFile parse_model_file(std::string_view contents);
std::string to_json(const ModelFile& file);
DiffusionModel build_model(const ModelFile& file);
DiffusionModel load_model(std::string_view contents);
DiffusionModel load_model_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Validation

struct ProbeResult {
  Eigen::VectorXd point;
  double asymmetry = 0.0;       // max |A - A^T|
  double min_eigenvalue = 0.0;  // of the symmetric part of A
  double noise_defect = 0.0;    // ||A - Gamma Gamma^T / 2||_F / ||A||_F, 0 without Gamma
};

struct ValidationReport {
  std::vector<ProbeResult> probes;
  bool passed = true;
  std::optional<std::size_t> first_failure;  // index into probes
  std::string failure_kind;                  // "asymmetric", "not-positive-definite", ...

  /// Throws ValidationFailure if the report did not pass.
  void raise_if_failed() const;
};

/// `per_axis` points per axis including both ends of each interval.
std::vector<Eigen::VectorXd> lattice_points(const Box& domain, int per_axis = 5);

ValidationReport validate_model(const DiffusionModel& m,
                                const std::vector<Eigen::VectorXd>& probe_points);

/// validate_model on the default lattice over the model's own domain.
ValidationReport validate_model(const DiffusionModel& m);

}  // namespace fpdecomp
