#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace echosim {

enum class ModelKind {
  ExpDecay2T2,        // A exp(-2t/T2) + C
  ExpDecay,           // A exp(-t/Td) + C
  Lorentzian,         // A (G/2)^2 / ((x-x0)^2 + (G/2)^2) + C
  CosineInterference, // I1 + I2 + 2 sqrt(I1 I2) cos(x + phi0)
  LorentzModCosine,   // I1 + I2 a + 2 sqrt(I1 I2 a) cos(k x), a = L(x; nu0, G) peak 1
  HomodyneFringe      // A (1 + V cos(x + phiLO)) + C
};

std::string_view to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);
std::vector<ModelKind> all_model_kinds();

/// A model with parameter names, bounds and a fixed-parameter mask. Defaults
/// come from make(); callers may tighten bounds or fix parameters.
struct FitModel {
  ModelKind kind = ModelKind::ExpDecay;
  std::vector<std::string> names;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<bool> fixed;

  static FitModel make(ModelKind kind);
  std::size_t size() const { return names.size(); }
  std::size_t index_of(std::string_view name) const;
  double eval(double x, const std::vector<double>& params) const;
  void validate() const;
};

struct FitData {
  std::vector<double> x;
  std::vector<double> y;
  /// Per-point standard deviations; empty means unweighted.
  std::vector<double> sigma;
};

struct FitControl {
  int max_iter = 500;
  double tol = 1e-12;
};

struct FitResult {
  ModelKind kind = ModelKind::ExpDecay;
  std::vector<std::string> names;
  std::vector<double> parameters;
  std::vector<double> standard_errors;
  /// sqrt(sum ((y - f)/sigma)^2).
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string message;

  double value(std::string_view name) const;
  double error(std::string_view name) const;
};

/// Levenberg-Marquardt on the weighted squared residuals with a
/// central-difference Jacobian. Throws std::invalid_argument on non-finite
/// data or too few points; numerical trouble yields converged = false.
FitResult nlls_solve(const FitModel& model, const FitData& data,
                     const std::vector<double>& initial_guess, const FitControl& control = {});

/// Data-driven starting point for each model kind.
std::vector<double> initial_guess(const FitModel& model, const FitData& data);

/// 2 sqrt(I1 I2) / (I1 + I2).
double visibility(double i1, double i2);

/// Coefficient of determination of y against a straight line through the origin
/// when `through_origin`, otherwise an ordinary least-squares line.
double linear_r_squared(const std::vector<double>& x, const std::vector<double>& y,
                        bool through_origin = false);

} // namespace echosim
