#include "echosim/fitting.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace echosim {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();
constexpr double pi = 3.14159265358979323846;

bool sqrt_coupled(ModelKind k) {
  return k == ModelKind::CosineInterference || k == ModelKind::LorentzModCosine;
}

// Amplitude parameters that are square-rooted internally (a = sqrt(I)).
bool is_intensity(ModelKind k, std::size_t i) { return sqrt_coupled(k) && i < 2; }

double lorentz_unit(double x, double x0, double gamma) {
  const double hg = 0.5 * gamma;
  return hg * hg / ((x - x0) * (x - x0) + hg * hg);
}

// Model in the internal parameterization.
double eval_internal(ModelKind k, double x, const double* p) {
  switch (k) {
    case ModelKind::ExpDecay2T2: return p[0] * std::exp(-2.0 * x / p[1]) + p[2];
    case ModelKind::ExpDecay: return p[0] * std::exp(-x / p[1]) + p[2];
    case ModelKind::Lorentzian: return p[0] * lorentz_unit(x, p[1], p[2]) + p[3];
    case ModelKind::CosineInterference:
      return p[0] * p[0] + p[1] * p[1] + 2.0 * p[0] * p[1] * std::cos(x + p[2]);
    case ModelKind::LorentzModCosine: {
      const double a = lorentz_unit(x, p[2], p[3]);
      return p[0] * p[0] + p[1] * p[1] * a + 2.0 * p[0] * p[1] * std::sqrt(a) * std::cos(p[4] * x);
    }
    case ModelKind::HomodyneFringe: return p[0] * (1.0 + p[1] * std::cos(x + p[2])) + p[3];
  }
  return 0.0;
}

std::vector<double> to_internal(ModelKind k, std::vector<double> p) {
  for (std::size_t i = 0; i < p.size(); ++i)
    if (is_intensity(k, i)) p[i] = std::sqrt(std::max(0.0, p[i]));
  return p;
}

std::vector<double> to_public(ModelKind k, std::vector<double> p) {
  for (std::size_t i = 0; i < p.size(); ++i)
    if (is_intensity(k, i)) p[i] = p[i] * p[i];
  return p;
}

double wrap_phase(double a) { return std::remainder(a, 2.0 * pi); }

// y ~ c0 + c1 cos x + c2 sin x by linear least squares.
Eigen::Vector3d harmonic_fit(const FitData& d) {
  Eigen::MatrixXd m(d.x.size(), 3);
  Eigen::VectorXd y(d.x.size());
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    m(i, 0) = 1.0;
    m(i, 1) = std::cos(d.x[i]);
    m(i, 2) = std::sin(d.x[i]);
    y(i) = d.y[i];
  }
  return m.colPivHouseholderQr().solve(y);
}

} // namespace

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::ExpDecay2T2: return "exp_decay_2t2";
    case ModelKind::ExpDecay: return "exp_decay";
    case ModelKind::Lorentzian: return "lorentzian";
    case ModelKind::CosineInterference: return "cosine_interference";
    case ModelKind::LorentzModCosine: return "lorentz_mod_cosine";
    case ModelKind::HomodyneFringe: return "homodyne_fringe";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view s) {
  for (ModelKind k : all_model_kinds())
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown fit model '" + std::string(s) + "'");
}

std::vector<ModelKind> all_model_kinds() {
  return {ModelKind::ExpDecay2T2,        ModelKind::ExpDecay,
          ModelKind::Lorentzian,         ModelKind::CosineInterference,
          ModelKind::LorentzModCosine,   ModelKind::HomodyneFringe};
}

FitModel FitModel::make(ModelKind kind) {
  FitModel m;
  m.kind = kind;
  switch (kind) {
    case ModelKind::ExpDecay2T2:
      m.names = {"A", "T2", "C"};
      m.lower = {-inf, 1e-12, -inf};
      m.upper = {inf, inf, inf};
      break;
    case ModelKind::ExpDecay:
      m.names = {"A", "Td", "C"};
      m.lower = {-inf, 1e-12, -inf};
      m.upper = {inf, inf, inf};
      break;
    case ModelKind::Lorentzian:
      m.names = {"A", "x0", "Gamma", "C"};
      m.lower = {-inf, -inf, 1e-12, -inf};
      m.upper = {inf, inf, inf, inf};
      break;
    case ModelKind::CosineInterference:
      m.names = {"I1", "I2", "phi0"};
      m.lower = {0.0, 0.0, -inf};
      m.upper = {inf, inf, inf};
      break;
    case ModelKind::LorentzModCosine:
      m.names = {"I1", "I2", "nu0", "Gamma", "k"};
      m.lower = {0.0, 0.0, -inf, 1e-12, 0.0};
      m.upper = {inf, inf, inf, inf, inf};
      break;
    case ModelKind::HomodyneFringe:
      // A + C and A V are the only identifiable combinations; C is pinned.
      m.names = {"A", "V", "phiLO", "C"};
      m.lower = {-inf, -inf, -inf, -inf};
      m.upper = {inf, inf, inf, inf};
      break;
  }
  m.fixed.assign(m.names.size(), false);
  if (kind == ModelKind::HomodyneFringe) m.fixed[3] = true;
  return m;
}

std::size_t FitModel::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw std::invalid_argument("model has no parameter '" + std::string(name) + "'");
}

double FitModel::eval(double x, const std::vector<double>& params) const {
  if (params.size() != size()) throw std::invalid_argument("parameter count mismatch");
  const auto p = to_internal(kind, params);
  return eval_internal(kind, x, p.data());
}

void FitModel::validate() const {
  const std::size_t n = names.size();
  if (n == 0 || lower.size() != n || upper.size() != n || fixed.size() != n)
    throw std::invalid_argument("fit model parameter tables are inconsistent");
  for (std::size_t i = 0; i < n; ++i)
    if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i])
      throw std::invalid_argument("bad bounds for parameter " + names[i]);
}

double FitResult::value(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return parameters[i];
  throw std::invalid_argument("fit result has no parameter '" + std::string(name) + "'");
}

double FitResult::error(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return standard_errors[i];
  throw std::invalid_argument("fit result has no parameter '" + std::string(name) + "'");
}

FitResult nlls_solve(const FitModel& model, const FitData& data,
                     const std::vector<double>& initial, const FitControl& control) {
  model.validate();
  const std::size_t np = model.size();
  const std::size_t n = data.x.size();
  if (data.y.size() != n || (!data.sigma.empty() && data.sigma.size() != n))
    throw std::invalid_argument("x, y and sigma must have equal length");
  if (initial.size() != np) throw std::invalid_argument("initial guess has wrong length");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(data.x[i]) || !std::isfinite(data.y[i]))
      throw std::invalid_argument("fit data contains a non-finite value at row " +
                                  std::to_string(i + 1));
    if (!data.sigma.empty() && !(data.sigma[i] > 0.0 && std::isfinite(data.sigma[i])))
      throw std::invalid_argument("sigma must be positive and finite");
  }
  for (double v : initial)
    if (!std::isfinite(v)) throw std::invalid_argument("initial guess must be finite");

  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < np; ++i)
    if (!model.fixed[i]) free.push_back(i);
  const std::size_t nf = free.size();
  if (n < nf) throw std::invalid_argument("fewer data points than free parameters");

  const ModelKind kind = model.kind;
  std::vector<double> lo = to_internal(kind, model.lower), hi = model.upper;
  for (std::size_t i = 0; i < np; ++i) {
    if (is_intensity(kind, i)) {
      lo[i] = std::sqrt(std::max(0.0, model.lower[i]));
      hi[i] = std::isinf(model.upper[i]) ? inf : std::sqrt(std::max(0.0, model.upper[i]));
    } else {
      lo[i] = model.lower[i];
    }
  }
  std::vector<double> theta = to_internal(kind, initial);
  for (std::size_t i = 0; i < np; ++i) theta[i] = std::clamp(theta[i], lo[i], hi[i]);

  auto weight = [&](std::size_t i) { return data.sigma.empty() ? 1.0 : 1.0 / data.sigma[i]; };
  auto residuals = [&](const std::vector<double>& th, Eigen::VectorXd& r) {
    r.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      r(i) = (data.y[i] - eval_internal(kind, data.x[i], th.data())) * weight(i);
    return r.squaredNorm();
  };
  auto jacobian = [&](const std::vector<double>& th, Eigen::MatrixXd& J) {
    J.resize(n, nf);
    std::vector<double> tp = th, tm = th;
    for (std::size_t c = 0; c < nf; ++c) {
      const std::size_t j = free[c];
      const double h = std::max(1e-6, 1e-6 * std::abs(th[j]));
      tp[j] = th[j] + h;
      tm[j] = th[j] - h;
      for (std::size_t i = 0; i < n; ++i) {
        // derivative of the residual = -df/dtheta
        J(i, c) = -(eval_internal(kind, data.x[i], tp.data()) -
                    eval_internal(kind, data.x[i], tm.data())) /
                  (2.0 * h) * weight(i);
      }
      tp[j] = tm[j] = th[j];
    }
  };

  FitResult res;
  res.kind = kind;
  res.names = model.names;
  Eigen::VectorXd r, r_trial;
  Eigen::MatrixXd J;
  double cost = residuals(theta, r);
  if (!std::isfinite(cost)) {
    res.parameters = to_public(kind, theta);
    res.standard_errors.assign(np, inf);
    res.residual_norm = inf;
    res.message = "model is not finite at the initial guess";
    return res;
  }
  double y_scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) y_scale += std::pow(data.y[i] * weight(i), 2);
  const double cost_floor = 1e-28 * std::max(1.0, y_scale);

  double lambda = 1e-3;
  bool converged = nf == 0;
  int it = 0;
  std::string message = nf == 0 ? "all parameters fixed" : "";
  for (; it < control.max_iter && !converged; ++it) {
    if (cost <= cost_floor) {
      converged = true;
      message = "residual at numerical floor";
      break;
    }
    jacobian(theta, J);
    const Eigen::VectorXd g = J.transpose() * r;
    const Eigen::MatrixXd A = J.transpose() * J;
    if (g.lpNorm<Eigen::Infinity>() < control.tol * std::max(1.0, std::sqrt(cost))) {
      converged = true;
      message = "gradient below tolerance";
      break;
    }
    const double dmax = std::max(A.diagonal().maxCoeff(), 1e-300);
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd M = A;
      for (std::size_t c = 0; c < nf; ++c) M(c, c) += lambda * std::max(A(c, c), 1e-12 * dmax);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
      Eigen::VectorXd step;
      bool ok = ldlt.info() == Eigen::Success;
      if (ok) {
        step = ldlt.solve(-g);
        ok = step.allFinite();
      }
      if (ok) {
        std::vector<double> trial = theta;
        for (std::size_t c = 0; c < nf; ++c) {
          const std::size_t j = free[c];
          trial[j] = std::clamp(theta[j] + step(c), lo[j], hi[j]);
        }
        const double tc = residuals(trial, r_trial);
        if (std::isfinite(tc) && tc < cost) {
          const double rel = (cost - tc) / cost;
          theta = trial;
          r = r_trial;
          cost = tc;
          lambda = std::max(lambda / 5.0, 1e-12);
          accepted = true;
          if (rel < control.tol) {
            converged = true;
            message = "relative cost change below tolerance";
          }
          break;
        }
      }
      lambda *= 10.0;
      if (lambda > 1e16) break;
    }
    if (!accepted) {
      // No downhill step exists at any damping: either at the optimum to
      // machine precision or the normal equations are unusable.
      const bool flat = g.lpNorm<Eigen::Infinity>() <= 1e-8 * std::max(1.0, std::sqrt(y_scale));
      converged = flat;
      message = flat ? "no further decrease at the damping ceiling"
                     : "damping ceiling reached without decrease";
      break;
    }
  }
  if (!converged && message.empty()) message = "iteration limit reached";

  // Uncertainties from (J^T W J)^-1, scaled by the reduced chi-square when
  // no sigma was supplied.
  res.standard_errors.assign(np, 0.0);
  if (nf > 0) {
    jacobian(theta, J);
    const Eigen::MatrixXd A = J.transpose() * J;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    const double dof = static_cast<double>(n) - static_cast<double>(nf);
    const double s2 = data.sigma.empty() ? (dof > 0 ? cost / dof : 0.0) : 1.0;
    if (lu.isInvertible()) {
      const Eigen::MatrixXd cov = lu.inverse() * s2;
      for (std::size_t c = 0; c < nf; ++c) {
        const std::size_t j = free[c];
        double se = std::sqrt(std::max(0.0, cov(c, c)));
        if (is_intensity(kind, j)) se *= 2.0 * std::abs(theta[j]);
        res.standard_errors[j] = se;
      }
    } else {
      for (std::size_t c = 0; c < nf; ++c) res.standard_errors[free[c]] = inf;
    }
  }
  std::vector<double> pub = to_public(kind, theta);
  if (kind == ModelKind::CosineInterference) pub[2] = wrap_phase(pub[2]);
  if (kind == ModelKind::HomodyneFringe) pub[2] = wrap_phase(pub[2]);
  res.parameters = pub;
  res.residual_norm = std::sqrt(cost);
  res.converged = converged;
  res.iterations = it;
  res.message = message;
  return res;
}

std::vector<double> initial_guess(const FitModel& model, const FitData& d) {
  const std::size_t n = d.x.size();
  if (n == 0 || d.y.size() != n) throw std::invalid_argument("initial guess needs data");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return d.x[a] < d.x[b]; });
  const auto [ymin_it, ymax_it] = std::minmax_element(d.y.begin(), d.y.end());
  const double ymin = *ymin_it, ymax = *ymax_it;
  const double xmin = d.x[order.front()], xmax = d.x[order.back()];
  const double xrange = std::max(xmax - xmin, 1e-12);

  switch (model.kind) {
    case ModelKind::ExpDecay2T2:
    case ModelKind::ExpDecay: {
      const double first = d.y[order.front()], last = d.y[order.back()];
      const bool settled = std::abs(last - ymin) < 0.1 * std::abs(first - ymin) || ymin < 0.0;
      const double c = settled ? ymin - 1e-3 * (ymax - ymin) : 0.0;
      // log-linear regression of (y - c) over points well above the floor
      double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
      const double amp = first - c;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = (d.y[i] - c) * (amp < 0 ? -1.0 : 1.0);
        if (v > 0.05 * std::abs(amp)) {
          const double ly = std::log(v);
          sx += d.x[i]; sy += ly; sxx += d.x[i] * d.x[i]; sxy += d.x[i] * ly; m += 1;
        }
      }
      double tau = xrange / 2.0;
      double a = amp;
      if (m >= 2 && m * sxx - sx * sx > 0) {
        const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        const double icpt = (sy - slope * sx) / m;
        if (slope < 0) tau = -1.0 / slope;
        a = std::exp(icpt) * (amp < 0 ? -1.0 : 1.0);
      }
      if (model.kind == ModelKind::ExpDecay2T2) return {a, 2.0 * tau, c};
      return {a, tau, c};
    }
    case ModelKind::Lorentzian: {
      const std::size_t ip = static_cast<std::size_t>(ymax_it - d.y.begin());
      const double c = ymin, a = ymax - ymin;
      const double half = c + 0.5 * a;
      double left = xmin, right = xmax;
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = order[k];
        if (d.x[i] < d.x[ip] && d.y[i] < half) left = d.x[i];
        if (d.x[i] > d.x[ip] && d.y[i] < half) {
          right = d.x[i];
          break;
        }
      }
      const double gamma = std::max(right - left, xrange / static_cast<double>(4 * n));
      return {a, d.x[ip], gamma, c};
    }
    case ModelKind::CosineInterference: {
      const Eigen::Vector3d c = harmonic_fit(d);
      const double mean = std::max(c(0), 1e-300);
      const double b = std::min(std::hypot(c(1), c(2)), mean);
      const double disc = std::sqrt(std::max(0.0, mean * mean - b * b));
      return {0.5 * (mean + disc), 0.5 * (mean - disc), std::atan2(-c(2), c(1))};
    }
    case ModelKind::LorentzModCosine: {
      // Wings approach I1; the excess around the peak carries I2, width and k.
      const std::size_t edge = std::max<std::size_t>(1, n / 10);
      double i1 = 0.0;
      for (std::size_t k = 0; k < edge; ++k) i1 += d.y[order[k]] + d.y[order[n - 1 - k]];
      i1 = std::max(i1 / (2.0 * edge), 1e-12);
      double wsum = 0.0, centroid = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = std::abs(d.y[i] - i1);
        wsum += w;
        centroid += w * d.x[i];
      }
      const double nu0 = wsum > 0 ? centroid / wsum : 0.5 * (xmin + xmax);
      const double a2 = std::max(std::sqrt(std::max(ymax, 0.0)) - std::sqrt(i1), 1e-6);
      double span_lo = inf, span_hi = -inf, zmax = 0.0;
      for (std::size_t i = 0; i < n; ++i) zmax = std::max(zmax, std::abs(d.y[i] - i1));
      for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(d.y[i] - i1) > 0.5 * zmax) {
          span_lo = std::min(span_lo, d.x[i]);
          span_hi = std::max(span_hi, d.x[i]);
        }
      }
      const double gamma = std::isfinite(span_lo) && span_hi > span_lo
                               ? (span_hi - span_lo) / 1.7
                               : xrange / 4.0;
      // dominant oscillation of the excess
      double best_k = 0.0, best_p = -1.0;
      const double dx = xrange / static_cast<double>(std::max<std::size_t>(n - 1, 1));
      const double kmax = pi / dx;
      for (int s = 1; s <= 400; ++s) {
        const double k = kmax * s / 400.0;
        double cr = 0.0;
        for (std::size_t i = 0; i < n; ++i) cr += (d.y[i] - i1) * std::cos(k * d.x[i]);
        if (std::abs(cr) > best_p) {
          best_p = std::abs(cr);
          best_k = k;
        }
      }
      return {i1, a2 * a2, nu0, gamma, best_k};
    }
    case ModelKind::HomodyneFringe: {
      const Eigen::Vector3d c = harmonic_fit(d);
      const double cfix = 0.0;
      const double a = c(0) - cfix;
      const double b = std::hypot(c(1), c(2));
      return {a, a != 0.0 ? b / a : 0.0, std::atan2(-c(2), c(1)), cfix};
    }
  }
  return {};
}

double visibility(double i1, double i2) {
  if (!(i1 >= 0.0) || !(i2 >= 0.0)) throw std::invalid_argument("intensities must be >= 0");
  if (i1 + i2 == 0.0) throw std::domain_error("visibility undefined for zero total intensity");
  return 2.0 * std::sqrt(i1 * i2) / (i1 + i2);
}

double linear_r_squared(const std::vector<double>& x, const std::vector<double>& y,
                        bool through_origin) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw std::invalid_argument("need at least two points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double slope, icpt;
  if (through_origin) {
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += x[i] * y[i];
      sxx += x[i] * x[i];
    }
    slope = sxy / sxx;
    icpt = 0.0;
  } else {
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
    }
    slope = sxy / sxx;
    icpt = my - slope * mx;
  }
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ss_res += std::pow(y[i] - (slope * x[i] + icpt), 2);
    ss_tot += std::pow(y[i] - my, 2);
  }
  return ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
}

} // namespace echosim
