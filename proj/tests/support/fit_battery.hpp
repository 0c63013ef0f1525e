#pragma once

// Synthetic data sets with known parameters, one per model kind.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "echosim/fitting.hpp"

namespace battery {

struct Case {
  echosim::ModelKind kind;
  std::vector<double> truth;
  double x0, x1;
  int n;
};

inline std::vector<Case> cases() {
  using echosim::ModelKind;
  return {
      {ModelKind::ExpDecay2T2, {0.02, 475.0, 1e-4}, 460.0, 1460.0, 11},
      {ModelKind::ExpDecay, {0.015, 0.53, 2e-4}, 0.0, 6.0, 25},
      {ModelKind::Lorentzian, {0.02, 0.05, 0.642, 1e-3}, -3.0, 3.0, 61},
      {ModelKind::CosineInterference, {0.0196, 0.00079, 0.4}, -3.14159, 3.14159, 37},
      {ModelKind::LorentzModCosine, {0.01, 0.012, 0.03, 0.2, 9.0}, -0.5, 0.5, 101},
      {ModelKind::HomodyneFringe, {0.5, 0.7, 1.0, 0.0}, 0.0, 6.28318, 37},
  };
}

inline echosim::FitData sample(const Case& c, double noise = 0.0, std::uint64_t seed = 1) {
  const echosim::FitModel m = echosim::FitModel::make(c.kind);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  echosim::FitData d;
  double ymax = 0.0;
  for (int i = 0; i < c.n; ++i) {
    const double x = c.x0 + (c.x1 - c.x0) * i / (c.n - 1);
    d.x.push_back(x);
    d.y.push_back(m.eval(x, c.truth));
    ymax = std::max(ymax, std::abs(d.y.back()));
  }
  if (noise > 0.0)
    for (double& y : d.y) y += noise * ymax * nd(rng);
  return d;
}

inline echosim::FitResult fit(const Case& c, const echosim::FitData& d) {
  const echosim::FitModel m = echosim::FitModel::make(c.kind);
  return echosim::nlls_solve(m, d, echosim::initial_guess(m, d));
}

/// Largest relative parameter error; the cosine model is symmetric in
/// (I1, I2) so those are compared as an unordered pair, and zero-valued
/// truths are compared absolutely against the data scale.
inline double worst_relative_error(const Case& c, const echosim::FitResult& r) {
  std::vector<double> got = r.parameters, want = c.truth;
  if (c.kind == echosim::ModelKind::CosineInterference && got[0] < got[1]) std::swap(got[0], got[1]);
  double worst = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    const double scale = want[i] != 0.0 ? std::abs(want[i]) : 1.0;
    worst = std::max(worst, std::abs(got[i] - want[i]) / scale);
  }
  return worst;
}

} // namespace battery
