#pragma once

// Reference propagator for the drive model, built directly from the segment
// list and stepped with a fourth-order commutator-free Magnus scheme using
// dense matrix exponentials. Shares nothing with the RK4 kernels beyond the
// envelope and chirp helpers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "echosim/dynamics.hpp"
#include "echosim/units.hpp"

namespace oracle {

using echosim::cplx;
using echosim::EnvelopeKind;
using echosim::PulseSegment;
using echosim::Transition;

inline Eigen::Matrix3cd hamiltonian(double t, const std::vector<PulseSegment>& segs, double d13,
                                    double d23) {
  Eigen::Matrix3cd h = Eigen::Matrix3cd::Zero();
  h(1, 1) = d23 - d13;
  h(2, 2) = -d13;
  for (const auto& s : segs) {
    if (s.transition == Transition::Gap || t < s.t_start || t > s.t_end()) continue;
    const double u = (t - s.center()) / s.duration;
    double env = 1.0;
    if (s.envelope.kind == EnvelopeKind::Sinc) {
      const double x = echosim::units::pi * 2.0 * u;
      env = std::abs(x) < 1e-12 ? 1.0 : std::sin(x) / x;
    } else if (s.envelope.kind == EnvelopeKind::Gaussian) {
      const double z = u / s.envelope.gaussian_sigma_fraction;
      env = std::exp(-0.5 * z * z);
    }
    const double a = 0.5 * s.peak_rabi * env;
    const double tc = t - s.center();
    switch (s.transition) {
      case Transition::Pump:
        h(0, 2) += std::polar(a, s.phase - s.carrier_detuning * t);
        break;
      case Transition::MW:
        h(1, 2) += std::polar(a, s.phase - s.carrier_detuning * t);
        break;
      case Transition::RAP:
        h(0, 1) += std::polar(a, -(s.chirp_bandwidth / s.duration * tc * tc + s.phase +
                                   s.carrier_detuning * t));
        break;
      case Transition::Gap: break;
    }
  }
  h(1, 0) = std::conj(h(0, 1));
  h(2, 0) = std::conj(h(0, 2));
  h(2, 1) = std::conj(h(1, 2));
  return h;
}

/// States at seq.sample_times, `substeps` Magnus steps in total spread over
/// the pieces between segment edges and sample times.
inline std::vector<Eigen::Vector3cd> propagate(const Eigen::Vector3cd& psi0,
                                               const echosim::Sequence& seq, double d13,
                                               double d23, int substeps = 10000) {
  std::vector<double> cuts = seq.sample_times;
  for (const auto& s : seq.segments) {
    cuts.push_back(s.t_start);
    cuts.push_back(s.t_end());
  }
  const double t0 = seq.start_time();
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  cuts.erase(std::remove_if(cuts.begin(), cuts.end(), [&](double c) { return c < t0; }),
             cuts.end());
  const double total = cuts.back() - t0;

  const double g = std::sqrt(3.0) / 6.0;
  const double a1 = (3.0 - 2.0 * std::sqrt(3.0)) / 12.0;
  const double a2 = (3.0 + 2.0 * std::sqrt(3.0)) / 12.0;
  const cplx mi{0.0, -1.0};

  Eigen::Vector3cd psi = psi0;
  double t = t0;
  std::vector<std::pair<double, Eigen::Vector3cd>> at;
  at.emplace_back(t, psi);
  for (double c : cuts) {
    if (c <= t) continue;
    const int n = std::max(1, static_cast<int>(std::ceil(substeps * (c - t) / total)));
    const double h = (c - t) / n;
    for (int k = 0; k < n; ++k) {
      const double tm = t + (k + 0.5) * h;
      const Eigen::Matrix3cd h1 = hamiltonian(tm - g * h, seq.segments, d13, d23);
      const Eigen::Matrix3cd h2 = hamiltonian(tm + g * h, seq.segments, d13, d23);
      const Eigen::Matrix3cd e1 = (mi * h * (a2 * h1 + a1 * h2)).exp();
      const Eigen::Matrix3cd e2 = (mi * h * (a1 * h1 + a2 * h2)).exp();
      psi = e2 * (e1 * psi);
    }
    t = c;
    at.emplace_back(t, psi);
  }
  std::vector<Eigen::Vector3cd> out;
  for (double ts : seq.sample_times) {
    for (const auto& [tt, v] : at) {
      if (tt == ts) {
        out.push_back(v);
        break;
      }
    }
  }
  return out;
}

/// A short random drive sequence with mixed transitions, envelopes and
/// overlaps, plus random sample times.
inline echosim::Sequence random_sequence(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double w = echosim::units::two_pi;
  echosim::Sequence seq;
  const int n = 1 + static_cast<int>(u(rng) * 3.0);
  double t = 0.0;
  for (int i = 0; i < n; ++i) {
    PulseSegment s;
    const double r = u(rng);
    s.transition = r < 0.34 ? Transition::Pump : r < 0.67 ? Transition::MW : Transition::RAP;
    const double e = u(rng);
    s.envelope = e < 0.34   ? echosim::EnvelopeShape::square()
                 : e < 0.67 ? echosim::EnvelopeShape::sinc()
                            : echosim::EnvelopeShape::gaussian(0.15 + 0.2 * u(rng));
    s.t_start = t;
    s.duration = 0.5 + 2.5 * u(rng);
    s.peak_rabi = w * (0.1 + 0.9 * u(rng));
    s.carrier_detuning = w * (u(rng) - 0.5);
    s.phase = w * u(rng);
    if (s.transition == Transition::RAP) s.chirp_bandwidth = w * 1.5 * u(rng);
    seq.segments.push_back(s);
    // next pulse starts before, at or after this one ends
    t = s.t_start + s.duration * (0.3 + 1.2 * u(rng));
  }
  double end = 0.0;
  for (const auto& s : seq.segments) end = std::max(end, s.t_end());
  const int ns = 2 + static_cast<int>(u(rng) * 3.0);
  for (int i = 0; i < ns; ++i) seq.sample_times.push_back((end + 1.0) * u(rng));
  seq.sample_times.push_back(end + 1.0);
  std::sort(seq.sample_times.begin(), seq.sample_times.end());
  return seq;
}

inline Eigen::Vector3cd random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::Vector3cd v;
  for (int i = 0; i < 3; ++i) v(i) = cplx{nd(rng), nd(rng)};
  return v.normalized();
}

struct OracleStats {
  int sequences = 0;
  double max_error = 0.0;
};

/// Compares propagate() with the Magnus reference over `count` random
/// sequences, each with a random initial state and random detunings. Returns
/// the largest amplitude error over all samples.
inline OracleStats compare_random(int count, std::uint64_t seed,
                                  const echosim::IntegratorControl& ctl = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  OracleStats st;
  for (int i = 0; i < count; ++i) {
    const echosim::Sequence seq = random_sequence(rng);
    const Eigen::Vector3cd psi = random_state(rng);
    const double d13 = echosim::units::two_pi * 0.5 * u(rng);
    const double d23 = echosim::units::two_pi * 0.5 * u(rng);
    echosim::ThreeLevelState s0;
    for (int k = 0; k < 3; ++k) s0[k] = psi(k);
    const auto got = echosim::propagate(s0, seq, d13, d23, ctl);
    const auto ref = propagate(psi, seq, d13, d23);
    for (std::size_t j = 0; j < ref.size(); ++j)
      for (int k = 0; k < 3; ++k) st.max_error = std::max(st.max_error, std::abs(got[j][k] - ref[j](k)));
    ++st.sequences;
  }
  return st;
}

} // namespace oracle
