#include "echosim/observables.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "echosim/csv.hpp"

namespace echosim {

namespace {

// Pair index for 1-based levels: (1,2) -> 0, (1,3) -> 1, (2,3) -> 2.
int pair_index(int i, int j) {
  if (i < 1 || i > 3 || j < 1 || j > 3 || i == j)
    throw std::invalid_argument("level indices must be distinct values in {1, 2, 3}");
  const int lo = std::min(i, j), hi = std::max(i, j);
  if (lo == 1) return hi == 2 ? 0 : 1;
  return 2;
}

} // namespace

const std::vector<cplx>& TraceSet::coherence(int i, int j) const {
  switch (pair_index(i, j)) {
    case 0: return s12;
    case 1: return s13;
    default: return s23;
  }
}

std::vector<cplx> collective_coherence(const EnsembleTrajectory& tr, int i, int j) {
  const int p = pair_index(i, j);
  const auto t2 = tr.dephasing.for_pair(p);
  std::vector<cplx> out(tr.coherence.size());
  for (std::size_t s = 0; s < out.size(); ++s) {
    cplx v = tr.coherence[s][p];
    if (t2) v *= std::exp(-tr.free_time[s] / *t2);
    out[s] = i < j ? v : std::conj(v);
  }
  return out;
}

std::array<std::vector<double>, 3> populations(const EnsembleTrajectory& tr) {
  std::array<std::vector<double>, 3> out;
  for (auto& v : out) v.resize(tr.population.size());
  for (std::size_t s = 0; s < tr.population.size(); ++s)
    for (int l = 0; l < 3; ++l) out[l][s] = tr.population[s][l];
  return out;
}

TraceSet make_traces(const EnsembleTrajectory& tr) {
  TraceSet t;
  t.times = tr.times;
  t.s12 = collective_coherence(tr, 1, 2);
  t.s13 = collective_coherence(tr, 1, 3);
  t.s23 = collective_coherence(tr, 2, 3);
  auto p = populations(tr);
  t.p1 = std::move(p[0]);
  t.p2 = std::move(p[1]);
  t.p3 = std::move(p[2]);
  t.dephasing_applied = tr.dephasing.any();
  return t;
}

std::array<double, 3> bloch_subvector(const ThreeLevelState& s, int i, int j) {
  pair_index(i, j);
  const cplx ci = s[i - 1], cj = s[j - 1];
  const double n = std::norm(ci) + std::norm(cj);
  if (!(n > 1e-12)) throw EmptySubspace("sub-system has no population");
  const cplx x = std::conj(ci) * cj;
  return {2.0 * x.real() / n, 2.0 * x.imag() / n, (std::norm(ci) - std::norm(cj)) / n};
}

EchoMetric detect_echo(const std::vector<double>& times, const std::vector<cplx>& trace,
                       double t_a, double t_b) {
  if (times.size() != trace.size())
    throw std::invalid_argument("trace and time axis differ in length");
  if (!(t_b >= t_a)) throw std::invalid_argument("echo window is reversed");
  std::size_t lo = std::lower_bound(times.begin(), times.end(), t_a) - times.begin();
  std::size_t hi = std::upper_bound(times.begin(), times.end(), t_b) - times.begin();
  if (lo >= hi) throw std::invalid_argument("echo window contains no samples");

  EchoMetric m;
  m.window_start = t_a;
  m.window_end = t_b;
  std::size_t best = lo;
  for (std::size_t k = lo; k < hi; ++k) {
    if (std::abs(trace[k]) > std::abs(trace[best])) best = k;
    if (k > lo) {
      m.integrated_magnitude +=
          0.5 * (std::abs(trace[k]) + std::abs(trace[k - 1])) * (times[k] - times[k - 1]);
    }
  }
  m.peak_amplitude = std::abs(trace[best]);
  m.peak_time = times[best];
  if (best > lo && best + 1 < hi) {
    const double x0 = times[best - 1], x1 = times[best], x2 = times[best + 1];
    const double y0 = std::abs(trace[best - 1]), y1 = m.peak_amplitude,
                 y2 = std::abs(trace[best + 1]);
    const double d0 = (y1 - y0) / (x1 - x0), d1 = (y2 - y1) / (x2 - x1);
    const double curv = (d1 - d0) / (x2 - x0);
    if (curv < 0.0) {
      const double vertex = 0.5 * (x0 + x1) - d0 / (2.0 * curv);
      m.peak_time = std::clamp(vertex, x0, x2);
    }
  }
  return m;
}

void write_trace_csv(std::ostream& os, const TraceSet& t) {
  csv::write_header(os,
                    {"time_us", "re_s12", "im_s12", "re_s13", "im_s13", "re_s23", "im_s23", "p1",
                     "p2", "p3"},
                    {"us", "", "", "", "", "", "", "", "", ""},
                    {"collective coherences 2*sum w conj(c_i) c_j and populations"});
  for (std::size_t s = 0; s < t.size(); ++s) {
    csv::write_row(os, {t.times[s], t.s12[s].real(), t.s12[s].imag(), t.s13[s].real(),
                        t.s13[s].imag(), t.s23[s].real(), t.s23[s].imag(), t.p1[s], t.p2[s],
                        t.p3[s]});
  }
}

void write_bloch_csv(std::ostream& os, const AtomGrid& grid,
                     const std::vector<ThreeLevelState>& states) {
  if (states.size() != grid.size())
    throw std::invalid_argument("state count does not match the grid");
  csv::write_header(os, {"atom_index", "delta13", "delta23", "transition", "x", "y", "z"},
                    {"", "rad/us", "rad/us", "ij", "", "", ""},
                    {"normalized sub-system Bloch vectors; transition 13 pump, 23 MW, 12 RAP"});
  const int pairs[3][2] = {{1, 3}, {2, 3}, {1, 2}};
  for (std::size_t k = 0; k < states.size(); ++k) {
    for (const auto& p : pairs) {
      std::array<double, 3> v;
      try {
        v = bloch_subvector(states[k], p[0], p[1]);
      } catch (const EmptySubspace&) {
        continue;
      }
      csv::write_row(os, {static_cast<double>(k), grid.d13(k), grid.d23(k),
                          static_cast<double>(10 * p[0] + p[1]), v[0], v[1], v[2]});
    }
  }
}

} // namespace echosim
