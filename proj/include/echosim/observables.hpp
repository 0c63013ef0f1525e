#pragma once

#include <array>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "echosim/dynamics.hpp"
#include "echosim/ensemble.hpp"

namespace echosim {

/// Collective coherences and populations sampled over a run. Coherence (i,j)
/// is stored as x + i y with x = 2 Re(conj(c_i) c_j), y = 2 Im(conj(c_i) c_j),
/// weighted over the grid.
struct TraceSet {
  std::vector<double> times;
  std::vector<cplx> s12, s13, s23;
  std::vector<double> p1, p2, p3;
  bool weights_applied = true;
  bool dephasing_applied = false;

  std::size_t size() const { return times.size(); }
  const std::vector<cplx>& coherence(int i, int j) const;
};

struct EchoMetric {
  double peak_time = 0.0;
  double peak_amplitude = 0.0;
  double window_start = 0.0;
  double window_end = 0.0;
  double integrated_magnitude = 0.0;
};

/// Raised when a Bloch sub-vector is requested for an unpopulated sub-system.
class EmptySubspace : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Collective coherence on levels (i, j), 1-based, with the trajectory's
/// dephasing envelope applied. i > j returns the conjugate series.
std::vector<cplx> collective_coherence(const EnsembleTrajectory& trajectory, int i, int j);

/// Weighted populations of levels 1..3.
std::array<std::vector<double>, 3> populations(const EnsembleTrajectory& trajectory);

TraceSet make_traces(const EnsembleTrajectory& trajectory);

/// Unit Bloch vector of the normalized sub-state on levels (i, j), 1-based.
std::array<double, 3> bloch_subvector(const ThreeLevelState& state, int i, int j);

/// Peak of |trace| inside [t_a, t_b] with parabolic refinement, plus the
/// trapezoid integral of |trace|.
EchoMetric detect_echo(const std::vector<double>& times, const std::vector<cplx>& trace,
                       double t_a, double t_b);

/// Trace CSV (time_us, re_s12, im_s12, re_s13, im_s13, re_s23, im_s23, p1, p2, p3).
void write_trace_csv(std::ostream& os, const TraceSet& traces);

/// Bloch snapshot CSV rows (atom_index, delta13, delta23, transition, x, y, z).
/// Rows for empty sub-systems are skipped.
void write_bloch_csv(std::ostream& os, const AtomGrid& grid,
                     const std::vector<ThreeLevelState>& states);

} // namespace echosim
