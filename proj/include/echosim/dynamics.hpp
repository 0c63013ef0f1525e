#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "echosim/ensemble.hpp"
#include "echosim/pulsegen.hpp"

namespace echosim {

/// Optional phenomenological T2 per transition (us). Applied as an envelope on
/// the collective coherences, never to the state vectors.
struct DephasingTimes {
  std::optional<double> t2_12;
  std::optional<double> t2_13;
  std::optional<double> t2_23;

  bool any() const { return t2_12 || t2_13 || t2_23; }
  /// Transition index: 0 -> (1,2), 1 -> (1,3), 2 -> (2,3).
  std::optional<double> for_pair(int pair) const;
};

struct Sequence {
  std::vector<PulseSegment> segments;
  std::vector<double> sample_times;
  DephasingTimes dephasing;

  /// Earliest segment start or sample time; the initial state is defined here.
  double start_time() const;
  /// Total time in [start_time(), t] during which no drive is active.
  double free_time_until(double t) const;
  void validate() const;
};

struct IntegratorControl {
  /// Hard cap on the RK4 step (us).
  double dt_max = 0.01;
  /// Per-interval step-doubling tolerance checked on extremal probe atoms.
  double tol = 1e-10;
  /// Steps per radian of the fastest rate in the interval (the "50" rule).
  double oversampling = 50.0;
};

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Hamiltonian = Eigen::Matrix3cd;

/// Off-diagonal drive elements H(0,1), H(0,2), H(1,2) at time t.
struct DriveValues {
  cplx v12{};
  cplx v13{};
  cplx v23{};
};

DriveValues drive_at(double t, std::span<const PulseSegment> active);

/// Rotating-frame Hamiltonian H0 + sum of the active interaction terms (rad/us).
Hamiltonian hamiltonian_at(double t, std::span<const PulseSegment> active, double delta13,
                           double delta23);

/// Single atom: states at every sample time of `sequence`.
std::vector<ThreeLevelState> propagate(const ThreeLevelState& state, const Sequence& sequence,
                                       double delta13, double delta23,
                                       const IntegratorControl& control = {});

struct RunOptions {
  unsigned workers = 1;
  /// Atoms per work item. Fixed independently of `workers` so reductions are
  /// bit-identical for any worker count.
  std::size_t chunk_size = 256;
  /// Times at which every atom's full state is kept.
  std::vector<double> snapshot_times;
  ThreeLevelState initial = ground_state();
};

/// Streaming reduction of an ensemble run: weighted sums at each sample time.
struct EnsembleTrajectory {
  std::vector<double> times;
  /// 2 * sum_k w_k conj(c_i) c_j for pairs (1,2), (1,3), (2,3), without dephasing.
  std::vector<std::array<cplx, 3>> coherence;
  /// sum_k w_k |c_i|^2.
  std::vector<std::array<double, 3>> population;
  /// Accumulated drive-free time at each sample (for dephasing envelopes).
  std::vector<double> free_time;
  DephasingTimes dephasing;

  std::vector<double> snapshot_times;
  /// snapshots[s][k]: state of atom k at snapshot_times[s].
  std::vector<std::vector<ThreeLevelState>> snapshots;

  /// max over atoms and samples of | |c|^2 - 1 |.
  double max_norm_drift = 0.0;
  std::size_t rk4_steps = 0;
  std::size_t atoms = 0;
};

EnsembleTrajectory run_ensemble(const AtomGrid& grid, const Sequence& sequence,
                                const IntegratorControl& control = {},
                                const RunOptions& options = {});

/// Worker count from ECHOSIM_WORKERS, or 1.
unsigned default_workers();

} // namespace echosim
