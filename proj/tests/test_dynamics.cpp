#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <random>
#include <sstream>

#include "echosim/dynamics.hpp"
#include "echosim/experiments.hpp"
#include "echosim/observables.hpp"
#include "echosim/units.hpp"
#include "support/oracle.hpp"

using namespace echosim;
using units::pi;
using units::two_pi;

namespace {

PulseSegment pulse(Transition tr, EnvelopeShape shape, double t0, double dur, double area) {
  PulseSegment s;
  s.transition = tr;
  s.envelope = shape;
  s.t_start = t0;
  s.duration = dur;
  s.peak_rabi = rabi_for_area(shape, dur, area);
  return s;
}

std::string trace_csv(const EnsembleTrajectory& tr) {
  std::ostringstream os;
  write_trace_csv(os, make_traces(tr));
  return os.str();
}

} // namespace

TEST_CASE("resonant pi pulses invert their transition") {
  for (auto shape : {EnvelopeShape::square(), EnvelopeShape::sinc(), EnvelopeShape::gaussian()}) {
    Sequence seq;
    seq.segments = {pulse(Transition::Pump, shape, 0.0, 2.0, pi)};
    seq.sample_times = {2.0};
    const auto s = propagate(ground_state(), seq, 0.0, 0.0);
    CHECK(std::norm(s[0][2]) == doctest::Approx(1.0).epsilon(1e-9));

    seq.segments = {pulse(Transition::MW, shape, 0.0, 2.0, pi)};
    ThreeLevelState mid;
    mid.c = {cplx{}, cplx{1.0, 0.0}, cplx{}};
    const auto m = propagate(mid, seq, 0.0, 0.0);
    CHECK(std::norm(m[0][2]) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("pi/2 pump leaves an equal superposition with the drive phase") {
  Sequence seq;
  PulseSegment p = pulse(Transition::Pump, EnvelopeShape::sinc(), -2.0, 4.0, pi / 2);
  p.phase = 0.4;
  seq.segments = {p};
  seq.sample_times = {2.0};
  const auto s = propagate(ground_state(), seq, 0.0, 0.0);
  CHECK(std::norm(s[0][0]) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(std::norm(s[0][2]) == doctest::Approx(0.5).epsilon(1e-9));
  // H(0,2) = (W/2) e^{i phi}: c3 = -i e^{-i phi} sin(A/2)
  const cplx expect = cplx{0.0, -1.0} * std::polar(std::sqrt(0.5), -0.4);
  CHECK(std::abs(s[0][2] - expect) < 1e-9);
}

TEST_CASE("adiabatic chirp transfers the ground state") {
  Sequence seq;
  PulseSegment r;
  r.transition = Transition::RAP;
  r.envelope = EnvelopeShape::sinc();
  r.t_start = 0.0;
  r.duration = 60.0;
  r.peak_rabi = 5.0 * units::angular_from_mhz(0.03);
  r.chirp_bandwidth = units::angular_from_mhz(1.5);
  seq.segments = {r};
  seq.sample_times = {60.0};
  for (double d : {0.0, 0.05, -0.05}) {
    const auto s = propagate(ground_state(), seq, 0.0, units::angular_from_mhz(d));
    CHECK(std::norm(s[0][1]) > 0.98);
  }
  // transfer improves with the adiabaticity factor
  double last = 0.0;
  for (double k : {1.0, 2.5, 5.0, 10.0}) {
    seq.segments[0].peak_rabi = k * units::angular_from_mhz(0.03);
    const double p = std::norm(propagate(ground_state(), seq, 0.0, 0.0)[0][1]);
    CHECK(p > last);
    last = p;
  }
  CHECK(last > 0.999);
}

TEST_CASE("free evolution is a pure phase") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto psi = oracle::random_state(rng);
    ThreeLevelState s0;
    for (int k = 0; k < 3; ++k) s0[k] = psi(k);
    Sequence seq;
    seq.sample_times = {0.0, 7.3};
    const double d13 = 0.3 * i - 2.0, d23 = 1.1 - 0.2 * i;
    const auto s = propagate(s0, seq, d13, d23);
    const double t = 7.3;
    CHECK(std::abs(s[1][0] - s0[0]) < 1e-12);
    CHECK(std::abs(s[1][1] - s0[1] * std::polar(1.0, -(d23 - d13) * t)) < 1e-9);
    CHECK(std::abs(s[1][2] - s0[2] * std::polar(1.0, d13 * t)) < 1e-9);
  }
}

TEST_CASE("hamiltonian is hermitian and matches the drive values") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const Sequence seq = oracle::random_sequence(rng);
    const double t = seq.sample_times.back() * 0.5;
    const Hamiltonian h = hamiltonian_at(t, seq.segments, 0.7, -0.3);
    CHECK((h - h.adjoint()).norm() < 1e-15);
    CHECK((h - oracle::hamiltonian(t, seq.segments, 0.7, -0.3)).norm() < 1e-12);
    const DriveValues v = drive_at(t, seq.segments);
    CHECK(h(0, 1) == v.v12);
    CHECK(h(0, 2) == v.v13);
    CHECK(h(1, 2) == v.v23);
  }
}

TEST_CASE("agrees with the matrix-exponential reference on random sequences") {
  const auto st = oracle::compare_random(100, 20240601);
  CHECK(st.sequences == 100);
  CHECK(st.max_error <= 1e-6);
}

TEST_CASE("norm is conserved") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 30; ++i) {
    const Sequence seq = oracle::random_sequence(rng);
    const auto psi = oracle::random_state(rng);
    ThreeLevelState s0;
    for (int k = 0; k < 3; ++k) s0[k] = psi(k);
    for (const auto& s : propagate(s0, seq, 1.0, -1.0)) CHECK(std::abs(s.norm_squared() - 1.0) <= 1e-9);
  }
}

TEST_CASE("ensemble run is independent of the worker count") {
  ProtocolConfig c = ProtocolConfig::baseline();
  c.grid.m_optical = 23;
  c.grid.m_spin = 17;
  Sequence seq = build_sequence(c);
  seq.sample_times.clear();
  for (double t = -5.0; t <= 480.0; t += 2.5) seq.sample_times.push_back(t);
  const AtomGrid g = c.grid.build();
  RunOptions o;
  o.chunk_size = 32;
  std::string ref;
  for (unsigned w : {1u, 4u, 16u}) {
    o.workers = w;
    const auto tr = run_ensemble(g, seq, c.integrator, o);
    CHECK(tr.max_norm_drift <= 1e-9);
    const std::string csv = trace_csv(tr);
    if (ref.empty()) ref = csv;
    CHECK(csv == ref);
  }
}

TEST_CASE("snapshots hold every atom") {
  const AtomGrid g = build_grid(5, 4, {ProfileKind::Gaussian, 0.1, 0.0}, {ProfileKind::Lorentzian, 0.1, 0.0}, 0.0, 0.0);
  Sequence seq;
  seq.segments = {pulse(Transition::Pump, EnvelopeShape::square(), 0.0, 1.0, pi / 2)};
  seq.sample_times = {0.0, 1.0, 3.0};
  RunOptions o;
  o.snapshot_times = {1.0, 2.0};
  const auto tr = run_ensemble(g, seq, {}, o);
  REQUIRE(tr.snapshots.size() == 2);
  CHECK(tr.snapshots[0].size() == g.size());
  // snapshot at a sample time agrees with the single-atom propagation
  const auto s = propagate(ground_state(), seq, g.d13(7), g.d23(7));
  CHECK(std::abs(tr.snapshots[0][7][2] - s[1][2]) < 1e-10);
  CHECK(tr.atoms == g.size());
}

TEST_CASE("free time excludes driven intervals") {
  Sequence seq;
  seq.segments = {pulse(Transition::Pump, EnvelopeShape::square(), 0.0, 2.0, 1.0),
                  pulse(Transition::MW, EnvelopeShape::square(), 1.0, 2.0, 1.0),
                  pulse(Transition::RAP, EnvelopeShape::square(), 10.0, 5.0, 1.0)};
  seq.sample_times = {20.0};
  CHECK(seq.start_time() == 0.0);
  CHECK(seq.free_time_until(3.0) == doctest::Approx(0.0));
  CHECK(seq.free_time_until(12.0) == doctest::Approx(7.0));
  CHECK(seq.free_time_until(20.0) == doctest::Approx(12.0));
}

TEST_CASE("invalid inputs") {
  Sequence seq;
  seq.sample_times = {2.0, 1.0};
  CHECK_THROWS_AS(seq.validate(), std::invalid_argument);
  seq.sample_times = {1.0, 2.0};
  seq.dephasing.t2_12 = -1.0;
  CHECK_THROWS_AS(seq.validate(), std::invalid_argument);
  seq.dephasing.t2_12.reset();
  IntegratorControl bad;
  bad.dt_max = 0.0;
  CHECK_THROWS_AS(run_ensemble(AtomGrid::single(), seq, bad), std::invalid_argument);
  RunOptions o;
  o.chunk_size = 0;
  CHECK_THROWS_AS(run_ensemble(AtomGrid::single(), seq, {}, o), std::invalid_argument);
  CHECK_THROWS_AS(DephasingTimes{}.for_pair(3), std::invalid_argument);
}
