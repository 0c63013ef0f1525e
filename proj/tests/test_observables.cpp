#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <random>
#include <sstream>

#include "echosim/csv.hpp"
#include "echosim/observables.hpp"
#include "echosim/units.hpp"
#include "support/oracle.hpp"

using namespace echosim;

TEST_CASE("parabolic refinement locates a sampled peak") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const double tp = 450.0 + 20.0 * u(rng), w = 2.0 + 3.0 * u(rng), a = 0.1 + u(rng);
    std::vector<double> t;
    std::vector<cplx> y;
    for (double s = 400.0; s <= 520.0; s += 0.5) {
      t.push_back(s);
      y.push_back(std::polar(a * std::exp(-0.5 * std::pow((s - tp) / w, 2)), 0.3 * s));
    }
    const EchoMetric m = detect_echo(t, y, 440.0, 480.0);
    CHECK(std::abs(m.peak_time - tp) < 0.02);
    CHECK(m.peak_amplitude <= a);
    CHECK(m.peak_amplitude > 0.98 * a);
    // trapezoid of a Gaussian well inside the window
    if (tp - 440.0 > 5 * w && 480.0 - tp > 5 * w)
      CHECK(m.integrated_magnitude == doctest::Approx(a * w * std::sqrt(units::two_pi)).epsilon(1e-4));
  }
}

TEST_CASE("peak at the window edge is not refined") {
  const std::vector<double> t{0.0, 1.0, 2.0, 3.0};
  const std::vector<cplx> y{1.0, 2.0, 3.0, 4.0};
  const EchoMetric m = detect_echo(t, y, 0.0, 2.0);
  CHECK(m.peak_time == 2.0);
  CHECK(m.peak_amplitude == 3.0);
  CHECK(m.integrated_magnitude == doctest::Approx(4.0));
  CHECK_THROWS_AS(detect_echo(t, y, 2.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(detect_echo(t, y, 10.0, 11.0), std::invalid_argument);
  CHECK_THROWS_AS(detect_echo(t, {1.0}, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("Bloch sub-vectors are unit vectors") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto psi = oracle::random_state(rng);
    ThreeLevelState s;
    for (int k = 0; k < 3; ++k) s[k] = psi(k);
    for (auto [a, b] : {std::pair{1, 2}, std::pair{1, 3}, std::pair{2, 3}, std::pair{3, 1}}) {
      const auto v = bloch_subvector(s, a, b);
      CHECK(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("Bloch sub-vector of an empty sub-system") {
  ThreeLevelState s;
  s.c = {cplx{}, cplx{}, cplx{1.0, 0.0}};
  CHECK_THROWS_AS(bloch_subvector(s, 1, 2), EmptySubspace);
  const auto v = bloch_subvector(s, 1, 3);
  CHECK(v[2] == doctest::Approx(-1.0));
  CHECK_THROWS_AS(bloch_subvector(s, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(bloch_subvector(s, 0, 2), std::invalid_argument);

  std::ostringstream os;
  write_bloch_csv(os, AtomGrid::single(), {s});
  std::istringstream is(os.str());
  const auto t = csv::read_numeric(is);
  // (1,3) and (2,3) are populated, (1,2) is skipped
  CHECK(t.rows.size() == 2);
  CHECK_THROWS_AS(write_bloch_csv(os, AtomGrid::single(), {}), std::invalid_argument);
}

TEST_CASE("collective coherence from a hand-built trajectory") {
  EnsembleTrajectory tr;
  tr.times = {0.0, 10.0};
  tr.free_time = {0.0, 10.0};
  tr.coherence = {{cplx{0.2, 0.1}, cplx{0.0, 0.3}, cplx{-0.1, 0.0}},
                  {cplx{0.4, -0.2}, cplx{0.1, 0.1}, cplx{0.0, 0.2}}};
  tr.population = {{1.0, 0.0, 0.0}, {0.5, 0.25, 0.25}};
  tr.dephasing.t2_12 = 20.0;

  const auto s12 = collective_coherence(tr, 1, 2);
  CHECK(s12[0] == tr.coherence[0][0]);
  CHECK(std::abs(s12[1] - tr.coherence[1][0] * std::exp(-0.5)) < 1e-15);
  const auto s21 = collective_coherence(tr, 2, 1);
  CHECK(s21[1] == std::conj(s12[1]));
  const auto s23 = collective_coherence(tr, 2, 3);
  CHECK(s23[1] == tr.coherence[1][2]);

  const TraceSet ts = make_traces(tr);
  CHECK(ts.dephasing_applied);
  CHECK(ts.p2[1] == 0.25);
  CHECK(&ts.coherence(3, 1) == &ts.s13);
  CHECK_THROWS_AS(ts.coherence(1, 4), std::invalid_argument);
}

TEST_CASE("ensemble coherence matches a weighted sum over atoms") {
  const AtomGrid g = AtomGrid::from_axes({0.0, 1.5}, {-0.5, 0.25, 2.0}, {1, 2, 3, 4, 5, 6});
  Sequence seq;
  PulseSegment p;
  p.transition = Transition::Pump;
  p.envelope = EnvelopeShape::square();
  p.duration = 1.0;
  p.peak_rabi = 1.2;
  PulseSegment m = p;
  m.transition = Transition::MW;
  m.t_start = 1.0;
  seq.segments = {p, m};
  seq.sample_times = {0.5, 2.0, 5.0};
  const auto tr = run_ensemble(g, seq);
  for (std::size_t s = 0; s < 3; ++s) {
    cplx s12{}, s23{};
    double p3 = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const auto st = propagate(ground_state(), seq, g.d13(k), g.d23(k));
      s12 += 2.0 * g.weights[k] * std::conj(st[s][0]) * st[s][1];
      s23 += 2.0 * g.weights[k] * std::conj(st[s][1]) * st[s][2];
      p3 += g.weights[k] * std::norm(st[s][2]);
    }
    CHECK(std::abs(tr.coherence[s][0] - s12) < 1e-10);
    CHECK(std::abs(tr.coherence[s][2] - s23) < 1e-10);
    CHECK(tr.population[s][2] == doctest::Approx(p3).epsilon(1e-10));
  }
}

TEST_CASE("trace CSV round trip") {
  EnsembleTrajectory tr;
  tr.times = {0.0, 0.5};
  tr.free_time = {0.0, 0.5};
  tr.coherence = {{cplx{0.1, 0.2}, cplx{}, cplx{}}, {cplx{1.0 / 3.0, 0.0}, cplx{}, cplx{}}};
  tr.population = {{1.0, 0.0, 0.0}, {0.9, 0.05, 0.05}};
  std::ostringstream os;
  write_trace_csv(os, make_traces(tr));
  std::istringstream is(os.str());
  const auto t = csv::read_numeric(is);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.header.size() == 10);
  CHECK(t.rows[1][1] == 1.0 / 3.0);
  CHECK(t.rows[1][8] == 0.05);
}
