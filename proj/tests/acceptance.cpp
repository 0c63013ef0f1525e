// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when any line fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "echosim/config.hpp"
#include "echosim/dynamics.hpp"
#include "echosim/experiments.hpp"
#include "echosim/observables.hpp"
#include "echosim/runner.hpp"
#include "echosim/units.hpp"
#include "support/fit_battery.hpp"
#include "support/oracle.hpp"

using namespace echosim;

namespace {

// tolerances
constexpr double kEchoTime = 460.0, kEchoTimeTol = 4.0, kWallMax = 60.0;
constexpr double kEchoOverPostMw = 0.9;
constexpr double kTdTarget = 0.53, kTdFactor = 2.0;
constexpr double kVisMin = 0.99, kRatioTol = 0.10, kRmsOverRange = 0.02;
constexpr double kVisTol = 0.005;
constexpr double kOracleTol = 1e-6;
constexpr double kDriftMax = 1e-9;
constexpr double kFitTol = 1e-3;
constexpr double kSincRatio = 0.589, kSincRatioTol = 0.001, kAdiabatic = 1.41, kAdiabaticTol = 0.05;
constexpr int kRandomPlans = 20, kRandomBits = 8;
constexpr long kPlanSeed = 12345;

int failures = 0;

void report(int id, const std::string& name, const std::function<bool(std::ostringstream&)>& check) {
  std::ostringstream detail;
  bool ok = false;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    ok = check(detail);
  } catch (const std::exception& e) {
    detail << "exception: " << e.what();
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!ok) ++failures;
  std::printf("%s %2d %s: %s [%.1f s]\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.str().c_str(), s);
  std::fflush(stdout);
}

Json preset_results(const std::string& id, const std::function<void(Manifest&)>& edit = {}) {
  Manifest m = Manifest::parse(preset_manifest(id));
  if (edit) edit(m);
  return run_experiment(m, {}).summary["results"];
}

std::string trace_csv(const EnsembleTrajectory& tr) {
  std::ostringstream os;
  write_trace_csv(os, make_traces(tr));
  return os.str();
}

} // namespace

int main() {
  const ProtocolConfig base = protocol_from_manifest(Manifest::parse(preset_manifest("fig1d")));
  ProtocolResult full;

  report(1, "echo time and runtime", [&](std::ostringstream& d) {
    full = run_protocol(base);
    d << "echo at " << full.echo.peak_time << " us (expected " << kEchoTime << " +- " << kEchoTimeTol
      << "), wall " << full.wall_seconds << " s (max " << kWallMax << ")";
    return std::abs(full.echo.peak_time - kEchoTime) <= kEchoTimeTol && full.wall_seconds <= kWallMax;
  });

  report(2, "echo strength and undesired echoes", [&](std::ostringstream& d) {
    const double ratio = full.echo.peak_amplitude / full.post_mw_amplitude;
    ProtocolConfig weak = base;
    weak.rap.peak_rabi *= 0.5;
    const ProtocolResult w = run_protocol(weak);
    d << "echo/post-MW " << ratio << " (min " << kEchoOverPostMw << "), undesired ratio " << full.undesired_ratio
      << " at 5 Gamma_P vs " << w.undesired_ratio << " at 2.5 Gamma_P";
    return ratio >= kEchoOverPostMw && full.undesired_ratio < w.undesired_ratio;
  });

  report(3, "pump-MW delay decay", [&](std::ostringstream& d) {
    const Json r = preset_results("figS6");
    const double td = r["fit"]["parameters"]["Td"].get<double>();
    d << "Td " << td << " us (target " << kTdTarget << " within x" << kTdFactor << ")";
    return td >= kTdTarget / kTdFactor && td <= kTdTarget * kTdFactor;
  });

  report(4, "two-MW interference", [&](std::ostringstream& d) {
    // equal amplitudes: the fig4c setup without the emulated decay
    const ProtocolConfig eq = protocol_from_manifest(Manifest::parse(preset_manifest("fig4c")));
    std::vector<double> phases;
    for (int i = 0; i < 37; ++i) phases.push_back(-units::pi + 2.0 * units::pi * i / 36);
    double hi = 0.0, lo = 1e300;
    for (const auto& p : interference_run(eq, InterferenceMode::Phase, phases).points) {
      hi = std::max(hi, p.intensity);
      lo = std::min(lo, p.intensity);
    }
    const double vis = (hi - lo) / (hi + lo);
    const Json c = preset_results("fig4c");
    const double ratio = c["fit"]["i2_over_i1"].get<double>();
    const double expect = c["expected_i2_over_i1"].get<double>();
    const Json f = preset_results("fig4d");
    const double rms = f["fit"]["rms_over_range"].get<double>();
    d << "equal-amplitude visibility " << vis << " (min " << kVisMin << "), decayed I2/I1 " << ratio << " vs "
      << expect << " (tol " << kRatioTol * 100 << "%), frequency fit rms/range " << rms << " (max " << kRmsOverRange << ")";
    return vis >= kVisMin && std::abs(ratio / expect - 1.0) <= kRatioTol && rms <= kRmsOverRange;
  });

  report(5, "visibility formula", [&](std::ostringstream& d) {
    const double a = visibility(1.93, 0.39), b = visibility(1.83, 0.46);
    d << "V(1.93, 0.39) = " << a << " (0.75), V(1.83, 0.46) = " << b << " (0.80)";
    return std::abs(a - 0.75) <= kVisTol && std::abs(b - 0.80) <= kVisTol;
  });

  report(6, "multiplexed storage", [&](std::ostringstream& d) {
    const Json r = preset_results("fig5b");
    const auto& modes = r["modes"];
    const std::size_t n = modes.size();
    bool order = n == 10;
    bool first_dominates = n > 0;
    for (std::size_t k = 0; k < n; ++k) {
      const double t = modes[k]["echo"]["peak_time_us"].get<double>();
      const double e = modes[k]["expected_time_us"].get<double>();
      const double a = modes[k]["echo"]["peak_amplitude"].get<double>();
      order = order && std::abs(t - e) < 2.5;
      if (k > 0) order = order && t > modes[k - 1]["echo"]["peak_time_us"].get<double>();
      if (k > 0 && k < n / 2) first_dominates = first_dominates && a <= modes[0]["echo"]["peak_amplitude"].get<double>();
    }
    const Json p = preset_results("fig5b", [](Manifest& m) {
      m.set("multiplex.modes", std::to_string(kRandomBits));
      m.set("multiplex.random_plans", std::to_string(kRandomPlans));
      m.set("multiplex.random_bits", std::to_string(kRandomBits));
      m.set("multiplex.seed", std::to_string(kPlanSeed));
      m.set("integrator.oversampling", "5");
      m.set("integrator.dt_max_us", "0.05");
      m.set("integrator.tol", "1e-8");
    });
    const int exact = p["plans_exact"].get<int>();
    d << n << " modes " << (order ? "in order" : "out of order") << ", "
      << (first_dominates ? "first mode strongest" : "first mode not strongest") << " in the first half, random plans decoded " << exact << "/" << kRandomPlans;
    return order && first_dominates && exact == kRandomPlans;
  });

  report(7, "integrator vs reference propagator", [&](std::ostringstream& d) {
    const auto st = oracle::compare_random(100, 20240601);
    d << "max error " << st.max_error << " over " << st.sequences << " sequences (max " << kOracleTol << ")";
    return st.sequences == 100 && st.max_error <= kOracleTol;
  });

  report(8, "norm drift and worker determinism", [&](std::ostringstream& d) {
    ProtocolConfig c = base;
    c.grid.m_optical = 23;
    c.grid.m_spin = 17;
    Sequence seq = build_sequence(c);
    seq.sample_times.clear();
    for (double t = -5.0; t <= 480.0; t += 2.5) seq.sample_times.push_back(t);
    const AtomGrid g = c.grid.build();
    RunOptions o;
    o.chunk_size = 32;
    std::string ref;
    bool same = true;
    double drift = full.max_norm_drift;
    for (unsigned w : {1u, 4u, 16u}) {
      o.workers = w;
      const auto tr = run_ensemble(g, seq, c.integrator, o);
      drift = std::max(drift, tr.max_norm_drift);
      const std::string csv = trace_csv(tr);
      if (ref.empty()) ref = csv;
      same = same && csv == ref;
    }
    d << "max drift " << drift << " (max " << kDriftMax << "), traces at 1/4/16 workers "
      << (same ? "identical" : "differ");
    return drift <= kDriftMax && same;
  });

  report(9, "fit battery", [&](std::ostringstream& d) {
    double worst = 0.0;
    bool conv = true;
    for (const auto& c : battery::cases()) {
      const FitResult r = battery::fit(c, battery::sample(c, 0.0, 1));
      conv = conv && r.converged;
      worst = std::max(worst, battery::worst_relative_error(c, r));
    }
    d << "worst relative error " << worst << " (max " << kFitTol << ")" << (conv ? "" : ", a fit did not converge");
    return conv && worst <= kFitTol;
  });

  report(10, "pulse area and adiabaticity", [&](std::ostringstream& d) {
    const double ratio = unit_envelope_area(EnvelopeShape::sinc(), 4.0) / unit_envelope_area(EnvelopeShape::square(), 4.0);
    const double q = adiabaticity_factor(units::angular_from_khz(75.0), units::angular_from_mhz(1.5), 60.0);
    d << "sinc/square area " << ratio << " (" << kSincRatio << "), adiabaticity " << q << " (" << kAdiabatic << ")";
    return std::abs(ratio - kSincRatio) <= kSincRatioTol && std::abs(q - kAdiabatic) <= kAdiabaticTol;
  });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
