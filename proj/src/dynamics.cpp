#include "echosim/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace echosim {

std::optional<double> DephasingTimes::for_pair(int pair) const {
  switch (pair) {
    case 0: return t2_12;
    case 1: return t2_13;
    case 2: return t2_23;
    default: throw std::invalid_argument("transition pair index must be 0, 1 or 2");
  }
}

namespace {

bool is_drive(const PulseSegment& s) {
  return s.transition != Transition::Gap && s.peak_rabi != 0.0;
}

// Union of drive intervals, sorted and merged.
std::vector<std::pair<double, double>> drive_union(const std::vector<PulseSegment>& segs) {
  std::vector<std::pair<double, double>> iv;
  for (const auto& s : segs)
    if (is_drive(s)) iv.emplace_back(s.t_start, s.t_end());
  std::sort(iv.begin(), iv.end());
  std::vector<std::pair<double, double>> out;
  for (const auto& p : iv) {
    if (!out.empty() && p.first <= out.back().second)
      out.back().second = std::max(out.back().second, p.second);
    else
      out.push_back(p);
  }
  return out;
}

} // namespace

double Sequence::start_time() const {
  double t0 = std::numeric_limits<double>::infinity();
  for (const auto& s : segments) t0 = std::min(t0, s.t_start);
  for (double t : sample_times) t0 = std::min(t0, t);
  return std::isfinite(t0) ? t0 : 0.0;
}

double Sequence::free_time_until(double t) const {
  const double t0 = start_time();
  if (t <= t0) return 0.0;
  double driven = 0.0;
  for (const auto& [a, b] : drive_union(segments)) {
    const double lo = std::max(a, t0);
    const double hi = std::min(b, t);
    if (hi > lo) driven += hi - lo;
  }
  return std::max(0.0, (t - t0) - driven);
}

void Sequence::validate() const {
  for (const auto& s : segments) s.validate();
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (!std::isfinite(sample_times[i]))
      throw std::invalid_argument("sample times must be finite");
    if (i > 0 && !(sample_times[i] > sample_times[i - 1]))
      throw std::invalid_argument("sample times must be strictly increasing");
  }
  for (int p = 0; p < 3; ++p) {
    const auto t2 = dephasing.for_pair(p);
    if (t2 && !(*t2 > 0.0)) throw std::invalid_argument("T2 must be positive");
  }
}

DriveValues drive_at(double t, std::span<const PulseSegment> active) {
  DriveValues v;
  for (const auto& s : active) {
    if (!is_drive(s)) continue;
    const double env = sample_envelope(s.envelope, t, s.t_start, s.duration);
    if (env == 0.0) continue;
    const double amp = 0.5 * s.peak_rabi * env;
    switch (s.transition) {
      case Transition::Pump:
        v.v13 += std::polar(amp, s.phase - s.carrier_detuning * t);
        break;
      case Transition::MW:
        v.v23 += std::polar(amp, s.phase - s.carrier_detuning * t);
        break;
      case Transition::RAP: {
        const double phi = chirp_phase(t, s.t_start, s.duration, s.chirp_bandwidth);
        v.v12 += std::polar(amp, -(phi + s.phase + s.carrier_detuning * t));
        break;
      }
      case Transition::Gap: break;
    }
  }
  return v;
}

Hamiltonian hamiltonian_at(double t, std::span<const PulseSegment> active, double delta13,
                           double delta23) {
  const DriveValues v = drive_at(t, active);
  Hamiltonian h;
  h << cplx{}, v.v12, v.v13,
       std::conj(v.v12), cplx{-delta13 + delta23, 0.0}, v.v23,
       std::conj(v.v13), std::conj(v.v23), cplx{-delta13, 0.0};
  return h;
}

namespace {

// Structure-of-arrays block of atoms.
struct Block {
  std::size_t n = 0;
  std::vector<double> r0, i0, r1, i1, r2, i2, e2, e3;

  void resize(std::size_t m) {
    n = m;
    for (auto* v : {&r0, &i0, &r1, &i1, &r2, &i2, &e2, &e3}) v->assign(m, 0.0);
  }
  void set(std::size_t a, const ThreeLevelState& s) {
    r0[a] = s[0].real(); i0[a] = s[0].imag();
    r1[a] = s[1].real(); i1[a] = s[1].imag();
    r2[a] = s[2].real(); i2[a] = s[2].imag();
  }
  ThreeLevelState get(std::size_t a) const {
    ThreeLevelState s;
    s[0] = {r0[a], i0[a]};
    s[1] = {r1[a], i1[a]};
    s[2] = {r2[a], i2[a]};
    return s;
  }
  void copy_state_from(const Block& o) {
    r0 = o.r0; i0 = o.i0; r1 = o.r1; i1 = o.i1; r2 = o.r2; i2 = o.i2;
  }
};

// RK4 over `steps` steps of size h. Node j of `nodes` sits at t_a + j*h/(2q)
// so step s reads nodes 2qs, 2qs+q, 2qs+2q.
template <bool A12, bool A13, bool A23>
void rk4_block(Block& b, const DriveValues* nodes, std::size_t q, std::size_t steps, double h) {
  const std::size_t n = b.n;
  double* __restrict r0 = b.r0.data();
  double* __restrict i0 = b.i0.data();
  double* __restrict r1 = b.r1.data();
  double* __restrict i1 = b.i1.data();
  double* __restrict r2 = b.r2.data();
  double* __restrict i2 = b.i2.data();
  const double* __restrict e2 = b.e2.data();
  const double* __restrict e3 = b.e3.data();
  const double h2 = 0.5 * h;
  const double h6 = h / 6.0;

  for (std::size_t s = 0; s < steps; ++s) {
    const DriveValues& va = nodes[2 * q * s];
    const DriveValues& vm = nodes[2 * q * s + q];
    const DriveValues& vb = nodes[2 * q * s + 2 * q];
    const double ar12 = va.v12.real(), ai12 = va.v12.imag();
    const double ar13 = va.v13.real(), ai13 = va.v13.imag();
    const double ar23 = va.v23.real(), ai23 = va.v23.imag();
    const double mr12 = vm.v12.real(), mi12 = vm.v12.imag();
    const double mr13 = vm.v13.real(), mi13 = vm.v13.imag();
    const double mr23 = vm.v23.real(), mi23 = vm.v23.imag();
    const double br12 = vb.v12.real(), bi12 = vb.v12.imag();
    const double br13 = vb.v13.real(), bi13 = vb.v13.imag();
    const double br23 = vb.v23.real(), bi23 = vb.v23.imag();

#pragma GCC ivdep
    for (std::size_t a = 0; a < n; ++a) {
      const double E2 = e2[a], E3 = e3[a];
      // k = -i H y, returned as (re, im) per component.
      auto deriv = [&](double x12r, double x12i, double x13r, double x13i, double x23r,
                       double x23i, double y0r, double y0i, double y1r, double y1i, double y2r,
                       double y2i, double& k0r, double& k0i, double& k1r, double& k1i,
                       double& k2r, double& k2i) {
        double h0r = 0, h0i = 0;
        double h1r = E2 * y1r, h1i = E2 * y1i;
        double h2r = E3 * y2r, h2i = E3 * y2i;
        if constexpr (A12) {
          h0r += x12r * y1r - x12i * y1i;
          h0i += x12r * y1i + x12i * y1r;
          h1r += x12r * y0r + x12i * y0i;
          h1i += x12r * y0i - x12i * y0r;
        }
        if constexpr (A13) {
          h0r += x13r * y2r - x13i * y2i;
          h0i += x13r * y2i + x13i * y2r;
          h2r += x13r * y0r + x13i * y0i;
          h2i += x13r * y0i - x13i * y0r;
        }
        if constexpr (A23) {
          h1r += x23r * y2r - x23i * y2i;
          h1i += x23r * y2i + x23i * y2r;
          h2r += x23r * y1r + x23i * y1i;
          h2i += x23r * y1i - x23i * y1r;
        }
        k0r = h0i; k0i = -h0r;
        k1r = h1i; k1i = -h1r;
        k2r = h2i; k2i = -h2r;
      };

      const double y0r = r0[a], y0i = i0[a], y1r = r1[a], y1i = i1[a], y2r = r2[a],
                   y2i = i2[a];
      double k10r, k10i, k11r, k11i, k12r, k12i;
      deriv(ar12, ai12, ar13, ai13, ar23, ai23, y0r, y0i, y1r, y1i, y2r, y2i, k10r, k10i,
            k11r, k11i, k12r, k12i);
      double k20r, k20i, k21r, k21i, k22r, k22i;
      deriv(mr12, mi12, mr13, mi13, mr23, mi23, y0r + h2 * k10r, y0i + h2 * k10i,
            y1r + h2 * k11r, y1i + h2 * k11i, y2r + h2 * k12r, y2i + h2 * k12i, k20r, k20i,
            k21r, k21i, k22r, k22i);
      double k30r, k30i, k31r, k31i, k32r, k32i;
      deriv(mr12, mi12, mr13, mi13, mr23, mi23, y0r + h2 * k20r, y0i + h2 * k20i,
            y1r + h2 * k21r, y1i + h2 * k21i, y2r + h2 * k22r, y2i + h2 * k22i, k30r, k30i,
            k31r, k31i, k32r, k32i);
      double k40r, k40i, k41r, k41i, k42r, k42i;
      deriv(br12, bi12, br13, bi13, br23, bi23, y0r + h * k30r, y0i + h * k30i,
            y1r + h * k31r, y1i + h * k31i, y2r + h * k32r, y2i + h * k32i, k40r, k40i,
            k41r, k41i, k42r, k42i);
      r0[a] = y0r + h6 * (k10r + 2.0 * (k20r + k30r) + k40r);
      i0[a] = y0i + h6 * (k10i + 2.0 * (k20i + k30i) + k40i);
      r1[a] = y1r + h6 * (k11r + 2.0 * (k21r + k31r) + k41r);
      i1[a] = y1i + h6 * (k11i + 2.0 * (k21i + k31i) + k41i);
      r2[a] = y2r + h6 * (k12r + 2.0 * (k22r + k32r) + k42r);
      i2[a] = y2i + h6 * (k12i + 2.0 * (k22i + k32i) + k42i);
    }
  }
}

using KernelFn = void (*)(Block&, const DriveValues*, std::size_t, std::size_t, double);

KernelFn select_kernel(unsigned mask) {
  switch (mask) {
    case 0: return &rk4_block<false, false, false>;
    case 1: return &rk4_block<true, false, false>;
    case 2: return &rk4_block<false, true, false>;
    case 3: return &rk4_block<true, true, false>;
    case 4: return &rk4_block<false, false, true>;
    case 5: return &rk4_block<true, false, true>;
    case 6: return &rk4_block<false, true, true>;
    default: return &rk4_block<true, true, true>;
  }
}

// Exact diagonal evolution with a one-entry phasor cache.
struct FreeEvolver {
  double last_dt = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> c2r, c2i, c3r, c3i;

  void apply(Block& b, double dt) {
    if (!(dt == last_dt) || c2r.size() != b.n) {
      c2r.resize(b.n); c2i.resize(b.n); c3r.resize(b.n); c3i.resize(b.n);
      for (std::size_t a = 0; a < b.n; ++a) {
        c2r[a] = std::cos(b.e2[a] * dt); c2i[a] = -std::sin(b.e2[a] * dt);
        c3r[a] = std::cos(b.e3[a] * dt); c3i[a] = -std::sin(b.e3[a] * dt);
      }
      last_dt = dt;
    }
    for (std::size_t a = 0; a < b.n; ++a) {
      const double xr = b.r1[a], xi = b.i1[a];
      b.r1[a] = xr * c2r[a] - xi * c2i[a];
      b.i1[a] = xr * c2i[a] + xi * c2r[a];
      const double yr = b.r2[a], yi = b.i2[a];
      b.r2[a] = yr * c3r[a] - yi * c3i[a];
      b.i2[a] = yr * c3i[a] + yi * c3r[a];
    }
  }
};

struct Interval {
  double a = 0.0, b = 0.0;
  bool driven = false;
  unsigned mask = 0;
  std::size_t steps = 0;
  std::size_t table_offset = 0; // nodes at spacing h/4, 4*steps+1 of them
};

struct Breakpoint {
  double t = 0.0;
  std::vector<std::size_t> samples;
  std::vector<std::size_t> snapshots;
};

struct Schedule {
  std::vector<Breakpoint> points;   // points[0] is the start
  std::vector<Interval> intervals;  // intervals[i] joins points[i] and points[i+1]
  std::vector<DriveValues> table;
  std::vector<double> free_time;    // per breakpoint
};

std::vector<Breakpoint> collect_breakpoints(const Sequence& seq,
                                            const std::vector<double>& snaps) {
  struct Ev { double t; int kind; std::size_t idx; };
  std::vector<Ev> ev;
  double t_stop = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < seq.sample_times.size(); ++i) {
    ev.push_back({seq.sample_times[i], 0, i});
    t_stop = std::max(t_stop, seq.sample_times[i]);
  }
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    ev.push_back({snaps[i], 1, i});
    t_stop = std::max(t_stop, snaps[i]);
  }
  double t0 = seq.start_time();
  for (double t : snaps) t0 = std::min(t0, t);
  ev.push_back({t0, 2, 0});
  for (const auto& s : seq.segments) {
    if (s.t_start < t_stop) ev.push_back({s.t_start, 2, 0});
    if (s.t_end() < t_stop) ev.push_back({s.t_end(), 2, 0});
  }
  std::stable_sort(ev.begin(), ev.end(), [](const Ev& x, const Ev& y) {
    return x.t < y.t || (x.t == y.t && x.kind < y.kind);
  });

  std::vector<Breakpoint> pts;
  bool anchored = false; // cluster time pinned to a sample or snapshot
  for (const auto& e : ev) {
    const double tol = 1e-9 * std::max(1.0, std::abs(e.t));
    if (pts.empty() || e.t - pts.back().t > tol) {
      pts.push_back({e.t, {}, {}});
      anchored = false;
    }
    auto& p = pts.back();
    if (e.kind != 2 && !anchored) {
      p.t = e.t;
      anchored = true;
    }
    if (e.kind == 0) p.samples.push_back(e.idx);
    if (e.kind == 1) p.snapshots.push_back(e.idx);
  }
  return pts;
}

std::vector<std::size_t> probe_atoms(const AtomGrid& g) {
  const std::size_t no = g.n_optical(), ns = g.n_spin();
  std::vector<std::size_t> k{0, ns - 1, (no - 1) * ns, (no - 1) * ns + ns - 1,
                             (no / 2) * ns + ns / 2};
  std::sort(k.begin(), k.end());
  k.erase(std::unique(k.begin(), k.end()), k.end());
  return k;
}

void fill_energies(Block& b, const AtomGrid& g, std::size_t first) {
  for (std::size_t a = 0; a < b.n; ++a) {
    const double d13 = g.d13(first + a), d23 = g.d23(first + a);
    b.e2[a] = -d13 + d23;
    b.e3[a] = -d13;
  }
}

double max_diag_rate(const AtomGrid& g) {
  auto [o_lo, o_hi] = std::minmax_element(g.delta13.begin(), g.delta13.end());
  auto [s_lo, s_hi] = std::minmax_element(g.delta23.begin(), g.delta23.end());
  double m = 0.0;
  for (double x : {*o_lo, *o_hi}) {
    m = std::max(m, std::abs(x));
    for (double y : {*s_lo, *s_hi}) m = std::max({m, std::abs(y), std::abs(y - x)});
  }
  return m;
}

double block_diff(const Block& x, const Block& y) {
  double d = 0.0;
  for (std::size_t a = 0; a < x.n; ++a) {
    d = std::max({d, std::hypot(x.r0[a] - y.r0[a], x.i0[a] - y.i0[a]),
                  std::hypot(x.r1[a] - y.r1[a], x.i1[a] - y.i1[a]),
                  std::hypot(x.r2[a] - y.r2[a], x.i2[a] - y.i2[a])});
  }
  return d;
}

bool block_finite(const Block& b) {
  for (std::size_t a = 0; a < b.n; ++a) {
    if (!std::isfinite(b.r0[a] + b.i0[a] + b.r1[a] + b.i1[a] + b.r2[a] + b.i2[a]))
      return false;
  }
  return true;
}

Schedule build_schedule(const AtomGrid& grid, const Sequence& seq, const IntegratorControl& ctl,
                        const RunOptions& opt) {
  Schedule sch;
  sch.points = collect_breakpoints(seq, opt.snapshot_times);
  const double diag = max_diag_rate(grid);

  const auto probes = probe_atoms(grid);
  Block probe;
  probe.resize(probes.size());
  for (std::size_t p = 0; p < probes.size(); ++p) {
    probe.set(p, opt.initial);
    const double d13 = grid.d13(probes[p]), d23 = grid.d23(probes[p]);
    probe.e2[p] = -d13 + d23;
    probe.e3[p] = -d13;
  }
  FreeEvolver probe_free;
  Block trial_n, trial_2n;

  sch.free_time.assign(sch.points.size(), 0.0);
  std::vector<const PulseSegment*> active;
  std::vector<PulseSegment> active_copy;
  for (std::size_t i = 0; i + 1 < sch.points.size(); ++i) {
    Interval iv;
    iv.a = sch.points[i].t;
    iv.b = sch.points[i + 1].t;
    const double mid = 0.5 * (iv.a + iv.b);
    active_copy.clear();
    double rabi = 0.0, drive_rate = 0.0;
    for (const auto& s : seq.segments) {
      if (!is_drive(s) || !(s.t_start < mid && mid < s.t_end())) continue;
      active_copy.push_back(s);
      rabi += std::abs(s.peak_rabi);
      double rate = std::abs(s.carrier_detuning);
      if (s.transition == Transition::RAP) {
        rate += std::max(std::abs(chirp_detuning(iv.a, s.t_start, s.duration, s.chirp_bandwidth)),
                         std::abs(chirp_detuning(iv.b, s.t_start, s.duration, s.chirp_bandwidth)));
        iv.mask |= 1u;
      } else if (s.transition == Transition::Pump) {
        iv.mask |= 2u;
      } else {
        iv.mask |= 4u;
      }
      drive_rate = std::max(drive_rate, rate);
    }
    const double len = iv.b - iv.a;
    sch.free_time[i + 1] = sch.free_time[i];
    if (active_copy.empty()) {
      iv.driven = false;
      sch.free_time[i + 1] += len;
      probe_free.apply(probe, len);
      sch.intervals.push_back(iv);
      continue;
    }
    iv.driven = true;
    const double f_max = std::max({diag, rabi, drive_rate, 1e-12});
    const double dt = std::min(ctl.dt_max, 1.0 / (ctl.oversampling * f_max));
    std::size_t steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / dt)));
    const KernelFn kernel = select_kernel(iv.mask);

    std::vector<DriveValues> nodes;
    for (;;) {
      if (len / static_cast<double>(steps) < 1e-9) {
        std::ostringstream os;
        os.precision(17);
        os << "RK4 step fell below 1e-9 us on interval [" << iv.a << ", " << iv.b
           << "] without meeting tol " << ctl.tol;
        throw NumericalFailure(os.str());
      }
      const std::size_t nn = 4 * steps + 1;
      nodes.resize(nn);
      for (std::size_t j = 0; j < nn; ++j) {
        const double t = (j + 1 == nn) ? iv.b : iv.a + len * static_cast<double>(j) / (nn - 1);
        nodes[j] = drive_at(t, active_copy);
      }
      const double h = len / static_cast<double>(steps);
      trial_n = probe;
      kernel(trial_n, nodes.data(), 2, steps, h);
      trial_2n = probe;
      kernel(trial_2n, nodes.data(), 1, 2 * steps, 0.5 * h);
      if (!block_finite(trial_n) || !block_finite(trial_2n)) {
        throw NumericalFailure("non-finite amplitude on interval starting at t = " +
                               std::to_string(iv.a));
      }
      if (block_diff(trial_n, trial_2n) <= ctl.tol) break;
      steps *= 2;
    }
    probe.copy_state_from(trial_n);
    iv.steps = steps;
    iv.table_offset = sch.table.size();
    sch.table.insert(sch.table.end(), nodes.begin(), nodes.end());
    sch.intervals.push_back(iv);
  }
  return sch;
}

// Per-chunk partial sums: 9 doubles per sample (3 complex coherences, 3 populations).
struct ChunkResult {
  std::vector<double> sums;
  double drift = 0.0;
};

void accumulate(const Block& b, const AtomGrid& g, std::size_t first, double* out,
                double& drift) {
  double s[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
  for (std::size_t a = 0; a < b.n; ++a) {
    const double w = g.weights[first + a];
    const double x0r = b.r0[a], x0i = b.i0[a], x1r = b.r1[a], x1i = b.i1[a];
    const double x2r = b.r2[a], x2i = b.i2[a];
    // conj(ci) cj
    s[0] += w * (x0r * x1r + x0i * x1i);
    s[1] += w * (x0r * x1i - x0i * x1r);
    s[2] += w * (x0r * x2r + x0i * x2i);
    s[3] += w * (x0r * x2i - x0i * x2r);
    s[4] += w * (x1r * x2r + x1i * x2i);
    s[5] += w * (x1r * x2i - x1i * x2r);
    const double p0 = x0r * x0r + x0i * x0i;
    const double p1 = x1r * x1r + x1i * x1i;
    const double p2 = x2r * x2r + x2i * x2i;
    s[6] += w * p0;
    s[7] += w * p1;
    s[8] += w * p2;
    drift = std::max(drift, std::abs(p0 + p1 + p2 - 1.0));
  }
  for (int i = 0; i < 6; ++i) out[i] = 2.0 * s[i];
  for (int i = 6; i < 9; ++i) out[i] = s[i];
}

void pairwise_sum(std::vector<ChunkResult>& parts) {
  for (std::size_t stride = 1; stride < parts.size(); stride *= 2) {
    for (std::size_t i = 0; i + stride < parts.size(); i += 2 * stride) {
      auto& x = parts[i].sums;
      const auto& y = parts[i + stride].sums;
      for (std::size_t j = 0; j < x.size(); ++j) x[j] += y[j];
      parts[i].drift = std::max(parts[i].drift, parts[i + stride].drift);
    }
  }
}

} // namespace

EnsembleTrajectory run_ensemble(const AtomGrid& grid, const Sequence& sequence,
                                const IntegratorControl& control, const RunOptions& options) {
  sequence.validate();
  if (grid.size() == 0) throw std::invalid_argument("atom grid is empty");
  if (!(control.dt_max > 0.0) || !(control.tol > 0.0) || !(control.oversampling > 0.0))
    throw std::invalid_argument("integrator dt_max, tol and oversampling must be positive");
  if (options.chunk_size == 0) throw std::invalid_argument("chunk size must be positive");
  for (double t : options.snapshot_times)
    if (!std::isfinite(t)) throw std::invalid_argument("snapshot times must be finite");

  const Schedule sch = build_schedule(grid, sequence, control, options);
  const std::size_t n_samples = sequence.sample_times.size();
  const std::size_t n_snaps = options.snapshot_times.size();
  const std::size_t n_atoms = grid.size();
  const std::size_t n_chunks = (n_atoms + options.chunk_size - 1) / options.chunk_size;

  EnsembleTrajectory out;
  out.times = sequence.sample_times;
  out.dephasing = sequence.dephasing;
  out.snapshot_times = options.snapshot_times;
  out.snapshots.assign(n_snaps, std::vector<ThreeLevelState>(n_atoms));
  out.atoms = n_atoms;
  out.free_time.assign(n_samples, 0.0);
  for (std::size_t p = 0; p < sch.points.size(); ++p)
    for (std::size_t s : sch.points[p].samples) out.free_time[s] = sch.free_time[p];
  for (const auto& iv : sch.intervals) out.rk4_steps += iv.steps;

  std::vector<ChunkResult> parts(n_chunks);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&]() {
    Block b;
    FreeEvolver free;
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      try {
        const std::size_t first = c * options.chunk_size;
        const std::size_t count = std::min(options.chunk_size, n_atoms - first);
        b.resize(count);
        fill_energies(b, grid, first);
        for (std::size_t a = 0; a < count; ++a) b.set(a, options.initial);
        free.last_dt = std::numeric_limits<double>::quiet_NaN();
        ChunkResult& res = parts[c];
        res.sums.assign(9 * n_samples, 0.0);

        auto observe = [&](const Breakpoint& p) {
          for (std::size_t s : p.samples) accumulate(b, grid, first, &res.sums[9 * s], res.drift);
          for (std::size_t s : p.snapshots)
            for (std::size_t a = 0; a < count; ++a) out.snapshots[s][first + a] = b.get(a);
        };
        observe(sch.points[0]);
        for (std::size_t i = 0; i < sch.intervals.size(); ++i) {
          const Interval& iv = sch.intervals[i];
          if (iv.driven) {
            select_kernel(iv.mask)(b, sch.table.data() + iv.table_offset, 2, iv.steps,
                                   (iv.b - iv.a) / static_cast<double>(iv.steps));
          } else {
            free.apply(b, iv.b - iv.a);
          }
          observe(sch.points[i + 1]);
        }
        if (!block_finite(b)) throw NumericalFailure("non-finite amplitude in ensemble run");
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n_chunks);
        return;
      }
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(options.workers,
                                                           static_cast<unsigned>(n_chunks)));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  pairwise_sum(parts);
  const auto& total = parts[0].sums;
  out.max_norm_drift = parts[0].drift;
  out.coherence.resize(n_samples);
  out.population.resize(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const double* x = &total[9 * s];
    out.coherence[s] = {cplx{x[0], x[1]}, cplx{x[2], x[3]}, cplx{x[4], x[5]}};
    out.population[s] = {x[6], x[7], x[8]};
  }
  return out;
}

std::vector<ThreeLevelState> propagate(const ThreeLevelState& state, const Sequence& sequence,
                                       double delta13, double delta23,
                                       const IntegratorControl& control) {
  Sequence seq = sequence;
  RunOptions opt;
  opt.initial = state;
  opt.snapshot_times = sequence.sample_times;
  opt.chunk_size = 1;
  auto traj = run_ensemble(AtomGrid::single(delta13, delta23), seq, control, opt);
  std::vector<ThreeLevelState> out(traj.snapshots.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = traj.snapshots[i][0];
  return out;
}

unsigned default_workers() {
  if (const char* env = std::getenv("ECHOSIM_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

} // namespace echosim
