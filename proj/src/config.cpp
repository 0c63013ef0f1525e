#include "echosim/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "echosim/units.hpp"

namespace echosim {

namespace {

std::string position_prefix(int line, int column) {
  if (line <= 0) return {};
  return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": ";
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

bool parse_number(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (b != e && *b == '+') ++b;
  const auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e && std::isfinite(out);
}

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::set<std::string> pulse{"shape",  "gaussian_sigma", "duration_us",
                                           "area_rad", "area_pi",       "rabi_khz",
                                           "detuning_mhz", "phase_rad"};
  static const std::map<std::string, std::set<std::string>> s{
      {"experiment", {"type", "name", "description"}},
      {"grid",
       {"m", "m_optical", "m_spin", "optical_profile", "optical_fwhm_mhz", "optical_center_mhz",
        "optical_span", "spin_profile", "spin_fwhm_mhz", "spin_center_mhz", "spin_span"}},
      {"pump", pulse},
      {"mw", pulse},
      {"mw2", pulse},
      {"rap",
       {"shape", "gaussian_sigma", "duration_us", "rabi_khz", "rabi_gamma_p", "gamma_p_mhz",
        "chirp_mhz", "phase_rad", "windows_mhz"}},
      {"timing", {"tau0_us", "tau1_us", "tau2_us", "mw_gap_us"}},
      {"dephasing", {"t2_12_us", "t2_13_us", "t2_23_us"}},
      {"integrator", {"dt_max_us", "tol", "oversampling"}},
      {"output",
       {"sample_dt_us", "echo_half_window_us", "t_end_us", "t_detect_us", "detection_reference",
        "workers", "chunk_size"}},
      {"sweep",
       {"axis", "values", "start", "stop", "count", "metric", "method", "fit_model", "fit_x",
        "fit_y"}},
      {"interference",
       {"mode", "values", "start", "stop", "count", "homodyne_amplitude", "homodyne_phase_rad",
        "method", "fit", "emulated_decay_us"}},
      {"multiplex",
       {"bits", "modes", "spacing_us", "pump_offsets_mhz", "mw_offsets_mhz", "random_plans",
        "random_bits", "seed"}},
      {"rotation",
       {"m", "span", "spin_fwhm_mhz", "shape", "duration_us", "area_pi", "detuning2_mhz",
        "phase2_rad", "values", "start", "stop", "count", "path_atoms", "path_points",
        "reference_us"}},
      {"compare", {"rabi_gamma_p"}},
  };
  return s;
}

} // namespace

ConfigError::ConfigError(const std::string& msg, int line, int column, std::string key)
    : std::runtime_error(position_prefix(line, column) + msg),
      line_(line),
      column_(column),
      key_(std::move(key)) {}

Manifest Manifest::parse(std::string_view text) {
  Manifest m;
  std::string section;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    // strip comments
    std::size_t cut = raw.size();
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == ';' || raw[i] == '#') {
        cut = i;
        break;
      }
    }
    const std::string_view body = raw.substr(0, cut);
    std::size_t first = 0;
    while (first < body.size() && std::isspace(static_cast<unsigned char>(body[first]))) ++first;
    if (first == body.size()) continue;
    const int col = static_cast<int>(first) + 1;
    if (body[first] == '[') {
      const std::size_t close = body.find(']', first);
      if (close == std::string_view::npos)
        throw ConfigError("missing ']' in section header", lineno, col);
      if (!trim(body.substr(close + 1)).empty()) {
        std::size_t extra = close + 1;
        while (std::isspace(static_cast<unsigned char>(body[extra]))) ++extra;
        throw ConfigError("unexpected text after section header", lineno,
                          static_cast<int>(extra) + 1);
      }
      section = trim(body.substr(first + 1, close - first - 1));
      if (!valid_name(section)) throw ConfigError("invalid section name", lineno, col + 1);
      if (std::find(m.sections_.begin(), m.sections_.end(), section) == m.sections_.end())
        m.sections_.push_back(section);
      continue;
    }
    const std::size_t eq = body.find('=', first);
    if (eq == std::string_view::npos)
      throw ConfigError("expected 'key = value'", lineno, static_cast<int>(body.size()) + 1);
    const std::string key = trim(body.substr(first, eq - first));
    if (!valid_name(key)) throw ConfigError("invalid key name", lineno, col);
    if (section.empty()) throw ConfigError("key outside of any [section]", lineno, col);
    std::size_t vstart = eq + 1;
    while (vstart < body.size() && std::isspace(static_cast<unsigned char>(body[vstart]))) ++vstart;
    const std::string value = trim(body.substr(eq + 1));
    const std::string full = section + "." + key;
    if (m.entries_.count(full)) throw ConfigError("duplicate key '" + full + "'", lineno, col, full);
    m.entries_[full] = {value, lineno, static_cast<int>(vstart) + 1};
  }
  return m;
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool Manifest::has(std::string_view key) const { return entries_.count(std::string(key)) > 0; }

bool Manifest::has_section(std::string_view section) const {
  return std::find(sections_.begin(), sections_.end(), section) != sections_.end();
}

const ManifestEntry& Manifest::entry(std::string_view key) const {
  auto it = entries_.find(std::string(key));
  if (it == entries_.end()) throw ConfigError("missing key '" + std::string(key) + "'", 0, 0, std::string(key));
  return it->second;
}

std::string Manifest::get_string(std::string_view key, std::string_view fallback) const {
  auto it = entries_.find(std::string(key));
  return it == entries_.end() ? std::string(fallback) : it->second.value;
}

double Manifest::get_double(std::string_view key, double fallback) const {
  const auto v = get_optional(key);
  return v ? *v : fallback;
}

std::optional<double> Manifest::get_optional(std::string_view key) const {
  auto it = entries_.find(std::string(key));
  if (it == entries_.end()) return std::nullopt;
  double v;
  if (!parse_number(it->second.value, v))
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" + it->second.value + "'",
                      it->second.line, it->second.column, std::string(key));
  return v;
}

long Manifest::get_int(std::string_view key, long fallback) const {
  const auto v = get_optional(key);
  if (!v) return fallback;
  if (*v != std::floor(*v)) {
    const auto& e = entry(key);
    throw ConfigError("'" + std::string(key) + "' expects an integer", e.line, e.column,
                      std::string(key));
  }
  return static_cast<long>(*v);
}

std::vector<double> Manifest::get_list(std::string_view key) const {
  std::vector<double> out;
  auto it = entries_.find(std::string(key));
  if (it == entries_.end()) return out;
  const std::string& s = it->second.value;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string item = trim(std::string_view(s).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start));
    double v;
    if (!parse_number(item, v)) {
      throw ConfigError("'" + std::string(key) + "' expects a comma-separated list of numbers",
                        it->second.line, it->second.column + static_cast<int>(start),
                        std::string(key));
    }
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void Manifest::set(std::string_view key, std::string value) {
  const std::string k(key);
  const auto dot = k.find('.');
  if (dot != std::string::npos) {
    const std::string sec = k.substr(0, dot);
    if (!has_section(sec)) sections_.push_back(sec);
  }
  entries_[k] = {std::move(value), 0, 0};
}

std::string Manifest::canonical() const {
  std::vector<std::string> secs = sections_;
  std::sort(secs.begin(), secs.end());
  std::string out;
  for (const auto& sec : secs) {
    if (!out.empty()) out += "\n";
    out += "[" + sec + "]\n";
    const std::string prefix = sec + ".";
    for (auto it = entries_.lower_bound(prefix); it != entries_.end() && it->first.rfind(prefix, 0) == 0; ++it)
      out += it->first.substr(prefix.size()) + " = " + it->second.value + "\n";
  }
  return out;
}

std::uint64_t Manifest::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string Manifest::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

void Manifest::check_known_keys() const {
  const auto& s = schema();
  for (const auto& [k, e] : entries_) {
    const auto dot = k.find('.');
    const std::string sec = k.substr(0, dot), key = k.substr(dot + 1);
    auto it = s.find(sec);
    if (it == s.end()) throw ConfigError("unknown section '" + sec + "'", e.line, 1, k);
    if (!it->second.count(key)) throw ConfigError("unknown key '" + k + "'", e.line, 1, k);
  }
}

namespace {

EnvelopeShape read_shape(const Manifest& m, const std::string& sec, EnvelopeShape fallback) {
  const std::string key = sec + ".shape";
  EnvelopeShape s = fallback;
  if (m.has(key)) {
    try {
      s.kind = envelope_kind_from_string(m.get_string(key));
    } catch (const std::invalid_argument& ex) {
      const auto& e = m.entry(key);
      throw ConfigError(ex.what(), e.line, e.column, key);
    }
  }
  s.gaussian_sigma_fraction = m.get_double(sec + ".gaussian_sigma", s.gaussian_sigma_fraction);
  return s;
}

void read_pulse(const Manifest& m, const std::string& sec, PulseConfig& p) {
  p.shape = read_shape(m, sec, p.shape);
  p.duration = m.get_double(sec + ".duration_us", p.duration);
  if (!(p.duration > 0.0)) throw ConfigError(sec + ".duration_us must be positive", 0, 0, sec + ".duration_us");
  const int given = m.has(sec + ".area_rad") + m.has(sec + ".area_pi") + m.has(sec + ".rabi_khz");
  if (given > 1)
    throw ConfigError(sec + ": give only one of area_rad, area_pi, rabi_khz", 0, 0, sec + ".area_rad");
  if (m.has(sec + ".area_rad")) p.set_area(m.get_double(sec + ".area_rad", 0.0));
  if (m.has(sec + ".area_pi")) p.set_area(units::pi * m.get_double(sec + ".area_pi", 0.0));
  if (m.has(sec + ".rabi_khz")) p.peak_rabi = units::angular_from_khz(m.get_double(sec + ".rabi_khz", 0.0));
  if (p.peak_rabi < 0.0) throw ConfigError(sec + " Rabi frequency must be >= 0", 0, 0, sec + ".rabi_khz");
  p.carrier_detuning = units::angular_from_mhz(m.get_double(sec + ".detuning_mhz", units::mhz_from_angular(p.carrier_detuning)));
  p.phase = m.get_double(sec + ".phase_rad", p.phase);
}

BroadeningProfile read_profile(const Manifest& m, const std::string& prefix, BroadeningProfile p) {
  const std::string kk = "grid." + prefix + "_profile";
  if (m.has(kk)) {
    try {
      p.kind = profile_kind_from_string(m.get_string(kk));
    } catch (const std::invalid_argument& ex) {
      const auto& e = m.entry(kk);
      throw ConfigError(ex.what(), e.line, e.column, kk);
    }
  }
  p.fwhm = m.get_double("grid." + prefix + "_fwhm_mhz", p.fwhm);
  p.center = m.get_double("grid." + prefix + "_center_mhz", p.center);
  if (!(p.fwhm > 0.0))
    throw ConfigError("grid." + prefix + "_fwhm_mhz must be positive", 0, 0, "grid." + prefix + "_fwhm_mhz");
  return p;
}

} // namespace

ProtocolConfig protocol_from_manifest(const Manifest& m) {
  m.check_known_keys();
  ProtocolConfig c = ProtocolConfig::baseline();

  const long mm = m.get_int("grid.m", -1);
  if (mm >= 0) c.grid.m_optical = c.grid.m_spin = static_cast<std::size_t>(mm);
  const long mo = m.get_int("grid.m_optical", static_cast<long>(c.grid.m_optical));
  const long ms = m.get_int("grid.m_spin", static_cast<long>(c.grid.m_spin));
  if (mo < 1 || ms < 1 || (mm >= 0 && mm < 2))
    throw ConfigError("grid.m must be at least 2 (m_optical/m_spin at least 1)", 0, 0, "grid.m");
  c.grid.m_optical = static_cast<std::size_t>(mo);
  c.grid.m_spin = static_cast<std::size_t>(ms);
  c.grid.optical = read_profile(m, "optical", c.grid.optical);
  c.grid.spin = read_profile(m, "spin", c.grid.spin);
  c.grid.optical_span = m.get_double("grid.optical_span", c.grid.optical_span);
  c.grid.spin_span = m.get_double("grid.spin_span", c.grid.spin_span);

  // Pulse durations change the Rabi frequency needed for the default areas.
  const double pump_area = c.pump.area(), mw_area = c.mw.area();
  read_pulse(m, "pump", c.pump);
  if (!m.has("pump.area_rad") && !m.has("pump.area_pi") && !m.has("pump.rabi_khz"))
    c.pump.set_area(pump_area);
  read_pulse(m, "mw", c.mw);
  if (!m.has("mw.area_rad") && !m.has("mw.area_pi") && !m.has("mw.rabi_khz")) c.mw.set_area(mw_area);
  if (m.has_section("mw2")) {
    PulseConfig p2 = c.mw;
    read_pulse(m, "mw2", p2);
    if (!m.has("mw2.area_rad") && !m.has("mw2.area_pi") && !m.has("mw2.rabi_khz")) p2.set_area(c.mw.area());
    c.mw2 = p2;
  }

  c.gamma_p = m.get_double("rap.gamma_p_mhz", c.gamma_p);
  c.rap.shape = read_shape(m, "rap", c.rap.shape);
  c.rap.duration = m.get_double("rap.duration_us", c.rap.duration);
  if (m.has("rap.rabi_khz") && m.has("rap.rabi_gamma_p"))
    throw ConfigError("rap: give only one of rabi_khz, rabi_gamma_p", 0, 0, "rap.rabi_khz");
  c.rap.peak_rabi = units::angular_from_mhz(5.0 * c.gamma_p);
  if (m.has("rap.rabi_khz")) c.rap.peak_rabi = units::angular_from_khz(m.get_double("rap.rabi_khz", 0));
  if (m.has("rap.rabi_gamma_p"))
    c.rap.peak_rabi = units::angular_from_mhz(c.gamma_p * m.get_double("rap.rabi_gamma_p", 0));
  c.rap.chirp_bandwidth = units::angular_from_mhz(m.get_double("rap.chirp_mhz", 1.5));
  c.rap.phase = m.get_double("rap.phase_rad", c.rap.phase);
  if (m.has("rap.windows_mhz")) {
    c.rap.window_offsets.clear();
    for (double w : m.get_list("rap.windows_mhz")) c.rap.window_offsets.push_back(units::angular_from_mhz(w));
  }

  c.timing.tau0 = m.get_double("timing.tau0_us", c.timing.tau0);
  c.timing.tau1 = m.get_double("timing.tau1_us", c.timing.tau1);
  c.timing.tau2 = m.get_double("timing.tau2_us", c.timing.tau2);
  c.timing.mw_gap = m.get_double("timing.mw_gap_us", c.timing.mw_gap);

  c.dephasing.t2_12 = m.get_optional("dephasing.t2_12_us");
  c.dephasing.t2_13 = m.get_optional("dephasing.t2_13_us");
  c.dephasing.t2_23 = m.get_optional("dephasing.t2_23_us");

  c.integrator.dt_max = m.get_double("integrator.dt_max_us", c.integrator.dt_max);
  c.integrator.tol = m.get_double("integrator.tol", c.integrator.tol);
  c.integrator.oversampling = m.get_double("integrator.oversampling", c.integrator.oversampling);

  c.detection.sample_dt = m.get_double("output.sample_dt_us", c.detection.sample_dt);
  c.detection.echo_half_window = m.get_double("output.echo_half_window_us", c.detection.echo_half_window);
  c.detection.t_end = m.get_double("output.t_end_us", c.detection.t_end);
  c.detection.t_detect = m.get_optional("output.t_detect_us");
  const std::string ref = m.get_string("output.detection_reference", "mw1");
  if (ref == "mw1") {
    c.detection.reference = DetectionReference::Mw1;
  } else if (ref == "midpoint") {
    c.detection.reference = DetectionReference::MwMidpoint;
  } else {
    const auto& e = m.entry("output.detection_reference");
    throw ConfigError("output.detection_reference must be 'mw1' or 'midpoint'", e.line, e.column,
                      "output.detection_reference");
  }
  const long workers = m.get_int("output.workers", 0);
  if (workers < 0) throw ConfigError("output.workers must be >= 1", 0, 0, "output.workers");
  c.workers = workers > 0 ? static_cast<unsigned>(workers) : default_workers();
  const long chunk = m.get_int("output.chunk_size", static_cast<long>(c.chunk_size));
  if (chunk < 1) throw ConfigError("output.chunk_size must be >= 1", 0, 0, "output.chunk_size");
  c.chunk_size = static_cast<std::size_t>(chunk);

  try {
    c.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(std::string("invalid configuration: ") + ex.what());
  }
  return c;
}

} // namespace echosim
