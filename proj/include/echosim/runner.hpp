#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "echosim/config.hpp"
#include "echosim/fitting.hpp"

namespace echosim {

using Json = nlohmann::ordered_json;

std::string code_version();

struct RunSettings {
  /// Output directory, created when missing. Empty writes nothing.
  std::string out_dir;
  /// Progress lines go here unless null.
  std::ostream* log = nullptr;
};

struct RunReport {
  std::string experiment;
  Json summary;
  std::vector<std::string> files;
};

/// Checks the manifest against the schema and the experiment's own section
/// without running anything. Throws ConfigError.
void validate_manifest(const Manifest& m);

/// Runs the experiment named by experiment.type (protocol, sweep,
/// interference, multiplex, rotation, rap_compare) and writes its CSVs, the
/// long-format plot file, the canonical manifest and summary.json.
RunReport run_experiment(const Manifest& m, const RunSettings& settings);

/// Values from "<sec>.values" or "<sec>.start/stop/count".
std::vector<double> read_values(const Manifest& m, const std::string& section,
                                const std::vector<double>& fallback);

/// Pump-MW delay sweep (ideal readout at a fixed detection time) fitted with
/// ExpDecay on the readout intensity.
struct DelayDecay {
  SweepResult sweep;
  FitResult fit;
  double time_constant = 0.0;
};

DelayDecay delay_decay(const ProtocolConfig& config, const std::vector<double>& delays);

std::vector<double> default_delay_values();

Json fit_to_json(const FitResult& r);

} // namespace echosim
