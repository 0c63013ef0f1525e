#include <stdexcept>

#include "echosim/config.hpp"

namespace echosim {

namespace {

struct Preset {
  const char* id;
  const char* text;
};

// Grids are sized so each preset finishes in seconds to a few minutes on
// one core; see the README for the convergence checks behind them.
const Preset kPresets[] = {
    {"fig1d", R"([experiment]
type = protocol
name = fig1d
description = full transduction sequence, all coherences

[grid]
m = 150
)"},
    {"fig2a", R"([experiment]
type = sweep
name = fig2a
description = echo amplitude against MW pulse area (small-area regime)

[sweep]
axis = mw_amplitude
start = 0.02
stop = 0.3141592653589793
count = 12
metric = peak
method = ideal
)"},
    {"fig2b", R"([experiment]
type = sweep
name = fig2b
description = echo intensity against storage time with T2 on the memory transition

[dephasing]
t2_12_us = 475

[sweep]
axis = storage_tau2
start = 170
stop = 670
count = 11
metric = peak
method = ideal
fit_model = exp_decay_2t2
fit_x = storage_time
fit_y = intensity
)"},
    {"fig2c", R"([experiment]
type = sweep
name = fig2c
description = pump-MW delay decay on a 642 kHz spin line

[grid]
m_optical = 15
m_spin = 201
spin_profile = lorentzian
spin_fwhm_mhz = 0.642
spin_span = 10

[sweep]
axis = pump_mw_delay
start = 0
stop = 6
count = 25
metric = detection
method = ideal
fit_model = exp_decay
fit_y = intensity
)"},
    {"fig4c", R"([experiment]
type = interference
name = fig4c
description = two-MW phase interference with the MW2 decay emulated from the delay sweep

[grid]
m_optical = 15
m_spin = 201
spin_profile = lorentzian
spin_fwhm_mhz = 0.6
spin_span = 10

[mw2]

[output]
detection_reference = midpoint

[interference]
mode = phase
start = -3.141592653589793
stop = 3.141592653589793
count = 37
emulated_decay_us = auto
fit = cosine_interference
)"},
    {"fig4d", R"([experiment]
type = interference
name = fig4d
description = MW2 frequency sweep at zero phase difference

[grid]
m_optical = 9
m_spin = 121
spin_profile = lorentzian
spin_fwhm_mhz = 0.6
spin_span = 10

[mw2]

[output]
detection_reference = midpoint

[interference]
mode = frequency
start = -0.5
stop = 0.5
count = 101
fit = lorentz_mod_cosine
)"},
    {"figS5", R"([experiment]
type = rap_compare
name = figS5
description = undesired echo suppression at two RAP Rabi frequencies

[grid]
m = 150

[compare]
rabi_gamma_p = 2.5, 5
)"},
    {"figS6", R"([experiment]
type = sweep
name = figS6
description = pump-MW delay decay on a 0.6 MHz spin line

[grid]
m_optical = 15
m_spin = 201
spin_profile = lorentzian
spin_fwhm_mhz = 0.6
spin_span = 10

[sweep]
axis = pump_mw_delay
start = 0
stop = 6
count = 25
metric = detection
method = ideal
fit_model = exp_decay
fit_y = intensity
)"},
    {"figS8", R"([experiment]
type = rotation
name = figS8
description = two sequential MW rotations on a Lorentzian spin line

[rotation]
m = 201
span = 10
spin_fwhm_mhz = 0.6
shape = square
duration_us = 2
area_pi = 0.1
phase2_rad = 0
start = -3
stop = 3
count = 61
)"},
    {"fig5b", R"([experiment]
type = multiplex
name = fig5b
description = ten temporal modes stored FIFO under one RAP pair

[grid]
m_optical = 201
m_spin = 121
optical_profile = gaussian
optical_fwhm_mhz = 0.4
optical_span = 2
spin_profile = lorentzian
spin_fwhm_mhz = 0.2
spin_span = 6

[pump]
area_pi = 0.1

[timing]
tau1_us = 106

[integrator]
oversampling = 10

[multiplex]
modes = 10
spacing_us = 10
)"},
};

} // namespace

std::vector<std::string> preset_ids() {
  std::vector<std::string> ids;
  for (const auto& p : kPresets) ids.emplace_back(p.id);
  return ids;
}

std::string preset_manifest(std::string_view id) {
  for (const auto& p : kPresets)
    if (id == p.id) return p.text;
  throw std::out_of_range("unknown preset '" + std::string(id) + "'");
}

} // namespace echosim
