#pragma once

#include <cstdint>

#include "wdm/grid.hpp"

namespace wdm {

/// Settings of the synthetic storm generator. Lengths are fractions of the
/// shorter field side so the same settings work at any resolution;
/// amplitudes are in dBZ.
struct StormParams {
  // Stratiform layer: a base level plus elongated Gaussian bands. Its
  // overall amplitude scales with `background`; 0 disables it.
  double background = 18.0;
  int min_bands = 1;
  int max_bands = 3;
  double band_length = 0.7;
  double band_width = 0.14;
  double base_level = -0.12;  // offset as a fraction of `background`; negative carves dry gaps

  // Convective cells with an exp(-r / radius) profile.
  int min_cells = 2;
  int max_cells = 6;
  double cell_amplitude_lo = 22.0;
  double cell_amplitude_hi = 42.0;
  double cell_radius_lo = 0.08;
  double cell_radius_hi = 0.16;

  // Smooth multiplicative log-normal texture.
  double texture_sigma = 0.06;
  double texture_length = 0.1;

  // Values below this are set to zero (dry pixels).
  double rain_threshold = 4.0;
  double value_max = 80.0;
};

GridField synth_storm_field(std::uint64_t seed, int height, int width, const StormParams& params = {});

}  // namespace wdm
