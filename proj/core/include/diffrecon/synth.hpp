#pragma once

#include <cstdint>
#include <vector>

#include "diffrecon/grid.hpp"

namespace diffrecon {

/// Synthetic fine-grained dataset: static spatial structure (Gaussian bumps)
/// whose intensity is modulated by planted periodic signals plus noise, so
/// both the spatial super-resolution and the period-detection machinery have
/// real structure to recover.
struct SynthSpec {
  GridSpec grid;                     // coarse geometry; fine is rows*N x cols*N
  int steps = 480;
  std::vector<int> periods = {24, 48};
  double period_amplitude = 0.45;    // per planted tone, relative modulation
  int bumps = 4;
  double noise_sigma = 0.01;
  double base_level = 0.25;
  UnixTime start_time = 1704067200;  // 2024-01-01T00:00:00Z
  std::uint64_t seed = 0;

  void validate() const;
};

GridSeries generate_synthetic(const SynthSpec& spec);

}  // namespace diffrecon
