#include "diffrecon/synth.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "diffrecon/rng.hpp"

namespace diffrecon {

void SynthSpec::validate() const {
  grid.validate();
  if (steps < 1) throw std::invalid_argument("SynthSpec: steps must be >= 1");
  if (periods.empty()) throw std::invalid_argument("SynthSpec: need at least one planted period");
  for (int p : periods)
    if (p < 2 || p > steps / 2)
      throw std::invalid_argument("SynthSpec: each period must lie in [2, steps/2]");
  if (bumps < 1) throw std::invalid_argument("SynthSpec: bumps must be >= 1");
  if (noise_sigma < 0.0 || period_amplitude < 0.0 || base_level <= 0.0)
    throw std::invalid_argument("SynthSpec: amplitudes must be nonnegative, base_level positive");
}

GridSeries generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  const int h = spec.grid.rows * spec.grid.magnification;
  const int w = spec.grid.cols * spec.grid.magnification;
  Rng rng(spec.seed);

  struct Bump {
    double r, c, sigma, amp;
  };
  std::vector<Bump> bumps;
  for (int i = 0; i < spec.bumps; ++i)
    bumps.push_back({rng.uniform(0.1, 0.9) * h, rng.uniform(0.1, 0.9) * w,
                     rng.uniform(0.08, 0.2) * std::max(h, w), rng.uniform(0.5, 1.0)});

  // Static fine-scale intensity field.
  Tensor base({h, w});
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double v = spec.base_level;
      for (const auto& b : bumps) {
        double dr = (r + 0.5 - b.r) / b.sigma, dc = (c + 0.5 - b.c) / b.sigma;
        v += b.amp * std::exp(-0.5 * (dr * dr + dc * dc));
      }
      base.at2(r, c) = v;
    }

  std::vector<double> phase;
  for (std::size_t i = 0; i < spec.periods.size(); ++i)
    phase.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
  const double amp_each = spec.period_amplitude / static_cast<double>(spec.periods.size());

  GridSeries out;
  out.spec = spec.grid;
  out.start_time = spec.start_time;
  out.granularity = Granularity::fine;
  out.values = Tensor({spec.steps, h, w});
  for (int s = 0; s < spec.steps; ++s) {
    double mod = 1.0;
    for (std::size_t i = 0; i < spec.periods.size(); ++i)
      mod += amp_each *
             std::sin(2.0 * std::numbers::pi * s / spec.periods[i] + phase[i]);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        out.values.at3(s, r, c) =
            std::max(0.0, base.at2(r, c) * mod + rng.gauss() * spec.noise_sigma);
  }
  return out;
}

}  // namespace diffrecon
