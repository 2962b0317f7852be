#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "diffrecon/grid.hpp"
#include "diffrecon/pipeline.hpp"
#include "diffrecon/synth.hpp"

namespace diffrecon {

/// Config violation; the message starts with the offending key path.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Full run configuration: one key-path tree covering every command. Unknown
/// keys are rejected, defaults are materialized on parse, and the resolved
/// form re-parses to itself.
struct RunConfig {
  std::uint64_t seed = 0;
  GridSpec grid;
  SparsePatternSpec sparse;

  struct Synth {
    int steps = 480;
    std::vector<int> periods = {24, 48};
    double period_amplitude = 0.45;
    int bumps = 4;
    double noise_sigma = 0.01;
    double base_level = 0.25;
    std::string start_time = "2024-01-01T00:00:00Z";
  } synth;

  NetConfig net;

  struct Train {
    int steps_c = 200;
    int steps_f = 200;
    int steps_joint = 100;
    int batch = 4;
    double lr = 1e-3;
    double lambda_c = 1.0;
    double lambda_f = 1.0;
    bool no_pre = false;
    bool no_joint = false;
    bool no_stpointformer = false;
    bool no_tpatternnet = false;
  } train;

  struct Diffusion {
    int steps = 80;
    double beta_start = 1e-3;
    double beta_end = 0.12;
    std::string kind = "linear";
  } diffusion;

  struct Eval {
    int holdout_steps = 48;
    int export_step = 0;
    int samples = 1;  // deterministic samples averaged at inference
  } eval;

  struct Ablate {
    std::string variant = "noPre";
  } ablate;

  struct Ingest {
    std::string start_time = "2024-01-01T00:00:00Z";
    int steps = 24;
  } ingest;

  struct Paths {
    std::string input, records, truth, checkpoint, observed, masks;
  } paths;

  TrainConfig to_train_config() const;
  SynthSpec to_synth_spec() const;

  /// Fully materialized canonical JSON (sorted keys, stable numerics).
  std::string resolved() const;
};

RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text);

}  // namespace diffrecon
