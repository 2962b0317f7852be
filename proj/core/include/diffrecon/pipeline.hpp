#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "diffrecon/diffusion.hpp"
#include "diffrecon/grid.hpp"
#include "diffrecon/nets.hpp"

namespace diffrecon {

/// Everything the two-stage training run needs: step budgets, optimizer
/// settings, diffusion schedule, network hyperparameters, ablation flags.
struct TrainConfig {
  int steps_c = 200;      // stage-C pretraining steps
  int steps_f = 200;      // stage-F pretraining steps
  int steps_joint = 100;  // joint-phase steps
  int batch = 4;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  int diffusion_steps = 80;
  double beta_start = 1e-3;
  double beta_end = 0.12;
  ScheduleKind schedule_kind = ScheduleKind::linear;

  NetConfig net;

  bool no_pre = false;
  bool no_joint = false;
  bool no_stpointformer = false;
  bool no_tpatternnet = false;

  double lambda_c = 1.0;
  double lambda_f = 1.0;

  void validate() const;
};

struct TrainLogEntry {
  std::string phase;  // "pretrain_c" | "pretrain_f" | "joint"
  int step = 0;
  double loss = 0.0;
};

/// Trained two-stage system plus provenance; the unit of persistence.
struct CheckpointBundle {
  ModelBundle stage_c;
  ModelBundle stage_f;
  TrainConfig cfg;
  GridSpec spec;  // coarse geometry of the training grids
  UnixTime start_time = 0;
  std::vector<TrainLogEntry> log;
  bool degenerate_data = false;  // constant training series
};

/// Per-step training views of one dataset: truth at both resolutions plus
/// masked observations, all in raw data units.
struct TrainingData {
  GridSeries fine_truth;     // [T, N*I, N*J]
  GridSeries coarse_truth;   // pseudo-complete, [T, I, J]
  GridSeries observed;       // masked coarse, [T, I, J]
  MaskSequence masks;        // [T, I, J]
  std::vector<ExternalFeatureVector> external;  // per step
};

TrainingData prepare_training_data(const GridSeries& fine_truth, const SparsePatternSpec& pattern,
                                   const HolidayTable* holidays = nullptr);

ModelBundle pretrain_stage_c(const GridSeries& fine_truth, const SparsePatternSpec& pattern,
                             const TrainConfig& cfg, std::vector<TrainLogEntry>* log = nullptr);
ModelBundle pretrain_stage_f(const GridSeries& fine_truth, const TrainConfig& cfg,
                             std::vector<TrainLogEntry>* log = nullptr);

/// Couples the stages: stage F conditions on stage C's differentiable
/// one-shot x0 estimate, so L_F gradients reach stage-C parameters. A
/// non-finite loss aborts with the last finite-loss parameter state.
CheckpointBundle joint_train(ModelBundle stage_c, ModelBundle stage_f,
                             const GridSeries& fine_truth, const SparsePatternSpec& pattern,
                             const TrainConfig& cfg,
                             std::vector<TrainLogEntry> log = {});

/// Convenience wrapper: pretrain both stages (skipped under no_pre — models
/// stay at initialization) then run the joint phase.
CheckpointBundle train_full(const GridSeries& fine_truth, const SparsePatternSpec& pattern,
                            const TrainConfig& cfg);

/// Samples the complete coarse map for the last history step. history holds
/// the masked raw-unit window (current step last), mask the matching flags.
/// Observed cells of the output are overwritten with their inputs exactly.
/// samples > 1 averages that many seed-derived deterministic samples.
GridSeries complete_coarse(const ModelBundle& bundle_c, const GridSeries& observed,
                           const MaskSequence& mask, const GridSeries& history,
                           const std::vector<ExternalFeatureVector>& external, std::uint64_t seed,
                           int samples = 1);

/// Stage-C pass over a whole series: coarse completion per step with a
/// rolling masked-history window.
GridSeries complete_series(const CheckpointBundle& ckpt, const GridSeries& observed_series,
                           const MaskSequence& masks,
                           const std::vector<ExternalFeatureVector>& external, std::uint64_t seed,
                           int samples = 1);

/// Stage-F pass: fine inference per step conditioned on the completed coarse
/// series and its rolling history window.
GridSeries fine_infer(const CheckpointBundle& ckpt, const GridSeries& completed,
                      std::uint64_t seed, int samples = 1);

/// Full reconstruction: per step, coarse completion with a rolling history
/// window, then fine inference conditioned on the completed map. Inputs and
/// outputs are raw data units; output is [T, N*I, N*J].
GridSeries reconstruct(const CheckpointBundle& ckpt, const GridSeries& observed_series,
                       const MaskSequence& masks,
                       const std::vector<ExternalFeatureVector>& external, std::uint64_t seed,
                       int samples = 1);

/// Canonical serialized training config (stable key order), the hashing
/// input for report provenance.
std::string train_config_canonical(const TrainConfig& cfg);

void save_checkpoint(const std::filesystem::path& path, const CheckpointBundle& ckpt);
CheckpointBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace diffrecon
