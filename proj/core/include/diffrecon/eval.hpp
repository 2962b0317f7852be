#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "diffrecon/grid.hpp"
#include "diffrecon/pipeline.hpp"

namespace diffrecon {

struct EvalReport {
  std::string scenario;  // pattern kind + ratio
  double mae = 0.0;
  double rmse = 0.0;
  std::vector<double> per_step_mae;
  std::vector<double> per_step_rmse;
  std::uint64_t seed = 0;
  std::string config_hash;
  double runtime_s = 0.0;

  std::string to_json() const;
};

std::pair<double, double> mae_rmse(const GridSeries& pred, const GridSeries& truth);

/// FNV-1a over the canonical serialized form; stable across runs.
std::string config_hash64(const std::string& canonical);

/// Deterministic scenario run: downsample the truth, mask it with the given
/// pattern, reconstruct, and score against the fine truth.
EvalReport run_scenario(const CheckpointBundle& ckpt, const GridSeries& truth_fine,
                        const SparsePatternSpec& pattern, std::uint64_t seed, int samples = 1);

/// Baseline 1: per step, fill missing coarse cells from the nearest observed
/// cell, then bilinear-upsample to fine resolution.
GridSeries nn_fill_bilinear(const GridSeries& observed, const MaskSequence& masks,
                            int magnification);

/// Baseline 2: per-fine-cell mean of the training series, repeated over the
/// evaluation steps.
GridSeries historical_mean(const GridSeries& train_fine, const GridSeries& like);

enum class AblationVariant { noPre, noJoint, noSTPointFormer, noTPatternNet, noFGSwap };

/// Plug-in replacement for stage F under noFG-swap: maps the completed
/// coarse series to a fine series.
using FinePredictorPlugin = std::function<GridSeries(const GridSeries& completed_coarse)>;

struct AblationResult {
  EvalReport full;
  EvalReport variant;
  std::int64_t full_param_count = 0;
  std::int64_t variant_param_count = 0;
};

/// Trains and evaluates one ablation variant under the same data and seeds
/// as the full model; train/eval split at `train_steps`.
AblationResult run_ablation(AblationVariant variant, const GridSeries& fine_truth,
                            int train_steps, const SparsePatternSpec& pattern,
                            const TrainConfig& cfg,
                            const FinePredictorPlugin* plugin = nullptr, int samples = 1);

/// Writes a color raster (`<path>.ppm`) and an exact CSV (`<path>.csv`) of
/// one timestep; with truth supplied, also `<path>.err.csv` of |pred-truth|.
void export_heatmap(const GridSeries& map, int step, const std::filesystem::path& path_stem,
                    const GridSeries* truth = nullptr);

}  // namespace diffrecon
