#include "diffrecon/eval.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"

#include "diffrecon/io.hpp"

namespace diffrecon {

using nlohmann::json;

std::string EvalReport::to_json() const {
  json per = json::array();
  for (std::size_t i = 0; i < per_step_mae.size(); ++i)
    per.push_back({{"step", i}, {"mae", per_step_mae[i]}, {"rmse", per_step_rmse[i]}});
  json j = {{"scenario", scenario}, {"mae", mae},
            {"rmse", rmse},         {"per_step", per},
            {"seed", seed},         {"config_hash", config_hash},
            {"runtime_s", runtime_s}};
  return j.dump(1);
}

std::pair<double, double> mae_rmse(const GridSeries& pred, const GridSeries& truth) {
  if (!pred.values.same_shape(truth.values))
    throw std::invalid_argument("mae_rmse: shape mismatch");
  double abs_sum = 0.0, sq_sum = 0.0;
  const std::int64_t n = pred.values.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    double e = pred.values[i] - truth.values[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  return {abs_sum / static_cast<double>(n), std::sqrt(sq_sum / static_cast<double>(n))};
}

std::string config_hash64(const std::string& canonical) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string scenario_name(const SparsePatternSpec& p) {
  switch (p.kind) {
    case SparseKind::fixed: return "fixed@" + std::to_string(p.missing_ratio);
    case SparseKind::random_per_step: return "random_per_step@" + std::to_string(p.missing_ratio);
    case SparseKind::large_scale: return "large_scale";
  }
  return "unknown";
}

EvalReport score(const GridSeries& pred, const GridSeries& truth, const SparsePatternSpec& pattern,
                 std::uint64_t seed, const std::string& cfg_canonical, double runtime_s) {
  EvalReport r;
  r.scenario = scenario_name(pattern);
  auto [mae, rmse] = mae_rmse(pred, truth);
  r.mae = mae;
  r.rmse = rmse;
  for (int s = 0; s < pred.steps(); ++s) {
    double abs_sum = 0.0, sq_sum = 0.0;
    const int cells = pred.rows() * pred.cols();
    for (int i = 0; i < pred.rows(); ++i)
      for (int j = 0; j < pred.cols(); ++j) {
        double e = pred.values.at3(s, i, j) - truth.values.at3(s, i, j);
        abs_sum += std::abs(e);
        sq_sum += e * e;
      }
    r.per_step_mae.push_back(abs_sum / cells);
    r.per_step_rmse.push_back(std::sqrt(sq_sum / cells));
  }
  r.seed = seed;
  r.config_hash = config_hash64(cfg_canonical);
  r.runtime_s = runtime_s;
  return r;
}

std::vector<ExternalFeatureVector> externals_for(const GridSeries& s) {
  std::vector<ExternalFeatureVector> ext;
  for (int i = 0; i < s.steps(); ++i) ext.push_back(calendar_features(s.time_at(i)));
  return ext;
}

}  // namespace

EvalReport run_scenario(const CheckpointBundle& ckpt, const GridSeries& truth_fine,
                        const SparsePatternSpec& pattern, std::uint64_t seed, int samples) {
  auto t0 = std::chrono::steady_clock::now();
  GridSeries coarse = downsample(truth_fine);
  MaskSequence masks = generate_masks(pattern, coarse.steps(), coarse.rows(), coarse.cols());
  GridSeries observed = apply_mask(coarse, masks);
  GridSeries pred = reconstruct(ckpt, observed, masks, externals_for(coarse), seed, samples);
  double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return score(pred, truth_fine, pattern, seed, train_config_canonical(ckpt.cfg), dt);
}

GridSeries nn_fill_bilinear(const GridSeries& observed, const MaskSequence& masks,
                            int magnification) {
  if (!observed.values.same_shape(masks.flags))
    throw std::invalid_argument("nn_fill_bilinear: shape mismatch");
  const int steps = observed.steps(), rows = observed.rows(), cols = observed.cols();
  const int n = magnification;

  // Nearest-observed fill at coarse resolution.
  Tensor filled({steps, rows, cols});
  for (int s = 0; s < steps; ++s)
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        if (masks.flags.at3(s, r, c) != 0.0) {
          filled.at3(s, r, c) = observed.values.at3(s, r, c);
          continue;
        }
        double best = std::numeric_limits<double>::max();
        double v = 0.0;
        for (int rr = 0; rr < rows; ++rr)
          for (int cc = 0; cc < cols; ++cc) {
            if (masks.flags.at3(s, rr, cc) == 0.0) continue;
            double d = static_cast<double>((rr - r) * (rr - r) + (cc - c) * (cc - c));
            if (d < best) {  // ties resolve to the first cell in row-major order
              best = d;
              v = observed.values.at3(s, rr, cc);
            }
          }
        filled.at3(s, r, c) = v;
      }

  GridSeries fine;
  fine.spec = observed.spec;
  fine.start_time = observed.start_time;
  fine.granularity = Granularity::fine;
  fine.values = Tensor({steps, rows * n, cols * n});
  for (int s = 0; s < steps; ++s)
    for (int fr = 0; fr < rows * n; ++fr)
      for (int fc = 0; fc < cols * n; ++fc) {
        // Fine-cell center in coarse index coordinates, clamped at edges.
        double y = (fr + 0.5) / n - 0.5, x = (fc + 0.5) / n - 0.5;
        int r0 = static_cast<int>(std::floor(y)), c0 = static_cast<int>(std::floor(x));
        double wy = y - r0, wx = x - c0;
        int r0c = std::clamp(r0, 0, rows - 1), r1c = std::clamp(r0 + 1, 0, rows - 1);
        int c0c = std::clamp(c0, 0, cols - 1), c1c = std::clamp(c0 + 1, 0, cols - 1);
        double v = (1 - wy) * ((1 - wx) * filled.at3(s, r0c, c0c) + wx * filled.at3(s, r0c, c1c)) +
                   wy * ((1 - wx) * filled.at3(s, r1c, c0c) + wx * filled.at3(s, r1c, c1c));
        fine.values.at3(s, fr, fc) = v;
      }
  return fine;
}

GridSeries historical_mean(const GridSeries& train_fine, const GridSeries& like) {
  if (train_fine.rows() != like.rows() || train_fine.cols() != like.cols())
    throw std::invalid_argument("historical_mean: resolution mismatch");
  GridSeries out;
  out.spec = like.spec;
  out.start_time = like.start_time;
  out.granularity = Granularity::fine;
  out.values = Tensor({like.steps(), like.rows(), like.cols()});
  for (int r = 0; r < like.rows(); ++r)
    for (int c = 0; c < like.cols(); ++c) {
      double sum = 0.0;
      for (int s = 0; s < train_fine.steps(); ++s) sum += train_fine.values.at3(s, r, c);
      double mean = sum / train_fine.steps();
      for (int s = 0; s < like.steps(); ++s) out.values.at3(s, r, c) = mean;
    }
  return out;
}

AblationResult run_ablation(AblationVariant variant, const GridSeries& fine_truth,
                            int train_steps, const SparsePatternSpec& pattern,
                            const TrainConfig& cfg, const FinePredictorPlugin* plugin,
                            int samples) {
  if (train_steps < 1 || train_steps >= fine_truth.steps())
    throw std::invalid_argument("run_ablation: train_steps out of range");
  if (variant == AblationVariant::noFGSwap && !plugin)
    throw std::invalid_argument("run_ablation: noFG-swap requires a fine predictor plug-in");

  GridSeries train = slice_steps(fine_truth, 0, train_steps);
  GridSeries test = slice_steps(fine_truth, train_steps, fine_truth.steps());

  TrainConfig vcfg = cfg;
  switch (variant) {
    case AblationVariant::noPre: vcfg.no_pre = true; break;
    case AblationVariant::noJoint: vcfg.no_joint = true; break;
    case AblationVariant::noSTPointFormer: vcfg.no_stpointformer = true; break;
    case AblationVariant::noTPatternNet: vcfg.no_tpatternnet = true; break;
    case AblationVariant::noFGSwap: break;  // full training, swapped inference
  }

  CheckpointBundle full = train_full(train, pattern, cfg);

  AblationResult res;
  res.full = run_scenario(full, test, pattern, cfg.seed, samples);
  res.full_param_count =
      full.stage_c.model->params().count() + full.stage_f.model->params().count();

  if (variant == AblationVariant::noFGSwap) {
    auto t0 = std::chrono::steady_clock::now();
    GridSeries coarse = downsample(test);
    MaskSequence masks = generate_masks(pattern, coarse.steps(), coarse.rows(), coarse.cols());
    GridSeries observed = apply_mask(coarse, masks);
    GridSeries completed =
        complete_series(full, observed, masks, externals_for(coarse), cfg.seed, samples);
    GridSeries pred = (*plugin)(completed);
    if (!pred.values.same_shape(test.values))
      throw std::invalid_argument("run_ablation: plug-in returned wrong output shape");
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.variant = [&] {
      EvalReport r;
      auto [mae, rmse] = mae_rmse(pred, test);
      r = res.full;  // shares scenario/provenance fields
      r.mae = mae;
      r.rmse = rmse;
      r.per_step_mae.clear();
      r.per_step_rmse.clear();
      r.scenario += "+noFG-swap";
      r.runtime_s = dt;
      return r;
    }();
    res.variant_param_count = res.full_param_count;
  } else {
    CheckpointBundle var = train_full(train, pattern, vcfg);
    res.variant = run_scenario(var, test, pattern, cfg.seed, samples);
    res.variant.config_hash = config_hash64(train_config_canonical(vcfg));
    res.variant_param_count =
        var.stage_c.model->params().count() + var.stage_f.model->params().count();
  }
  return res;
}

void export_heatmap(const GridSeries& map, int step, const std::filesystem::path& path_stem,
                    const GridSeries* truth) {
  if (step < 0 || step >= map.steps()) throw std::out_of_range("export_heatmap: step out of range");
  Tensor slice({map.rows(), map.cols()});
  for (int r = 0; r < map.rows(); ++r)
    for (int c = 0; c < map.cols(); ++c) slice.at2(r, c) = map.values.at3(step, r, c);
  std::filesystem::path ppm = path_stem;
  ppm += ".ppm";
  std::filesystem::path csv = path_stem;
  csv += ".csv";
  io::write_heatmap_ppm(ppm, slice);
  io::write_grid_csv(csv, slice);
  if (truth) {
    if (!truth->values.same_shape(map.values))
      throw std::invalid_argument("export_heatmap: truth shape mismatch");
    Tensor err({map.rows(), map.cols()});
    for (int r = 0; r < map.rows(); ++r)
      for (int c = 0; c < map.cols(); ++c)
        err.at2(r, c) = std::abs(map.values.at3(step, r, c) - truth->values.at3(step, r, c));
    std::filesystem::path errcsv = path_stem;
    errcsv += ".err.csv";
    io::write_grid_csv(errcsv, err);
  }
}

}  // namespace diffrecon
