#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "diffrecon/diffusion.hpp"
#include "diffrecon/grid.hpp"
#include "diffrecon/params.hpp"

namespace diffrecon {

/// Shared hyperparameters of both stages' noise predictors.
struct NetConfig {
  int d_model = 64;
  int heads = 4;
  int layers = 2;       // attention-layer count K
  int ff_width = 128;
  int l_blocks = 2;     // TimesBlock count L
  int k_periods = 3;
  int t_hist = 8;       // history window length
  int base_filters = 16;
  // Backbone bottleneck is input/4 per axis (two pooling levels).
  static constexpr int kBottleneckDiv = 4;

  int d_k() const { return d_model / heads; }
  void validate() const;
};

// ---------------- attention encoder (stage C) ----------------

struct AttnLayerParams {
  Affine q, k, v, o;
  ad::Var ln1_g, ln1_b, ln2_g, ln2_b;
  Affine ff1, ff2;
  static AttnLayerParams create(ParamStore& store, const std::string& name, const NetConfig& cfg,
                                Rng& rng);
};

struct PointFormerParams {
  Affine value_emb;   // [value, flag] -> d_model
  ad::Var pos_table;  // [t*rows*cols, d_model], learned
  Affine ext_emb;     // encoded external features -> d_model
  std::vector<AttnLayerParams> layers;
  Affine agg;         // post-grouping projection
  static PointFormerParams create(ParamStore& store, const std::string& name, const NetConfig& cfg,
                                  int rows, int cols, Rng& rng);
};

/// Token embedding: value + learned position + external, token order
/// (time, row, col) row-major. Returns [t*rows*cols, d_model].
ad::Var embed_points(const GridSeries& history, const MaskSequence& masks,
                     const std::vector<ExternalFeatureVector>& external,
                     const PointFormerParams& p);

/// Pre-residual multi-head attention output, exposed for verification.
ad::Var multi_head_attention(const ad::Var& tokens, const AttnLayerParams& p, const NetConfig& cfg);

/// One encoder layer: attention + residual/LayerNorm + feedforward path.
ad::Var attention_layer(const ad::Var& tokens, const AttnLayerParams& p, const NetConfig& cfg);

/// K attention layers followed by per-subregion mean aggregation and
/// projection; returns [rows_down*cols_down, d_model].
ad::Var pointformer_encode(const ad::Var& tokens, const PointFormerParams& p, const NetConfig& cfg,
                           int t, int rows, int cols, int rows_down, int cols_down);

// ---------------- period analysis (stage F) ----------------

struct PeriodDecomposition {
  std::vector<int> freqs;    // frequency indices, descending amplitude
  std::vector<int> periods;  // ceil(t / f)
  std::vector<double> amps;
  int k = 0;
};

/// Channel-averaged DFT amplitudes, DC excluded; top-k frequencies with
/// ties broken toward the lower frequency.
PeriodDecomposition detect_periods(const Tensor& x1d, int k);

/// [t, d] series folded into [d, p, ceil(t/p)], zero-padded; columns index
/// the period number, rows the intraperiod phase.
Tensor fold_2d(const Tensor& x1d, int period);
Tensor unfold_trunc(const Tensor& y2d, int t_orig);

struct TimesBlockParams {
  ad::Var k1, b1, k3, b3, k5, b5;  // inception kernels {1,3,5}, equal widths, summed
  static TimesBlockParams create(ParamStore& store, const std::string& name, int d_model, Rng& rng);
};

/// One TimesBlock: per selected period fold / inception / unfold, branches
/// fused by softmax of the DFT amplitudes, residual added.
ad::Var times_block(const ad::Var& x1d, int k, const TimesBlockParams& p);

struct PatternNetParams {
  Affine embed;  // subregion cell values -> d_model
  std::vector<TimesBlockParams> blocks;
  Affine agg;
  static PatternNetParams create(ParamStore& store, const std::string& name, const NetConfig& cfg,
                                 int cells_per_subregion, Rng& rng);
};

/// Per-subregion temporal encoding of a complete coarse history; returns
/// [rows_down*cols_down, d_model]. Subregion weights are shared.
ad::Var patternnet_encode(const GridSeries& history, const PatternNetParams& p,
                          const NetConfig& cfg, int rows_down, int cols_down);

// ---------------- U-Net backbone ----------------

struct ConvParams {
  ad::Var k, b;
  static ConvParams create(ParamStore& store, const std::string& name, int co, int ci, int ksz,
                           Rng& rng);
};

struct UNetParams {
  ConvParams enc0a, enc0b, enc1a, enc1b, mid;
  Affine tau0, tau1, tau2;  // sinusoidal step embedding -> per-level channel bias
  ConvParams fuse_intra;    // 1x1 at the bottleneck
  std::optional<ConvParams> fuse_inter;
  ConvParams dec1a, dec1b, dec0a, dec0b, out;
  static UNetParams create(ParamStore& store, const std::string& name, int in_channels,
                           const NetConfig& cfg, bool with_inter, Rng& rng);
};

constexpr int kTauEmbedDim = 16;
Tensor sinusoidal_tau_embedding(int tau, int dim = kTauEmbedDim);

/// Backbone prediction. s_tau: [1,H,W]; cond_maps: [c,H,W] (c may be 0);
/// s_inter: bottleneck feature [d_model, H/4, W/4] or nullptr (ablation).
ad::Var unet_predict(const ad::Var& s_tau, int tau, const ad::Var* s_inter,
                     const std::vector<ad::Var>& cond_maps, const UNetParams& p,
                     const NetConfig& cfg);

// ---------------- combined predictor ----------------

enum class Stage { C, F };

/// Task-specialized noise predictor: U-Net intra-map backbone fused with
/// ST-PointFormer (stage C) or T-PatternNet (stage F).
class NoisePredictorModel : public DiffPredictor {
 public:
  /// rows/cols are the stage's map resolution (coarse for C, fine for F);
  /// coarse_rows/cols are the history resolution (equal to rows/cols for C).
  NoisePredictorModel(Stage stage, const NetConfig& cfg, int rows, int cols, int coarse_rows,
                      int coarse_cols, bool inter_enabled, std::uint64_t init_seed);

  ad::Var predict(const ad::Var& s_tau, int tau, const Condition& cond) override;
  Tensor predict_numeric(const Tensor& s_tau, int tau, const Condition& cond);
  PredictorFn as_fn();

  /// Prediction with explicit (possibly differentiable) condition maps and a
  /// precomputed bottleneck feature; used by joint training.
  ad::Var predict_with(const ad::Var& s_tau, int tau, const std::vector<ad::Var>& cond_maps,
                       const ad::Var* s_inter);
  /// Closure for the reverse loop: encodes the fixed condition once.
  PredictorFn as_sampling_fn(const Condition& cond);

  std::vector<ad::Var> cond_maps_from(const Condition& cond) const;
  ad::Var inter_from(const Condition& cond);

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const NetConfig& config() const { return cfg_; }
  Stage stage() const { return stage_; }
  bool inter_enabled() const { return inter_enabled_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int coarse_rows() const { return coarse_rows_; }
  int coarse_cols() const { return coarse_cols_; }

 private:
  Stage stage_;
  NetConfig cfg_;
  int rows_, cols_, coarse_rows_, coarse_cols_;
  bool inter_enabled_;
  ParamStore store_;
  UNetParams unet_;
  std::optional<PointFormerParams> pointformer_;
  std::optional<PatternNetParams> patternnet_;
};

/// One stage's trained predictor plus everything needed to run it.
struct ModelBundle {
  Stage stage = Stage::C;
  NetConfig cfg;
  NoiseSchedule schedule;
  NormStats norm;       // stats of the stage's target maps
  NormStats cond_norm;  // stats of the conditioning coarse maps (stage F)
  bool inter_enabled = true;
  std::shared_ptr<NoisePredictorModel> model;
};

}  // namespace diffrecon
