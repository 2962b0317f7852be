#include "diffrecon/nets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace diffrecon {

using ad::Var;

void NetConfig::validate() const {
  if (d_model < 1 || heads < 1 || d_model % heads != 0)
    throw std::invalid_argument("NetConfig: heads must divide d_model");
  if (layers < 0 || l_blocks < 0) throw std::invalid_argument("NetConfig: negative layer count");
  if (ff_width < 1 || t_hist < 1 || base_filters < 1 || k_periods < 1)
    throw std::invalid_argument("NetConfig: counts must be positive");
}

// ---------------- attention encoder ----------------

AttnLayerParams AttnLayerParams::create(ParamStore& store, const std::string& name,
                                        const NetConfig& cfg, Rng& rng) {
  AttnLayerParams p;
  p.q = Affine::create(store, name + ".q", cfg.d_model, cfg.d_model, rng);
  p.k = Affine::create(store, name + ".k", cfg.d_model, cfg.d_model, rng);
  p.v = Affine::create(store, name + ".v", cfg.d_model, cfg.d_model, rng);
  p.o = Affine::create(store, name + ".o", cfg.d_model, cfg.d_model, rng);
  p.ln1_g = store.create_full(name + ".ln1.g", {cfg.d_model}, 1.0);
  p.ln1_b = store.create_zeros(name + ".ln1.b", {cfg.d_model});
  p.ln2_g = store.create_full(name + ".ln2.g", {cfg.d_model}, 1.0);
  p.ln2_b = store.create_zeros(name + ".ln2.b", {cfg.d_model});
  p.ff1 = Affine::create(store, name + ".ff1", cfg.d_model, cfg.ff_width, rng);
  p.ff2 = Affine::create(store, name + ".ff2", cfg.ff_width, cfg.d_model, rng);
  return p;
}

PointFormerParams PointFormerParams::create(ParamStore& store, const std::string& name,
                                            const NetConfig& cfg, int rows, int cols, Rng& rng) {
  PointFormerParams p;
  p.value_emb = Affine::create(store, name + ".value", 2, cfg.d_model, rng);
  p.pos_table = store.create(name + ".pos", {cfg.t_hist * rows * cols, cfg.d_model}, rng, 0.02);
  p.ext_emb = Affine::create(store, name + ".ext", ExternalFeatureVector::kEncodedDim, cfg.d_model, rng);
  for (int i = 0; i < cfg.layers; ++i)
    p.layers.push_back(AttnLayerParams::create(store, name + ".attn" + std::to_string(i), cfg, rng));
  p.agg = Affine::create(store, name + ".agg", cfg.d_model, cfg.d_model, rng);
  return p;
}

Var embed_points(const GridSeries& history, const MaskSequence& masks,
                 const std::vector<ExternalFeatureVector>& external, const PointFormerParams& p) {
  const int t = history.steps(), rows = history.rows(), cols = history.cols();
  if (!history.values.same_shape(masks.flags))
    throw std::invalid_argument("embed_points: history/mask shape mismatch");
  if (static_cast<int>(external.size()) != t)
    throw std::invalid_argument("embed_points: need one external feature vector per step");
  const int n = t * rows * cols;
  if (p.pos_table->val.dim(0) != n)
    throw std::invalid_argument("embed_points: position table sized for a different grid");

  Tensor valflag({n, 2});
  Tensor ext({n, ExternalFeatureVector::kEncodedDim});
  int idx = 0;
  for (int s = 0; s < t; ++s) {
    auto enc = external[static_cast<std::size_t>(s)].encoded();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c, ++idx) {
        valflag.at2(idx, 0) = history.values.at3(s, r, c);
        valflag.at2(idx, 1) = masks.flags.at3(s, r, c);
        for (int f = 0; f < ExternalFeatureVector::kEncodedDim; ++f) ext.at2(idx, f) = enc[static_cast<std::size_t>(f)];
      }
  }
  Var tokens = ad::add(p.value_emb(ad::make_const(std::move(valflag))), p.pos_table);
  return ad::add(tokens, p.ext_emb(ad::make_const(std::move(ext))));
}

Var multi_head_attention(const Var& tokens, const AttnLayerParams& p, const NetConfig& cfg) {
  const int dk = cfg.d_k();
  Var q = p.q(tokens), k = p.k(tokens), v = p.v(tokens);
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(cfg.heads));
  for (int h = 0; h < cfg.heads; ++h) {
    Var qi = ad::slice_cols(q, h * dk, (h + 1) * dk);
    Var ki = ad::slice_cols(k, h * dk, (h + 1) * dk);
    Var vi = ad::slice_cols(v, h * dk, (h + 1) * dk);
    Var scores = ad::softmax_rows(ad::scale(ad::matmul(qi, ad::transpose(ki)), 1.0 / std::sqrt(static_cast<double>(dk))));
    heads.push_back(ad::matmul(scores, vi));
  }
  return p.o(ad::concat_cols(heads));
}

Var attention_layer(const Var& tokens, const AttnLayerParams& p, const NetConfig& cfg) {
  Var attn = ad::layer_norm_rows(ad::add(tokens, multi_head_attention(tokens, p, cfg)), p.ln1_g, p.ln1_b);
  Var ff = ad::relu(p.ff2(ad::relu(p.ff1(attn))));
  Var out = ad::layer_norm_rows(ad::add(attn, ff), p.ln2_g, p.ln2_b);
  if (!all_finite(out->val)) throw std::runtime_error("attention_layer: non-finite activations");
  return out;
}

namespace {

/// Constant row-normalized membership matrix [groups, tokens] mapping each
/// (time, row, col) token to its spatial subregion.
Tensor subregion_mean_matrix(int t, int rows, int cols, int rows_down, int cols_down) {
  if (rows_down < 1 || cols_down < 1 || rows % rows_down || cols % cols_down)
    throw std::invalid_argument("subregion aggregation: grid not divisible by bottleneck dims");
  const int br = rows / rows_down, bc = cols / cols_down;
  const int groups = rows_down * cols_down;
  const double inv = 1.0 / (static_cast<double>(t) * br * bc);
  Tensor m({groups, t * rows * cols});
  int idx = 0;
  for (int s = 0; s < t; ++s)
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c, ++idx) m.at2((r / br) * cols_down + (c / bc), idx) = inv;
  return m;
}

}  // namespace

Var pointformer_encode(const Var& tokens, const PointFormerParams& p, const NetConfig& cfg, int t,
                       int rows, int cols, int rows_down, int cols_down) {
  Var x = tokens;
  for (const auto& layer : p.layers) x = attention_layer(x, layer, cfg);
  Var grouped = ad::matmul(ad::make_const(subregion_mean_matrix(t, rows, cols, rows_down, cols_down)), x);
  return p.agg(grouped);
}

// ---------------- period analysis ----------------

PeriodDecomposition detect_periods(const Tensor& x1d, int k) {
  if (x1d.rank() != 2 || x1d.dim(0) < 2) throw std::invalid_argument("detect_periods: need [t>=2, d]");
  const int t = x1d.dim(0), d = x1d.dim(1);
  const int fmax = t / 2;
  if (k < 1 || k > fmax) throw std::invalid_argument("detect_periods: k out of range [1, t/2]");

  std::vector<double> amp(static_cast<std::size_t>(fmax));
  for (int f = 1; f <= fmax; ++f) {
    double sum = 0.0;
    for (int c = 0; c < d; ++c) {
      double re = 0.0, im = 0.0;
      for (int n = 0; n < t; ++n) {
        double ang = 2.0 * std::numbers::pi * f * n / t;
        re += x1d.at2(n, c) * std::cos(ang);
        im -= x1d.at2(n, c) * std::sin(ang);
      }
      sum += std::sqrt(re * re + im * im);
    }
    amp[static_cast<std::size_t>(f - 1)] = sum / d;
  }

  std::vector<int> order(static_cast<std::size_t>(fmax));
  std::iota(order.begin(), order.end(), 1);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    double aa = amp[static_cast<std::size_t>(a - 1)], ab = amp[static_cast<std::size_t>(b - 1)];
    if (aa != ab) return aa > ab;
    return a < b;  // ties toward the lower frequency
  });

  PeriodDecomposition out;
  out.k = k;
  for (int i = 0; i < k; ++i) {
    int f = order[static_cast<std::size_t>(i)];
    out.freqs.push_back(f);
    out.periods.push_back((t + f - 1) / f);
    out.amps.push_back(amp[static_cast<std::size_t>(f - 1)]);
  }
  return out;
}

Tensor fold_2d(const Tensor& x1d, int period) {
  return ad::fold2d(ad::make_const(x1d), period)->val;
}

Tensor unfold_trunc(const Tensor& y2d, int t_orig) {
  return ad::unfold2d(ad::make_const(y2d), t_orig)->val;
}

TimesBlockParams TimesBlockParams::create(ParamStore& store, const std::string& name, int d_model,
                                          Rng& rng) {
  TimesBlockParams p;
  auto conv = [&](const std::string& n, int ksz) {
    return store.create(n, {d_model, d_model, ksz, ksz}, rng,
                        1.0 / std::sqrt(static_cast<double>(d_model * ksz * ksz)));
  };
  p.k1 = conv(name + ".k1", 1);
  p.b1 = store.create_zeros(name + ".b1", {d_model});
  p.k3 = conv(name + ".k3", 3);
  p.b3 = store.create_zeros(name + ".b3", {d_model});
  p.k5 = conv(name + ".k5", 5);
  p.b5 = store.create_zeros(name + ".b5", {d_model});
  return p;
}

Var times_block(const Var& x1d, int k, const TimesBlockParams& p) {
  const int t = x1d->val.dim(0);
  const int kk = std::min(k, std::max(1, t / 2));
  PeriodDecomposition dec = detect_periods(x1d->val, kk);

  // Differentiable amplitude path at the selected frequencies: the fusion
  // weights are softmax over channel-averaged DFT magnitudes.
  Tensor ct({kk, t}), st({kk, t});
  for (int i = 0; i < kk; ++i)
    for (int n = 0; n < t; ++n) {
      double ang = 2.0 * std::numbers::pi * dec.freqs[static_cast<std::size_t>(i)] * n / t;
      ct.at2(i, n) = std::cos(ang);
      st.at2(i, n) = std::sin(ang);
    }
  Var re = ad::matmul(ad::make_const(std::move(ct)), x1d);
  Var im = ad::matmul(ad::make_const(std::move(st)), x1d);
  Var amps = ad::row_mean(ad::sqrt_elem(ad::add(ad::square(re), ad::square(im))));
  Var weights = ad::softmax_rows(amps);

  Var fused;
  for (int i = 0; i < kk; ++i) {
    Var folded = ad::fold2d(x1d, dec.periods[static_cast<std::size_t>(i)]);
    Var z = ad::add(ad::add(ad::conv2d_same(folded, p.k1, p.b1), ad::conv2d_same(folded, p.k3, p.b3)),
                    ad::conv2d_same(folded, p.k5, p.b5));
    Var branch = ad::unfold2d(ad::relu(z), t);
    Var weighted = ad::scale_by(branch, ad::index_elem(weights, i));
    fused = fused ? ad::add(fused, weighted) : weighted;
  }
  return ad::add(x1d, fused);
}

PatternNetParams PatternNetParams::create(ParamStore& store, const std::string& name,
                                          const NetConfig& cfg, int cells_per_subregion, Rng& rng) {
  PatternNetParams p;
  p.embed = Affine::create(store, name + ".embed", cells_per_subregion, cfg.d_model, rng);
  for (int i = 0; i < cfg.l_blocks; ++i)
    p.blocks.push_back(TimesBlockParams::create(store, name + ".block" + std::to_string(i), cfg.d_model, rng));
  p.agg = Affine::create(store, name + ".agg", cfg.d_model, cfg.d_model, rng);
  return p;
}

Var patternnet_encode(const GridSeries& history, const PatternNetParams& p, const NetConfig& cfg,
                      int rows_down, int cols_down) {
  const int t = history.steps(), rows = history.rows(), cols = history.cols();
  if (rows % rows_down || cols % cols_down)
    throw std::invalid_argument("patternnet_encode: grid not divisible by bottleneck dims");
  const int br = rows / rows_down, bc = cols / cols_down;
  if (p.embed.w->val.dim(0) != br * bc)
    throw std::invalid_argument("patternnet_encode: embedding sized for a different subregion");

  std::vector<Var> out_rows;
  out_rows.reserve(static_cast<std::size_t>(rows_down * cols_down));
  for (int gi = 0; gi < rows_down; ++gi)
    for (int gj = 0; gj < cols_down; ++gj) {
      Tensor series({t, br * bc});
      for (int s = 0; s < t; ++s)
        for (int r = 0; r < br; ++r)
          for (int c = 0; c < bc; ++c)
            series.at2(s, r * bc + c) = history.values.at3(s, gi * br + r, gj * bc + c);
      Var e = p.embed(ad::make_const(std::move(series)));
      for (const auto& block : p.blocks) e = times_block(e, cfg.k_periods, block);
      Var pooled = ad::reshape(ad::col_mean(e), {1, cfg.d_model});
      out_rows.push_back(p.agg(pooled));
    }
  return ad::concat_rows(out_rows);
}

// ---------------- U-Net backbone ----------------

ConvParams ConvParams::create(ParamStore& store, const std::string& name, int co, int ci, int ksz,
                              Rng& rng) {
  ConvParams p;
  p.k = store.create(name + ".k", {co, ci, ksz, ksz}, rng,
                     1.0 / std::sqrt(static_cast<double>(ci * ksz * ksz)));
  p.b = store.create_zeros(name + ".b", {co});
  return p;
}

UNetParams UNetParams::create(ParamStore& store, const std::string& name, int in_channels,
                              const NetConfig& cfg, bool with_inter, Rng& rng) {
  const int f = cfg.base_filters;
  UNetParams p;
  p.enc0a = ConvParams::create(store, name + ".enc0a", f, in_channels, 3, rng);
  p.enc0b = ConvParams::create(store, name + ".enc0b", f, f, 3, rng);
  p.enc1a = ConvParams::create(store, name + ".enc1a", 2 * f, f, 3, rng);
  p.enc1b = ConvParams::create(store, name + ".enc1b", 2 * f, 2 * f, 3, rng);
  p.mid = ConvParams::create(store, name + ".mid", cfg.d_model, 2 * f, 3, rng);
  p.tau0 = Affine::create(store, name + ".tau0", kTauEmbedDim, f, rng);
  p.tau1 = Affine::create(store, name + ".tau1", kTauEmbedDim, 2 * f, rng);
  p.tau2 = Affine::create(store, name + ".tau2", kTauEmbedDim, cfg.d_model, rng);
  p.fuse_intra = ConvParams::create(store, name + ".fuse_intra", cfg.d_model, cfg.d_model, 1, rng);
  if (with_inter)
    p.fuse_inter = ConvParams::create(store, name + ".fuse_inter", cfg.d_model, cfg.d_model, 1, rng);
  p.dec1a = ConvParams::create(store, name + ".dec1a", 2 * f, cfg.d_model + 2 * f, 3, rng);
  p.dec1b = ConvParams::create(store, name + ".dec1b", 2 * f, 2 * f, 3, rng);
  p.dec0a = ConvParams::create(store, name + ".dec0a", f, 2 * f + f, 3, rng);
  p.dec0b = ConvParams::create(store, name + ".dec0b", f, f, 3, rng);
  p.out = ConvParams::create(store, name + ".out", 1, f, 3, rng);
  return p;
}

Tensor sinusoidal_tau_embedding(int tau, int dim) {
  Tensor e({1, dim});
  for (int i = 0; i < dim / 2; ++i) {
    double w = std::exp(-std::log(10000.0) * (2.0 * i) / dim);
    e.at2(0, 2 * i) = std::sin(tau * w);
    e.at2(0, 2 * i + 1) = std::cos(tau * w);
  }
  return e;
}

Var unet_predict(const Var& s_tau, int tau, const Var* s_inter, const std::vector<Var>& cond_maps,
                 const UNetParams& p, const NetConfig& cfg) {
  if (s_tau->val.rank() != 3 || s_tau->val.dim(0) != 1)
    throw std::invalid_argument("unet_predict: s_tau must be [1,H,W]");
  const int h = s_tau->val.dim(1), w = s_tau->val.dim(2);
  if (h % NetConfig::kBottleneckDiv || w % NetConfig::kBottleneckDiv)
    throw std::invalid_argument("unet_predict: spatial dims must be divisible by 4");

  std::vector<Var> in{s_tau};
  in.insert(in.end(), cond_maps.begin(), cond_maps.end());
  Var x = in.size() > 1 ? ad::concat_channels(in) : s_tau;

  Var tau_e = ad::make_const(sinusoidal_tau_embedding(tau));
  auto tau_bias = [&](const Affine& a, int channels) {
    return ad::reshape(a(tau_e), {channels});
  };

  Var h0 = ad::relu(ad::add_channel_bias(ad::conv2d_same(x, p.enc0a.k, p.enc0a.b),
                                         tau_bias(p.tau0, cfg.base_filters)));
  h0 = ad::relu(ad::conv2d_same(h0, p.enc0b.k, p.enc0b.b));
  Var h1 = ad::relu(ad::add_channel_bias(ad::conv2d_same(ad::avg_pool2(h0), p.enc1a.k, p.enc1a.b),
                                         tau_bias(p.tau1, 2 * cfg.base_filters)));
  h1 = ad::relu(ad::conv2d_same(h1, p.enc1b.k, p.enc1b.b));
  Var s_intra = ad::relu(ad::add_channel_bias(ad::conv2d_same(ad::avg_pool2(h1), p.mid.k, p.mid.b),
                                              tau_bias(p.tau2, cfg.d_model)));

  Var fused = ad::conv2d_same(s_intra, p.fuse_intra.k, p.fuse_intra.b);
  if (s_inter) {
    if (!p.fuse_inter) throw std::invalid_argument("unet_predict: model built without inter fusion");
    if (!(*s_inter)->val.same_shape(s_intra->val))
      throw std::invalid_argument("unet_predict: bottleneck feature shape mismatch");
    fused = ad::add(fused, ad::conv2d_same(*s_inter, p.fuse_inter->k, p.fuse_inter->b));
  }
  fused = ad::relu(fused);

  Var u1 = ad::concat_channels({ad::upsample_nearest(fused), h1});
  u1 = ad::relu(ad::conv2d_same(u1, p.dec1a.k, p.dec1a.b));
  u1 = ad::relu(ad::conv2d_same(u1, p.dec1b.k, p.dec1b.b));
  Var u0 = ad::concat_channels({ad::upsample_nearest(u1), h0});
  u0 = ad::relu(ad::conv2d_same(u0, p.dec0a.k, p.dec0a.b));
  u0 = ad::relu(ad::conv2d_same(u0, p.dec0b.k, p.dec0b.b));
  return ad::conv2d_same(u0, p.out.k, p.out.b);
}

// ---------------- combined predictor ----------------

NoisePredictorModel::NoisePredictorModel(Stage stage, const NetConfig& cfg, int rows, int cols,
                                         int coarse_rows, int coarse_cols, bool inter_enabled,
                                         std::uint64_t init_seed)
    : stage_(stage), cfg_(cfg), rows_(rows), cols_(cols), coarse_rows_(coarse_rows),
      coarse_cols_(coarse_cols), inter_enabled_(inter_enabled) {
  cfg_.validate();
  if (rows % NetConfig::kBottleneckDiv || cols % NetConfig::kBottleneckDiv)
    throw std::invalid_argument("NoisePredictorModel: map dims must be divisible by 4");
  Rng rng(init_seed);
  const int cond_channels = stage == Stage::C ? 2 : 1;
  unet_ = UNetParams::create(store_, "unet", 1 + cond_channels, cfg_, inter_enabled, rng);
  if (inter_enabled) {
    const int rd = rows / NetConfig::kBottleneckDiv, cd = cols / NetConfig::kBottleneckDiv;
    if (stage == Stage::C) {
      pointformer_ = PointFormerParams::create(store_, "pointformer", cfg_, coarse_rows, coarse_cols, rng);
    } else {
      if (coarse_rows % rd || coarse_cols % cd)
        throw std::invalid_argument("NoisePredictorModel: coarse grid not divisible by fine bottleneck");
      patternnet_ = PatternNetParams::create(store_, "patternnet", cfg_,
                                             (coarse_rows / rd) * (coarse_cols / cd), rng);
    }
  }
}

std::vector<Var> NoisePredictorModel::cond_maps_from(const Condition& cond) const {
  std::vector<Var> maps;
  if (cond.observed.values.numel() != static_cast<std::int64_t>(rows_) * cols_)
    throw std::invalid_argument("NoisePredictorModel: observed map resolution mismatch");
  maps.push_back(ad::make_const(cond.observed.values.reshaped({1, rows_, cols_})));
  if (stage_ == Stage::C) {
    const int last = cond.mask.steps() - 1;
    Tensor m({1, rows_, cols_});
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c) m.at3(0, r, c) = cond.mask.flags.at3(last, r, c);
    maps.push_back(ad::make_const(std::move(m)));
  }
  return maps;
}

Var NoisePredictorModel::inter_from(const Condition& cond) {
  const int rd = rows_ / NetConfig::kBottleneckDiv, cd = cols_ / NetConfig::kBottleneckDiv;
  Var flat;
  if (stage_ == Stage::C) {
    Var tokens = embed_points(cond.history, cond.mask, cond.external, *pointformer_);
    flat = pointformer_encode(tokens, *pointformer_, cfg_, cond.history.steps(), coarse_rows_,
                              coarse_cols_, rd, cd);
  } else {
    flat = patternnet_encode(cond.history, *patternnet_, cfg_, rd, cd);
  }
  // [groups, d_model] -> channel-major [d_model, rd, cd]
  return ad::reshape(ad::transpose(flat), {cfg_.d_model, rd, cd});
}

Var NoisePredictorModel::predict_with(const Var& s_tau, int tau, const std::vector<Var>& cond_maps,
                                      const Var* s_inter) {
  return unet_predict(s_tau, tau, s_inter, cond_maps, unet_, cfg_);
}

Var NoisePredictorModel::predict(const Var& s_tau, int tau, const Condition& cond) {
  std::vector<Var> maps = cond_maps_from(cond);
  if (inter_enabled_) {
    Var inter = inter_from(cond);
    return predict_with(s_tau, tau, maps, &inter);
  }
  return predict_with(s_tau, tau, maps, nullptr);
}

Tensor NoisePredictorModel::predict_numeric(const Tensor& s_tau, int tau, const Condition& cond) {
  return predict(ad::make_const(s_tau), tau, cond)->val;
}

PredictorFn NoisePredictorModel::as_fn() {
  return [this](const Tensor& s_tau, int tau, const Condition& cond) {
    return predict_numeric(s_tau, tau, cond);
  };
}

PredictorFn NoisePredictorModel::as_sampling_fn(const Condition& cond) {
  // The condition is fixed across the whole reverse loop, so the inter-map
  // encoding is computed once up front.
  auto maps = std::make_shared<std::vector<Var>>(cond_maps_from(cond));
  std::shared_ptr<Var> inter;
  if (inter_enabled_) inter = std::make_shared<Var>(ad::make_const(inter_from(cond)->val));
  return [this, maps, inter](const Tensor& s_tau, int tau, const Condition&) {
    return predict_with(ad::make_const(s_tau), tau, *maps, inter ? inter.get() : nullptr)->val;
  };
}

}  // namespace diffrecon
