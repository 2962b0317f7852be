#include "diffrecon/pipeline.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "diffrecon/io.hpp"
#include "json.hpp"

namespace diffrecon {

using nlohmann::json;

void TrainConfig::validate() const {
  if (steps_c < 0 || steps_f < 0 || steps_joint < 0)
    throw std::invalid_argument("TrainConfig: negative step count");
  if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (lambda_c < 0.0 || lambda_f < 0.0)
    throw std::invalid_argument("TrainConfig: loss weights must be >= 0");
  if (diffusion_steps < 1) throw std::invalid_argument("TrainConfig: diffusion_steps must be >= 1");
  net.validate();
  build_schedule(diffusion_steps, beta_start, beta_end, schedule_kind);  // range check
}

namespace {

constexpr std::uint64_t kSaltPretrainC = 0x11;
constexpr std::uint64_t kSaltPretrainF = 0x22;
constexpr std::uint64_t kSaltJoint = 0x33;
constexpr std::uint64_t kSaltInitC = 0x44;
constexpr std::uint64_t kSaltInitF = 0x55;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (a + 1) + 0xBF58476D1CE4E5B9ULL * (b + 1);
  z ^= z >> 30;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

/// Clamped t-step window of indices ending at step s.
std::vector<int> window_indices(int s, int t_hist) {
  std::vector<int> idx(static_cast<std::size_t>(t_hist));
  for (int i = 0; i < t_hist; ++i) idx[static_cast<std::size_t>(i)] = std::max(0, s - t_hist + 1 + i);
  return idx;
}

GridSeries gather_steps(const GridSeries& s, const std::vector<int>& idx) {
  GridSeries out;
  out.spec = s.spec;
  out.granularity = s.granularity;
  out.start_time = s.time_at(idx.empty() ? 0 : idx.front());
  out.values = Tensor({static_cast<int>(idx.size()), s.rows(), s.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (int r = 0; r < s.rows(); ++r)
      for (int c = 0; c < s.cols(); ++c)
        out.values.at3(static_cast<int>(i), r, c) = s.values.at3(idx[i], r, c);
  return out;
}

MaskSequence gather_steps(const MaskSequence& m, const std::vector<int>& idx) {
  MaskSequence out;
  out.pattern = m.pattern;
  out.flags = Tensor({static_cast<int>(idx.size()), m.rows(), m.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c)
        out.flags.at3(static_cast<int>(i), r, c) = m.flags.at3(idx[i], r, c);
  return out;
}

GridSeries single_step(const GridSeries& s, int step) { return gather_steps(s, {step}); }

std::vector<ExternalFeatureVector> gather(const std::vector<ExternalFeatureVector>& ext,
                                          const std::vector<int>& idx) {
  std::vector<ExternalFeatureVector> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(ext[static_cast<std::size_t>(i)]);
  return out;
}

/// Normalized views of the training data shared by all phases.
struct NormalizedData {
  TrainingData raw;
  NormStats coarse_norm, fine_norm;
  GridSeries coarse_truth_n;  // pseudo-complete, [-1,1]
  GridSeries observed_n;      // masked after normalization (holes stay 0)
  GridSeries fine_truth_n;
};

NormalizedData normalize_training_data(const GridSeries& fine_truth,
                                       const SparsePatternSpec& pattern) {
  NormalizedData d;
  d.raw = prepare_training_data(fine_truth, pattern);
  auto [cn, cs] = normalize(d.raw.coarse_truth);
  d.coarse_truth_n = std::move(cn);
  d.coarse_norm = cs;
  d.observed_n = apply_mask(normalize(d.raw.observed, cs).first, d.raw.masks);
  auto [fn, fs] = normalize(d.raw.fine_truth);
  d.fine_truth_n = std::move(fn);
  d.fine_norm = fs;
  return d;
}

Condition make_cond_c(const NormalizedData& d, int s, int t_hist) {
  auto idx = window_indices(s, t_hist);
  Condition c;
  c.observed = single_step(d.observed_n, s);
  c.mask = gather_steps(d.raw.masks, idx);
  c.history = gather_steps(d.observed_n, idx);
  c.external = gather(d.raw.external, idx);
  return c;
}

Condition make_cond_f(const NormalizedData& d, int s, int t_hist) {
  auto idx = window_indices(s, t_hist);
  Condition c;
  c.observed = upsample_bilinear(single_step(d.coarse_truth_n, s));
  c.history = gather_steps(d.coarse_truth_n, idx);
  return c;
}

int first_trainable_step(int steps, int t_hist) { return std::min(t_hist - 1, steps - 1); }

std::vector<Tensor> snapshot_params(const ParamStore& store) {
  std::vector<Tensor> vals;
  vals.reserve(store.entries().size());
  for (const auto& [name, v] : store.entries()) vals.push_back(v->val);
  return vals;
}

void restore_params(ParamStore& store, const std::vector<Tensor>& vals) {
  const auto& entries = store.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].second->val = vals[i];
}

ModelBundle pretrain_stage(Stage stage, const GridSeries& fine_truth,
                           const SparsePatternSpec& pattern, const TrainConfig& cfg,
                           std::vector<TrainLogEntry>* log) {
  cfg.validate();
  NormalizedData d = normalize_training_data(fine_truth, pattern);
  const int ci = d.raw.coarse_truth.rows(), cj = d.raw.coarse_truth.cols();
  const int fi = d.raw.fine_truth.rows(), fj = d.raw.fine_truth.cols();

  ModelBundle b;
  b.stage = stage;
  b.cfg = cfg.net;
  b.schedule = build_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end, cfg.schedule_kind);
  if (stage == Stage::C) {
    b.norm = b.cond_norm = d.coarse_norm;
    b.inter_enabled = !cfg.no_stpointformer;
    b.model = std::make_shared<NoisePredictorModel>(Stage::C, cfg.net, ci, cj, ci, cj,
                                                    b.inter_enabled, mix_seed(cfg.seed, kSaltInitC, 0));
  } else {
    b.norm = d.fine_norm;
    b.cond_norm = d.coarse_norm;
    b.inter_enabled = !cfg.no_tpatternnet;
    b.model = std::make_shared<NoisePredictorModel>(Stage::F, cfg.net, fi, fj, ci, cj,
                                                    b.inter_enabled, mix_seed(cfg.seed, kSaltInitF, 0));
  }

  const int steps = stage == Stage::C ? cfg.steps_c : cfg.steps_f;
  const int s_lo = first_trainable_step(d.raw.fine_truth.steps(), cfg.net.t_hist);
  const int s_hi = d.raw.fine_truth.steps() - 1;
  Rng rng(mix_seed(cfg.seed, stage == Stage::C ? kSaltPretrainC : kSaltPretrainF, 0));
  AdamOptimizer opt(cfg.lr);
  const std::string phase = stage == Stage::C ? "pretrain_c" : "pretrain_f";
  const GridSeries& target_n = stage == Stage::C ? d.coarse_truth_n : d.fine_truth_n;

  for (int step = 0; step < steps; ++step) {
    std::vector<Tensor> s0_batch;
    std::vector<Condition> cond_batch;
    for (int i = 0; i < cfg.batch; ++i) {
      int s = static_cast<int>(rng.uniform_int(s_lo, s_hi));
      s0_batch.push_back(single_step(target_n, s).values);
      cond_batch.push_back(stage == Stage::C ? make_cond_c(d, s, cfg.net.t_hist)
                                             : make_cond_f(d, s, cfg.net.t_hist));
    }
    b.model->params().zero_grad();
    ad::Var loss = epsilon_loss(*b.model, s0_batch, cond_batch, b.schedule, rng);
    ad::backward(loss);
    opt.step(b.model->params());
    if (log) log->push_back({phase, step, loss->val[0]});
  }
  return b;
}

}  // namespace

TrainingData prepare_training_data(const GridSeries& fine_truth, const SparsePatternSpec& pattern,
                                   const HolidayTable* holidays) {
  if (fine_truth.granularity != Granularity::fine)
    throw std::invalid_argument("prepare_training_data: need a fine-granularity series");
  TrainingData d;
  d.fine_truth = fine_truth;
  d.coarse_truth = downsample(fine_truth);
  d.masks = generate_masks(pattern, d.coarse_truth.steps(), d.coarse_truth.rows(),
                           d.coarse_truth.cols());
  d.observed = apply_mask(d.coarse_truth, d.masks);
  d.external.reserve(static_cast<std::size_t>(fine_truth.steps()));
  for (int s = 0; s < fine_truth.steps(); ++s)
    d.external.push_back(calendar_features(fine_truth.time_at(s), holidays));
  return d;
}

ModelBundle pretrain_stage_c(const GridSeries& fine_truth, const SparsePatternSpec& pattern,
                             const TrainConfig& cfg, std::vector<TrainLogEntry>* log) {
  return pretrain_stage(Stage::C, fine_truth, pattern, cfg, log);
}

ModelBundle pretrain_stage_f(const GridSeries& fine_truth, const TrainConfig& cfg,
                             std::vector<TrainLogEntry>* log) {
  SparsePatternSpec unused;  // stage F conditions on pseudo-complete data only
  return pretrain_stage(Stage::F, fine_truth, unused, cfg, log);
}

CheckpointBundle joint_train(ModelBundle stage_c, ModelBundle stage_f,
                             const GridSeries& fine_truth, const SparsePatternSpec& pattern,
                             const TrainConfig& cfg, std::vector<TrainLogEntry> log) {
  cfg.validate();
  if (stage_c.stage != Stage::C || stage_f.stage != Stage::F)
    throw std::invalid_argument("joint_train: bundle stages mixed up");

  CheckpointBundle ckpt;
  ckpt.cfg = cfg;
  ckpt.spec = fine_truth.spec;
  ckpt.start_time = fine_truth.start_time;
  ckpt.log = std::move(log);
  ckpt.degenerate_data = stage_c.norm.degenerate || stage_f.norm.degenerate;
  ckpt.stage_c = std::move(stage_c);
  ckpt.stage_f = std::move(stage_f);
  if (cfg.no_joint || cfg.steps_joint == 0) return ckpt;

  NormalizedData d = normalize_training_data(fine_truth, pattern);
  const int magnification = fine_truth.spec.magnification;
  const int s_lo = first_trainable_step(fine_truth.steps(), cfg.net.t_hist);
  const int s_hi = fine_truth.steps() - 1;
  Rng rng(mix_seed(cfg.seed, kSaltJoint, 0));
  AdamOptimizer opt_c(cfg.lr), opt_f(cfg.lr);
  NoisePredictorModel& mc = *ckpt.stage_c.model;
  NoisePredictorModel& mf = *ckpt.stage_f.model;

  std::vector<Tensor> good_c = snapshot_params(mc.params());
  std::vector<Tensor> good_f = snapshot_params(mf.params());

  for (int step = 0; step < cfg.steps_joint; ++step) {
    ad::Var total_c, total_f;
    for (int i = 0; i < cfg.batch; ++i) {
      int s = static_cast<int>(rng.uniform_int(s_lo, s_hi));

      Condition cond_c = make_cond_c(d, s, cfg.net.t_hist);
      Tensor s0_c = single_step(d.coarse_truth_n, s).values;
      int tau_c = static_cast<int>(rng.uniform_int(1, ckpt.stage_c.schedule.T));
      DiffusionSample dc = q_sample_draw(s0_c, tau_c, ckpt.stage_c.schedule, rng);
      ad::Var s_tau_c = ad::make_const(dc.s_tau);
      ad::Var eps_hat_c = mc.predict(s_tau_c, tau_c, cond_c);
      ad::Var l_c = ad::mse(eps_hat_c, ad::make_const(dc.epsilon));
      total_c = total_c ? ad::add(total_c, l_c) : l_c;

      // Stage F conditions on stage C's one-shot x0 estimate so that the
      // fine-stage loss backpropagates into stage-C parameters.
      ad::Var x0_c = implied_x0(s_tau_c, eps_hat_c, tau_c, ckpt.stage_c.schedule);
      ad::Var cond_map = ad::upsample_bilinear(x0_c, magnification);

      Condition cond_f = make_cond_f(d, s, cfg.net.t_hist);
      Tensor s0_f = single_step(d.fine_truth_n, s).values;
      int tau_f = static_cast<int>(rng.uniform_int(1, ckpt.stage_f.schedule.T));
      DiffusionSample df = q_sample_draw(s0_f, tau_f, ckpt.stage_f.schedule, rng);
      ad::Var eps_hat_f;
      if (mf.inter_enabled()) {
        ad::Var inter = mf.inter_from(cond_f);
        eps_hat_f = mf.predict_with(ad::make_const(df.s_tau), tau_f, {cond_map}, &inter);
      } else {
        eps_hat_f = mf.predict_with(ad::make_const(df.s_tau), tau_f, {cond_map}, nullptr);
      }
      ad::Var l_f = ad::mse(eps_hat_f, ad::make_const(df.epsilon));
      total_f = total_f ? ad::add(total_f, l_f) : l_f;
    }
    double inv_b = 1.0 / static_cast<double>(cfg.batch);
    ad::Var loss = ad::add(ad::scale(total_c, cfg.lambda_c * inv_b),
                           ad::scale(total_f, cfg.lambda_f * inv_b));
    if (!std::isfinite(loss->val[0])) {
      restore_params(mc.params(), good_c);
      restore_params(mf.params(), good_f);
      ckpt.log.push_back({"joint_abort", step, loss->val[0]});
      break;
    }
    good_c = snapshot_params(mc.params());
    good_f = snapshot_params(mf.params());
    mc.params().zero_grad();
    mf.params().zero_grad();
    ad::backward(loss);
    opt_c.step(mc.params());
    opt_f.step(mf.params());
    ckpt.log.push_back({"joint", step, loss->val[0]});
  }
  return ckpt;
}

CheckpointBundle train_full(const GridSeries& fine_truth, const SparsePatternSpec& pattern,
                            const TrainConfig& cfg) {
  TrainConfig pre = cfg;
  if (cfg.no_pre) pre.steps_c = pre.steps_f = 0;
  std::vector<TrainLogEntry> log;
  ModelBundle c = pretrain_stage_c(fine_truth, pattern, pre, &log);
  ModelBundle f = pretrain_stage_f(fine_truth, pre, &log);
  return joint_train(std::move(c), std::move(f), fine_truth, pattern, cfg, std::move(log));
}

GridSeries complete_coarse(const ModelBundle& bundle_c, const GridSeries& observed,
                           const MaskSequence& mask, const GridSeries& history,
                           const std::vector<ExternalFeatureVector>& external,
                           std::uint64_t seed, int samples) {
  if (bundle_c.stage != Stage::C) throw std::invalid_argument("complete_coarse: need a stage-C bundle");
  if (samples < 1) throw std::invalid_argument("complete_coarse: samples must be >= 1");
  if (observed.steps() != 1) throw std::invalid_argument("complete_coarse: observed must be one step");
  const int rows = bundle_c.model->rows(), cols = bundle_c.model->cols();
  if (observed.rows() != rows || observed.cols() != cols ||
      history.rows() != rows || history.cols() != cols)
    throw std::invalid_argument("complete_coarse: resolution mismatch");
  if (history.steps() != mask.steps() ||
      static_cast<int>(external.size()) != history.steps())
    throw std::invalid_argument("complete_coarse: history/mask/external length mismatch");

  MaskSequence last = gather_steps(mask, {mask.steps() - 1});
  Condition cond;
  cond.observed = apply_mask(normalize(observed, bundle_c.norm).first, last);
  cond.mask = mask;
  cond.history = apply_mask(normalize(history, bundle_c.norm).first, mask);
  cond.external = external;

  PredictorFn fn = bundle_c.model->as_sampling_fn(cond);
  // Deterministic reverse sampling at inference: the seeded N(0, I) start
  // keeps runs seed-controlled while avoiding per-step noise injection.
  Tensor sampled = sample_loop(fn, cond, {1, rows, cols}, bundle_c.schedule, seed, true);
  for (int k = 1; k < samples; ++k) {
    Tensor extra = sample_loop(fn, cond, {1, rows, cols}, bundle_c.schedule,
                               mix_seed(seed, static_cast<std::uint64_t>(k), 7), true);
    for (std::int64_t i = 0; i < sampled.numel(); ++i) sampled[i] += extra[i];
  }
  if (samples > 1)
    for (std::int64_t i = 0; i < sampled.numel(); ++i) sampled[i] /= samples;

  GridSeries out;
  out.spec = observed.spec;
  out.start_time = observed.start_time;
  out.granularity = Granularity::coarse;
  out.values = std::move(sampled);
  out = denormalize(out, bundle_c.norm);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (last.flags.at3(0, r, c) != 0.0) out.values.at3(0, r, c) = observed.values.at3(0, r, c);
  return out;
}

GridSeries complete_series(const CheckpointBundle& ckpt, const GridSeries& observed_series,
                           const MaskSequence& masks,
                           const std::vector<ExternalFeatureVector>& external,
                           std::uint64_t seed, int samples) {
  const int steps = observed_series.steps();
  if (masks.steps() != steps || static_cast<int>(external.size()) != steps)
    throw std::invalid_argument("complete_series: series/mask/external length mismatch");
  const int t_hist = ckpt.cfg.net.t_hist;
  const ModelBundle& bc = ckpt.stage_c;

  GridSeries completed;
  completed.spec = observed_series.spec;
  completed.start_time = observed_series.start_time;
  completed.granularity = Granularity::coarse;
  completed.values = Tensor({steps, observed_series.rows(), observed_series.cols()});

  for (int s = 0; s < steps; ++s) {
    auto idx = window_indices(s, t_hist);
    GridSeries comp = complete_coarse(bc, single_step(observed_series, s),
                                      gather_steps(masks, idx),
                                      gather_steps(observed_series, idx), gather(external, idx),
                                      mix_seed(seed, static_cast<std::uint64_t>(s), 1), samples);
    for (int r = 0; r < comp.rows(); ++r)
      for (int c = 0; c < comp.cols(); ++c)
        completed.values.at3(s, r, c) = comp.values.at3(0, r, c);
  }
  return completed;
}

GridSeries fine_infer(const CheckpointBundle& ckpt, const GridSeries& completed,
                      std::uint64_t seed, int samples) {
  const int steps = completed.steps();
  if (samples < 1) throw std::invalid_argument("fine_infer: samples must be >= 1");
  const int t_hist = ckpt.cfg.net.t_hist;
  const ModelBundle& bf = ckpt.stage_f;
  const int fi = bf.model->rows(), fj = bf.model->cols();

  GridSeries fine;
  fine.spec = completed.spec;
  fine.start_time = completed.start_time;
  fine.granularity = Granularity::fine;
  fine.values = Tensor({steps, fi, fj});

  for (int s = 0; s < steps; ++s) {
    auto idx = window_indices(s, t_hist);
    Condition cond;
    cond.history = normalize(gather_steps(completed, idx), bf.cond_norm).first;
    cond.observed = upsample_bilinear(normalize(single_step(completed, s), bf.cond_norm).first);
    PredictorFn fn = bf.model->as_sampling_fn(cond);
    Tensor sampled = sample_loop(fn, cond, {1, fi, fj}, bf.schedule,
                                 mix_seed(seed, static_cast<std::uint64_t>(s), 2), true);
    for (int k = 1; k < samples; ++k) {
      Tensor extra = sample_loop(fn, cond, {1, fi, fj}, bf.schedule,
                                 mix_seed(mix_seed(seed, static_cast<std::uint64_t>(s), 2),
                                          static_cast<std::uint64_t>(k), 7),
                                 true);
      for (std::int64_t i = 0; i < sampled.numel(); ++i) sampled[i] += extra[i];
    }
    if (samples > 1)
      for (std::int64_t i = 0; i < sampled.numel(); ++i) sampled[i] /= samples;
    GridSeries one;
    one.spec = completed.spec;
    one.granularity = Granularity::fine;
    one.values = std::move(sampled);
    one = denormalize(one, bf.norm);
    for (int r = 0; r < fi; ++r)
      for (int c = 0; c < fj; ++c) fine.values.at3(s, r, c) = one.values.at3(0, r, c);
  }
  return fine;
}

GridSeries reconstruct(const CheckpointBundle& ckpt, const GridSeries& observed_series,
                       const MaskSequence& masks,
                       const std::vector<ExternalFeatureVector>& external, std::uint64_t seed,
                       int samples) {
  return fine_infer(ckpt, complete_series(ckpt, observed_series, masks, external, seed, samples),
                    seed, samples);
}

// ---------------- persistence ----------------

namespace {

std::string doubles_b64(const double* p, std::size_t n) {
  return io::base64_encode(p, n * sizeof(double));
}

std::vector<double> b64_doubles(const std::string& s) {
  std::vector<unsigned char> raw = io::base64_decode(s);
  if (raw.size() % sizeof(double)) throw std::runtime_error("checkpoint: bad payload length");
  std::vector<double> out(raw.size() / sizeof(double));
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

json net_to_json(const NetConfig& n) {
  return {{"d_model", n.d_model},   {"heads", n.heads},       {"layers", n.layers},
          {"ff_width", n.ff_width}, {"l_blocks", n.l_blocks}, {"k_periods", n.k_periods},
          {"t_hist", n.t_hist},     {"base_filters", n.base_filters}};
}

NetConfig net_from_json(const json& j) {
  NetConfig n;
  n.d_model = j.at("d_model");
  n.heads = j.at("heads");
  n.layers = j.at("layers");
  n.ff_width = j.at("ff_width");
  n.l_blocks = j.at("l_blocks");
  n.k_periods = j.at("k_periods");
  n.t_hist = j.at("t_hist");
  n.base_filters = j.at("base_filters");
  return n;
}

json train_to_json(const TrainConfig& c) {
  return {{"steps_c", c.steps_c},
          {"steps_f", c.steps_f},
          {"steps_joint", c.steps_joint},
          {"batch", c.batch},
          {"lr", c.lr},
          {"seed", c.seed},
          {"diffusion_steps", c.diffusion_steps},
          {"beta_start", c.beta_start},
          {"beta_end", c.beta_end},
          {"schedule_kind", c.schedule_kind == ScheduleKind::linear ? "linear" : "cosine"},
          {"net", net_to_json(c.net)},
          {"no_pre", c.no_pre},
          {"no_joint", c.no_joint},
          {"no_stpointformer", c.no_stpointformer},
          {"no_tpatternnet", c.no_tpatternnet},
          {"lambda_c", c.lambda_c},
          {"lambda_f", c.lambda_f}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.steps_c = j.at("steps_c");
  c.steps_f = j.at("steps_f");
  c.steps_joint = j.at("steps_joint");
  c.batch = j.at("batch");
  c.lr = j.at("lr");
  c.seed = j.at("seed");
  c.diffusion_steps = j.at("diffusion_steps");
  c.beta_start = j.at("beta_start");
  c.beta_end = j.at("beta_end");
  c.schedule_kind =
      j.at("schedule_kind") == "cosine" ? ScheduleKind::cosine : ScheduleKind::linear;
  c.net = net_from_json(j.at("net"));
  c.no_pre = j.at("no_pre");
  c.no_joint = j.at("no_joint");
  c.no_stpointformer = j.at("no_stpointformer");
  c.no_tpatternnet = j.at("no_tpatternnet");
  c.lambda_c = j.at("lambda_c");
  c.lambda_f = j.at("lambda_f");
  return c;
}

json norm_to_json(const NormStats& n) {
  return {{"min_b64", doubles_b64(&n.min, 1)},
          {"max_b64", doubles_b64(&n.max, 1)},
          {"degenerate", n.degenerate}};
}

NormStats norm_from_json(const json& j) {
  NormStats n;
  n.min = b64_doubles(j.at("min_b64")).at(0);
  n.max = b64_doubles(j.at("max_b64")).at(0);
  n.degenerate = j.at("degenerate");
  return n;
}

json bundle_to_json(const ModelBundle& b, const TrainConfig& cfg) {
  json params = json::array();
  for (const auto& [name, v] : b.model->params().entries()) {
    params.push_back({{"name", name},
                      {"shape", v->val.shape()},
                      {"data", doubles_b64(v->val.vec().data(), static_cast<std::size_t>(v->val.numel()))}});
  }
  return {{"stage", b.stage == Stage::C ? "C" : "F"},
          {"inter_enabled", b.inter_enabled},
          {"rows", b.model->rows()},
          {"cols", b.model->cols()},
          {"coarse_rows", b.model->coarse_rows()},
          {"coarse_cols", b.model->coarse_cols()},
          {"schedule",
           {{"T", b.schedule.T},
            {"beta_start", cfg.beta_start},
            {"beta_end", cfg.beta_end},
            {"kind", cfg.schedule_kind == ScheduleKind::linear ? "linear" : "cosine"}}},
          {"norm", norm_to_json(b.norm)},
          {"cond_norm", norm_to_json(b.cond_norm)},
          {"params", params}};
}

ModelBundle bundle_from_json(const json& j, const NetConfig& net) {
  ModelBundle b;
  b.stage = j.at("stage") == "C" ? Stage::C : Stage::F;
  b.cfg = net;
  b.inter_enabled = j.at("inter_enabled");
  const json& sj = j.at("schedule");
  b.schedule = build_schedule(sj.at("T"), sj.at("beta_start"), sj.at("beta_end"),
                              sj.at("kind") == "cosine" ? ScheduleKind::cosine
                                                        : ScheduleKind::linear);
  b.norm = norm_from_json(j.at("norm"));
  b.cond_norm = norm_from_json(j.at("cond_norm"));
  b.model = std::make_shared<NoisePredictorModel>(b.stage, net, j.at("rows"), j.at("cols"),
                                                  j.at("coarse_rows"), j.at("coarse_cols"),
                                                  b.inter_enabled, 0);
  const json& params = j.at("params");
  if (params.size() != b.model->params().entries().size())
    throw std::runtime_error("checkpoint: parameter set mismatch");
  for (const auto& pj : params) {
    ad::Var v = b.model->params().get(pj.at("name"));
    std::vector<int> shape = pj.at("shape");
    if (shape != v->val.shape()) throw std::runtime_error("checkpoint: parameter shape mismatch");
    std::vector<double> data = b64_doubles(pj.at("data"));
    if (static_cast<std::int64_t>(data.size()) != v->val.numel())
      throw std::runtime_error("checkpoint: parameter size mismatch");
    std::copy(data.begin(), data.end(), v->val.vec().begin());
  }
  return b;
}

}  // namespace

std::string train_config_canonical(const TrainConfig& cfg) { return train_to_json(cfg).dump(); }

void save_checkpoint(const std::filesystem::path& path, const CheckpointBundle& ckpt) {
  json log = json::array();
  for (const auto& e : ckpt.log) log.push_back({{"phase", e.phase}, {"step", e.step}, {"loss", e.loss}});
  json j = {{"format", "diffrecon-checkpoint"},
            {"version", 1},
            {"config", train_to_json(ckpt.cfg)},
            {"grid",
             {{"rows", ckpt.spec.rows},
              {"cols", ckpt.spec.cols},
              {"magnification", ckpt.spec.magnification},
              {"interval_s", ckpt.spec.interval_s},
              {"bbox",
               {ckpt.spec.bbox.lat_min, ckpt.spec.bbox.lat_max, ckpt.spec.bbox.lon_min,
                ckpt.spec.bbox.lon_max}}}},
            {"start_time", ckpt.start_time},
            {"degenerate_data", ckpt.degenerate_data},
            {"stage_c", bundle_to_json(ckpt.stage_c, ckpt.cfg)},
            {"stage_f", bundle_to_json(ckpt.stage_f, ckpt.cfg)},
            {"log", log}};
  io::write_file_atomic(path, j.dump(1));
}

CheckpointBundle load_checkpoint(const std::filesystem::path& path) {
  json j = json::parse(io::read_file(path));
  if (j.at("format") != "diffrecon-checkpoint" || j.at("version") != 1)
    throw std::runtime_error("load_checkpoint: unrecognized container");
  CheckpointBundle ckpt;
  ckpt.cfg = train_from_json(j.at("config"));
  const json& g = j.at("grid");
  ckpt.spec.rows = g.at("rows");
  ckpt.spec.cols = g.at("cols");
  ckpt.spec.magnification = g.at("magnification");
  ckpt.spec.interval_s = g.at("interval_s");
  ckpt.spec.bbox = {g.at("bbox")[0], g.at("bbox")[1], g.at("bbox")[2], g.at("bbox")[3]};
  ckpt.start_time = j.at("start_time");
  ckpt.degenerate_data = j.at("degenerate_data");
  ckpt.stage_c = bundle_from_json(j.at("stage_c"), ckpt.cfg.net);
  ckpt.stage_f = bundle_from_json(j.at("stage_f"), ckpt.cfg.net);
  for (const auto& e : j.at("log"))
    ckpt.log.push_back({e.at("phase"), e.at("step"), e.at("loss")});
  return ckpt;
}

}  // namespace diffrecon
