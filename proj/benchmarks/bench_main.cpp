#include <benchmark/benchmark.h>

#include "diffrecon/diffusion.hpp"
#include "diffrecon/nets.hpp"
#include "diffrecon/rng.hpp"

using namespace diffrecon;

namespace {

NetConfig tiny_net() {
  NetConfig n;
  n.d_model = 32;
  n.heads = 4;
  n.layers = 2;
  n.ff_width = 64;
  n.l_blocks = 1;
  n.k_periods = 2;
  n.t_hist = 6;
  n.base_filters = 8;
  return n;
}

void BM_QSample(benchmark::State& state) {
  NoiseSchedule sched = build_schedule(80, 1e-3, 0.12);
  Rng rng(1);
  Tensor s0 = rng.gauss_tensor({1, 16, 16});
  int tau = 1;
  for (auto _ : state) {
    DiffusionSample d = q_sample_draw(s0, 1 + (tau++ % sched.T), sched, rng);
    benchmark::DoNotOptimize(d.s_tau);
  }
}
BENCHMARK(BM_QSample);

void BM_AttentionLayer(benchmark::State& state) {
  NetConfig cfg = tiny_net();
  ParamStore store;
  Rng rng(2);
  AttnLayerParams p = AttnLayerParams::create(store, "l0", cfg, rng);
  ad::Var tokens = ad::make_const(rng.gauss_tensor({static_cast<int>(state.range(0)), cfg.d_model}));
  for (auto _ : state) {
    ad::Var out = attention_layer(tokens, p, cfg);
    benchmark::DoNotOptimize(out->val);
  }
}
BENCHMARK(BM_AttentionLayer)->Arg(64)->Arg(256);

void BM_UNetForward(benchmark::State& state) {
  NetConfig cfg = tiny_net();
  ParamStore store;
  Rng rng(3);
  UNetParams p = UNetParams::create(store, "unet", 2, cfg, false, rng);
  ad::Var s_tau = ad::make_const(rng.gauss_tensor({1, 16, 16}));
  std::vector<ad::Var> cond = {ad::make_const(rng.gauss_tensor({1, 16, 16}))};
  for (auto _ : state) {
    ad::Var out = unet_predict(s_tau, 10, nullptr, cond, p, cfg);
    benchmark::DoNotOptimize(out->val);
  }
}
BENCHMARK(BM_UNetForward);

void BM_TimesBlock(benchmark::State& state) {
  NetConfig cfg = tiny_net();
  ParamStore store;
  Rng rng(4);
  TimesBlockParams p = TimesBlockParams::create(store, "tb", cfg.d_model, rng);
  ad::Var x = ad::make_const(rng.gauss_tensor({48, cfg.d_model}));
  for (auto _ : state) {
    ad::Var out = times_block(x, cfg.k_periods, p);
    benchmark::DoNotOptimize(out->val);
  }
}
BENCHMARK(BM_TimesBlock);

}  // namespace

BENCHMARK_MAIN();
