#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "diffrecon/autodiff.hpp"
#include "diffrecon/diffusion.hpp"
#include "diffrecon/rng.hpp"
#include "test_helpers.hpp"

using namespace diffrecon;
using testutil::check_gradients;
using testutil::max_abs_diff;

TEST_CASE("build_schedule hand example") {
  NoiseSchedule s = build_schedule(2, 0.1, 0.2);
  CHECK(s.beta[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s.beta[1] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(s.alpha[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(s.alpha[1] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(s.alpha_bar[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(s.alpha_bar[1] == doctest::Approx(0.72).epsilon(1e-12));
}

TEST_CASE("build_schedule single step and validation") {
  NoiseSchedule s = build_schedule(1, 0.05, 0.05);
  CHECK(s.alpha_bar[0] == doctest::Approx(0.95).epsilon(1e-12));
  CHECK_THROWS(build_schedule(0, 0.1, 0.2));
  CHECK_THROWS(build_schedule(5, 0.0, 0.2));
  CHECK_THROWS(build_schedule(5, 0.2, 1.0));
  CHECK_THROWS(build_schedule(5, 0.3, 0.2));
}

TEST_CASE("schedule invariants over random parameters") {
  Rng rng(100);
  for (int trial = 0; trial < 50; ++trial) {
    int T = 1 + static_cast<int>(rng.uniform_int(0, 200));
    double b0 = rng.uniform(1e-5, 0.1);
    double b1 = rng.uniform(b0, 0.5);
    NoiseSchedule s = build_schedule(T, b0, b1,
                                     trial % 2 ? ScheduleKind::cosine : ScheduleKind::linear);
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
      CHECK(s.beta[i] > 0.0);
      CHECK(s.beta[i] < 1.0);
      CHECK(s.alpha[i] == 1.0 - s.beta[i]);
      prod *= s.alpha[i];
      CHECK(s.alpha_bar[i] == doctest::Approx(prod).epsilon(1e-12));
      if (i > 0) CHECK(s.alpha_bar[i] < s.alpha_bar[i - 1]);
    }
  }
}

TEST_CASE("q_sample closed form matches the stepwise scalar recursion") {
  // One-shot mean factor sqrt(abar) and variance (1-abar) against the
  // per-step recursion m <- sqrt(1-beta) m, v <- (1-beta) v + beta.
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    int T = 1 + static_cast<int>(rng.uniform_int(0, 99));
    double b0 = rng.uniform(1e-5, 0.05);
    double b1 = rng.uniform(b0, 0.3);
    NoiseSchedule s = build_schedule(T, b0, b1);
    double m = 1.0, v = 0.0;
    for (int tau = 1; tau <= T; ++tau) {
      double beta = s.beta_at(tau);
      m *= std::sqrt(1.0 - beta);
      v = (1.0 - beta) * v + beta;
      Tensor mean_part = q_sample(Tensor::scalar(1.0), tau, Tensor::scalar(0.0), s);
      Tensor noise_part = q_sample(Tensor::scalar(0.0), tau, Tensor::scalar(1.0), s);
      CHECK(std::abs(mean_part[0] - m) < 1e-10);
      CHECK(std::abs(noise_part[0] * noise_part[0] - v) < 1e-10);
    }
  }
}

TEST_CASE("q_sample zero-noise and identity-limit cases") {
  NoiseSchedule s = build_schedule(10, 1e-6, 1e-6);
  Rng rng(102);
  Tensor s0 = rng.gauss_tensor({4, 4});
  Tensor eps = rng.gauss_tensor({4, 4});
  Tensor no_noise = q_sample(s0, 3, Tensor::zeros({4, 4}), s);
  for (std::int64_t i = 0; i < s0.numel(); ++i)
    CHECK(no_noise[i] == doctest::Approx(std::sqrt(s.alpha_bar_at(3)) * s0[i]).epsilon(1e-12));
  Tensor near_id = q_sample(s0, 1, eps, s);
  CHECK(max_abs_diff(near_id, s0) < std::sqrt(1e-6) * 10.0);
  CHECK_THROWS(q_sample(s0, 0, eps, s));
  CHECK_THROWS(q_sample(s0, 11, eps, s));
}

TEST_CASE("reverse_step hand-computed mean") {
  // With s_tau = 1, eps_hat = 0 and alpha = 0.8 the posterior mean is
  // 1/sqrt(0.8) regardless of the rest of the schedule.
  NoiseSchedule s;
  s.T = 2;
  s.beta = {0.3, 0.2};        // alpha_2 = 0.8
  s.alpha = {0.7, 0.8};
  s.alpha_bar = {0.9, 0.72};  // abar_2 = 0.72 as in the hand example
  Rng rng(103);
  auto [params, s_prev] =
      reverse_step(Tensor::scalar(1.0), Tensor::scalar(0.0), 2, s, true, rng);
  CHECK(params.mu[0] == doctest::Approx(1.0 / std::sqrt(0.8)).epsilon(1e-9));
  CHECK(params.sigma2 ==
        doctest::Approx(0.2 * (1.0 - 0.9) / (1.0 - 0.72)).epsilon(1e-12));
  CHECK(s_prev[0] == params.mu[0]);
}

TEST_CASE("reverse_step at tau=1 has zero variance in both modes") {
  NoiseSchedule s = build_schedule(5, 0.05, 0.2);
  Rng rng(104);
  Tensor s1 = rng.gauss_tensor({3, 3});
  Tensor eps = rng.gauss_tensor({3, 3});
  auto [det_p, det_s] = reverse_step(s1, eps, 1, s, true, rng);
  auto [sto_p, sto_s] = reverse_step(s1, eps, 1, s, false, rng);
  CHECK(det_p.sigma2 == 0.0);
  CHECK(sto_p.sigma2 == 0.0);
  CHECK(max_abs_diff(det_s, det_p.mu) == 0.0);
  CHECK(max_abs_diff(sto_s, sto_p.mu) == 0.0);
}

TEST_CASE("implied x0 inverts the forward closed form at every tau") {
  NoiseSchedule s = build_schedule(30, 1e-3, 0.2);
  Rng rng(105);
  Tensor s0 = rng.gauss_tensor({8, 8});
  for (int tau = 1; tau <= 30; ++tau) {
    Tensor eps = rng.gauss_tensor({8, 8});
    Tensor s_tau = q_sample(s0, tau, eps, s);
    Tensor x0 = implied_x0(s_tau, eps, tau, s);
    CHECK(max_abs_diff(x0, s0) < 1e-6);
  }
}

TEST_CASE("sample_loop with the epsilon oracle recovers the target") {
  NoiseSchedule s = build_schedule(50, 1e-3, 0.1);
  Rng rng(106);
  Tensor target = rng.gauss_tensor({1, 8, 8});
  // Oracle: the exact noise relating s_tau to the fixed target.
  PredictorFn oracle = [&](const Tensor& s_tau, int tau, const Condition&) {
    double abar = s.alpha_bar_at(tau);
    Tensor eps(s_tau.shape());
    for (std::int64_t i = 0; i < eps.numel(); ++i)
      eps[i] = (s_tau[i] - std::sqrt(abar) * target[i]) / std::sqrt(1.0 - abar);
    return eps;
  };
  Condition cond;
  Tensor out = sample_loop(oracle, cond, {1, 8, 8}, s, 77, true);
  CHECK(max_abs_diff(out, target) < 1e-3);
}

TEST_CASE("sample_loop determinism and T=1 degenerate case") {
  NoiseSchedule s = build_schedule(20, 1e-3, 0.1);
  PredictorFn zero = [](const Tensor& s_tau, int, const Condition&) {
    return Tensor::zeros(s_tau.shape());
  };
  Condition cond;
  Tensor a = sample_loop(zero, cond, {1, 4, 4}, s, 5, false);
  Tensor b = sample_loop(zero, cond, {1, 4, 4}, s, 5, false);
  CHECK(max_abs_diff(a, b) == 0.0);

  NoiseSchedule s1 = build_schedule(1, 0.1, 0.1);
  Tensor c = sample_loop(zero, cond, {1, 4, 4}, s1, 5, true);
  // T=1: a single reverse step of the seeded initial noise.
  Rng noise_rng(5);
  Tensor init = noise_rng.gauss_tensor({1, 4, 4});
  auto [p, s0] = reverse_step(init, Tensor::zeros({1, 4, 4}), 1, s1, true, noise_rng);
  CHECK(max_abs_diff(c, s0) == 0.0);
}

namespace {

struct ZeroPredictor : DiffPredictor {
  ad::Var predict(const ad::Var& s_tau, int, const Condition&) override {
    return ad::make_const(Tensor::zeros(s_tau->val.shape()));
  }
};

struct OraclePredictor : DiffPredictor {
  Tensor s0;
  const NoiseSchedule* sched;
  ad::Var predict(const ad::Var& s_tau, int tau, const Condition&) override {
    double abar = sched->alpha_bar_at(tau);
    Tensor eps(s_tau->val.shape());
    for (std::int64_t i = 0; i < eps.numel(); ++i)
      eps[i] = (s_tau->val[i] - std::sqrt(abar) * s0[i]) / std::sqrt(1.0 - abar);
    return ad::make_const(std::move(eps));
  }
};

struct ToyPredictor : DiffPredictor {
  ad::Var w = ad::make_param(Tensor({3, 3}, 0.1));
  ad::Var b = ad::make_param(Tensor({1}, -0.2));
  ad::Var predict(const ad::Var& s_tau, int, const Condition&) override {
    // Broadcast the scalar bias to [3,3] through constant one-matrices so it
    // stays a graph leaf.
    ad::Var bias = ad::matmul(ad::make_const(Tensor({3, 1}, 1.0)),
                              ad::matmul(ad::reshape(b, {1, 1}),
                                         ad::make_const(Tensor({1, 3}, 1.0))));
    return ad::add(ad::mul(ad::reshape(s_tau, {3, 3}), w), bias);
  }
};

}  // namespace

TEST_CASE("epsilon_loss of the zero predictor approximates E[eps^2] = 1") {
  NoiseSchedule s = build_schedule(40, 1e-3, 0.1);
  Rng data_rng(107);
  std::vector<Tensor> batch;
  std::vector<Condition> conds;
  for (int i = 0; i < 64; ++i) {
    batch.push_back(data_rng.gauss_tensor({8, 8}));
    conds.emplace_back();
  }
  ZeroPredictor zp;
  Rng rng(108);
  double loss = epsilon_loss(zp, batch, conds, s, rng)->val[0];
  CHECK(loss == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("epsilon_loss of the oracle predictor is zero") {
  NoiseSchedule s = build_schedule(40, 1e-3, 0.1);
  Rng data_rng(109);
  OraclePredictor op;
  op.s0 = data_rng.gauss_tensor({6, 6});
  op.sched = &s;
  Rng rng(110);
  double loss = epsilon_loss(op, {op.s0}, {Condition{}}, s, rng)->val[0];
  CHECK(loss < 1e-20);
}

TEST_CASE("epsilon_loss gradient matches finite differences on a toy predictor") {
  NoiseSchedule s = build_schedule(10, 1e-2, 0.1);
  Rng data_rng(111);
  std::vector<Tensor> batch = {data_rng.gauss_tensor({3, 3}), data_rng.gauss_tensor({3, 3})};
  std::vector<Condition> conds(2);
  ToyPredictor tp;
  auto build = [&] {
    Rng rng(42);  // identical tau/eps draws on every evaluation
    return epsilon_loss(tp, batch, conds, s, rng);
  };
  check_gradients(build, {tp.w, tp.b});
}

TEST_CASE("epsilon_loss rejects an empty batch") {
  NoiseSchedule s = build_schedule(10, 1e-2, 0.1);
  ZeroPredictor zp;
  Rng rng(112);
  CHECK_THROWS(epsilon_loss(zp, {}, {}, s, rng));
}
