#include "diffrecon/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace diffrecon {

NoiseSchedule build_schedule(int T, double beta_start, double beta_end, ScheduleKind kind) {
  if (T < 1) throw std::invalid_argument("build_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("build_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(static_cast<std::size_t>(T));
  if (kind == ScheduleKind::linear) {
    for (int i = 0; i < T; ++i)
      s.beta[static_cast<std::size_t>(i)] =
          T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (T - 1);
  } else {
    // Cosine alpha_bar profile, betas clamped into the requested range.
    auto f = [T](double step) {
      double x = (step / T + 0.008) / 1.008 * std::numbers::pi / 2.0;
      return std::cos(x) * std::cos(x);
    };
    for (int i = 0; i < T; ++i) {
      double b = 1.0 - f(i + 1.0) / f(static_cast<double>(i));
      s.beta[static_cast<std::size_t>(i)] = std::clamp(b, beta_start, beta_end);
    }
  }
  s.alpha.resize(static_cast<std::size_t>(T));
  s.alpha_bar.resize(static_cast<std::size_t>(T));
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    s.alpha[static_cast<std::size_t>(i)] = 1.0 - s.beta[static_cast<std::size_t>(i)];
    prod *= s.alpha[static_cast<std::size_t>(i)];
    s.alpha_bar[static_cast<std::size_t>(i)] = prod;
  }
  return s;
}

namespace {
void check_tau(int tau, const NoiseSchedule& sched) {
  if (tau < 1 || tau > sched.T) throw std::out_of_range("diffusion step tau out of range");
}
}  // namespace

Tensor q_sample(const Tensor& s0, int tau, const Tensor& epsilon, const NoiseSchedule& sched) {
  check_tau(tau, sched);
  if (!s0.same_shape(epsilon)) throw std::invalid_argument("q_sample: shape mismatch");
  double a = std::sqrt(sched.alpha_bar_at(tau));
  double b = std::sqrt(1.0 - sched.alpha_bar_at(tau));
  Tensor out = s0;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a * s0[i] + b * epsilon[i];
  return out;
}

DiffusionSample q_sample_draw(const Tensor& s0, int tau, const NoiseSchedule& sched, Rng& rng) {
  DiffusionSample d;
  d.tau = tau;
  d.epsilon = rng.gauss_tensor(s0.shape());
  d.s_tau = q_sample(s0, tau, d.epsilon, sched);
  return d;
}

std::pair<ReverseStepParams, Tensor> reverse_step(const Tensor& s_tau, const Tensor& eps_hat,
                                                  int tau, const NoiseSchedule& sched,
                                                  bool deterministic, Rng& rng) {
  check_tau(tau, sched);
  if (!s_tau.same_shape(eps_hat)) throw std::invalid_argument("reverse_step: shape mismatch");
  if (!all_finite(eps_hat)) throw std::invalid_argument("reverse_step: non-finite eps_hat");
  const double beta = sched.beta_at(tau);
  const double alpha = sched.alpha_at(tau);
  const double abar = sched.alpha_bar_at(tau);
  const double abar_prev = sched.alpha_bar_prev(tau);
  ReverseStepParams p;
  p.mu = Tensor(s_tau.shape());
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double coef = beta / std::sqrt(1.0 - abar);
  for (std::int64_t i = 0; i < s_tau.numel(); ++i)
    p.mu[i] = inv_sqrt_alpha * (s_tau[i] - coef * eps_hat[i]);
  p.sigma2 = beta * (1.0 - abar_prev) / (1.0 - abar);  // beta_tilde; zero at tau = 1
  Tensor s_prev = p.mu;
  if (!deterministic && p.sigma2 > 0.0) {
    double sigma = std::sqrt(p.sigma2);
    for (std::int64_t i = 0; i < s_prev.numel(); ++i) s_prev[i] += sigma * rng.gauss();
  }
  return {std::move(p), std::move(s_prev)};
}

Tensor sample_loop(const PredictorFn& predictor, const Condition& cond,
                   const std::vector<int>& shape, const NoiseSchedule& sched, std::uint64_t seed,
                   bool deterministic) {
  Rng rng(seed);
  Tensor s = rng.gauss_tensor(shape);
  for (int tau = sched.T; tau >= 1; --tau) {
    Tensor eps_hat = predictor(s, tau, cond);
    if (!eps_hat.same_shape(s)) throw std::invalid_argument("sample_loop: predictor shape mismatch");
    s = reverse_step(s, eps_hat, tau, sched, deterministic, rng).second;
  }
  return s;
}

Tensor implied_x0(const Tensor& s_tau, const Tensor& eps, int tau, const NoiseSchedule& sched) {
  check_tau(tau, sched);
  const double a = std::sqrt(sched.alpha_bar_at(tau));
  const double b = std::sqrt(1.0 - sched.alpha_bar_at(tau));
  Tensor out = s_tau;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = (s_tau[i] - b * eps[i]) / a;
  return out;
}

ad::Var implied_x0(const ad::Var& s_tau, const ad::Var& eps, int tau, const NoiseSchedule& sched) {
  check_tau(tau, sched);
  const double a = std::sqrt(sched.alpha_bar_at(tau));
  const double b = std::sqrt(1.0 - sched.alpha_bar_at(tau));
  return ad::scale(ad::sub(s_tau, ad::scale(eps, b)), 1.0 / a);
}

ad::Var epsilon_loss(DiffPredictor& predictor, const std::vector<Tensor>& s0_batch,
                     const std::vector<Condition>& cond_batch, const NoiseSchedule& sched,
                     Rng& rng) {
  if (s0_batch.empty()) throw std::invalid_argument("epsilon_loss: empty batch");
  if (s0_batch.size() != cond_batch.size())
    throw std::invalid_argument("epsilon_loss: batch size mismatch");
  ad::Var total;
  for (std::size_t i = 0; i < s0_batch.size(); ++i) {
    int tau = static_cast<int>(rng.uniform_int(1, sched.T));
    DiffusionSample d = q_sample_draw(s0_batch[i], tau, sched, rng);
    ad::Var eps_hat = predictor.predict(ad::make_const(d.s_tau), tau, cond_batch[i]);
    ad::Var item = ad::mse(eps_hat, ad::make_const(d.epsilon));
    total = total ? ad::add(total, item) : item;
  }
  return ad::scale(total, 1.0 / static_cast<double>(s0_batch.size()));
}

}  // namespace diffrecon
