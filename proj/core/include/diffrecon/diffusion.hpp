#pragma once

#include <functional>
#include <vector>

#include "diffrecon/autodiff.hpp"
#include "diffrecon/grid.hpp"
#include "diffrecon/rng.hpp"
#include "diffrecon/tensor.hpp"

namespace diffrecon {

enum class ScheduleKind { linear, cosine };

/// Per-step variances beta_tau and the derived alpha / alpha_bar tables,
/// indexed 0..T-1 for steps tau = 1..T.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // running product of alpha

  double beta_at(int tau) const { return beta.at(static_cast<std::size_t>(tau - 1)); }
  double alpha_at(int tau) const { return alpha.at(static_cast<std::size_t>(tau - 1)); }
  double alpha_bar_at(int tau) const { return alpha_bar.at(static_cast<std::size_t>(tau - 1)); }
  /// alpha_bar_{tau-1} with the convention alpha_bar_0 = 1.
  double alpha_bar_prev(int tau) const { return tau > 1 ? alpha_bar_at(tau - 1) : 1.0; }
};

NoiseSchedule build_schedule(int T, double beta_start, double beta_end,
                             ScheduleKind kind = ScheduleKind::linear);

/// Everything the noise predictor may condition on. Shapes follow the
/// stage's resolution; unused members stay empty.
struct Condition {
  GridSeries observed;  // masked current map (stage C) or upsampled coarse map (stage F)
  MaskSequence mask;
  GridSeries history;   // t-step window at coarse resolution
  std::vector<ExternalFeatureVector> external;  // one per history step
};

struct DiffusionSample {
  Tensor s_tau;
  int tau = 1;
  Tensor epsilon;
};

struct ReverseStepParams {
  Tensor mu;
  double sigma2 = 0.0;
};

/// Numeric predictor: (s_tau, tau, condition) -> eps_hat, same shape as s_tau.
using PredictorFn = std::function<Tensor(const Tensor& s_tau, int tau, const Condition& cond)>;

/// Differentiable predictor used by the training losses.
class DiffPredictor {
 public:
  virtual ~DiffPredictor() = default;
  virtual ad::Var predict(const ad::Var& s_tau, int tau, const Condition& cond) = 0;
};

/// Closed-form forward sample sqrt(abar)*s0 + sqrt(1-abar)*eps.
Tensor q_sample(const Tensor& s0, int tau, const Tensor& epsilon, const NoiseSchedule& sched);
DiffusionSample q_sample_draw(const Tensor& s0, int tau, const NoiseSchedule& sched, Rng& rng);

/// One reverse step: posterior mean from the eps-parameterization, variance
/// fixed to beta_tilde. deterministic=true injects no noise.
std::pair<ReverseStepParams, Tensor> reverse_step(const Tensor& s_tau, const Tensor& eps_hat,
                                                  int tau, const NoiseSchedule& sched,
                                                  bool deterministic, Rng& rng);

/// Full ancestral sampling loop from seeded N(0, I) at the given shape.
Tensor sample_loop(const PredictorFn& predictor, const Condition& cond,
                   const std::vector<int>& shape, const NoiseSchedule& sched, std::uint64_t seed,
                   bool deterministic);

/// One-shot x0 estimate from the forward closed form, (s_tau - sqrt(1-abar)*eps)/sqrt(abar).
Tensor implied_x0(const Tensor& s_tau, const Tensor& eps, int tau, const NoiseSchedule& sched);
ad::Var implied_x0(const ad::Var& s_tau, const ad::Var& eps, int tau, const NoiseSchedule& sched);

/// Standard eps-prediction MSE: per item draw tau ~ U[1,T], eps ~ N(0,I),
/// noise s0 and regress the predictor output onto eps. Returns the graph
/// root so gradients can flow into predictor parameters.
ad::Var epsilon_loss(DiffPredictor& predictor, const std::vector<Tensor>& s0_batch,
                     const std::vector<Condition>& cond_batch, const NoiseSchedule& sched,
                     Rng& rng);

}  // namespace diffrecon
