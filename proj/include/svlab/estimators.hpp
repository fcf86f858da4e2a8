#pragma once

#include <span>
#include <vector>

#include "svlab/mdp.hpp"

namespace svlab {

/// Clipped importance weights. rho[t] = min(rho_bar, ratio_t) and
/// c[t] = min(lambda, ratio_t) with ratio_t = exp(target_logp - behavior_logp).
struct IsWeights {
  std::vector<double> rho;
  std::vector<double> c;
};

IsWeights importance_weights(std::span<const double> target_logprobs,
                             std::span<const double> behavior_logprobs, double lambda,
                             double rho_bar);

/// One trajectory segment of T steps. `values` holds v(s_1..s_T) followed by the
/// bootstrap v(s_{T+1}); terminals[t] masks v(s_{t+1}) and the recursive tail.
struct Segment {
  std::span<const double> rewards;
  std::span<const char> terminals;
  std::span<const double> values;
  std::span<const double> target_logprobs;
  std::span<const double> behavior_logprobs;
};

/// V-trace targets computed backward:
///   y_t = v_t + rho_t delta_t + gamma c_t (1 - d_t) (y_{t+1} - v_{t+1}).
std::vector<double> vtrace_targets(const Segment& seg, double gamma, double lambda,
                                   double rho_bar);

/// Retrace-weighted GAE, before scaling: A_t = delta_t + gamma c_t (1 - d_t) A_{t+1}.
std::vector<double> retrace_gae(const Segment& seg, double gamma, double lambda, double rho_bar);

/// Divides by the population standard deviation without centering. A batch
/// with zero spread is returned unchanged.
std::vector<double> scale_advantages(std::span<const double> advantages);

/// Targets and scaled advantages for a whole batch.
struct EstimatorOutput {
  std::vector<double> targets;
  std::vector<double> advantages;
  /// Largest |rho_t - min(rho_bar, 1)| in the batch; zero when on-policy.
  double max_rho_deviation = 0.0;
};

/// Runs both estimators per environment segment of `batch`. `values` and
/// `next_values` are v(states[t]) and v(next_states[t]).
EstimatorOutput estimate_batch(const TransitionBatch& batch, std::span<const double> target_logprobs,
                               std::span<const double> values,
                               std::span<const double> next_values, double gamma, double lambda,
                               double rho_bar);

}  // namespace svlab
