#include "svlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace svlab {

BoundReport BoundReport::make(double lower, double actual, double upper, double tol) {
  BoundReport r;
  r.lower = lower;
  r.actual = actual;
  r.upper = upper;
  r.tol = tol;
  r.slack_lower = actual - lower;
  r.slack_upper = upper - actual;
  r.satisfied = lower - tol <= actual && actual <= upper + tol;
  return r;
}

nlohmann::json to_json(const BoundReport& r) {
  auto finite_or_null = [](double x) -> nlohmann::json {
    return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
  };
  return {{"lower", finite_or_null(r.lower)},   {"actual", r.actual},
          {"upper", finite_or_null(r.upper)},   {"satisfied", r.satisfied},
          {"slack_lower", finite_or_null(r.slack_lower)},
          {"slack_upper", finite_or_null(r.slack_upper)},
          {"tol", r.tol}};
}

double weighted_value_error(std::span<const double> mu, std::span<const double> q_est,
                            std::span<const double> q_true) {
  if (mu.size() != q_est.size() || mu.size() != q_true.size()) {
    throw std::invalid_argument("weighted_value_error: shape mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) total += mu[i] * std::abs(q_true[i] - q_est[i]);
  return total;
}

std::vector<double> clamp_q(std::span<const double> q, double gamma) {
  const double hi = 1.0 / (1.0 - gamma);
  std::vector<double> out(q.size());
  std::transform(q.begin(), q.end(), out.begin(), [hi](double x) { return std::clamp(x, 0.0, hi); });
  return out;
}

double estimated_expected_advantage(const TabularMdp& mdp, const TabularPolicy& pi,
                                    const TabularPolicy& pi_prime, std::span<const double> q_est) {
  const std::size_t na = mdp.num_actions();
  if (q_est.size() != mdp.num_states() * na) {
    throw std::invalid_argument("estimated_expected_advantage: q has the wrong shape");
  }
  const auto v = evaluate_policy_exact(mdp, pi).v;
  const auto d = visitation_distribution(mdp, pi_prime);
  double total = 0.0;
  for (StateIndex s = 0; s < mdp.num_states(); ++s) {
    for (ActionIndex a = 0; a < na; ++a) total += d.at(s, a) * (q_est[s * na + a] - v[s]);
  }
  return total;
}

BoundReport improvement_sandwich_report(const TabularMdp& mdp, const TabularPolicy& pi,
                            const TabularPolicy& pi_prime, std::span<const double> q_est,
                            double tol, bool clamp) {
  const std::vector<double> q = clamp ? clamp_q(q_est, mdp.gamma())
                                      : std::vector<double>(q_est.begin(), q_est.end());
  const auto eval = evaluate_policy_exact(mdp, pi);
  const auto eval_prime = evaluate_policy_exact(mdp, pi_prime);
  const auto d_prime = visitation_distribution(mdp, pi_prime);
  const double adv = estimated_expected_advantage(mdp, pi, pi_prime, q);
  const double err = weighted_value_error(d_prime.d, q, eval.q);
  const double scale = 1.0 / (1.0 - mdp.gamma());
  const StateIndex s0 = mdp.initial_state();
  return BoundReport::make(scale * (adv - err), eval_prime.v[s0] - eval.v[s0], scale * (adv + err),
                           tol);
}

BoundReport shift_error_report(std::span<const double> mu, std::span<const double> mu_prime,
                          std::span<const double> q_est, std::span<const double> q_true,
                          double gamma, double tol) {
  const auto q = clamp_q(q_est, gamma);
  const double lhs = weighted_value_error(mu_prime, q, q_true);
  const double rhs =
      weighted_value_error(mu, q, q_true) + 2.0 / (1.0 - gamma) * tv_distance(mu_prime, mu);
  return BoundReport::make(-std::numeric_limits<double>::infinity(), lhs, rhs, tol);
}

NpaCheck npa_check(const TabularMdp& mdp, const TabularPolicy& beta_k,
                   const TabularPolicy& beta_k1, double delta, double tol) {
  NpaCheck out;
  for (StateIndex s = 0; s < mdp.num_states(); ++s) {
    out.max_state_tv = std::max(out.max_state_tv, tv_distance(beta_k.row(s), beta_k1.row(s)));
  }
  out.per_state_tv_ok = out.max_state_tv <= delta * (1.0 - mdp.gamma());
  out.visitation_tv = tv_distance(visitation_distribution(mdp, beta_k).d,
                                  visitation_distribution(mdp, beta_k1).d);
  out.bound_holds = !out.per_state_tv_ok || out.visitation_tv <= delta + tol;
  return out;
}

double cpi_lower_bound(double gamma, double delta, double advantage) {
  return (delta * (1.0 - gamma) * advantage - 2.0 * delta * delta * gamma) / (1.0 - gamma);
}

double cpi_max_nonvacuous_tv(double gamma, double advantage, std::size_t grid_size) {
  double best = 0.0;
  for (std::size_t i = 1; i <= grid_size; ++i) {
    const double tv = static_cast<double>(i) / static_cast<double>(grid_size);
    const double delta = tv / (1.0 - gamma);
    if (cpi_lower_bound(gamma, delta, advantage) > 0.0) best = tv;
  }
  return best;
}

UpdateBoundReport update_bound_report(const TabularMdp& mdp, const TabularPolicy& pi_k,
                               const TabularPolicy& beta_k, const TabularPolicy& beta_k1,
                               std::span<const double> q_est, double epsilon_bound, double delta,
                               double tol) {
  const double gamma = mdp.gamma();
  const auto q = clamp_q(q_est, gamma);
  const auto eval_pi = evaluate_policy_exact(mdp, pi_k);
  const auto eval_next = evaluate_policy_exact(mdp, beta_k1);
  const auto mu_k = visitation_distribution(mdp, beta_k);

  UpdateBoundReport out;
  out.training_error = weighted_value_error(mu_k.d, q, eval_pi.q);
  out.expected_advantage = estimated_expected_advantage(mdp, pi_k, beta_k1, q);
  const auto npa = npa_check(mdp, beta_k, beta_k1, delta, tol);
  if (!npa.per_state_tv_ok) {
    out.premise_failure = "per-state TV " + std::to_string(npa.max_state_tv) + " exceeds delta(1-gamma)";
  } else if (out.training_error > epsilon_bound) {
    out.premise_failure = "training error " + std::to_string(out.training_error) +
                          " exceeds epsilon bound";
  }
  out.premise_ok = out.premise_failure.empty();

  const StateIndex s0 = mdp.initial_state();
  const double lower =
      (out.expected_advantage - epsilon_bound - 2.0 * delta / (1.0 - gamma)) / (1.0 - gamma);
  out.bound = BoundReport::make(lower, eval_next.v[s0] - eval_pi.v[s0],
                                std::numeric_limits<double>::infinity(), tol);

  // CPI: mixture step of size a = delta (1 - gamma) toward beta_k1, judged by the
  // on-policy advantage of beta_k1 over pi_k.
  const double mix = delta * (1.0 - gamma);
  TabularPolicy mixture(mdp.num_states(), mdp.num_actions());
  const auto d_pi = visitation_distribution(mdp, pi_k);
  double onpolicy_adv = 0.0;
  for (StateIndex s = 0; s < mdp.num_states(); ++s) {
    for (ActionIndex a = 0; a < mdp.num_actions(); ++a) {
      mixture(s, a) = (1.0 - mix) * pi_k(s, a) + mix * beta_k1(s, a);
      onpolicy_adv += d_pi.state_marginal()[s] * beta_k1(s, a) * eval_pi.adv_at(s, a);
    }
  }
  out.cpi_lower = cpi_lower_bound(gamma, delta, onpolicy_adv);
  out.cpi_actual = evaluate_policy_exact(mdp, mixture).v[s0] - eval_pi.v[s0];
  return out;
}

double mean_state_kl(const TabularPolicy& p, const TabularPolicy& q,
                     std::span<const StateIndex> states) {
  if (states.empty()) return 0.0;
  double total = 0.0;
  for (StateIndex s : states) total += kl_divergence(p.row(s), q.row(s));
  return total / static_cast<double>(states.size());
}

RoundMetrics round_metrics(const TabularMdp& mdp, const TabularPolicy& target_k,
                           const TabularPolicy& target_k1, const TabularPolicy& behavior_k,
                           const TabularPolicy& behavior_k1, std::span<const double> prev_mu,
                           std::span<const double> new_mu, std::span<const double> v_est,
                           std::span<const StateIndex> visited) {
  const std::size_t ns = mdp.num_states();
  const std::size_t na = mdp.num_actions();
  if (new_mu.size() != ns * na || prev_mu.size() != ns * na || v_est.size() != ns) {
    throw std::invalid_argument("round_metrics: shape mismatch");
  }
  const auto v_target = evaluate_policy_exact(mdp, target_k).v;
  RoundMetrics m;
  for (StateIndex s = 0; s < ns; ++s) {
    double weight = 0.0;
    for (ActionIndex a = 0; a < na; ++a) weight += new_mu[s * na + a];
    const double err = v_target[s] - v_est[s];
    m.value_error_sq += weight * err * err;
    m.value_error_abs += weight * std::abs(err);
  }
  m.tv_mu = tv_distance(prev_mu, new_mu);
  m.kl_target = mean_state_kl(target_k, target_k1, visited);
  m.kl_behavior = mean_state_kl(behavior_k, behavior_k1, visited);
  m.v_data_policy = evaluate_policy_exact(mdp, behavior_k).v[mdp.initial_state()];
  m.v_target = v_target[mdp.initial_state()];
  return m;
}

std::vector<double> empirical_visitation(const TransitionBatch& batch, std::size_t num_states,
                                         std::size_t num_actions, double gamma) {
  std::vector<double> d(num_states * num_actions, 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const double w = std::pow(gamma, static_cast<double>(batch.episode_steps[t]));
    d[batch.states[t] * num_actions + batch.actions[t]] += w;
    total += w;
  }
  if (total > 0.0) {
    for (double& x : d) x /= total;
  }
  return d;
}

}  // namespace svlab
