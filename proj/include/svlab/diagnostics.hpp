#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "svlab/mdp.hpp"
#include "svlab/oracle.hpp"

namespace svlab {

/// lower - tol <= actual <= upper + tol. One-sided checks use -inf / +inf.
struct BoundReport {
  double lower = 0.0;
  double actual = 0.0;
  double upper = 0.0;
  bool satisfied = false;
  double slack_lower = 0.0;  // actual - lower
  double slack_upper = 0.0;  // upper - actual
  double tol = 0.0;

  static BoundReport make(double lower, double actual, double upper, double tol);
};

nlohmann::json to_json(const BoundReport& report);

/// sum_{s,a} mu(s,a) |q_true(s,a) - q_est(s,a)|.
double weighted_value_error(std::span<const double> mu, std::span<const double> q_est,
                            std::span<const double> q_true);

/// Copy of q clamped into [0, 1/(1-gamma)], the range of every true Q.
std::vector<double> clamp_q(std::span<const double> q, double gamma);

/// E_{(s,a) ~ d^{pi'}} [q_est(s,a) - V^pi(s)] with exact d^{pi'} and V^pi.
double estimated_expected_advantage(const TabularMdp& mdp, const TabularPolicy& pi,
                                    const TabularPolicy& pi_prime, std::span<const double> q_est);

/// Sandwich on V^{pi'}(s0) - V^pi(s0) from the estimated expected advantage
/// and the error of q on d^{pi'}. q_est is clamped first when `clamp` is set.
BoundReport improvement_sandwich_report(const TabularMdp& mdp, const TabularPolicy& pi,
                            const TabularPolicy& pi_prime, std::span<const double> q_est,
                            double tol = 1e-8, bool clamp = true);

/// eps(mu') <= eps(mu) + 2/(1-gamma) TV(mu', mu), with q_est clamped into
/// [0, 1/(1-gamma)] and q_true assumed to be a true action-value table.
BoundReport shift_error_report(std::span<const double> mu, std::span<const double> mu_prime,
                          std::span<const double> q_est, std::span<const double> q_true,
                          double gamma, double tol = 1e-10);

struct NpaCheck {
  bool per_state_tv_ok = false;  // max_s TV(beta_k(s), beta_k1(s)) <= delta (1 - gamma)
  double max_state_tv = 0.0;
  double visitation_tv = 0.0;  // TV(d^{beta_k}, d^{beta_k1}), always reported
  bool bound_holds = true;     // visitation_tv <= delta + tol; only claimed under the premise
};

NpaCheck npa_check(const TabularMdp& mdp, const TabularPolicy& beta_k,
                   const TabularPolicy& beta_k1, double delta, double tol = 1e-8);

struct UpdateBoundReport {
  BoundReport bound;
  bool premise_ok = false;
  std::string premise_failure;  // empty when premise_ok
  double training_error = 0.0;  // eps(d^{beta_k}, q)
  double expected_advantage = 0.0;
  /// CPI comparison for the same instance: bound for the mixture
  /// (1 - a) pi_k + a beta_k1 with a = delta (1 - gamma), and its exact gain.
  double cpi_lower = 0.0;
  double cpi_actual = 0.0;
};

/// Improvement bound for a target update pi_{k+1} <- beta_{k+1}, with
/// training distribution mu_k = d^{beta_k} and critic q for Q^{pi_k}.
/// The premise (per-state TV and training error) is checked and reported
/// separately from the bound itself.
UpdateBoundReport update_bound_report(const TabularMdp& mdp, const TabularPolicy& pi_k,
                               const TabularPolicy& beta_k, const TabularPolicy& beta_k1,
                               std::span<const double> q_est, double epsilon_bound, double delta,
                               double tol = 1e-8);

/// CPI mixture lower bound, (1/(1-gamma)) (delta (1-gamma) advantage - 2 delta^2 gamma).
double cpi_lower_bound(double gamma, double delta, double advantage);

/// Largest per-state policy TV change a = delta (1 - gamma) on `grid_size`
/// evenly spaced points of (0, 1] at which the CPI bound stays positive for
/// the given advantage. Zero if none.
double cpi_max_nonvacuous_tv(double gamma, double advantage, std::size_t grid_size = 1'000'000);

/// Per-round learning-dynamics quantities.
struct RoundMetrics {
  double value_error_sq = 0.0;   // E_{mu_{k+1}} (V^{pi_k}(s) - v_k(s))^2
  double value_error_abs = 0.0;  // E_{mu_{k+1}} |V^{pi_k}(s) - v_k(s)|
  double tv_mu = 0.0;            // TV(mu_k, mu_{k+1})
  double kl_target = 0.0;        // mean over visited states of KL(pi_k || pi_{k+1})
  double kl_behavior = 0.0;      // mean over visited states of KL(beta_k || beta_{k+1})
  double v_data_policy = 0.0;    // exact V^{beta_k}(s0)
  double v_target = 0.0;         // exact V^{pi_k}(s0)
};

/// `prev_mu` / `new_mu` are state-action distributions; `v_est` holds the
/// critic's prediction per state; `visited` lists the states KL averages over.
RoundMetrics round_metrics(const TabularMdp& mdp, const TabularPolicy& target_k,
                           const TabularPolicy& target_k1, const TabularPolicy& behavior_k,
                           const TabularPolicy& behavior_k1, std::span<const double> prev_mu,
                           std::span<const double> new_mu, std::span<const double> v_est,
                           std::span<const StateIndex> visited);

/// Mean over `states` of KL(p(.|s) || q(.|s)).
double mean_state_kl(const TabularPolicy& p, const TabularPolicy& q,
                     std::span<const StateIndex> states);

/// Discounted empirical (s,a) distribution of a batch: weight gamma^t with t
/// the step within the episode, normalized by the total weight.
std::vector<double> empirical_visitation(const TransitionBatch& batch, std::size_t num_states,
                                         std::size_t num_actions, double gamma);

}  // namespace svlab
