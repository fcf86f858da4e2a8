#pragma once

#include <span>
#include <vector>

#include "svlab/mdp.hpp"

namespace svlab {

/// Exact V, Q and A of a fixed policy. q and adv are row-major (s, a).
struct ExactEvaluation {
  std::vector<double> v;
  std::vector<double> q;
  std::vector<double> adv;
  std::size_t num_actions = 0;

  double q_at(StateIndex s, ActionIndex a) const { return q[s * num_actions + a]; }
  double adv_at(StateIndex s, ActionIndex a) const { return adv[s * num_actions + a]; }
};

/// Normalized discounted state-action visitation distribution, row-major (s, a).
struct VisitationDistribution {
  std::vector<double> d;
  std::size_t num_actions = 0;

  double at(StateIndex s, ActionIndex a) const { return d[s * num_actions + a]; }
  /// Marginal over states.
  std::vector<double> state_marginal() const;
};

/// State-to-state kernel P_pi(s, s') = sum_a pi(a|s) P(s'|s,a), row-major.
std::vector<double> policy_transition_matrix(const TabularMdp& mdp, const TabularPolicy& policy);

/// Solves the policy Bellman equations directly. Dense LU up to
/// kDenseSolveLimit states, successive approximation above that.
ExactEvaluation evaluate_policy_exact(const TabularMdp& mdp, const TabularPolicy& policy);

inline constexpr std::size_t kDenseSolveLimit = 4096;

/// d(s,a) = (1 - gamma) sum_t gamma^t P(s_t = s, a_t = a) from the initial state.
VisitationDistribution visitation_distribution(const TabularMdp& mdp, const TabularPolicy& policy);

struct ValueIterationResult {
  std::vector<double> values;
  TabularPolicy greedy_policy;
};

/// Bellman-optimality iteration from V = 0. The greedy policy spreads its mass
/// equally over actions whose Q is within `tie_tolerance` of the best.
ValueIterationResult value_iteration(const TabularMdp& mdp, std::size_t num_iters,
                                     double tie_tolerance = 1e-9);
/// Single-threaded reference for value_iteration().
ValueIterationResult value_iteration_serial(const TabularMdp& mdp, std::size_t num_iters,
                                            double tie_tolerance = 1e-9);

/// Greedy policy with respect to an action-value table, ties shared equally.
TabularPolicy greedy_policy(std::span<const double> q, std::size_t num_states,
                            std::size_t num_actions, double tie_tolerance = 1e-9);

/// (1/(1-gamma)) E_{d^{pi'}} A^pi. Throws std::logic_error when it disagrees
/// with V^{pi'}(s0) - V^pi(s0) by more than `tol`.
double performance_difference(const TabularMdp& mdp, const TabularPolicy& pi,
                              const TabularPolicy& pi_prime, double tol = 1e-8);

/// Half the L1 distance. Throws std::invalid_argument on a length mismatch.
double tv_distance(std::span<const double> p, std::span<const double> q);

/// KL(p || q) in nats; +inf when q has a zero where p does not.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Stationary (s, a) frequencies of the auto-reset chain that rollout()
/// simulates: transitions into a terminal state are redirected to the
/// initial state.
std::vector<double> reset_chain_stationary(const TabularMdp& mdp, const TabularPolicy& policy);

}  // namespace svlab
