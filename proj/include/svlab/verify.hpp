#pragma once

// Reference oracles and randomized property suites. These are written
// independently of the production code paths they check and are linked only
// into tests, the acceptance binary and the `verify` subcommand.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "svlab/actor_critic.hpp"
#include "svlab/gate.hpp"
#include "svlab/mdp.hpp"
#include "svlab/trainer.hpp"

namespace svlab::verify {

// ---- reference oracles ----------------------------------------------------

/// Forward-view lambda-return over one segment: a (1-lambda) lambda^{n-1}
/// weighted mixture of n-step returns, with the longest available return
/// taking the remaining weight. `values` has length T+1.
std::vector<double> td_lambda_forward(std::span<const double> rewards,
                                      std::span<const char> terminals,
                                      std::span<const double> values, double gamma, double lambda);

/// GAE as the explicit sum  A_t = sum_k (gamma lambda)^k delta_{t+k}, cut at
/// the first terminal.
std::vector<double> gae_direct(std::span<const double> rewards, std::span<const char> terminals,
                               std::span<const double> values, double gamma, double lambda);

/// Q^pi by repeated application of the Bellman expectation map.
std::vector<double> q_fixed_point(const TabularMdp& mdp, const TabularPolicy& pi,
                                  std::size_t iters);

/// (1-gamma) sum_{t <= horizon} gamma^t P(s_t = s, a_t = a), by forward propagation.
std::vector<double> visitation_truncated(const TabularMdp& mdp, const TabularPolicy& pi,
                                         std::size_t horizon);

/// Central-difference gradient of f at x.
std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                      std::span<const double> x, double step = 1e-6);

/// ||a - b|| / max(||a||, ||b||), and 0 when both vanish.
double relative_error(std::span<const double> a, std::span<const double> b);

/// Plain PPO that never keeps a separate target: advantages and targets are
/// computed with the behavioral log-probabilities on both sides. Uses the same
/// seed streams as train().
std::vector<RoundRecord> train_ppo_reference(const TabularMdp& mdp, ActorCritic& ac,
                                             const PpoConfig& ppo, std::size_t total_rounds,
                                             std::uint64_t seed);

/// Direct case analysis of the gate rule, written without conv().
ConvResult gate_reference(double diff, double y_bar, std::size_t n_stable, std::size_t k_pi,
                          const GateConfig& cfg, std::size_t k_min);

/// Perturbs each row of `base` by a total-variation distance of exactly `tv`
/// (or the largest reachable amount when a row cannot move that far).
TabularPolicy perturb_policy(const TabularPolicy& base, double tv, std::mt19937_64& rng);

// ---- suites -----------------------------------------------------------------

struct SuiteReport {
  std::string name;
  std::size_t instances = 0;
  std::size_t checks = 0;
  std::size_t violations = 0;
  std::size_t premise_skips = 0;
  /// Smallest slack over all checks; a check passes when its slack >= 0.
  double worst_slack = 0.0;
  std::size_t worst_instance = 0;
  nlohmann::json details = nlohmann::json::object();

  bool passed() const { return violations == 0 && checks > 0; }
};

nlohmann::json to_json(const SuiteReport& r);

const std::vector<std::string>& suite_names();

/// Runs a named suite. Instances run in parallel when OpenMP is available;
/// each instance draws from its own stream derive_seed(seed, index), so the
/// report does not depend on thread count. `instances` = 0 picks the default.
/// Throws std::invalid_argument on an unknown name.
SuiteReport run_suite(const std::string& name, std::size_t instances, std::uint64_t seed);

/// Same, with parallelism disabled.
SuiteReport run_suite_serial(const std::string& name, std::size_t instances, std::uint64_t seed);

}  // namespace svlab::verify
