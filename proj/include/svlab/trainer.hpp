#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "svlab/actor_critic.hpp"
#include "svlab/gate.hpp"
#include "svlab/mdp.hpp"

namespace svlab {

struct PpoConfig {
  double lambda = 0.95;
  double rho_bar = 1.0;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double lr_initial = 3e-4;
  double lr_final = 0.0;
  std::size_t epochs = 4;
  std::size_t minibatch_size = 256;
  std::size_t num_envs = 8;
  std::size_t horizon = 128;
  double max_grad_norm = 1.0;
  /// Per-round oracle metrics (exact values, visitation TV, KL). Cheap on
  /// small MDPs; turn off for large ones.
  bool exact_metrics = true;
  /// false forces single-threaded rollouts.
  bool parallel_rollout = true;

  void validate() const;
};

/// One row of the training log.
struct RoundRecord {
  std::size_t round = 0;
  double mean_return = 0.0;  // mean discounted return of episodes finished this round (NaN if none)
  std::size_t episodes = 0;
  double diff = 0.0;
  double y_bar = 0.0;
  bool target_updated = false;
  std::size_t k_pi = 0;      // after this round's decision
  std::size_t n_stable = 0;  // after this round's decision
  std::size_t k_min = 0;     // K_min in force this round
  double kl_target = 0.0;    // mean over visited states of KL(pi_k || pi_{k+1})
  double kl_behavior = 0.0;  // mean over visited states of KL(beta_k || beta_{k+1})
  double value_loss = 0.0;   // mean over minibatch steps
  double entropy = 0.0;      // mean behavioral entropy over the batch, before the update
  double max_rho_deviation = 0.0;
  double critic_change = 0.0;  // mean |v_{k+1}(s_t) - v_k(s_t)| over the batch
  // Exact quantities (NaN when exact_metrics is off).
  double v_behavior = 0.0;      // V^{beta_k}(s0)
  double v_target = 0.0;        // V^{pi_k}(s0)
  double value_error_sq = 0.0;  // E_{d^{beta_{k+1}}} (V^{pi_k}(s) - v_k(s))^2
  double value_error_abs = 0.0;
  double tv_mu = 0.0;  // TV(d^{beta_k}, d^{beta_{k+1}})
};

/// Column names of RoundRecord in CSV order.
const std::vector<std::string>& round_record_columns();
std::string round_record_csv_row(const RoundRecord& r);

class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t round, const std::string& what)
      : std::runtime_error("round " + std::to_string(round) + ": " + what), round_(round) {}
  std::size_t round() const { return round_; }

 private:
  std::size_t round_;
};

/// Per-round view handed to observers after the gate decision.
struct RoundContext {
  const RoundRecord& record;
  const ActorCritic& actor_critic;  // after this round's update
  const Snapshot& target;           // after the gate decision
  const TransitionBatch& batch;
  std::span<const double> values_before;  // v_k per state
};

using RoundObserver = std::function<void(const RoundContext&)>;

struct TrainResult {
  std::vector<RoundRecord> records;
  Snapshot target;
  std::size_t target_updates = 0;
};

/// Stable-value PPO. Each round collects data with the behavioral policy,
/// evaluates the frozen target with V-trace / Retrace-GAE, refines critic and
/// behavioral policy for several epochs, then asks the gate whether the
/// target should move to the new behavioral policy.
TrainResult train(const TabularMdp& mdp, ActorCritic& ac, const GateConfig& gate,
                  const PpoConfig& ppo, std::size_t total_rounds, std::uint64_t seed,
                  const RoundObserver& observer = {});

/// Seeds used by train(); exposed so reference loops can match them.
inline std::uint64_t rollout_seed(std::uint64_t seed, std::size_t round) {
  return derive_seed(seed, round);
}
inline std::uint64_t shuffle_seed(std::uint64_t seed, std::size_t round) {
  return derive_seed(seed, round, 1);
}

}  // namespace svlab
