#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace svlab {

using StateIndex = std::size_t;
using ActionIndex = std::size_t;

/// Row/column location of a state on a grid. Only set for grid environments.
struct GridCell {
  int row = 0;
  int col = 0;

  friend bool operator==(const GridCell&, const GridCell&) = default;
};

/// Finite discounted MDP with a dense (s, a, s') transition tensor.
///
/// Rewards are expected immediate rewards r(s, a) in [0, 1]. Terminal states
/// self-loop with probability one and reward zero.
class TabularMdp {
 public:
  TabularMdp() = default;
  TabularMdp(std::size_t num_states, std::size_t num_actions, double gamma,
             StateIndex initial_state);

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }
  double gamma() const { return gamma_; }
  StateIndex initial_state() const { return initial_state_; }

  double transition(StateIndex s, ActionIndex a, StateIndex next) const {
    return transition_[(s * num_actions_ + a) * num_states_ + next];
  }
  double& transition(StateIndex s, ActionIndex a, StateIndex next) {
    return transition_[(s * num_actions_ + a) * num_states_ + next];
  }
  /// Distribution over next states for the pair (s, a).
  std::span<const double> transition_row(StateIndex s, ActionIndex a) const {
    return {transition_.data() + (s * num_actions_ + a) * num_states_, num_states_};
  }
  std::span<double> transition_row(StateIndex s, ActionIndex a) {
    return {transition_.data() + (s * num_actions_ + a) * num_states_, num_states_};
  }

  double reward(StateIndex s, ActionIndex a) const { return reward_[s * num_actions_ + a]; }
  double& reward(StateIndex s, ActionIndex a) { return reward_[s * num_actions_ + a]; }

  bool is_terminal(StateIndex s) const { return terminal_[s] != 0; }
  /// Marks `s` terminal and rewrites its rows into a zero-reward self-loop.
  void set_terminal(StateIndex s);
  std::vector<StateIndex> terminal_states() const;

  const std::vector<double>& transitions() const { return transition_; }
  const std::vector<double>& rewards() const { return reward_; }

  void set_gamma(double gamma);
  void set_initial_state(StateIndex s);

  /// Optional grid geometry (one cell per state) for grid worlds.
  const std::optional<std::vector<GridCell>>& cells() const { return cells_; }
  int grid_rows() const { return grid_rows_; }
  int grid_cols() const { return grid_cols_; }
  void set_grid(int rows, int cols, std::vector<GridCell> cells);

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate(double tol = 1e-12) const;

  friend bool operator==(const TabularMdp&, const TabularMdp&) = default;

 private:
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  double gamma_ = 0.0;
  StateIndex initial_state_ = 0;
  std::vector<double> transition_;
  std::vector<double> reward_;
  std::vector<char> terminal_;
  std::optional<std::vector<GridCell>> cells_;
  int grid_rows_ = 0;
  int grid_cols_ = 0;
};

/// Per-state action distribution, row-major (s, a).
class TabularPolicy {
 public:
  TabularPolicy() = default;
  TabularPolicy(std::size_t num_states, std::size_t num_actions);

  static TabularPolicy uniform(std::size_t num_states, std::size_t num_actions);
  /// Puts probability one on `actions[s]` at every state.
  static TabularPolicy deterministic(std::size_t num_actions, std::span<const ActionIndex> actions);

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }

  double operator()(StateIndex s, ActionIndex a) const { return probs_[s * num_actions_ + a]; }
  double& operator()(StateIndex s, ActionIndex a) { return probs_[s * num_actions_ + a]; }
  std::span<const double> row(StateIndex s) const {
    return {probs_.data() + s * num_actions_, num_actions_};
  }
  std::span<double> row(StateIndex s) { return {probs_.data() + s * num_actions_, num_actions_}; }
  const std::vector<double>& probs() const { return probs_; }

  void validate(double tol = 1e-12) const;
  void validate_for(const TabularMdp& mdp, double tol = 1e-12) const;

  friend bool operator==(const TabularPolicy&, const TabularPolicy&) = default;

 private:
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<double> probs_;
};

/// Rollout data laid out environment-major: environment e owns steps
/// [e * horizon, (e + 1) * horizon). The stream auto-resets, so at a terminal
/// step next_states holds the initial state and the bootstrap is masked.
struct TransitionBatch {
  std::size_t num_envs = 0;
  std::size_t horizon = 0;
  std::vector<StateIndex> states;
  std::vector<ActionIndex> actions;
  std::vector<double> rewards;
  std::vector<StateIndex> next_states;
  std::vector<char> terminals;
  std::vector<double> behavior_logprobs;
  /// Step index within the current episode, used for discounted weighting.
  std::vector<std::size_t> episode_steps;

  std::size_t size() const { return states.size(); }
  void validate() const;

  friend bool operator==(const TransitionBatch&, const TransitionBatch&) = default;
};

enum class GridAction : ActionIndex { Up = 0, Right = 1, Down = 2, Left = 3 };

/// The 11x11 four-room layout with start in the top-left room and a terminal
/// goal in the bottom-right room. With probability `slip_prob` the agent moves
/// in one of the three other directions, chosen uniformly. Entering the goal
/// pays 1; r(s, a) stores the expected reward.
TabularMdp build_four_rooms(double slip_prob, double gamma = 0.99);

/// ASCII map of the four-room layout, '#' for walls.
const std::vector<std::string>& four_rooms_layout();

/// Dense random MDP: Dirichlet(1) transition rows, uniform(0,1) rewards.
TabularMdp build_random_mdp(std::size_t num_states, std::size_t num_actions, double gamma,
                            std::uint64_t seed);

/// Random policy with Dirichlet(1) rows.
TabularPolicy random_policy(std::size_t num_states, std::size_t num_actions, std::mt19937_64& rng);

/// Seed for an independent stream identified by (base, a, b).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

/// Samples an index from a discrete distribution using one uniform draw.
std::size_t sample_categorical(std::span<const double> probs, std::mt19937_64& rng);

/// Rolls out `policy` in `num_envs` auto-resetting environments for `horizon`
/// steps each. Environment e draws from its own generator seeded with
/// derive_seed(seed, e), so the result does not depend on thread scheduling.
/// Parallel over environments when OpenMP is enabled.
TransitionBatch rollout(const TabularMdp& mdp, const TabularPolicy& policy, std::size_t horizon,
                        std::size_t num_envs, std::uint64_t seed);

/// Single-threaded reference for rollout(); produces an identical batch.
TransitionBatch rollout_serial(const TabularMdp& mdp, const TabularPolicy& policy,
                               std::size_t horizon, std::size_t num_envs, std::uint64_t seed);

/// Episode starts carried across rollouts so a training loop keeps environments
/// mid-episode between rounds.
struct EnvCursor {
  std::vector<StateIndex> states;
  std::vector<std::size_t> episode_steps;
  static EnvCursor fresh(const TabularMdp& mdp, std::size_t num_envs);
};

/// rollout() continuing from `cursor`; the cursor is advanced in place.
TransitionBatch rollout_from(const TabularMdp& mdp, const TabularPolicy& policy,
                             std::size_t horizon, EnvCursor& cursor, std::uint64_t seed,
                             bool parallel = true);

/// JSON document with shapes and flat row-major arrays.
nlohmann::json to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const nlohmann::json& doc);

}  // namespace svlab
