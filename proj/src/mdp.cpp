#include "svlab/mdp.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace svlab {

TabularMdp::TabularMdp(std::size_t num_states, std::size_t num_actions, double gamma,
                       StateIndex initial_state)
    : num_states_(num_states),
      num_actions_(num_actions),
      gamma_(gamma),
      initial_state_(initial_state),
      transition_(num_states * num_actions * num_states, 0.0),
      reward_(num_states * num_actions, 0.0),
      terminal_(num_states, 0) {
  if (num_states == 0 || num_actions == 0) {
    throw std::invalid_argument("TabularMdp: num_states and num_actions must be positive");
  }
  if (initial_state >= num_states) {
    throw std::invalid_argument("TabularMdp: initial state out of range");
  }
  set_gamma(gamma);
}

void TabularMdp::set_terminal(StateIndex s) {
  terminal_.at(s) = 1;
  for (ActionIndex a = 0; a < num_actions_; ++a) {
    auto row = transition_row(s, a);
    std::fill(row.begin(), row.end(), 0.0);
    row[s] = 1.0;
    reward(s, a) = 0.0;
  }
}

std::vector<StateIndex> TabularMdp::terminal_states() const {
  std::vector<StateIndex> out;
  for (StateIndex s = 0; s < num_states_; ++s) {
    if (terminal_[s]) out.push_back(s);
  }
  return out;
}

void TabularMdp::set_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("TabularMdp: gamma must lie in [0, 1)");
  }
  gamma_ = gamma;
}

void TabularMdp::set_initial_state(StateIndex s) {
  if (s >= num_states_) throw std::invalid_argument("TabularMdp: initial state out of range");
  initial_state_ = s;
}

void TabularMdp::set_grid(int rows, int cols, std::vector<GridCell> cells) {
  if (cells.size() != num_states_) {
    throw std::invalid_argument("TabularMdp: one grid cell per state required");
  }
  grid_rows_ = rows;
  grid_cols_ = cols;
  cells_ = std::move(cells);
}

void TabularMdp::validate(double tol) const {
  if (num_states_ == 0 || num_actions_ == 0) throw std::invalid_argument("empty MDP");
  if (!(gamma_ >= 0.0 && gamma_ < 1.0)) throw std::invalid_argument("gamma outside [0, 1)");
  for (StateIndex s = 0; s < num_states_; ++s) {
    for (ActionIndex a = 0; a < num_actions_; ++a) {
      double sum = 0.0;
      for (double p : transition_row(s, a)) {
        if (p < 0.0) throw std::invalid_argument("negative transition probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > tol) {
        throw std::invalid_argument("transition row (" + std::to_string(s) + "," +
                                    std::to_string(a) + ") sums to " + std::to_string(sum));
      }
      const double r = reward(s, a);
      if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("reward outside [0, 1]");
      if (terminal_[s] && (transition(s, a, s) != 1.0 || r != 0.0)) {
        throw std::invalid_argument("terminal state must self-loop with zero reward");
      }
    }
  }
}

TabularPolicy::TabularPolicy(std::size_t num_states, std::size_t num_actions)
    : num_states_(num_states), num_actions_(num_actions), probs_(num_states * num_actions, 0.0) {}

TabularPolicy TabularPolicy::uniform(std::size_t num_states, std::size_t num_actions) {
  TabularPolicy p(num_states, num_actions);
  std::fill(p.probs_.begin(), p.probs_.end(), 1.0 / static_cast<double>(num_actions));
  return p;
}

TabularPolicy TabularPolicy::deterministic(std::size_t num_actions,
                                           std::span<const ActionIndex> actions) {
  TabularPolicy p(actions.size(), num_actions);
  for (StateIndex s = 0; s < actions.size(); ++s) p(s, actions[s]) = 1.0;
  return p;
}

void TabularPolicy::validate(double tol) const {
  for (StateIndex s = 0; s < num_states_; ++s) {
    double sum = 0.0;
    for (double p : row(s)) {
      if (!(p >= 0.0)) throw std::invalid_argument("policy has a negative or NaN entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw std::invalid_argument("policy row " + std::to_string(s) + " sums to " +
                                  std::to_string(sum));
    }
  }
}

void TabularPolicy::validate_for(const TabularMdp& mdp, double tol) const {
  if (num_states_ != mdp.num_states() || num_actions_ != mdp.num_actions()) {
    throw std::invalid_argument("policy shape does not match MDP");
  }
  validate(tol);
}

void TransitionBatch::validate() const {
  const std::size_t n = states.size();
  if (actions.size() != n || rewards.size() != n || next_states.size() != n ||
      terminals.size() != n || behavior_logprobs.size() != n || episode_steps.size() != n) {
    throw std::invalid_argument("TransitionBatch: sequence lengths differ");
  }
  if (n != num_envs * horizon) {
    throw std::invalid_argument("TransitionBatch: size is not num_envs * horizon");
  }
}

const std::vector<std::string>& four_rooms_layout() {
  static const std::vector<std::string> layout = {
      "#############",
      "#     #     #",
      "#     #     #",
      "#           #",
      "#     #     #",
      "#     #     #",
      "## ####     #",
      "#     ### ###",
      "#     #     #",
      "#     #     #",
      "#           #",
      "#     #     #",
      "#############",
  };
  return layout;
}

TabularMdp build_four_rooms(double slip_prob, double gamma) {
  if (!(slip_prob >= 0.0 && slip_prob <= 1.0)) {
    throw std::invalid_argument("build_four_rooms: slip_prob must lie in [0, 1]");
  }
  const auto& layout = four_rooms_layout();
  const int rows = static_cast<int>(layout.size());
  const int cols = static_cast<int>(layout[0].size());
  constexpr GridCell kStart{1, 1};
  constexpr GridCell kGoal{11, 11};

  std::vector<int> index(static_cast<std::size_t>(rows * cols), -1);
  std::vector<GridCell> cells;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (layout[r][c] != '#') {
        index[r * cols + c] = static_cast<int>(cells.size());
        cells.push_back({r, c});
      }
    }
  }
  const auto state_of = [&](GridCell cell) {
    return static_cast<StateIndex>(index[cell.row * cols + cell.col]);
  };
  const StateIndex start = state_of(kStart);
  const StateIndex goal = state_of(kGoal);

  TabularMdp mdp(cells.size(), 4, gamma, start);
  constexpr int kDr[4] = {-1, 0, 1, 0};
  constexpr int kDc[4] = {0, 1, 0, -1};
  for (StateIndex s = 0; s < cells.size(); ++s) {
    for (ActionIndex a = 0; a < 4; ++a) {
      for (ActionIndex dir = 0; dir < 4; ++dir) {
        const double p = dir == a ? 1.0 - slip_prob : slip_prob / 3.0;
        if (p == 0.0) continue;
        GridCell to{cells[s].row + kDr[dir], cells[s].col + kDc[dir]};
        const StateIndex next = layout[to.row][to.col] == '#' ? s : state_of(to);
        mdp.transition(s, a, next) += p;
      }
      mdp.reward(s, a) = mdp.transition(s, a, goal);
    }
  }
  mdp.set_terminal(goal);
  mdp.set_grid(rows, cols, std::move(cells));
  return mdp;
}

TabularMdp build_random_mdp(std::size_t num_states, std::size_t num_actions, double gamma,
                            std::uint64_t seed) {
  if (num_states == 0 || num_actions == 0) {
    throw std::invalid_argument("build_random_mdp: num_states and num_actions must be >= 1");
  }
  TabularMdp mdp(num_states, num_actions, gamma, 0);
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> dirichlet_one(1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (StateIndex s = 0; s < num_states; ++s) {
    for (ActionIndex a = 0; a < num_actions; ++a) {
      auto row = mdp.transition_row(s, a);
      double total = 0.0;
      for (double& p : row) {
        p = dirichlet_one(rng);
        total += p;
      }
      for (double& p : row) p /= total;
      mdp.reward(s, a) = unit(rng);
    }
  }
  return mdp;
}

TabularPolicy random_policy(std::size_t num_states, std::size_t num_actions,
                            std::mt19937_64& rng) {
  TabularPolicy pi(num_states, num_actions);
  std::exponential_distribution<double> dirichlet_one(1.0);
  for (StateIndex s = 0; s < num_states; ++s) {
    auto row = pi.row(s);
    double total = 0.0;
    for (double& p : row) {
      p = dirichlet_one(rng);
      total += p;
    }
    for (double& p : row) p /= total;
  }
  return pi;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a simple combination
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

std::size_t sample_categorical(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  return last_positive;
}

EnvCursor EnvCursor::fresh(const TabularMdp& mdp, std::size_t num_envs) {
  return {std::vector<StateIndex>(num_envs, mdp.initial_state()),
          std::vector<std::size_t>(num_envs, 0)};
}

namespace {

void run_env(const TabularMdp& mdp, const TabularPolicy& policy, std::size_t horizon,
             std::size_t env, EnvCursor& cursor, std::uint64_t seed, TransitionBatch& batch) {
  std::mt19937_64 rng(derive_seed(seed, env));
  StateIndex s = cursor.states[env];
  std::size_t step = cursor.episode_steps[env];
  for (std::size_t t = 0; t < horizon; ++t) {
    const std::size_t i = env * horizon + t;
    const ActionIndex a = sample_categorical(policy.row(s), rng);
    const StateIndex next = sample_categorical(mdp.transition_row(s, a), rng);
    const bool done = mdp.is_terminal(next);
    batch.states[i] = s;
    batch.actions[i] = a;
    batch.rewards[i] = mdp.reward(s, a);
    batch.terminals[i] = done ? 1 : 0;
    batch.next_states[i] = done ? mdp.initial_state() : next;
    batch.behavior_logprobs[i] = std::log(policy(s, a));
    batch.episode_steps[i] = step;
    s = batch.next_states[i];
    step = done ? 0 : step + 1;
  }
  cursor.states[env] = s;
  cursor.episode_steps[env] = step;
}

TransitionBatch allocate(std::size_t num_envs, std::size_t horizon) {
  TransitionBatch batch;
  batch.num_envs = num_envs;
  batch.horizon = horizon;
  const std::size_t n = num_envs * horizon;
  batch.states.resize(n);
  batch.actions.resize(n);
  batch.rewards.resize(n);
  batch.next_states.resize(n);
  batch.terminals.resize(n);
  batch.behavior_logprobs.resize(n);
  batch.episode_steps.resize(n);
  return batch;
}

void check_rollout_args(const TabularMdp& mdp, const TabularPolicy& policy, std::size_t horizon,
                        const EnvCursor& cursor) {
  if (horizon == 0) throw std::invalid_argument("rollout: horizon must be >= 1");
  if (policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions()) {
    throw std::invalid_argument("rollout: policy shape does not match MDP");
  }
  if (cursor.states.size() != cursor.episode_steps.size()) {
    throw std::invalid_argument("rollout: malformed cursor");
  }
}

}  // namespace

TransitionBatch rollout_from(const TabularMdp& mdp, const TabularPolicy& policy,
                             std::size_t horizon, EnvCursor& cursor, std::uint64_t seed,
                             bool parallel) {
  check_rollout_args(mdp, policy, horizon, cursor);
  const std::size_t num_envs = cursor.states.size();
  TransitionBatch batch = allocate(num_envs, horizon);
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < static_cast<std::ptrdiff_t>(num_envs); ++e) {
      run_env(mdp, policy, horizon, static_cast<std::size_t>(e), cursor, seed, batch);
    }
  } else {
    for (std::size_t e = 0; e < num_envs; ++e) run_env(mdp, policy, horizon, e, cursor, seed, batch);
  }
  return batch;
}

TransitionBatch rollout(const TabularMdp& mdp, const TabularPolicy& policy, std::size_t horizon,
                        std::size_t num_envs, std::uint64_t seed) {
  EnvCursor cursor = EnvCursor::fresh(mdp, num_envs);
  return rollout_from(mdp, policy, horizon, cursor, seed, true);
}

TransitionBatch rollout_serial(const TabularMdp& mdp, const TabularPolicy& policy,
                               std::size_t horizon, std::size_t num_envs, std::uint64_t seed) {
  EnvCursor cursor = EnvCursor::fresh(mdp, num_envs);
  return rollout_from(mdp, policy, horizon, cursor, seed, false);
}

nlohmann::json to_json(const TabularMdp& mdp) {
  nlohmann::json doc;
  doc["num_states"] = mdp.num_states();
  doc["num_actions"] = mdp.num_actions();
  doc["gamma"] = mdp.gamma();
  doc["initial_state"] = mdp.initial_state();
  doc["transition_shape"] = {mdp.num_states(), mdp.num_actions(), mdp.num_states()};
  doc["transition"] = mdp.transitions();
  doc["reward_shape"] = {mdp.num_states(), mdp.num_actions()};
  doc["reward"] = mdp.rewards();
  doc["terminal_states"] = mdp.terminal_states();
  if (mdp.cells()) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : *mdp.cells()) cells.push_back({c.row, c.col});
    doc["grid"] = {{"rows", mdp.grid_rows()}, {"cols", mdp.grid_cols()}, {"cells", cells}};
  }
  return doc;
}

TabularMdp mdp_from_json(const nlohmann::json& doc) {
  const auto ns = doc.at("num_states").get<std::size_t>();
  const auto na = doc.at("num_actions").get<std::size_t>();
  TabularMdp mdp(ns, na, doc.at("gamma").get<double>(), doc.at("initial_state").get<StateIndex>());
  const auto transition = doc.at("transition").get<std::vector<double>>();
  const auto reward = doc.at("reward").get<std::vector<double>>();
  if (transition.size() != ns * na * ns || reward.size() != ns * na) {
    throw std::invalid_argument("mdp_from_json: array sizes do not match shape");
  }
  for (StateIndex s = 0; s < ns; ++s) {
    for (ActionIndex a = 0; a < na; ++a) {
      auto row = mdp.transition_row(s, a);
      std::copy_n(transition.begin() + static_cast<std::ptrdiff_t>((s * na + a) * ns), ns,
                  row.begin());
      mdp.reward(s, a) = reward[s * na + a];
    }
  }
  for (auto s : doc.at("terminal_states").get<std::vector<StateIndex>>()) mdp.set_terminal(s);
  if (doc.contains("grid")) {
    const auto& grid = doc["grid"];
    std::vector<GridCell> cells;
    for (const auto& c : grid.at("cells")) cells.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
    mdp.set_grid(grid.at("rows").get<int>(), grid.at("cols").get<int>(), std::move(cells));
  }
  mdp.validate();
  return mdp;
}

}  // namespace svlab
