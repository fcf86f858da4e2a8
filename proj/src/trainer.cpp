#include "svlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "svlab/diagnostics.hpp"
#include "svlab/estimators.hpp"
#include "svlab/oracle.hpp"

namespace svlab {

void PpoConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("ppo: lambda must lie in [0, 1]");
  if (!(rho_bar > 0.0)) throw std::invalid_argument("ppo: rho_bar must be > 0");
  if (!(clip_eps > 0.0)) throw std::invalid_argument("ppo: clip_eps must be > 0");
  if (!(entropy_coef >= 0.0)) throw std::invalid_argument("ppo: entropy_coef must be >= 0");
  if (!(lr_initial > 0.0) || !(lr_final >= 0.0)) {
    throw std::invalid_argument("ppo: learning rates must be positive");
  }
  if (epochs == 0 || minibatch_size == 0 || num_envs == 0 || horizon == 0) {
    throw std::invalid_argument("ppo: epochs, minibatch_size, num_envs and horizon must be >= 1");
  }
  if (!(max_grad_norm > 0.0)) throw std::invalid_argument("ppo: max_grad_norm must be > 0");
}

const std::vector<std::string>& round_record_columns() {
  static const std::vector<std::string> cols = {
      "round",          "mean_return",     "episodes",     "diff",        "y_bar",
      "target_updated", "k_pi",            "n_stable",     "k_min",       "kl_target",
      "kl_behavior",    "value_loss",      "entropy",      "max_rho_deviation",
      "critic_change",  "v_behavior",      "v_target",     "value_error_sq",
      "value_error_abs", "tv_mu"};
  return cols;
}

std::string round_record_csv_row(const RoundRecord& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.round << ',' << r.mean_return << ',' << r.episodes << ',' << r.diff << ',' << r.y_bar
     << ',' << (r.target_updated ? 1 : 0) << ',' << r.k_pi << ',' << r.n_stable << ','
     << r.k_min << ',' << r.kl_target << ',' << r.kl_behavior << ',' << r.value_loss << ','
     << r.entropy << ',' << r.max_rho_deviation << ',' << r.critic_change << ','
     << r.v_behavior << ',' << r.v_target << ',' << r.value_error_sq << ','
     << r.value_error_abs << ',' << r.tv_mu;
  return os.str();
}

namespace {

std::vector<double> gather(const std::vector<double>& table, std::size_t na,
                           std::span<const StateIndex> states,
                           std::span<const ActionIndex> actions) {
  std::vector<double> out(states.size());
  for (std::size_t t = 0; t < states.size(); ++t) out[t] = table[states[t] * na + actions[t]];
  return out;
}

std::vector<StateIndex> distinct_states(std::span<const StateIndex> states, std::size_t ns) {
  std::vector<char> seen(ns, 0);
  std::vector<StateIndex> out;
  for (StateIndex s : states) {
    if (!seen[s]) {
      seen[s] = 1;
      out.push_back(s);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TrainResult train(const TabularMdp& mdp, ActorCritic& ac, const GateConfig& gate,
                  const PpoConfig& ppo, std::size_t total_rounds, std::uint64_t seed,
                  const RoundObserver& observer) {
  gate.validate();
  ppo.validate();
  const std::size_t ns = mdp.num_states();
  const std::size_t na = mdp.num_actions();
  const double gamma = mdp.gamma();
  constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

  TrainResult result;
  result.target = ac.snapshot();
  GateState state;
  EnvCursor cursor = EnvCursor::fresh(mdp, ppo.num_envs);
  std::vector<double> running_return(ppo.num_envs, 0.0);
  AdamOptimizer value_opt(ac.value_params().size());
  AdamOptimizer policy_opt(ac.policy_params().size());

  std::vector<StateIndex> all_states(ns);
  std::iota(all_states.begin(), all_states.end(), StateIndex{0});

  for (std::size_t round = 0; round < total_rounds; ++round) {
    RoundRecord rec;
    rec.round = round;
    const Snapshot behavior_before = ac.snapshot();
    const Snapshot target_before = result.target;
    const auto behavior_log = policy_log_table(behavior_before.policy());
    const auto target_log = policy_log_table(target_before.policy());
    const TabularPolicy behavior_tab = project_to_tabular(behavior_before.policy(), mdp);

    TransitionBatch batch = rollout_from(mdp, behavior_tab, ppo.horizon, cursor,
                                         rollout_seed(seed, round), ppo.parallel_rollout);
    batch.behavior_logprobs = gather(behavior_log, na, batch.states, batch.actions);
    const auto target_lp = gather(target_log, na, batch.states, batch.actions);

    // Episode returns, tracked across round boundaries.
    double return_sum = 0.0;
    for (std::size_t e = 0; e < batch.num_envs; ++e) {
      for (std::size_t t = 0; t < batch.horizon; ++t) {
        const std::size_t i = e * batch.horizon + t;
        running_return[e] +=
            std::pow(gamma, static_cast<double>(batch.episode_steps[i])) * batch.rewards[i];
        if (batch.terminals[i]) {
          return_sum += running_return[e];
          running_return[e] = 0.0;
          ++rec.episodes;
        }
      }
    }
    rec.mean_return = rec.episodes > 0 ? return_sum / static_cast<double>(rec.episodes) : kNan;

    // 1. Evaluate the target policy with the pre-update critic.
    const auto v_table = ac.values(all_states);
    std::vector<double> values(batch.size());
    std::vector<double> next_values(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      values[i] = v_table[batch.states[i]];
      next_values[i] = v_table[batch.next_states[i]];
    }
    // A diverged critic shows up here first as non-finite values.
    const EstimatorOutput est = [&] {
      try {
        return estimate_batch(batch, target_lp, values, next_values, gamma, ppo.lambda,
                              ppo.rho_bar);
      } catch (const std::invalid_argument& e) {
        throw TrainingError(round, e.what());
      }
    }();
    const DiffResult d = compute_diff(est.targets, values);
    rec.diff = d.diff;
    rec.y_bar = d.y_bar;
    rec.max_rho_deviation = est.max_rho_deviation;
    rec.entropy = mean_entropy(behavior_before.policy(), batch.states);

    // 2. Refine critic and behavioral policy.
    const double progress = static_cast<double>(round) / static_cast<double>(total_rounds);
    const double lr = linear_schedule(ppo.lr_initial, ppo.lr_final, progress);
    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(shuffle_seed(seed, round));
    std::vector<StateIndex> mb_states;
    std::vector<ActionIndex> mb_actions;
    std::vector<double> mb_targets, mb_adv, mb_old;
    double value_loss_sum = 0.0;
    std::size_t steps = 0;
    try {
      for (std::size_t epoch = 0; epoch < ppo.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += ppo.minibatch_size) {
          const std::size_t end = std::min(order.size(), start + ppo.minibatch_size);
          mb_states.clear();
          mb_actions.clear();
          mb_targets.clear();
          mb_adv.clear();
          mb_old.clear();
          for (std::size_t j = start; j < end; ++j) {
            const std::size_t i = order[j];
            mb_states.push_back(batch.states[i]);
            mb_actions.push_back(batch.actions[i]);
            mb_targets.push_back(est.targets[i]);
            mb_adv.push_back(est.advantages[i]);
            mb_old.push_back(batch.behavior_logprobs[i]);
          }
          const LossResult vl = value_loss(ac.value(), mb_states, mb_targets);
          if (!std::isfinite(vl.loss)) throw std::runtime_error("non-finite value loss");
          value_opt.step(ac.value_params(), vl.gradient, lr, ppo.max_grad_norm);
          const PolicyLossResult pl = ppo_policy_loss(ac.policy(), mb_states, mb_actions, mb_old,
                                                      mb_adv, ppo.clip_eps, ppo.entropy_coef);
          if (!std::isfinite(pl.loss)) throw std::runtime_error("non-finite policy loss");
          policy_opt.step(ac.policy_params(), pl.gradient, lr, ppo.max_grad_norm);
          value_loss_sum += vl.loss;
          ++steps;
        }
      }
    } catch (const std::exception& e) {
      throw TrainingError(round, e.what());
    }
    rec.value_loss = value_loss_sum / static_cast<double>(steps);

    const auto v_after = ac.values(all_states);
    double change = 0.0;
    for (StateIndex s : batch.states) change += std::abs(v_after[s] - v_table[s]);
    rec.critic_change = change / static_cast<double>(batch.size());

    // 3. Stability gate.
    rec.k_min = gate.k_min_at(round, total_rounds);
    const ConvResult c = conv(d.diff, d.y_bar, state.n_stable, state.k_pi, gate, rec.k_min);
    state.last_diff = d.diff;
    if (c.stable) {
      result.target = ac.snapshot();
      state.k_pi = 0;
      state.n_stable = 0;
      state.last_target_update_round = round;
      ++result.target_updates;
    } else {
      state.k_pi += 1;
      state.n_stable = c.n_stable;
    }
    rec.target_updated = c.stable;
    rec.k_pi = state.k_pi;
    rec.n_stable = state.n_stable;

    const auto visited = distinct_states(batch.states, ns);
    const TabularPolicy behavior_after = project_to_tabular(ac.policy(), mdp);
    const TabularPolicy target_before_tab = project_to_tabular(target_before.policy(), mdp);
    const TabularPolicy target_after_tab = project_to_tabular(result.target.policy(), mdp);
    if (ppo.exact_metrics) {
      const auto mu_k = visitation_distribution(mdp, behavior_tab);
      const auto mu_k1 = visitation_distribution(mdp, behavior_after);
      const RoundMetrics m = round_metrics(mdp, target_before_tab, target_after_tab, behavior_tab,
                                           behavior_after, mu_k.d, mu_k1.d, v_table, visited);
      rec.kl_target = m.kl_target;
      rec.kl_behavior = m.kl_behavior;
      rec.v_behavior = m.v_data_policy;
      rec.v_target = m.v_target;
      rec.value_error_sq = m.value_error_sq;
      rec.value_error_abs = m.value_error_abs;
      rec.tv_mu = m.tv_mu;
    } else {
      rec.kl_target = mean_state_kl(target_before_tab, target_after_tab, visited);
      rec.kl_behavior = mean_state_kl(behavior_tab, behavior_after, visited);
      rec.v_behavior = rec.v_target = kNan;
      rec.value_error_sq = rec.value_error_abs = rec.tv_mu = kNan;
    }

    result.records.push_back(rec);
    if (observer) observer({result.records.back(), ac, result.target, batch, v_table});
  }
  return result;
}

}  // namespace svlab
