#include "svlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "svlab/diagnostics.hpp"
#include "svlab/estimators.hpp"
#include "svlab/oracle.hpp"

namespace svlab::verify {

std::vector<double> td_lambda_forward(std::span<const double> rewards,
                                      std::span<const char> terminals,
                                      std::span<const double> values, double gamma, double lambda) {
  const std::size_t T = rewards.size();
  std::vector<double> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t longest = T - t;
    // n-step returns G^(1..longest); once a terminal is hit they stop growing.
    std::vector<double> g(longest + 1, 0.0);
    double discounted = 0.0;
    double scale = 1.0;
    bool ended = false;
    for (std::size_t n = 1; n <= longest; ++n) {
      const std::size_t i = t + n - 1;
      if (!ended) {
        discounted += scale * rewards[i];
        scale *= gamma;
        ended = terminals[i] != 0;
      }
      g[n] = ended ? discounted : discounted + scale * values[t + n];
    }
    double total = 0.0;
    double weight = 1.0;
    for (std::size_t n = 1; n < longest; ++n) {
      total += (1.0 - lambda) * weight * g[n];
      weight *= lambda;
    }
    total += weight * g[longest];
    out[t] = total;
  }
  return out;
}

std::vector<double> gae_direct(std::span<const double> rewards, std::span<const char> terminals,
                               std::span<const double> values, double gamma, double lambda) {
  const std::size_t T = rewards.size();
  std::vector<double> out(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double coef = 1.0;
    for (std::size_t k = t; k < T; ++k) {
      const double next = terminals[k] ? 0.0 : values[k + 1];
      out[t] += coef * (rewards[k] + gamma * next - values[k]);
      if (terminals[k]) break;
      coef *= gamma * lambda;
    }
  }
  return out;
}

std::vector<double> q_fixed_point(const TabularMdp& mdp, const TabularPolicy& pi,
                                  std::size_t iters) {
  const std::size_t ns = mdp.num_states();
  const std::size_t na = mdp.num_actions();
  std::vector<double> q(ns * na, 0.0);
  std::vector<double> v(ns, 0.0);
  for (std::size_t it = 0; it < iters; ++it) {
    for (StateIndex s = 0; s < ns; ++s) {
      double acc = 0.0;
      for (ActionIndex a = 0; a < na; ++a) acc += pi(s, a) * q[s * na + a];
      v[s] = acc;
    }
    for (StateIndex s = 0; s < ns; ++s) {
      for (ActionIndex a = 0; a < na; ++a) {
        double expected = 0.0;
        for (StateIndex sp = 0; sp < ns; ++sp) expected += mdp.transition(s, a, sp) * v[sp];
        q[s * na + a] = mdp.reward(s, a) + mdp.gamma() * expected;
      }
    }
  }
  return q;
}

std::vector<double> visitation_truncated(const TabularMdp& mdp, const TabularPolicy& pi,
                                         std::size_t horizon) {
  const std::size_t ns = mdp.num_states();
  const std::size_t na = mdp.num_actions();
  std::vector<double> d(ns * na, 0.0);
  std::vector<double> p(ns, 0.0);
  std::vector<double> next(ns);
  p[mdp.initial_state()] = 1.0;
  double weight = 1.0 - mdp.gamma();
  for (std::size_t t = 0; t <= horizon; ++t) {
    std::fill(next.begin(), next.end(), 0.0);
    for (StateIndex s = 0; s < ns; ++s) {
      if (p[s] == 0.0) continue;
      for (ActionIndex a = 0; a < na; ++a) {
        const double mass = p[s] * pi(s, a);
        d[s * na + a] += weight * mass;
        for (StateIndex sp = 0; sp < ns; ++sp) next[sp] += mass * mdp.transition(s, a, sp);
      }
    }
    p.swap(next);
    weight *= mdp.gamma();
  }
  return d;
}

std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                      std::span<const double> x, double step) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

std::vector<RoundRecord> train_ppo_reference(const TabularMdp& mdp, ActorCritic& ac,
                                             const PpoConfig& ppo, std::size_t total_rounds,
                                             std::uint64_t seed) {
  const std::size_t ns = mdp.num_states();
  const std::size_t na = mdp.num_actions();
  EnvCursor cursor = EnvCursor::fresh(mdp, ppo.num_envs);
  AdamOptimizer value_opt(ac.value_params().size());
  AdamOptimizer policy_opt(ac.policy_params().size());
  std::vector<StateIndex> every_state(ns);
  std::iota(every_state.begin(), every_state.end(), StateIndex{0});
  std::vector<RoundRecord> records;

  for (std::size_t round = 0; round < total_rounds; ++round) {
    const auto log_table = policy_log_table(ac.policy());
    const TabularPolicy acting = project_to_tabular(ac.policy(), mdp);
    TransitionBatch batch = rollout_from(mdp, acting, ppo.horizon, cursor,
                                         rollout_seed(seed, round), ppo.parallel_rollout);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      batch.behavior_logprobs[i] = log_table[batch.states[i] * na + batch.actions[i]];
    }
    const auto v = ac.values(every_state);
    std::vector<double> values(batch.size()), next_values(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      values[i] = v[batch.states[i]];
      next_values[i] = v[batch.next_states[i]];
    }
    const EstimatorOutput est = estimate_batch(batch, batch.behavior_logprobs, values, next_values,
                                               mdp.gamma(), ppo.lambda, ppo.rho_bar);

    RoundRecord rec;
    rec.round = round;
    rec.target_updated = true;
    rec.entropy = mean_entropy(ac.policy(), batch.states);
    const double lr = linear_schedule(ppo.lr_initial, ppo.lr_final,
                                      static_cast<double>(round) / static_cast<double>(total_rounds));
    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(shuffle_seed(seed, round));
    std::size_t steps = 0;
    for (std::size_t epoch = 0; epoch < ppo.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += ppo.minibatch_size) {
        const std::size_t end = std::min(order.size(), start + ppo.minibatch_size);
        std::vector<StateIndex> s;
        std::vector<ActionIndex> a;
        std::vector<double> y, adv, old;
        for (std::size_t j = start; j < end; ++j) {
          s.push_back(batch.states[order[j]]);
          a.push_back(batch.actions[order[j]]);
          y.push_back(est.targets[order[j]]);
          adv.push_back(est.advantages[order[j]]);
          old.push_back(batch.behavior_logprobs[order[j]]);
        }
        const LossResult vl = value_loss(ac.value(), s, y);
        value_opt.step(ac.value_params(), vl.gradient, lr, ppo.max_grad_norm);
        const PolicyLossResult pl =
            ppo_policy_loss(ac.policy(), s, a, old, adv, ppo.clip_eps, ppo.entropy_coef);
        policy_opt.step(ac.policy_params(), pl.gradient, lr, ppo.max_grad_norm);
        rec.value_loss += vl.loss;
        ++steps;
      }
    }
    rec.value_loss /= static_cast<double>(steps);
    records.push_back(rec);
  }
  return records;
}

ConvResult gate_reference(double diff, double y_bar, std::size_t n_stable, std::size_t k_pi,
                          const GateConfig& cfg, std::size_t k_min) {
  bool stable_now;
  if (cfg.static_mode || cfg.delta_v == std::numeric_limits<double>::infinity()) {
    stable_now = true;
  } else {
    stable_now = !(diff > y_bar * cfg.delta_v);
  }
  const std::size_t counter = stable_now ? n_stable + 1 : 0;
  bool fire = false;
  if (k_pi >= cfg.k_max) fire = true;
  if (counter >= k_min) fire = true;
  if (fire) return {true, 0};
  return {false, counter};
}

TabularPolicy perturb_policy(const TabularPolicy& base, double tv, std::mt19937_64& rng) {
  const std::size_t ns = base.num_states();
  const std::size_t na = base.num_actions();
  TabularPolicy out = base;
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> u(na);
  for (StateIndex s = 0; s < ns; ++s) {
    const auto row = base.row(s);
    // Random direction; fall back to the point mass on the least likely action
    // when the random one cannot move the row far enough.
    double total = 0.0;
    for (double& x : u) total += (x = expo(rng));
    for (double& x : u) x /= total;
    double dist = tv_distance(row, u);
    if (dist < tv) {
      const auto argmin = static_cast<std::size_t>(std::min_element(row.begin(), row.end()) - row.begin());
      std::fill(u.begin(), u.end(), 0.0);
      u[argmin] = 1.0;
      dist = tv_distance(row, u);
    }
    const double mix = dist > 0.0 ? std::min(1.0, tv / dist) : 0.0;
    for (ActionIndex a = 0; a < na; ++a) out(s, a) = (1.0 - mix) * row[a] + mix * u[a];
  }
  return out;
}

// ---- suites -----------------------------------------------------------------

nlohmann::json to_json(const SuiteReport& r) {
  return {{"suite", r.name},
          {"instances", r.instances},
          {"checks", r.checks},
          {"violations", r.violations},
          {"premise_skips", r.premise_skips},
          {"worst_slack", std::isfinite(r.worst_slack) ? nlohmann::json(r.worst_slack)
                                                       : nlohmann::json(nullptr)},
          {"worst_instance", r.worst_instance},
          {"passed", r.passed()},
          {"details", r.details}};
}

namespace {

struct InstanceResult {
  std::vector<double> slacks;  // one per check; >= 0 passes
  bool skipped = false;
  std::string error;
};

struct RandomInstance {
  TabularMdp mdp;
  TabularPolicy pi;
  TabularPolicy pi_prime;
};

RandomInstance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> states(2, 20);
  std::uniform_int_distribution<std::size_t> actions(2, 5);
  const double gamma = std::bernoulli_distribution(0.5)(rng) ? 0.9 : 0.99;
  const std::size_t ns = states(rng);
  const std::size_t na = actions(rng);
  TabularMdp mdp = build_random_mdp(ns, na, gamma, rng());
  TabularPolicy pi = random_policy(ns, na, rng);
  TabularPolicy pi_prime = random_policy(ns, na, rng);
  return {std::move(mdp), std::move(pi), std::move(pi_prime)};
}

std::vector<double> random_distribution(std::size_t n, std::mt19937_64& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> p(n);
  double total = 0.0;
  for (double& x : p) total += (x = expo(rng));
  for (double& x : p) x /= total;
  return p;
}

/// Noisy critic for Q^pi: one of exact, Gaussian noise, sign flip on a
/// state, or unrelated uniform values.
std::vector<double> noisy_critic(const std::vector<double>& q, double gamma, std::size_t na,
                                 std::mt19937_64& rng) {
  std::vector<double> out = q;
  const double qmax = 1.0 / (1.0 - gamma);
  switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0:
      break;
    case 1: {
      const double scale = std::uniform_real_distribution<double>(0.01, qmax)(rng);
      std::normal_distribution<double> noise(0.0, scale);
      for (double& x : out) x += noise(rng);
      break;
    }
    case 2: {
      const std::size_t s = std::uniform_int_distribution<std::size_t>(0, q.size() / na - 1)(rng);
      for (std::size_t a = 0; a < na; ++a) out[s * na + a] = -out[s * na + a];
      break;
    }
    default: {
      std::uniform_real_distribution<double> u(0.0, qmax);
      for (double& x : out) x = u(rng);
    }
  }
  return out;
}

std::size_t iterations_for(double gamma, double tol) {
  return static_cast<std::size_t>(std::ceil(std::log(tol) / std::log(gamma))) + 1;
}

InstanceResult pdl_instance(std::size_t, std::mt19937_64& rng) {
  const auto inst = random_instance(rng);
  const auto& mdp = inst.mdp;
  const double gamma = mdp.gamma();
  const std::size_t na = mdp.num_actions();
  const auto eval = evaluate_policy_exact(mdp, inst.pi);
  const auto d = visitation_distribution(mdp, inst.pi_prime);
  double expected_adv = 0.0;
  for (std::size_t i = 0; i < d.d.size(); ++i) expected_adv += d.d[i] * eval.adv[i];
  const double lhs = expected_adv / (1.0 - gamma);

  // Value gap from an independent fixed-point evaluation.
  const std::size_t iters = iterations_for(gamma, 1e-15);
  auto value_at_start = [&](const TabularPolicy& p) {
    const auto q = q_fixed_point(mdp, p, iters);
    const StateIndex s0 = mdp.initial_state();
    double v = 0.0;
    for (ActionIndex a = 0; a < na; ++a) v += p(s0, a) * q[s0 * na + a];
    return v;
  };
  const double rhs = value_at_start(inst.pi_prime) - value_at_start(inst.pi);
  InstanceResult r;
  r.slacks.push_back(1e-8 - std::abs(lhs - rhs));
  // The library routine asserts the same identity internally.
  r.slacks.push_back(1e-8 - std::abs(performance_difference(mdp, inst.pi, inst.pi_prime) - rhs));
  return r;
}

InstanceResult sandwich_instance(std::size_t, std::mt19937_64& rng) {
  const auto inst = random_instance(rng);
  const auto eval = evaluate_policy_exact(inst.mdp, inst.pi);
  const auto q = noisy_critic(eval.q, inst.mdp.gamma(), inst.mdp.num_actions(), rng);
  const BoundReport rep = improvement_sandwich_report(inst.mdp, inst.pi, inst.pi_prime, q, 1e-8);
  InstanceResult r;
  r.slacks.push_back(std::min(rep.slack_lower, rep.slack_upper) + rep.tol);
  return r;
}

InstanceResult shift_error_instance(std::size_t index, std::mt19937_64& rng) {
  const auto inst = random_instance(rng);
  const auto& mdp = inst.mdp;
  const std::size_t n = mdp.num_states() * mdp.num_actions();
  const auto q_true = evaluate_policy_exact(mdp, inst.pi).q;
  const auto q_est = noisy_critic(q_true, mdp.gamma(), mdp.num_actions(), rng);
  std::vector<double> mu, mu_prime;
  switch (index % 3) {
    case 0:
      mu = random_distribution(n, rng);
      mu_prime = random_distribution(n, rng);
      break;
    case 1:
      mu = visitation_distribution(mdp, inst.pi).d;
      mu_prime = visitation_distribution(mdp, inst.pi_prime).d;
      break;
    default: {
      // Disjoint supports.
      mu.assign(n, 0.0);
      mu_prime.assign(n, 0.0);
      const std::size_t cut = n / 2;
      for (std::size_t i = 0; i < cut; ++i) mu[i] = 1.0 / static_cast<double>(cut);
      for (std::size_t i = cut; i < n; ++i) mu_prime[i] = 1.0 / static_cast<double>(n - cut);
    }
  }
  const BoundReport rep = shift_error_report(mu, mu_prime, q_est, q_true, mdp.gamma(), 1e-10);
  InstanceResult r;
  r.slacks.push_back(rep.slack_upper + rep.tol);
  return r;
}

constexpr double kDeltas[] = {0.01, 0.1, 0.5};

/// Per-state TV at the premise boundary delta (1 - gamma), pulled in by a
/// relative 1e-12 so rounding in the mixture cannot push a row past it.
double premise_tv(double delta, double gamma) { return delta * (1.0 - gamma) * (1.0 - 1e-12); }

InstanceResult alignment_instance(std::size_t index, std::mt19937_64& rng) {
  const auto inst = random_instance(rng);
  const double delta = kDeltas[index % 3];
  const TabularPolicy beta_next = perturb_policy(inst.pi, premise_tv(delta, inst.mdp.gamma()), rng);
  const NpaCheck chk = npa_check(inst.mdp, inst.pi, beta_next, delta, 1e-8);
  InstanceResult r;
  if (!chk.per_state_tv_ok) {
    r.skipped = true;
    return r;
  }
  r.slacks.push_back(delta + 1e-8 - chk.visitation_tv);
  return r;
}

InstanceResult update_bound_instance(std::size_t index, std::mt19937_64& rng) {
  const auto inst = random_instance(rng);
  const auto& mdp = inst.mdp;
  const double delta = kDeltas[index % 3];
  const TabularPolicy& pi_k = inst.pi;
  // beta_k is the data policy of the round: either the target itself or a
  // drifted version of it.
  const TabularPolicy beta_k =
      std::bernoulli_distribution(0.5)(rng) ? pi_k : inst.pi_prime;
  const TabularPolicy beta_k1 = perturb_policy(beta_k, premise_tv(delta, mdp.gamma()), rng);
  const auto q_true = evaluate_policy_exact(mdp, pi_k).q;
  const auto q = clamp_q(noisy_critic(q_true, mdp.gamma(), mdp.num_actions(), rng), mdp.gamma());
  const double err = weighted_value_error(visitation_distribution(mdp, beta_k).d, q, q_true);
  const double eps_bound = err * (1.0 + std::uniform_real_distribution<double>(0.0, 0.5)(rng));
  const UpdateBoundReport rep = update_bound_report(mdp, pi_k, beta_k, beta_k1, q, eps_bound, delta, 1e-8);
  InstanceResult r;
  if (!rep.premise_ok) {
    r.skipped = true;
    return r;
  }
  r.slacks.push_back(rep.bound.slack_lower + rep.bound.tol);
  r.slacks.push_back(rep.cpi_actual - rep.cpi_lower + 1e-8);
  return r;
}

InstanceResult cpi_instance(std::size_t index, std::mt19937_64& rng) {
  InstanceResult r;
  if (index == 0) {
    // Largest non-vacuous per-state TV budget at gamma = 0.99, unit advantage.
    r.slacks.push_back(0.0025 - cpi_max_nonvacuous_tv(0.99, 1.0));
  }
  const auto inst = random_instance(rng);
  const double delta = kDeltas[index % 3];
  const auto q = evaluate_policy_exact(inst.mdp, inst.pi).q;
  const UpdateBoundReport rep =
      update_bound_report(inst.mdp, inst.pi, inst.pi, inst.pi_prime, q, 0.0, delta, 1e-8);
  r.slacks.push_back(rep.cpi_actual - rep.cpi_lower + 1e-8);
  return r;
}

InstanceResult estimators_instance(std::size_t, std::mt19937_64& rng) {
  const std::size_t T = std::uniform_int_distribution<std::size_t>(1, 60)(rng);
  const double gamma = std::uniform_real_distribution<double>(0.8, 0.999)(rng);
  const double lambda = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double rho_bar = std::bernoulli_distribution(0.3)(rng)
                             ? std::numeric_limits<double>::infinity()
                             : std::uniform_real_distribution<double>(1.0, 10.0)(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> rewards(T), values(T + 1), logp(T);
  std::vector<char> terminals(T);
  for (std::size_t t = 0; t < T; ++t) {
    rewards[t] = unit(rng);
    terminals[t] = unit(rng) < 0.15 ? 1 : 0;
    logp[t] = std::log(std::max(1e-6, unit(rng)));
  }
  for (double& v : values) v = 10.0 * unit(rng);
  const Segment seg{rewards, terminals, values, logp, logp};
  const auto y = vtrace_targets(seg, gamma, lambda, rho_bar);
  const auto adv = retrace_gae(seg, gamma, lambda, rho_bar);
  const auto y_ref = td_lambda_forward(rewards, terminals, values, gamma, lambda);
  const auto adv_ref = gae_direct(rewards, terminals, values, gamma, lambda);
  double worst_y = 0.0, worst_a = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    worst_y = std::max(worst_y, std::abs(y[t] - y_ref[t]));
    worst_a = std::max(worst_a, std::abs(adv[t] - adv_ref[t]));
  }
  InstanceResult r;
  r.slacks.push_back(1e-10 - worst_y);
  r.slacks.push_back(1e-10 - worst_a);
  return r;
}

InstanceResult gradients_instance(std::size_t, std::mt19937_64& rng) {
  const std::size_t ns = std::uniform_int_distribution<std::size_t>(3, 12)(rng);
  const std::size_t na = std::uniform_int_distribution<std::size_t>(2, 5)(rng);
  const std::size_t hidden = std::uniform_int_distribution<std::size_t>(0, 8)(rng);
  auto features = std::make_shared<const FeatureMap>(FeatureMap::one_hot(ns));
  const NetworkShape pshape{ns, hidden, na};
  const NetworkShape vshape{ns, hidden, 1};
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> theta(pshape.num_params()), phi(vshape.num_params());
  for (double& x : theta) x = 0.7 * normal(rng);
  for (double& x : phi) x = 0.7 * normal(rng);

  const std::size_t n = std::uniform_int_distribution<std::size_t>(4, 32)(rng);
  std::vector<StateIndex> states(n);
  std::vector<ActionIndex> actions(n);
  std::vector<double> adv(n), zero_adv(n, 0.0), old(n), targets(n);
  const auto table = policy_log_table(NetworkView{pshape, theta, features.get()});
  for (std::size_t t = 0; t < n; ++t) {
    states[t] = std::uniform_int_distribution<std::size_t>(0, ns - 1)(rng);
    actions[t] = std::uniform_int_distribution<std::size_t>(0, na - 1)(rng);
    adv[t] = normal(rng);
    old[t] = table[states[t] * na + actions[t]] + 0.3 * normal(rng);
    targets[t] = 3.0 * normal(rng);
  }
  const double clip = 0.2;

  auto surrogate = [&](std::span<const double> p) {
    return ppo_policy_loss(NetworkView{pshape, p, features.get()}, states, actions, old, adv, clip,
                           0.0)
        .loss;
  };
  auto entropy = [&](std::span<const double> p) {
    return ppo_policy_loss(NetworkView{pshape, p, features.get()}, states, actions, old, zero_adv,
                           clip, 1.0)
        .loss;
  };
  auto value = [&](std::span<const double> p) {
    return value_loss(NetworkView{vshape, p, features.get()}, states, targets).loss;
  };
  const auto g_surr = ppo_policy_loss(NetworkView{pshape, theta, features.get()}, states, actions,
                                      old, adv, clip, 0.0)
                          .gradient;
  const auto g_ent = ppo_policy_loss(NetworkView{pshape, theta, features.get()}, states, actions,
                                     old, zero_adv, clip, 1.0)
                         .gradient;
  const auto g_val = value_loss(NetworkView{vshape, phi, features.get()}, states, targets).gradient;

  InstanceResult r;
  r.slacks.push_back(1e-4 - relative_error(g_surr, finite_difference(surrogate, theta)));
  r.slacks.push_back(1e-4 - relative_error(g_ent, finite_difference(entropy, theta)));
  r.slacks.push_back(1e-4 - relative_error(g_val, finite_difference(value, phi)));
  return r;
}

InstanceResult gate_instance(std::size_t, std::mt19937_64&) {
  InstanceResult r;
  auto check = [&](double diff, double y_bar, std::size_t n, std::size_t k_pi,
                   const GateConfig& cfg, std::size_t k_min) {
    const ConvResult got = conv(diff, y_bar, n, k_pi, cfg, k_min);
    const ConvResult want = gate_reference(diff, y_bar, n, k_pi, cfg, k_min);
    r.slacks.push_back(got.stable == want.stable && got.n_stable == want.n_stable ? 0.0 : -1.0);
  };
  const double inf = std::numeric_limits<double>::infinity();
  for (bool is_static : {false, true}) {
    for (double delta_v : {0.0, 0.01, 0.5, inf}) {
      for (std::size_t k_min = 1; k_min <= 4; ++k_min) {
        for (std::size_t k_max = k_min; k_max <= 5; ++k_max) {
          GateConfig cfg;
          cfg.delta_v = delta_v;
          cfg.k_min = k_min;
          cfg.k_max = k_max;
          cfg.static_mode = is_static;
          for (double y_bar : {0.0, 1.0, 3.7}) {
            const double thr = y_bar * delta_v;
            std::vector<double> diffs = {0.0, 1e9};
            if (std::isfinite(thr)) {
              diffs.push_back(thr);  // exactly at the threshold
              diffs.push_back(std::nextafter(thr, inf));
              if (thr > 0.0) diffs.push_back(std::nextafter(thr, 0.0));
            }
            for (double diff : diffs) {
              for (std::size_t n = 0; n <= k_max + 1; ++n) {
                for (std::size_t k_pi = 0; k_pi <= k_max + 1; ++k_pi) {
                  check(diff, y_bar, n, k_pi, cfg, k_min);
                }
              }
            }
          }
        }
      }
    }
  }
  // Named boundary cases with their expected outcomes.
  GateConfig cfg;
  cfg.delta_v = 0.01;
  cfg.k_min = 3;
  cfg.k_max = 6;
  auto expect = [&](ConvResult got, bool stable, std::size_t n) {
    r.slacks.push_back(got.stable == stable && got.n_stable == n ? 0.0 : -1.0);
  };
  expect(conv(0.004, 1.0, cfg.k_min - 1, 0, cfg), true, 0);   // n_stable = K_min - 1
  expect(conv(0.01, 1.0, 0, 0, cfg), false, 1);               // tie at the threshold counts
  expect(conv(5.0, 1.0, 2, cfg.k_max, cfg), true, 0);         // k_pi = K_max
  expect(conv(5.0, 1.0, 2, cfg.k_max - 1, cfg), false, 0);    // counter resets
  return r;
}

using InstanceFn = InstanceResult (*)(std::size_t, std::mt19937_64&);

struct SuiteDef {
  const char* name;
  InstanceFn fn;
  std::size_t default_instances;
};

constexpr SuiteDef kSuites[] = {
    {"pdl", pdl_instance, 200},
    {"thm1", sandwich_instance, 200},
    {"lemma1", shift_error_instance, 500},
    {"lemma2", alignment_instance, 200},
    {"thm3", update_bound_instance, 200},
    {"cpi_compare", cpi_instance, 200},
    {"estimators", estimators_instance, 100},
    {"gradients", gradients_instance, 10},
    {"gate", gate_instance, 1},
};

SuiteReport run(const std::string& name, std::size_t instances, std::uint64_t seed,
                bool parallel) {
  const SuiteDef* def = nullptr;
  for (const auto& s : kSuites) {
    if (name == s.name) def = &s;
  }
  if (!def) throw std::invalid_argument("unknown suite '" + name + "'");
  const std::size_t n = instances == 0 ? def->default_instances : instances;

  std::vector<InstanceResult> results(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (long long i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    std::mt19937_64 rng(derive_seed(seed, idx));
    try {
      results[idx] = def->fn(idx, rng);
    } catch (const std::exception& e) {
      results[idx].error = e.what();
    }
  }

  SuiteReport rep;
  rep.name = name;
  rep.instances = n;
  rep.worst_slack = std::numeric_limits<double>::infinity();
  nlohmann::json errors = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& res = results[i];
    if (!res.error.empty()) {
      ++rep.checks;
      ++rep.violations;
      rep.worst_slack = -std::numeric_limits<double>::infinity();
      rep.worst_instance = i;
      errors.push_back({{"instance", i}, {"error", res.error}});
      continue;
    }
    if (res.skipped) ++rep.premise_skips;
    for (double slack : res.slacks) {
      ++rep.checks;
      if (!(slack >= 0.0)) ++rep.violations;
      if (slack < rep.worst_slack) {
        rep.worst_slack = slack;
        rep.worst_instance = i;
      }
    }
  }
  if (!errors.empty()) rep.details["errors"] = errors;
  rep.details["seed"] = seed;
  if (name == "cpi_compare") rep.details["max_nonvacuous_tv_gamma_0.99"] = cpi_max_nonvacuous_tv(0.99, 1.0);
  return rep;
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& s : kSuites) out.emplace_back(s.name);
    return out;
  }();
  return names;
}

SuiteReport run_suite(const std::string& name, std::size_t instances, std::uint64_t seed) {
  return run(name, instances, seed, true);
}

SuiteReport run_suite_serial(const std::string& name, std::size_t instances, std::uint64_t seed) {
  return run(name, instances, seed, false);
}

}  // namespace svlab::verify
