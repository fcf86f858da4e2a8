#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "svlab/actor_critic.hpp"
#include "svlab/oracle.hpp"
#include "svlab/verify.hpp"

using namespace svlab;

namespace {

void zero_output_layer(std::vector<double>& params, const NetworkShape& shape) {
  const std::size_t tail = shape.outputs * (shape.hidden ? shape.hidden : shape.inputs) + shape.outputs;
  std::fill(params.end() - static_cast<std::ptrdiff_t>(tail), params.end(), 0.0);
}

std::vector<StateIndex> all_states(std::size_t n) {
  std::vector<StateIndex> s(n);
  std::iota(s.begin(), s.end(), StateIndex{0});
  return s;
}

}  // namespace

TEST_CASE("network shapes and feature maps") {
  CHECK(NetworkShape{5, 3, 2}.num_params() == 3 * 5 + 3 + 2 * 3 + 2);
  CHECK(NetworkShape{5, 0, 2}.num_params() == 2 * 5 + 2);
  const auto one_hot = FeatureMap::one_hot(4);
  CHECK(one_hot.dim() == 4);
  CHECK(one_hot.row(2)[2] == 1.0);
  CHECK(one_hot.support(2).size() == 1);
  const auto mdp = build_four_rooms(0.8);
  const auto coords = FeatureMap::grid_coords(mdp);
  CHECK(coords.dim() == 2);
  for (StateIndex s = 0; s < mdp.num_states(); ++s) {
    for (double x : coords.row(s)) CHECK((x >= 0.0 && x <= 1.0));
  }
  CHECK_THROWS(FeatureMap::grid_coords(build_random_mdp(3, 2, 0.9, 1)));
}

TEST_CASE("zero logit layer gives the uniform policy") {
  const auto mdp = build_four_rooms(0.8);
  for (std::size_t hidden : {0, 16}) {
    InitConfig init;
    init.hidden = hidden;
    ActorCritic ac(mdp, init, 3);
    zero_output_layer(ac.policy_params(), ac.policy_shape());
    const auto states = all_states(mdp.num_states());
    std::vector<ActionIndex> actions(states.size(), 2);
    for (double lp : policy_logprobs(ac.policy(), states, actions)) {
      CHECK(lp == doctest::Approx(-std::log(4.0)).epsilon(1e-15));
    }
    CHECK(project_to_tabular(ac.policy(), mdp) == TabularPolicy::uniform(mdp.num_states(), 4));
    CHECK(mean_entropy(ac.policy(), states) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  }
}

TEST_CASE("default initialization is near uniform") {
  const auto mdp = build_four_rooms(0.8);
  ActorCritic ac(mdp, InitConfig{}, 1);
  const auto pi = project_to_tabular(ac.policy(), mdp);
  for (double p : pi.probs()) CHECK(std::abs(p - 0.25) < 0.01);
}

TEST_CASE("random parameters give normalized rows") {
  const auto mdp = build_random_mdp(7, 5, 0.9, 2);
  InitConfig init;
  init.hidden = 6;
  init.policy_output_gain = 3.0;
  ActorCritic ac(mdp, init, 11);
  const auto table = policy_log_table(ac.policy());
  for (StateIndex s = 0; s < 7; ++s) {
    double total = 0.0;
    for (ActionIndex a = 0; a < 5; ++a) total += std::exp(table[s * 5 + a]);
    CHECK(std::abs(total - 1.0) <= 1e-10);
  }
  const auto pi = project_to_tabular(ac.policy(), mdp);
  CHECK_NOTHROW(pi.validate(1e-10));
}

TEST_CASE("snapshots are immutable and restorable") {
  const auto mdp = build_four_rooms(0.8);
  ActorCritic ac(mdp, InitConfig{}, 5);
  const Snapshot snap = ac.snapshot();
  const auto before = policy_log_table(snap.policy());
  const auto params_before = ac.policy_params();
  for (double& p : ac.policy_params()) p += 0.3;
  CHECK(policy_log_table(snap.policy()) == before);
  CHECK(policy_log_table(ac.policy()) != before);
  ac.restore(snap);
  CHECK(ac.policy_params() == params_before);
  const Snapshot copy = snap;
  CHECK(copy.same_storage(snap));
  CHECK_FALSE(ac.snapshot().same_storage(snap));
}

TEST_CASE("clipped surrogate values") {
  // One state, two actions, linear net with zero weights: pi = (0.5, 0.5).
  auto features = std::make_shared<const FeatureMap>(FeatureMap::one_hot(1));
  const NetworkShape shape{1, 0, 2};
  std::vector<double> params(shape.num_params(), 0.0);
  const NetworkView net{shape, params, features.get()};
  const std::vector<StateIndex> s{0};
  const std::vector<ActionIndex> a{0};
  const std::vector<double> adv{1.0};
  // old prob chosen so the ratio is 1.5.
  const std::vector<double> old{std::log(0.5 / 1.5)};
  const auto res = ppo_policy_loss(net, s, a, old, adv, 0.2, 0.0);
  CHECK(res.surrogate == doctest::Approx(1.2));
  CHECK(res.clip_fraction == 1.0);
  // Clipped branch active: no gradient from the surrogate.
  for (double g : res.gradient) CHECK(g == 0.0);
}

TEST_CASE("ratio one: clip inactive and gradient equals the vanilla policy gradient") {
  const auto mdp = build_random_mdp(5, 3, 0.9, 4);
  InitConfig init;
  init.hidden = 4;
  init.policy_output_gain = 1.0;
  ActorCritic ac(mdp, init, 9);
  std::mt19937_64 rng(3);
  std::vector<StateIndex> s(20);
  std::vector<ActionIndex> a(20);
  std::vector<double> adv(20);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t t = 0; t < 20; ++t) {
    s[t] = rng() % 5;
    a[t] = rng() % 3;
    adv[t] = n(rng);
  }
  const auto old = policy_logprobs(ac.policy(), s, a);
  const auto res = ppo_policy_loss(ac.policy(), s, a, old, adv, 0.2, 0.0);
  CHECK(res.clip_fraction == 0.0);
  // Vanilla surrogate -mean(A log pi) has the same gradient at ratio 1.
  auto vanilla = [&](std::span<const double> p) {
    const auto lp = policy_logprobs(NetworkView{ac.policy_shape(), p, ac.features().get()}, s, a);
    double total = 0.0;
    for (std::size_t t = 0; t < 20; ++t) total -= adv[t] * lp[t];
    return total / 20.0;
  };
  const auto fd = verify::finite_difference(vanilla, ac.policy_params());
  CHECK(verify::relative_error(res.gradient, fd) <= 1e-6);
}

TEST_CASE("analytic gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto mdp = build_random_mdp(6, 4, 0.9, seed);
    InitConfig init;
    init.hidden = seed % 2 ? 5 : 0;
    init.policy_output_gain = 1.0;
    ActorCritic ac(mdp, init, seed);
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<StateIndex> s(16);
    std::vector<ActionIndex> a(16);
    std::vector<double> adv(16), y(16), zero(16, 0.0);
    for (std::size_t t = 0; t < 16; ++t) {
      s[t] = rng() % 6;
      a[t] = rng() % 4;
      adv[t] = n(rng);
      y[t] = 2.0 * n(rng);
    }
    auto old = policy_logprobs(ac.policy(), s, a);
    for (double& x : old) x += 0.2 * n(rng);
    const auto& shape = ac.policy_shape();
    const auto* feats = ac.features().get();
    auto surr = [&](std::span<const double> p) {
      return ppo_policy_loss(NetworkView{shape, p, feats}, s, a, old, adv, 0.2, 0.01).loss;
    };
    auto ent = [&](std::span<const double> p) { return -mean_entropy(NetworkView{shape, p, feats}, s); };
    auto val = [&](std::span<const double> p) {
      return value_loss(NetworkView{ac.value_shape(), p, feats}, s, y).loss;
    };
    const auto g_surr = ppo_policy_loss(ac.policy(), s, a, old, adv, 0.2, 0.01).gradient;
    const auto g_ent = ppo_policy_loss(ac.policy(), s, a, old, zero, 0.2, 1.0).gradient;
    const auto g_val = value_loss(ac.value(), s, y).gradient;
    CHECK(verify::relative_error(g_surr, verify::finite_difference(surr, ac.policy_params())) <= 1e-4);
    CHECK(verify::relative_error(g_ent, verify::finite_difference(ent, ac.policy_params())) <= 1e-4);
    CHECK(verify::relative_error(g_val, verify::finite_difference(val, ac.value_params())) <= 1e-4);
  }
}

TEST_CASE("value loss") {
  auto features = std::make_shared<const FeatureMap>(FeatureMap::one_hot(2));
  const NetworkShape shape{2, 0, 1};
  std::vector<double> params(shape.num_params(), 0.0);
  const NetworkView net{shape, params, features.get()};
  const std::vector<StateIndex> s{0};
  const auto res = value_loss(net, s, std::vector<double>{2.0});
  CHECK(res.loss == 2.0);
  const auto exact = value_loss(net, s, std::vector<double>{0.0});
  CHECK(exact.loss == 0.0);
  for (double g : exact.gradient) CHECK(g == 0.0);
}

TEST_CASE("entropy is nonnegative") {
  const auto mdp = build_random_mdp(8, 5, 0.9, 3);
  InitConfig init;
  init.policy_output_gain = 5.0;
  ActorCritic ac(mdp, init, 2);
  const auto states = all_states(8);
  const double h = mean_entropy(ac.policy(), states);
  CHECK(h >= 0.0);
  CHECK(h <= std::log(5.0) + 1e-12);
}

TEST_CASE("global norm clipping and Adam steps") {
  std::vector<double> g{6.0, 8.0};  // norm 10
  CHECK(clip_by_global_norm(g, 1.0) == doctest::Approx(10.0));
  CHECK(std::hypot(g[0], g[1]) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> small{0.3, 0.4};
  clip_by_global_norm(small, 1.0);
  CHECK(small == std::vector<double>{0.3, 0.4});

  std::vector<double> params{1.0, -2.0, 0.5};
  const auto original = params;
  AdamOptimizer opt(3);
  opt.step(params, std::vector<double>{0.0, 0.0, 0.0}, 0.1, 1.0);
  CHECK(params == original);

  AdamOptimizer a(3), b(3);
  std::vector<double> pa = original, pb = original;
  const std::vector<double> grad{0.5, -1.0, 3.0};
  a.step(pa, grad, 0.01, 1.0);
  b.step(pb, grad, 0.01, 1.0);
  CHECK(pa == pb);
  CHECK(a == b);
  CHECK(a.steps_taken() == 1);
  // First Adam step moves each coordinate by about lr against its gradient sign.
  CHECK(pa[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
  CHECK(pa[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-4));
}

TEST_CASE("linear schedule") {
  CHECK(linear_schedule(3e-4, 1e-5, 0.0) == 3e-4);
  CHECK(linear_schedule(3e-4, 1e-5, 1.0) == doctest::Approx(1e-5));
  CHECK(linear_schedule(1.0, 0.0, 0.25) == doctest::Approx(0.75));
}

TEST_CASE("projection matches a Monte-Carlo estimate of the same network") {
  // Small chain with a terminal exit so episodes end.
  TabularMdp mdp(4, 2, 0.9, 0);
  for (StateIndex s = 0; s < 3; ++s) {
    mdp.transition(s, 0, s + 1) = 0.7;
    mdp.transition(s, 0, 0) += 0.3;
    mdp.transition(s, 1, s) = 0.5;
    mdp.transition(s, 1, 0) += 0.5;
    mdp.reward(s, 0) = 0.1;
    mdp.reward(s, 1) = 0.3 * static_cast<double>(s);
  }
  mdp.set_terminal(3);
  mdp.reward(2, 0) = 0.7;
  InitConfig init;
  init.hidden = 4;
  init.policy_output_gain = 1.0;
  ActorCritic ac(mdp, init, 21);
  const auto pi = project_to_tabular(ac.policy(), mdp);
  const double exact = evaluate_policy_exact(mdp, pi).v[0];

  std::mt19937_64 rng(77);
  const std::size_t episodes = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    StateIndex s = 0;
    double ret = 0.0, discount = 1.0;
    while (!mdp.is_terminal(s) && discount > 1e-12) {
      const ActionIndex a = sample_categorical(pi.row(s), rng);
      ret += discount * mdp.reward(s, a);
      discount *= mdp.gamma();
      s = sample_categorical(mdp.transition_row(s, a), rng);
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  const double mean = sum / episodes;
  const double se = std::sqrt((sum_sq / episodes - mean * mean) / episodes);
  MESSAGE("exact " << exact << " MC " << mean << " se " << se);
  CHECK(std::abs(mean - exact) <= 2.0 * se);
}

TEST_CASE("checkpoint round trip") {
  const auto mdp = build_four_rooms(0.8);
  InitConfig init;
  init.hidden = 8;
  ActorCritic ac(mdp, init, 4);
  const auto doc = nlohmann::json::parse(to_json(ac).dump());
  const ActorCritic back = actor_critic_from_json(doc, mdp);
  CHECK(back.policy_params() == ac.policy_params());
  CHECK(back.value_params() == ac.value_params());
  CHECK(back.policy_shape() == ac.policy_shape());
  auto bad = doc;
  bad["format"] = "something-else";
  CHECK_THROWS(actor_critic_from_json(bad, mdp));
}
