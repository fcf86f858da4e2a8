#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "svlab/diagnostics.hpp"
#include "svlab/oracle.hpp"
#include "svlab/verify.hpp"

using namespace svlab;

namespace {

std::vector<double> random_distribution(std::size_t n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> d(n);
  double total = 0.0;
  for (double& x : d) total += (x = e(rng));
  for (double& x : d) x /= total;
  return d;
}

}  // namespace

TEST_CASE("weighted value error") {
  std::mt19937_64 rng(1);
  const auto mu = random_distribution(12, rng);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::vector<double> q(12), shifted(12);
  for (double& x : q) x = u(rng);
  CHECK(weighted_value_error(mu, q, q) == 0.0);
  for (std::size_t i = 0; i < 12; ++i) shifted[i] = q[i] + 0.75;
  CHECK(weighted_value_error(mu, shifted, q) == doctest::Approx(0.75).epsilon(1e-14));

  std::vector<double> other(12);
  for (double& x : other) x = u(rng);
  double direct = 0.0;
  for (std::size_t i = 0; i < 12; ++i) direct += mu[i] * std::abs(q[i] - other[i]);
  CHECK(std::abs(weighted_value_error(mu, other, q) - direct) <= 1e-12);

  // 1-homogeneous in the error field.
  std::vector<double> scaled(12);
  for (std::size_t i = 0; i < 12; ++i) scaled[i] = q[i] + 3.0 * (other[i] - q[i]);
  CHECK(weighted_value_error(mu, scaled, q) ==
        doctest::Approx(3.0 * weighted_value_error(mu, other, q)).epsilon(1e-12));

  CHECK_THROWS(weighted_value_error(mu, std::vector<double>(3), q));
}

TEST_CASE("clamp_q") {
  const auto c = clamp_q(std::vector<double>{-1.0, 5.0, 20.0}, 0.9);
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 5.0);
  CHECK(c[2] == doctest::Approx(10.0).epsilon(1e-15));
}

TEST_CASE("estimated expected advantage") {
  const auto mdp = build_random_mdp(8, 3, 0.9, 5);
  std::mt19937_64 rng(2);
  const auto pi = random_policy(8, 3, rng);
  const auto pi2 = random_policy(8, 3, rng);
  const auto q = evaluate_policy_exact(mdp, pi).q;
  CHECK(std::abs(estimated_expected_advantage(mdp, pi, pi, q)) <= 1e-12);
  const double gap =
      evaluate_policy_exact(mdp, pi2).v[mdp.initial_state()] - evaluate_policy_exact(mdp, pi).v[mdp.initial_state()];
  CHECK(estimated_expected_advantage(mdp, pi, pi2, q) ==
        doctest::Approx((1.0 - 0.9) * gap).epsilon(1e-10));
  auto shifted = q;
  for (double& x : shifted) x += 0.4;
  CHECK(estimated_expected_advantage(mdp, pi, pi2, shifted) ==
        doctest::Approx(estimated_expected_advantage(mdp, pi, pi2, q) + 0.4).epsilon(1e-12));
}

TEST_CASE("improvement sandwich") {
  const auto mdp = build_random_mdp(10, 4, 0.99, 7);
  std::mt19937_64 rng(3);
  const auto pi = random_policy(10, 4, rng);
  const auto pi2 = random_policy(10, 4, rng);
  const auto q = evaluate_policy_exact(mdp, pi).q;
  const auto exact = improvement_sandwich_report(mdp, pi, pi2, q);
  CHECK(exact.satisfied);
  CHECK(exact.lower == doctest::Approx(exact.actual).epsilon(1e-9));
  CHECK(exact.upper == doctest::Approx(exact.actual).epsilon(1e-9));

  // Sign-flip q on one state: still satisfied. Clamping puts the flipped
  // entries at 0 <= Q, so the upper side stays tight and the lower side opens.
  auto adversarial = q;
  for (ActionIndex a = 0; a < 4; ++a) adversarial[3 * 4 + a] = -adversarial[3 * 4 + a];
  const auto r = improvement_sandwich_report(mdp, pi, pi2, adversarial);
  CHECK(r.satisfied);
  CHECK(r.slack_lower > 0.0);
  CHECK(r.slack_upper >= -1e-8);

  const auto j = to_json(r);
  CHECK(j.at("satisfied").get<bool>());
}

TEST_CASE("error under distribution shift") {
  std::mt19937_64 rng(4);
  const auto mu = random_distribution(6, rng);
  std::vector<double> q_true{1.0, 2.0, 3.0, 0.5, 4.0, 2.5};
  std::vector<double> q_est{1.5, 1.0, 3.0, 0.0, 6.0, 2.0};
  const auto same = shift_error_report(mu, mu, q_est, q_true, 0.9);
  CHECK(same.satisfied);
  CHECK(same.actual == doctest::Approx(same.upper));

  const std::vector<double> a{0.5, 0.5, 0.0, 0.0, 0.0, 0.0};
  const std::vector<double> b{0.0, 0.0, 0.0, 0.5, 0.5, 0.0};
  const auto disjoint = shift_error_report(a, b, q_est, q_true, 0.9);
  CHECK(disjoint.satisfied);
  CHECK(disjoint.upper - weighted_value_error(a, clamp_q(q_est, 0.9), q_true) ==
        doctest::Approx(2.0 / 0.1));
  CHECK(std::isinf(disjoint.lower));
}

TEST_CASE("npa check") {
  const auto mdp = build_random_mdp(9, 3, 0.9, 8);
  std::mt19937_64 rng(5);
  const auto beta = random_policy(9, 3, rng);
  const auto same = npa_check(mdp, beta, beta, 0.1);
  CHECK(same.per_state_tv_ok);
  CHECK(same.visitation_tv == doctest::Approx(0.0).epsilon(1e-14));

  const auto near = verify::perturb_policy(beta, 0.1 * (1.0 - 0.9) * 0.999, rng);
  const auto ok = npa_check(mdp, beta, near, 0.1);
  CHECK(ok.per_state_tv_ok);
  CHECK(ok.bound_holds);
  CHECK(ok.visitation_tv <= 0.1 + 1e-8);

  const auto far = verify::perturb_policy(beta, 0.3, rng);
  const auto bad = npa_check(mdp, beta, far, 0.1);
  CHECK_FALSE(bad.per_state_tv_ok);
  CHECK(bad.visitation_tv > 0.0);
}

TEST_CASE("update lower bound") {
  const auto mdp = build_random_mdp(7, 3, 0.9, 9);
  std::mt19937_64 rng(6);
  const auto pi = random_policy(7, 3, rng);
  const auto q = evaluate_policy_exact(mdp, pi).q;
  const auto r = update_bound_report(mdp, pi, pi, pi, q, 0.0, 0.0);
  CHECK(r.premise_ok);
  CHECK(r.bound.satisfied);
  CHECK(r.bound.lower == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(r.bound.actual == doctest::Approx(0.0).epsilon(1e-10));

  // Training error above the stated bound is a premise failure, not a bound failure.
  auto noisy = q;
  for (double& x : noisy) x += 0.5;
  const auto p = update_bound_report(mdp, pi, pi, pi, noisy, 0.1, 0.0);
  CHECK_FALSE(p.premise_ok);
  CHECK_FALSE(p.premise_failure.empty());
}

TEST_CASE("CPI bound budget at gamma 0.99") {
  CHECK(cpi_lower_bound(0.99, 0.0, 1.0) == 0.0);
  const double budget = cpi_max_nonvacuous_tv(0.99, 1.0);
  MESSAGE("largest non-vacuous per-state TV: " << budget);
  CHECK(budget > 0.0);
  CHECK(budget < 0.0025);
  // Closed form: positive iff a < (1-gamma)^2 adv / (2 gamma).
  CHECK(budget == doctest::Approx(0.01 * 0.01 / (2.0 * 0.99)).epsilon(1e-3));
}

TEST_CASE("round metrics") {
  const auto mdp = build_random_mdp(6, 3, 0.9, 10);
  std::mt19937_64 rng(7);
  const auto pi = random_policy(6, 3, rng);
  const auto ev = evaluate_policy_exact(mdp, pi);
  const auto mu = visitation_distribution(mdp, pi).d;
  const std::vector<StateIndex> visited{0, 1, 2, 3, 4, 5};
  const auto m = round_metrics(mdp, pi, pi, pi, pi, mu, mu, ev.v, visited);
  CHECK(m.value_error_sq == doctest::Approx(0.0).epsilon(1e-20));
  CHECK(m.value_error_abs == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(m.tv_mu == 0.0);
  CHECK(m.kl_target == 0.0);
  CHECK(m.kl_behavior == 0.0);
  CHECK(m.v_target == doctest::Approx(ev.v[mdp.initial_state()]));
  CHECK(mean_state_kl(pi, pi, visited) == 0.0);
}

TEST_CASE("empirical visitation approaches the exact one") {
  const auto mdp = build_random_mdp(5, 2, 0.8, 11);
  std::mt19937_64 rng(8);
  const auto pi = random_policy(5, 2, rng);
  const auto batch = rollout(mdp, pi, 50, 20000, 3);
  const auto emp = empirical_visitation(batch, 5, 2, 0.8);
  double total = 0.0;
  for (double x : emp) total += x;
  CHECK(std::abs(total - 1.0) <= 1e-9);
  // No terminals: one discounted episode per env, truncated where gamma^t is negligible.
  const auto exact = visitation_distribution(mdp, pi).d;
  CHECK(tv_distance(emp, exact) < 0.05);
}
