#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "svlab/estimators.hpp"
#include "svlab/verify.hpp"

using namespace svlab;

namespace {

struct Batch {
  std::vector<double> rewards;
  std::vector<char> terminals;
  std::vector<double> values;
  std::vector<double> target;
  std::vector<double> behavior;

  Segment segment() const { return {rewards, terminals, values, target, behavior}; }
};

}  // namespace

TEST_CASE("importance weights") {
  const std::vector<double> target{std::log(0.6), std::log(0.1), std::log(0.5)};
  const std::vector<double> behavior{std::log(0.2), std::log(0.5), std::log(0.5)};
  const auto w = importance_weights(target, behavior, 0.95, 2.0);
  CHECK(w.rho[0] == 2.0);  // ratio 3 clipped at rho_bar
  CHECK(w.c[0] == 0.95);
  CHECK(w.rho[1] == doctest::Approx(0.2));
  CHECK(w.c[1] == doctest::Approx(0.2));
  CHECK(w.rho[2] == 1.0);
  CHECK(w.c[2] == 0.95);
  // Target probability zero gives zero weights.
  const std::vector<double> zero{-std::numeric_limits<double>::infinity()};
  const std::vector<double> half{std::log(0.5)};
  const auto z = importance_weights(zero, half, 0.9, 5.0);
  CHECK(z.rho[0] == 0.0);
  CHECK(z.c[0] == 0.0);
}

TEST_CASE("raising rho_bar never lowers rho") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> t(200), b(200);
  for (auto& x : t) x = -std::abs(n(rng));
  for (auto& x : b) x = -std::abs(n(rng));
  std::vector<double> prev(200, 0.0);
  for (double rho_bar : {0.5, 1.0, 2.0, 5.0, 100.0}) {
    const auto w = importance_weights(t, b, 0.95, rho_bar);
    for (std::size_t i = 0; i < 200; ++i) {
      CHECK(w.rho[i] >= prev[i]);
      CHECK(w.rho[i] <= rho_bar);
      CHECK(w.c[i] <= 0.95);
    }
    prev = w.rho;
  }
}

TEST_CASE("single on-policy step") {
  Batch b{{1.0}, {0}, {0.0, 0.0}, {std::log(0.5)}, {std::log(0.5)}};
  CHECK(vtrace_targets(b.segment(), 0.9, 0.95, 1.0)[0] == 1.0);
  CHECK(retrace_gae(b.segment(), 0.9, 0.95, 1.0)[0] == 1.0);
  b.values = {0.3, 0.7};
  CHECK(retrace_gae(b.segment(), 0.9, 0.95, 1.0)[0] == doctest::Approx(1.0 + 0.9 * 0.7 - 0.3));
}

TEST_CASE("on-policy estimators reduce to TD(lambda) and GAE") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 1 + trial;
    Batch b;
    for (std::size_t t = 0; t < T; ++t) {
      b.rewards.push_back(u(rng));
      b.terminals.push_back(u(rng) < 0.1);
      b.target.push_back(std::log(0.05 + u(rng)));
    }
    b.behavior = b.target;
    for (std::size_t t = 0; t <= T; ++t) b.values.push_back(5.0 * u(rng));
    const double gamma = 0.99, lambda = u(rng);
    const auto y = vtrace_targets(b.segment(), gamma, lambda, 1.0 + 4.0 * u(rng));
    const auto a = retrace_gae(b.segment(), gamma, lambda, 1.0);
    const auto y_ref = verify::td_lambda_forward(b.rewards, b.terminals, b.values, gamma, lambda);
    const auto a_ref = verify::gae_direct(b.rewards, b.terminals, b.values, gamma, lambda);
    for (std::size_t t = 0; t < T; ++t) {
      CHECK(std::abs(y[t] - y_ref[t]) <= 1e-10);
      CHECK(std::abs(a[t] - a_ref[t]) <= 1e-10);
    }
  }
}

TEST_CASE("off-policy three-step batch matches the hand-unrolled recursion") {
  // Two-state MDP data: s = (0, 1, 0), next = (1, 0, 1), bootstrap v(1).
  const double gamma = 0.9, lambda = 0.8;
  const double v0 = 0.4, v1 = 1.3;
  Batch b;
  b.rewards = {0.2, 1.0, 0.5};
  b.terminals = {0, 0, 0};
  b.values = {v0, v1, v0, v1};
  b.target = {std::log(0.9), std::log(0.2), std::log(0.6)};
  b.behavior = {std::log(0.3), std::log(0.4), std::log(0.5)};
  const double inf = std::numeric_limits<double>::infinity();
  const double r0 = 3.0, r1 = 0.5, r2 = 1.2;  // ratios, unclipped (rho_bar = inf)
  const double c0 = std::min(lambda, r0), c1 = std::min(lambda, r1), c2 = std::min(lambda, r2);
  const double d0 = 0.2 + gamma * v1 - v0;
  const double d1 = 1.0 + gamma * v0 - v1;
  const double d2 = 0.5 + gamma * v1 - v0;
  const double y2 = v0 + r2 * d2;
  const double y1 = v1 + r1 * d1 + gamma * c1 * (y2 - v0);
  const double y0 = v0 + r0 * d0 + gamma * c0 * (y1 - v1);
  const auto y = vtrace_targets(b.segment(), gamma, lambda, inf);
  CHECK(y[0] == doctest::Approx(y0).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(y1).epsilon(1e-14));
  CHECK(y[2] == doctest::Approx(y2).epsilon(1e-14));
  const double a2 = d2;
  const double a1 = d1 + gamma * c1 * a2;
  const double a0 = d0 + gamma * c0 * a1;
  const auto a = retrace_gae(b.segment(), gamma, lambda, inf);
  CHECK(a[0] == doctest::Approx(a0).epsilon(1e-14));
  CHECK(a[1] == doctest::Approx(a1).epsilon(1e-14));
  CHECK(a[2] == doctest::Approx(a2).epsilon(1e-14));
  (void)c2;
}

TEST_CASE("zero trace weights truncate the recursion") {
  Batch b;
  b.rewards = {0.1, 0.7, 0.3, 0.9};
  b.terminals = {0, 0, 0, 0};
  b.values = {0.5, 0.2, 0.8, 0.1, 0.6};
  const double ninf = -std::numeric_limits<double>::infinity();
  b.target = {ninf, ninf, ninf, ninf};  // target never takes these actions: c = 0
  b.behavior = {std::log(0.5), std::log(0.5), std::log(0.5), std::log(0.5)};
  const auto a = retrace_gae(b.segment(), 0.9, 0.95, 1.0);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(a[t] == doctest::Approx(b.rewards[t] + 0.9 * b.values[t + 1] - b.values[t]));
  }
}

TEST_CASE("terminals mask everything after them") {
  Batch b;
  b.rewards = {0.1, 0.2, 0.3};
  b.terminals = {0, 1, 0};
  b.values = {1.0, 2.0, 3.0, 4.0};
  b.target = {0.0, 0.0, 0.0};
  b.behavior = b.target;
  const auto y = vtrace_targets(b.segment(), 0.9, 0.9, 1.0);
  const auto a = retrace_gae(b.segment(), 0.9, 0.9, 1.0);
  CHECK(y[1] == doctest::Approx(0.2));  // no bootstrap past the terminal
  CHECK(a[1] == doctest::Approx(0.2 - 2.0));
  // Changing anything after the terminal leaves steps 0..1 untouched.
  Batch c = b;
  c.rewards[2] = 0.9;
  c.values[3] = -7.0;
  c.values[2] = 100.0;
  const auto y2 = vtrace_targets(c.segment(), 0.9, 0.9, 1.0);
  CHECK(y2[0] == y[0]);
  CHECK(y2[1] == y[1]);
}

TEST_CASE("estimator input errors") {
  Batch b{{1.0, 0.0}, {0, 0}, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
  CHECK_THROWS_AS(vtrace_targets(b.segment(), 0.9, 0.9, 1.0), std::invalid_argument);  // values too short
  b.values = {0.0, 0.0, std::nan("")};
  CHECK_THROWS_AS(retrace_gae(b.segment(), 0.9, 0.9, 1.0), std::invalid_argument);
  b.values = {0.0, 0.0, 0.0};
  b.target = {0.0};
  CHECK_THROWS_AS(vtrace_targets(b.segment(), 0.9, 0.9, 1.0), std::invalid_argument);
}

TEST_CASE("advantage scaling") {
  CHECK(scale_advantages(std::vector<double>{3.0, 3.0, 3.0}) == std::vector<double>{3.0, 3.0, 3.0});
  CHECK(scale_advantages(std::vector<double>{-2.0, 2.0}) == std::vector<double>{-1.0, 1.0});
  CHECK_THROWS_AS(scale_advantages(std::vector<double>{}), std::invalid_argument);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.7, 2.5);
  std::vector<double> x(500);
  for (auto& v : x) v = n(rng);
  const auto s = scale_advantages(x);
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / 500.0;
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  CHECK(std::abs(std::sqrt(var / 500.0) - 1.0) <= 1e-10);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::signbit(s[i]) == std::signbit(x[i]));
  CHECK(mean != doctest::Approx(0.0));  // not centered
}

TEST_CASE("estimate_batch splits per environment and reports rho deviation") {
  TransitionBatch batch;
  batch.num_envs = 2;
  batch.horizon = 2;
  batch.states = {0, 1, 0, 1};
  batch.actions = {0, 0, 0, 0};
  batch.rewards = {0.0, 1.0, 0.0, 1.0};
  batch.next_states = {1, 0, 1, 0};
  batch.terminals = {0, 0, 0, 0};
  batch.behavior_logprobs = {0.0, 0.0, 0.0, 0.0};
  batch.episode_steps = {0, 1, 0, 1};
  const std::vector<double> values{0.0, 0.0, 0.0, 0.0};
  const std::vector<double> next_values{0.0, 5.0, 0.0, 5.0};
  const auto out = estimate_batch(batch, batch.behavior_logprobs, values, next_values, 0.5, 1.0, 1.0);
  // Each env: y_1 = 1 + 0.5 * 5 = 3.5, y_0 = 0.5 * 3.5 = 1.75; no leakage across envs.
  CHECK(out.targets == std::vector<double>{1.75, 3.5, 1.75, 3.5});
  CHECK(out.max_rho_deviation == 0.0);
  std::vector<double> shifted(4, std::log(2.0));
  const auto off = estimate_batch(batch, shifted, values, next_values, 0.5, 1.0, 5.0);
  CHECK(off.max_rho_deviation == doctest::Approx(1.0));
}
