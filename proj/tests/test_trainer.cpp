#include <doctest.h>

#include <cmath>
#include <limits>

#include "svlab/trainer.hpp"
#include "svlab/verify.hpp"

using namespace svlab;

namespace {

PpoConfig small_ppo() {
  PpoConfig p;
  p.num_envs = 4;
  p.horizon = 64;
  p.minibatch_size = 64;
  p.epochs = 2;
  p.lr_initial = 3e-3;
  return p;
}

InitConfig small_init() {
  InitConfig i;
  i.hidden = 8;
  return i;
}

std::size_t updates(const std::vector<RoundRecord>& records) {
  std::size_t n = 0;
  for (const auto& r : records) n += r.target_updated;
  return n;
}

}  // namespace

TEST_CASE("CSV schema covers every record field") {
  const auto& cols = round_record_columns();
  CHECK(cols.size() == 20);
  CHECK(cols.front() == "round");
  RoundRecord r;
  const std::string row = round_record_csv_row(r);
  CHECK(static_cast<std::size_t>(std::count(row.begin(), row.end(), ',')) == cols.size() - 1);
}

TEST_CASE("PPO mode updates the target every round") {
  const auto mdp = build_four_rooms(0.8, 0.99);
  ActorCritic ac(mdp, small_init(), 1);
  const auto res = train(mdp, ac, GateConfig::always_update(), small_ppo(), 6, 3);
  REQUIRE(res.records.size() == 6);
  CHECK(res.target_updates == 6);
  for (const auto& r : res.records) {
    CHECK(r.target_updated);
    CHECK(r.k_pi == 0);
    // Target equals behavior at collection time, so every ratio is exactly one.
    CHECK(r.max_rho_deviation == 0.0);
  }
  CHECK(res.target.params() == ac.policy_params());
}

TEST_CASE("static interval nine over ninety rounds gives ten updates") {
  const auto mdp = build_random_mdp(6, 3, 0.9, 2);
  PpoConfig p = small_ppo();
  p.num_envs = 2;
  p.horizon = 16;
  p.minibatch_size = 32;
  p.epochs = 1;
  p.exact_metrics = false;
  ActorCritic ac(mdp, small_init(), 4);
  const auto res = train(mdp, ac, GateConfig::fixed_interval(9), p, 90, 5);
  CHECK(res.target_updates == 10);
  std::size_t last = 0;
  bool first = true;
  for (const auto& r : res.records) {
    if (!r.target_updated) continue;
    CHECK(r.round - (first ? std::size_t{0} : last) == (first ? 8 : 9));
    last = r.round;
    first = false;
  }
}

TEST_CASE("runs are deterministic and thread-count independent") {
  const auto mdp = build_four_rooms(0.8, 0.99);
  GateConfig gate;
  gate.delta_v = 0.2;
  gate.k_min = 2;
  gate.k_max = 5;
  PpoConfig serial = small_ppo();
  serial.parallel_rollout = false;
  PpoConfig parallel = small_ppo();
  std::vector<std::string> rows[3];
  std::vector<double> params[3];
  const PpoConfig* cfgs[3] = {&serial, &serial, &parallel};
  for (int k = 0; k < 3; ++k) {
    ActorCritic ac(mdp, small_init(), 7);
    const auto res = train(mdp, ac, gate, *cfgs[k], 8, 11);
    for (const auto& r : res.records) rows[k].push_back(round_record_csv_row(r));
    params[k] = ac.policy_params();
  }
  CHECK(rows[0] == rows[1]);
  CHECK(params[0] == params[1]);
  CHECK(rows[0] == rows[2]);
  CHECK(params[0] == params[2]);
}

TEST_CASE("target stays frozen between updates") {
  const auto mdp = build_four_rooms(0.8, 0.99);
  GateConfig gate;
  gate.delta_v = 0.05;
  gate.k_min = 3;
  gate.k_max = 4;
  ActorCritic ac(mdp, small_init(), 2);
  Snapshot previous = ac.snapshot();
  bool have_previous = false;
  std::size_t holds = 0;
  const auto observer = [&](const RoundContext& ctx) {
    if (have_previous && !ctx.record.target_updated) {
      CHECK(ctx.target.same_storage(previous));
      ++holds;
    }
    if (ctx.record.target_updated) CHECK(ctx.target.params() == ctx.actor_critic.policy_params());
    CHECK(ctx.record.k_pi <= gate.k_max);
    previous = ctx.target;
    have_previous = true;
  };
  const auto res = train(mdp, ac, gate, small_ppo(), 12, 1, observer);
  CHECK(holds > 0);
  for (const auto& r : res.records) CHECK(r.k_pi <= gate.k_max);
}

TEST_CASE("dynamic gate holds the target early") {
  const auto mdp = build_four_rooms(0.8, 0.99);
  GateConfig gate;
  gate.delta_v = 0.2;
  gate.k_min = 4;
  gate.k_max = 33;
  ActorCritic ac(mdp, small_init(), 3);
  const auto res = train(mdp, ac, gate, small_ppo(), 20, 2);
  CHECK(res.target_updates < 20);
  std::size_t first_update = 20;
  for (const auto& r : res.records) {
    if (r.target_updated) {
      first_update = r.round;
      break;
    }
  }
  CHECK(first_update >= gate.k_min - 1);
  for (const auto& r : res.records) {
    CHECK(std::isfinite(r.v_target));
    CHECK(r.tv_mu >= 0.0);
    CHECK(r.tv_mu <= 1.0);
  }
}

TEST_CASE("non-finite critic aborts with the round") {
  const auto mdp = build_four_rooms(0.8, 0.99);
  ActorCritic ac(mdp, small_init(), 3);
  ac.value_params()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(mdp, ac, GateConfig::always_update(), small_ppo(), 3, 1);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.round() == 0);
  }
}

TEST_CASE("config validation") {
  PpoConfig p;
  CHECK_NOTHROW(p.validate());
  p.minibatch_size = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = PpoConfig{};
  p.lambda = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
