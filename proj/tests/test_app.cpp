#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "svlab/app.hpp"

using namespace svlab;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(SVLAB_SOURCE_DIR) / "configs";

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("svlab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig quick(const std::string& preset, std::size_t rounds) {
  auto cfg = load_config(kConfigs / (preset + ".cfg"));
  cfg.total_rounds = rounds;
  cfg.ppo.num_envs = 4;
  cfg.ppo.horizon = 128;
  cfg.ppo.minibatch_size = 128;
  cfg.init.hidden = 8;
  return cfg;
}

}  // namespace

TEST_CASE("baseline preset: every round updates the target") {
  const auto out = scratch_dir("baseline");
  const auto cfg = quick("ppo_baseline", 10);
  app::TrainOptions opts;
  opts.seeds = {0};
  opts.out_dir = out;
  opts.deterministic = true;
  const auto manifest = app::cmd_train(cfg, opts);
  const auto table = app::read_csv(out / "seed_0.csv");
  REQUIRE(table.rows.size() == 10);
  for (std::size_t r = 0; r < 10; ++r) CHECK(table.number(r, "target_updated") == 1.0);
  CHECK(manifest.at("config_hash") == config_hash(cfg));
  CHECK(manifest.at("artifact_version") == app::kArtifactVersion);
  CHECK(manifest.at("runs").at(0).at("status") == "ok");
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "seed_0_checkpoint.json"));
}

TEST_CASE("deterministic reruns are byte-identical") {
  auto cfg = quick("four_rooms_dynamic", 6);
  cfg.snapshot_every = 3;
  app::TrainOptions opts;
  opts.seeds = {1, 2};
  opts.deterministic = true;
  const auto a = scratch_dir("det_a");
  const auto b = scratch_dir("det_b");
  opts.out_dir = a;
  app::cmd_train(cfg, opts);
  opts.out_dir = b;
  app::cmd_train(cfg, opts);
  for (const char* f : {"seed_1.csv", "seed_2.csv", "seed_1_grid.csv", "seed_2_checkpoint.json"}) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
    CHECK_FALSE(slurp(a / f).empty());
  }
  // Parallel seeds must not change the per-seed output.
  const auto c = scratch_dir("det_c");
  opts.out_dir = c;
  opts.deterministic = false;
  app::cmd_train(cfg, opts);
  CHECK(slurp(a / "seed_2.csv") == slurp(c / "seed_2.csv"));
}

TEST_CASE("static preset: ten updates in ninety rounds") {
  auto cfg = quick("atari_like_static", 90);
  cfg.ppo.num_envs = 2;
  cfg.ppo.horizon = 32;
  cfg.ppo.minibatch_size = 64;
  cfg.ppo.epochs = 1;
  cfg.ppo.exact_metrics = false;
  app::TrainOptions opts;
  opts.seeds = {0};
  opts.out_dir = scratch_dir("static");
  const auto manifest = app::cmd_train(cfg, opts);
  CHECK(manifest.at("runs").at(0).at("target_updates") == 10);
}

TEST_CASE("plot data joins runs on the round index") {
  const auto sv_dir = scratch_dir("plot_sv");
  const auto base_dir = scratch_dir("plot_base");
  app::TrainOptions opts;
  opts.seeds = {0};
  opts.deterministic = true;
  opts.out_dir = sv_dir;
  app::cmd_train(quick("four_rooms_dynamic", 5), opts);
  opts.out_dir = base_dir;
  app::cmd_train(quick("ppo_baseline", 5), opts);

  const auto out = scratch_dir("plot_out");
  const auto files = app::cmd_plotdata({sv_dir / "manifest.json"}, out);
  CHECK(fs::exists(out / "learning_curves.csv"));
  CHECK(fs::exists(out / "diff_threshold.csv"));
  CHECK(fs::exists(out / "learning_curves.svg"));
  const auto diff = app::read_csv(out / "diff_threshold.csv");
  REQUIRE(diff.rows.size() == 5);
  for (std::size_t r = 0; r < 5; ++r) CHECK(diff.number(r, "threshold") == 0.2);

  const auto out2 = scratch_dir("plot_pair");
  app::cmd_plotdata({sv_dir / "manifest.json", base_dir / "manifest.json"}, out2);
  const auto paired = app::read_csv(out2 / "paired_v_target.csv");
  CHECK(paired.rows.size() == 5);
  CHECK(paired.header.size() == 3);

  CHECK_THROWS(app::cmd_plotdata({out / "nope.json"}, out));
}

TEST_CASE("verify command reports") {
  bool ok = false;
  const auto report = app::cmd_verify("gate", 0, 0, ok);
  CHECK(ok);
  CHECK_THROWS_AS(app::cmd_verify("nope", 0, 0, ok), std::invalid_argument);
}
