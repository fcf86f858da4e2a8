// Command-line front end: train, verify, plotdata.

#include <cstdio>
#include <algorithm>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "svlab/app.hpp"

#ifdef SVLAB_HAVE_OPENMP
#include <omp.h>
#endif

int main(int argc, char** argv) {
  using namespace svlab;
  CLI::App cli{"Stable-value PPO lab: training runs, bound verification, plot data"};
  cli.require_subcommand(1);

  auto* train = cli.add_subcommand("train", "Train one run per seed from a config preset");
  std::string config_path;
  std::string seeds_text;
  std::string out_dir;
  bool deterministic = false;
  train->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seeds", seeds_text, "Seeds, e.g. 0,1,2 or 0-4 (default: config seed)");
  train->add_option("--out", out_dir, "Output directory (default: $SVLAB_OUT_DIR or ./runs/<name>)");
  train->add_flag("--deterministic", deterministic, "Single-threaded rollouts, seeds run in order");

  auto* verify = cli.add_subcommand("verify", "Run a randomized property suite");
  std::string suite = "all";
  std::size_t instances = 0;
  std::uint64_t seed = 0;
  std::string report_path;
  verify->add_option("--suite", suite, "Suite name or 'all'");
  verify->add_option("--instances", instances, "Instance count (0: suite default)");
  verify->add_option("--seed", seed, "Base seed");
  verify->add_option("--out", report_path, "Write the JSON report here instead of stdout");
  verify->add_flag("--deterministic", deterministic, "Run single-threaded");

  auto* plot = cli.add_subcommand("plotdata", "Emit plot CSV/SVG files from run manifests");
  std::vector<std::string> manifests;
  std::string plot_out;
  plot->add_option("--manifest", manifests, "Manifest path (repeatable)")->required();
  plot->add_option("--out", plot_out, "Output directory (default: <first manifest dir>/plots)");

  CLI11_PARSE(cli, argc, argv);

#ifdef SVLAB_HAVE_OPENMP
  if (deterministic) omp_set_num_threads(1);
#endif

  try {
    if (*train) {
      const ExperimentConfig cfg = load_config(config_path);
      app::TrainOptions opts;
      opts.config_path = config_path;
      opts.deterministic = deterministic;
      if (!seeds_text.empty()) opts.seeds = app::parse_seeds(seeds_text);
      opts.out_dir = out_dir.empty() ? app::default_out_dir() / cfg.name : std::filesystem::path(out_dir);
      const auto manifest = app::cmd_train(cfg, opts);
      bool aborted = false;
      for (const auto& run : manifest["runs"]) {
        std::printf("seed %llu: %s", static_cast<unsigned long long>(run["seed"].get<std::uint64_t>()),
                    run["status"].get<std::string>().c_str());
        if (run["status"] == "ok") {
          std::printf("  target updates %zu  V(s0)/V* %.4f", run["target_updates"].get<std::size_t>(),
                      run["final_value_ratio"].get<double>());
        } else {
          aborted = true;
          std::printf("  %s", run["error"].get<std::string>().c_str());
        }
        std::printf("\n");
      }
      std::printf("manifest: %s\n", (opts.out_dir / "manifest.json").string().c_str());
      return aborted ? 3 : 0;
    }
    if (*verify) {
      const auto& names = verify::suite_names();
      if (suite != "all" && std::find(names.begin(), names.end(), suite) == names.end()) {
        std::cerr << "unknown suite '" << suite << "'\n";
        return 2;
      }
      bool ok = false;
      const auto report = app::cmd_verify(suite, instances, seed, ok);
      if (report_path.empty()) {
        std::cout << report.dump(2) << '\n';
      } else {
        std::ofstream(report_path) << report.dump(2) << '\n';
        for (const auto& s : report["suites"]) {
          std::printf("%-12s %s  checks %zu  violations %zu  worst slack %s\n",
                      s["suite"].get<std::string>().c_str(), s["passed"].get<bool>() ? "PASS" : "FAIL",
                      s["checks"].get<std::size_t>(), s["violations"].get<std::size_t>(),
                      s["worst_slack"].dump().c_str());
        }
      }
      return ok ? 0 : 1;
    }
    if (*plot) {
      std::vector<std::filesystem::path> paths(manifests.begin(), manifests.end());
      const auto out = plot_out.empty() ? paths.front().parent_path() / "plots"
                                        : std::filesystem::path(plot_out);
      for (const auto& p : app::cmd_plotdata(paths, out)) std::printf("%s\n", p.string().c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
