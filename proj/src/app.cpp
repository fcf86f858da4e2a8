#include "svlab/app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "svlab/oracle.hpp"
#include "svlab/trainer.hpp"
#include "svlab/verify.hpp"

namespace svlab::app {

namespace fs = std::filesystem;

fs::path default_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return env && *env ? fs::path(env) : fs::path("runs");
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string part;
  auto number = [&](const std::string& s) -> std::uint64_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw std::invalid_argument("bad seed '" + s + "' in '" + text + "'");
    }
    return std::stoull(s);
  };
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      seeds.push_back(number(part));
      continue;
    }
    const auto lo = number(part.substr(0, dash));
    const auto hi = number(part.substr(dash + 1));
    if (hi < lo) throw std::invalid_argument("empty seed range '" + part + "'");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
  }
  if (seeds.empty()) throw std::invalid_argument("no seeds given");
  return seeds;
}

// ---- train ---------------------------------------------------------------------

namespace {

struct SeedOutcome {
  nlohmann::json entry;
};

/// Grid snapshot rows: value prediction, exact target value, moving-average
/// visitation per open cell.
class GridRecorder {
 public:
  GridRecorder(const TabularMdp& mdp, std::size_t every, std::ofstream* out)
      : mdp_(mdp), every_(every), out_(out), visits_(mdp.num_states(), 0.0) {}

  void operator()(const RoundContext& ctx) {
    const std::size_t ns = mdp_.num_states();
    std::vector<double> freq(ns, 0.0);
    for (StateIndex s : ctx.batch.states) freq[s] += 1.0;
    for (StateIndex s = 0; s < ns; ++s) {
      freq[s] /= static_cast<double>(ctx.batch.size());
      visits_[s] = first_ ? freq[s] : 0.9 * visits_[s] + 0.1 * freq[s];
    }
    first_ = false;
    if (ctx.record.round % every_ != 0) return;
    const auto target_v =
        evaluate_policy_exact(mdp_, project_to_tabular(ctx.target.policy(), mdp_)).v;
    const auto& cells = *mdp_.cells();
    for (StateIndex s = 0; s < ns; ++s) {
      *out_ << ctx.record.round << ',' << cells[s].row << ',' << cells[s].col << ','
            << ctx.values_before[s] << ',' << target_v[s] << ',' << visits_[s] << '\n';
    }
  }

 private:
  const TabularMdp& mdp_;
  std::size_t every_;
  std::ofstream* out_;
  std::vector<double> visits_;
  bool first_ = true;
};

SeedOutcome run_seed(const ExperimentConfig& cfg, const TabularMdp& mdp, std::uint64_t seed,
                     const fs::path& out_dir, bool deterministic, double v_star) {
  SeedOutcome result;
  const std::string stem = "seed_" + std::to_string(seed);
  const fs::path csv_path = out_dir / (stem + ".csv");
  nlohmann::json& e = result.entry;
  e["seed"] = seed;
  e["csv"] = csv_path.filename().string();

  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  csv.precision(17);
  const auto& cols = round_record_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
  csv << '\n';

  std::ofstream grid;
  std::optional<GridRecorder> recorder;
  if (cfg.snapshot_every > 0 && mdp.cells()) {
    const fs::path grid_path = out_dir / (stem + "_grid.csv");
    grid.open(grid_path);
    grid.precision(17);
    grid << "round,row,col,value_pred,target_value,visitation\n";
    recorder.emplace(mdp, cfg.snapshot_every, &grid);
    e["grid"] = grid_path.filename().string();
  }

  PpoConfig ppo = cfg.ppo;
  if (deterministic) ppo.parallel_rollout = false;
  ActorCritic ac(mdp, cfg.init, seed);
  const RoundObserver observer = [&](const RoundContext& ctx) {
    csv << round_record_csv_row(ctx.record) << '\n';
    if (recorder) (*recorder)(ctx);
  };
  try {
    const TrainResult res = train(mdp, ac, cfg.gate, ppo, cfg.total_rounds, seed, observer);
    const auto final_v =
        evaluate_policy_exact(mdp, project_to_tabular(res.target.policy(), mdp)).v;
    e["status"] = "ok";
    e["target_updates"] = res.target_updates;
    e["final_target_value"] = final_v[mdp.initial_state()];
    e["final_value_ratio"] = final_v[mdp.initial_state()] / v_star;
    const fs::path ckpt = out_dir / (stem + "_checkpoint.json");
    nlohmann::json doc = to_json(ac);
    doc["target_policy_params"] = res.target.params();
    std::ofstream(ckpt) << doc.dump() << '\n';
    e["checkpoint"] = ckpt.filename().string();
  } catch (const TrainingError& err) {
    e["status"] = "aborted";
    e["abort_round"] = err.round();
    e["error"] = err.what();
  }
  return result;
}

}  // namespace

nlohmann::json cmd_train(const ExperimentConfig& cfg, const TrainOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(opts.out_dir);
  const TabularMdp mdp = build_mdp(cfg);
  const double v_star = value_iteration(mdp, 10000).values[mdp.initial_state()];
  const std::vector<std::uint64_t> seeds =
      opts.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : opts.seeds;

  std::vector<SeedOutcome> outcomes(seeds.size());
  std::vector<std::string> failures(seeds.size());
  const auto count = static_cast<long long>(seeds.size());
#pragma omp parallel for schedule(dynamic) if (!opts.deterministic)
  for (long long i = 0; i < count; ++i) {
    try {
      outcomes[i] = run_seed(cfg, mdp, seeds[i], opts.out_dir, opts.deterministic, v_star);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  }
  for (const auto& f : failures) {
    if (!f.empty()) throw std::runtime_error(f);
  }

  nlohmann::json manifest;
  manifest["artifact_version"] = kArtifactVersion;
  manifest["config_name"] = cfg.name;
  manifest["config_path"] = opts.config_path.string();
  manifest["config_hash"] = config_hash(cfg);
  manifest["config"] = config_to_json(cfg);
  manifest["seeds"] = seeds;
  manifest["deterministic"] = opts.deterministic;
  manifest["optimal_value"] = v_star;
  manifest["runs"] = nlohmann::json::array();
  for (auto& o : outcomes) manifest["runs"].push_back(o.entry);
  manifest["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ofstream(opts.out_dir / "manifest.json") << manifest.dump(2) << '\n';
  return manifest;
}

// ---- verify --------------------------------------------------------------------

nlohmann::json cmd_verify(const std::string& suite, std::size_t instances, std::uint64_t seed,
                          bool& ok) {
  std::vector<std::string> names;
  if (suite == "all") {
    names = verify::suite_names();
  } else {
    names.push_back(suite);
  }
  nlohmann::json report;
  report["suites"] = nlohmann::json::array();
  ok = true;
  std::size_t violations = 0;
  for (const auto& name : names) {
    const verify::SuiteReport r = verify::run_suite(name, instances, seed);
    ok = ok && r.passed();
    violations += r.violations;
    report["suites"].push_back(verify::to_json(r));
  }
  report["violations"] = violations;
  report["passed"] = ok;
  return report;
}

// ---- plotdata ------------------------------------------------------------------

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::runtime_error("csv: missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  const std::string& cell = rows.at(row).at(column(name));
  if (cell == "nan" || cell == "-nan") return std::numeric_limits<double>::quiet_NaN();
  return std::stod(cell);
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing record file " + path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (std::getline(in, line)) t.header = split(line);
  while (std::getline(in, line)) {
    if (!line.empty()) t.rows.push_back(split(line));
  }
  return t;
}

namespace {

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::vector<double> marker_x, marker_y;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b", "#e377c2", "#17becf"};

void write_svg(const fs::path& path, const std::string& title, const std::string& ylabel,
               const std::vector<Series>& series, std::optional<double> hline = std::nullopt) {
  constexpr double W = 720, H = 420, L = 70, R = 160, T = 40, B = 50;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  auto take = [&](double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    if (!any) {
      xmin = xmax = x;
      ymin = ymax = y;
      any = true;
    }
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) take(s.x[i], s.y[i]);
  }
  if (hline) take(xmin, *hline);
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
      << "</text>\n"
      << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\">round</text>\n"
      << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 16 "
      << (T + H - B) / 2 << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yv
        << "</text>\n"
        << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << xv
        << "</text>\n";
  }
  if (hline) {
    out << "<line x1=\"" << L << "\" y1=\"" << py(*hline) << "\" x2=\"" << W - R << "\" y2=\""
        << py(*hline) << "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.y[i])) out << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < s.marker_x.size(); ++i) {
      if (!std::isfinite(s.marker_y[i])) continue;
      out << "<circle cx=\"" << px(s.marker_x[i]) << "\" cy=\"" << py(s.marker_y[i])
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
    out << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * k + 8 << "\" fill=\"" << color
        << "\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
}

struct LoadedRun {
  std::string run;  // config name
  std::uint64_t seed = 0;
  double delta_v = 0.0;
  CsvTable table;
};

double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<fs::path> cmd_plotdata(const std::vector<fs::path>& manifests, const fs::path& out_dir) {
  if (manifests.empty()) throw std::invalid_argument("plotdata: no manifest given");
  std::vector<LoadedRun> runs;
  for (const auto& mpath : manifests) {
    std::ifstream in(mpath);
    if (!in) throw std::runtime_error("cannot read manifest " + mpath.string());
    const nlohmann::json m = nlohmann::json::parse(in);
    const auto& dv = m.at("config").at("delta_v");
    const double delta_v =
        dv.is_string() ? std::numeric_limits<double>::infinity() : dv.get<double>();
    for (const auto& r : m.at("runs")) {
      LoadedRun lr;
      lr.run = m.at("config_name").get<std::string>();
      lr.seed = r.at("seed").get<std::uint64_t>();
      lr.delta_v = delta_v;
      lr.table = read_csv(mpath.parent_path() / r.at("csv").get<std::string>());
      runs.push_back(std::move(lr));
    }
  }
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  auto open = [&](const std::string& name) {
    written.push_back(out_dir / name);
    std::ofstream f(written.back());
    f.precision(17);
    return f;
  };

  {
    auto f = open("learning_curves.csv");
    f << "run,seed,round,v_target,v_behavior,mean_return,target_updated\n";
    for (const auto& r : runs) {
      for (std::size_t i = 0; i < r.table.rows.size(); ++i) {
        f << r.run << ',' << r.seed << ',' << r.table.number(i, "round") << ','
          << r.table.number(i, "v_target") << ',' << r.table.number(i, "v_behavior") << ','
          << r.table.number(i, "mean_return") << ',' << r.table.number(i, "target_updated")
          << '\n';
      }
    }
  }
  {
    auto f = open("diff_threshold.csv");
    f << "run,seed,round,scaled_diff,threshold,target_updated\n";
    for (const auto& r : runs) {
      for (std::size_t i = 0; i < r.table.rows.size(); ++i) {
        const double y = r.table.number(i, "y_bar");
        f << r.run << ',' << r.seed << ',' << r.table.number(i, "round") << ','
          << (y > 0 ? r.table.number(i, "diff") / y : std::numeric_limits<double>::quiet_NaN())
          << ',' << r.delta_v << ',' << r.table.number(i, "target_updated") << '\n';
      }
    }
  }
  {
    auto f = open("tv_value_error.csv");
    f << "run,seed,round,tv_mu,value_error_sq,value_error_abs,kl_target,kl_behavior\n";
    for (const auto& r : runs) {
      for (std::size_t i = 0; i < r.table.rows.size(); ++i) {
        f << r.run << ',' << r.seed << ',' << r.table.number(i, "round") << ','
          << r.table.number(i, "tv_mu") << ',' << r.table.number(i, "value_error_sq") << ','
          << r.table.number(i, "value_error_abs") << ',' << r.table.number(i, "kl_target") << ','
          << r.table.number(i, "kl_behavior") << '\n';
      }
    }
  }
  // Median target value per run, joined on round.
  std::map<std::string, std::map<std::size_t, std::vector<double>>> by_run;
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < r.table.rows.size(); ++i) {
      by_run[r.run][static_cast<std::size_t>(r.table.number(i, "round"))].push_back(
          r.table.number(i, "v_target"));
    }
  }
  {
    auto f = open("paired_v_target.csv");
    f << "round";
    for (const auto& [name, _] : by_run) f << ',' << name;
    f << '\n';
    std::size_t max_round = 0;
    for (const auto& [_, rounds] : by_run) {
      if (!rounds.empty()) max_round = std::max(max_round, rounds.rbegin()->first);
    }
    for (std::size_t k = 0; k <= max_round; ++k) {
      f << k;
      for (const auto& [_, rounds] : by_run) {
        const auto it = rounds.find(k);
        f << ',';
        if (it != rounds.end()) f << median(it->second);
      }
      f << '\n';
    }
  }

  auto series_of = [&](const std::string& metric, bool markers, bool scaled = false) {
    std::vector<Series> out;
    for (const auto& r : runs) {
      Series s;
      s.label = r.run + " seed " + std::to_string(r.seed);
      for (std::size_t i = 0; i < r.table.rows.size(); ++i) {
        const double x = r.table.number(i, "round");
        double y = r.table.number(i, metric);
        if (scaled) {
          const double yb = r.table.number(i, "y_bar");
          y = yb > 0 ? y / yb : std::numeric_limits<double>::quiet_NaN();
        }
        s.x.push_back(x);
        s.y.push_back(y);
        if (markers && r.table.number(i, "target_updated") != 0.0) {
          s.marker_x.push_back(x);
          s.marker_y.push_back(y);
        }
      }
      out.push_back(std::move(s));
    }
    return out;
  };
  written.push_back(out_dir / "learning_curves.svg");
  write_svg(written.back(), "Exact target value (dots: target updates)", "V(s0)",
            series_of("v_target", true));
  std::optional<double> threshold;
  if (!runs.empty() && std::isfinite(runs.front().delta_v)) threshold = runs.front().delta_v;
  written.push_back(out_dir / "diff_threshold.svg");
  write_svg(written.back(), "Scaled diff vs threshold", "diff / y_bar",
            series_of("diff", true, true), threshold);
  written.push_back(out_dir / "tv_mu.svg");
  write_svg(written.back(), "TV between successive training distributions", "TV",
            series_of("tv_mu", true));
  written.push_back(out_dir / "value_error.svg");
  write_svg(written.back(), "Next-policy weighted squared value error", "error",
            series_of("value_error_sq", true));
  return written;
}

}  // namespace svlab::app
