#include "svlab/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace svlab {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_real(const std::string& v) {
  if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || std::isnan(out)) {
    throw std::invalid_argument("expected a real number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_count(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

bool parse_flag(const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

struct GateSpec {
  bool is_static = false;
  std::size_t interval = 0;
};

std::map<std::string, Setter> setters(GateSpec& spec) {
  auto real = [](double ExperimentConfig::*field) -> Setter {
    return [field](ExperimentConfig& c, const std::string& v) { c.*field = parse_real(v); };
  };
  auto ppo_real = [](double PpoConfig::*field) -> Setter {
    return [field](ExperimentConfig& c, const std::string& v) { c.ppo.*field = parse_real(v); };
  };
  auto ppo_count = [](std::size_t PpoConfig::*field) -> Setter {
    return [field](ExperimentConfig& c, const std::string& v) { c.ppo.*field = parse_count(v); };
  };
  auto init_real = [](double InitConfig::*field) -> Setter {
    return [field](ExperimentConfig& c, const std::string& v) { c.init.*field = parse_real(v); };
  };
  return {
      {"name", [](ExperimentConfig& c, const std::string& v) { c.name = v; }},
      {"env",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "four_rooms") c.env = EnvKind::FourRooms;
         else if (v == "random") c.env = EnvKind::Random;
         else throw std::invalid_argument("env must be four_rooms or random");
       }},
      {"slip_prob", real(&ExperimentConfig::slip_prob)},
      {"gamma", real(&ExperimentConfig::gamma)},
      {"num_states", [](ExperimentConfig& c, const std::string& v) { c.num_states = parse_count(v); }},
      {"num_actions", [](ExperimentConfig& c, const std::string& v) { c.num_actions = parse_count(v); }},
      {"mdp_seed", [](ExperimentConfig& c, const std::string& v) { c.mdp_seed = parse_count(v); }},
      {"lambda", ppo_real(&PpoConfig::lambda)},
      {"rho_bar", ppo_real(&PpoConfig::rho_bar)},
      {"clip_eps", ppo_real(&PpoConfig::clip_eps)},
      {"entropy_coef", ppo_real(&PpoConfig::entropy_coef)},
      {"lr_initial", ppo_real(&PpoConfig::lr_initial)},
      {"lr_final", ppo_real(&PpoConfig::lr_final)},
      {"max_grad_norm", ppo_real(&PpoConfig::max_grad_norm)},
      {"epochs", ppo_count(&PpoConfig::epochs)},
      {"minibatch_size", ppo_count(&PpoConfig::minibatch_size)},
      {"num_envs", ppo_count(&PpoConfig::num_envs)},
      {"horizon", ppo_count(&PpoConfig::horizon)},
      {"exact_metrics",
       [](ExperimentConfig& c, const std::string& v) { c.ppo.exact_metrics = parse_flag(v); }},
      {"hidden", [](ExperimentConfig& c, const std::string& v) { c.init.hidden = parse_count(v); }},
      {"features",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "one_hot") c.init.features = FeatureKind::OneHot;
         else if (v == "grid_coords") c.init.features = FeatureKind::GridCoords;
         else throw std::invalid_argument("features must be one_hot or grid_coords");
       }},
      {"hidden_gain", init_real(&InitConfig::hidden_gain)},
      {"policy_output_gain", init_real(&InitConfig::policy_output_gain)},
      {"value_output_gain", init_real(&InitConfig::value_output_gain)},
      {"gate_mode",
       [&spec](ExperimentConfig&, const std::string& v) {
         if (v == "static") spec.is_static = true;
         else if (v == "dynamic") spec.is_static = false;
         else throw std::invalid_argument("gate_mode must be dynamic or static");
       }},
      {"static_interval",
       [&spec](ExperimentConfig&, const std::string& v) { spec.interval = parse_count(v); }},
      {"delta_v", [](ExperimentConfig& c, const std::string& v) { c.gate.delta_v = parse_real(v); }},
      {"k_min", [](ExperimentConfig& c, const std::string& v) { c.gate.k_min = parse_count(v); }},
      {"k_max", [](ExperimentConfig& c, const std::string& v) { c.gate.k_max = parse_count(v); }},
      {"kmin_decay_fraction",
       [](ExperimentConfig& c, const std::string& v) { c.gate.kmin_decay_fraction = parse_real(v); }},
      {"total_rounds",
       [](ExperimentConfig& c, const std::string& v) { c.total_rounds = parse_count(v); }},
      {"seed", [](ExperimentConfig& c, const std::string& v) { c.seed = parse_count(v); }},
      {"snapshot_every",
       [](ExperimentConfig& c, const std::string& v) { c.snapshot_every = parse_count(v); }},
  };
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  GateSpec spec;
  const auto table = setters(spec);
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(source, line_no, "empty key or value");
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(source, line_no, "unknown key '" + key + "'");
    if (auto [pos, fresh] = seen.emplace(key, line_no); !fresh) {
      throw ConfigError(source, line_no,
                        "'" + key + "' already set on line " + std::to_string(pos->second));
    }
    try {
      it->second(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(source, line_no, key + ": " + e.what());
    }
  }

  auto line_of = [&](const std::string& key) {
    const auto it = seen.find(key);
    return it == seen.end() ? line_no : it->second;
  };
  if (spec.is_static) {
    if (spec.interval == 0) {
      throw ConfigError(source, line_of("gate_mode"), "static gate needs static_interval >= 1");
    }
    for (const char* key : {"delta_v", "k_min", "k_max", "kmin_decay_fraction"}) {
      if (seen.count(key)) {
        throw ConfigError(source, seen[key], std::string(key) + " does not apply to a static gate");
      }
    }
    cfg.gate = GateConfig::fixed_interval(spec.interval);
  } else if (seen.count("static_interval")) {
    throw ConfigError(source, seen["static_interval"], "static_interval needs gate_mode = static");
  }
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) {
    throw ConfigError(source, line_of("gamma"), "gamma must lie in [0, 1)");
  }
  if (!(cfg.slip_prob >= 0.0 && cfg.slip_prob <= 1.0)) {
    throw ConfigError(source, line_of("slip_prob"), "slip_prob must lie in [0, 1]");
  }
  if (cfg.total_rounds == 0) throw ConfigError(source, line_of("total_rounds"), "total_rounds must be >= 1");
  try {
    cfg.gate.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, line_of("k_min"), e.what());
  }
  try {
    cfg.ppo.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, line_no, e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  ExperimentConfig cfg = parse_config(buf.str(), path.string());
  if (cfg.name.empty()) cfg.name = path.stem().string();
  return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  auto real = [](double x) -> nlohmann::json {
    return std::isinf(x) ? nlohmann::json("inf") : nlohmann::json(x);
  };
  nlohmann::json j = {
      {"name", c.name},
      {"env", c.env == EnvKind::FourRooms ? "four_rooms" : "random"},
      {"slip_prob", c.slip_prob},
      {"gamma", c.gamma},
      {"lambda", c.ppo.lambda},
      {"rho_bar", real(c.ppo.rho_bar)},
      {"clip_eps", c.ppo.clip_eps},
      {"entropy_coef", c.ppo.entropy_coef},
      {"lr_initial", c.ppo.lr_initial},
      {"lr_final", c.ppo.lr_final},
      {"max_grad_norm", c.ppo.max_grad_norm},
      {"epochs", c.ppo.epochs},
      {"minibatch_size", c.ppo.minibatch_size},
      {"num_envs", c.ppo.num_envs},
      {"horizon", c.ppo.horizon},
      {"exact_metrics", c.ppo.exact_metrics},
      {"hidden", c.init.hidden},
      {"features", c.init.features == FeatureKind::OneHot ? "one_hot" : "grid_coords"},
      {"hidden_gain", c.init.hidden_gain},
      {"policy_output_gain", c.init.policy_output_gain},
      {"value_output_gain", c.init.value_output_gain},
      {"gate_mode", c.gate.static_mode ? "static" : "dynamic"},
      {"delta_v", real(c.gate.delta_v)},
      {"k_min", c.gate.k_min},
      {"k_max", c.gate.k_max},
      {"kmin_decay_fraction", c.gate.kmin_decay_fraction},
      {"total_rounds", c.total_rounds},
      {"seed", c.seed},
      {"snapshot_every", c.snapshot_every},
  };
  if (c.env == EnvKind::Random) {
    j["num_states"] = c.num_states;
    j["num_actions"] = c.num_actions;
    j["mdp_seed"] = c.mdp_seed;
  }
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

TabularMdp build_mdp(const ExperimentConfig& cfg) {
  if (cfg.env == EnvKind::FourRooms) return build_four_rooms(cfg.slip_prob, cfg.gamma);
  return build_random_mdp(cfg.num_states, cfg.num_actions, cfg.gamma, cfg.mdp_seed);
}

}  // namespace svlab
