#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "svlab/actor_critic.hpp"
#include "svlab/gate.hpp"
#include "svlab/mdp.hpp"
#include "svlab/trainer.hpp"

namespace svlab {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class EnvKind { FourRooms, Random };

struct ExperimentConfig {
  std::string name;
  EnvKind env = EnvKind::FourRooms;
  double slip_prob = 0.8;
  double gamma = 0.999;
  std::size_t num_states = 10;  // random env only
  std::size_t num_actions = 3;  // random env only
  std::uint64_t mdp_seed = 0;   // random env only

  PpoConfig ppo;
  GateConfig gate;
  InitConfig init;
  std::size_t total_rounds = 195;
  std::uint64_t seed = 0;
  /// Write grid snapshots every this many rounds (0 = never).
  std::size_t snapshot_every = 0;
};

/// Parses the flat `key = value` format. '#' starts a comment; blank lines are
/// ignored. Unknown or repeated keys and malformed values are errors that carry
/// the line number.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every setting, keyed as in the file format.
nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Stable 64-bit FNV-1a hash of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

TabularMdp build_mdp(const ExperimentConfig& cfg);

}  // namespace svlab
