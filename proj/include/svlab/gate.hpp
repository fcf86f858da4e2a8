#pragma once

#include <cstddef>
#include <limits>
#include <span>

namespace svlab {

/// Stability gate parameters. delta_v may be +inf, which marks every round
/// stable. In static mode every round counts as stable and
/// k_min = k_max = K, so the target moves exactly every K rounds.
struct GateConfig {
  double delta_v = 0.01;
  std::size_t k_min = 1;
  std::size_t k_max = 1;
  bool static_mode = false;
  /// K_min decays linearly to 1 over this fraction of the run; 0 disables decay.
  double kmin_decay_fraction = 0.0;

  static GateConfig fixed_interval(std::size_t k);
  /// delta_v = inf, K_min = 1: the target follows the behavioral policy every round.
  static GateConfig always_update();

  /// Throws std::invalid_argument when 1 <= k_min <= k_max or delta_v >= 0 fails.
  void validate() const;
  /// K_min in force at `round` of a `total_rounds` run.
  std::size_t k_min_at(std::size_t round, std::size_t total_rounds) const;
};

struct GateState {
  std::size_t n_stable = 0;
  std::size_t k_pi = 0;  // rounds since the last target update
  double last_diff = 0.0;
  std::size_t last_target_update_round = 0;
};

struct DiffResult {
  double diff = 0.0;   // (1/T) sum |y_t - v_t|
  double y_bar = 0.0;  // (1/T) sum |y_t|
};

/// Mean absolute gap between value targets and the critic's predictions, and
/// the mean absolute target used to normalize it.
DiffResult compute_diff(std::span<const double> targets, std::span<const double> values);

struct ConvResult {
  bool stable = false;
  std::size_t n_stable = 0;
};

/// One evaluation of the convergence check:
///   I = [diff <= y_bar * delta_v],  n = (n_stable + 1) * I,
///   returns (true, 0) if n >= k_min or k_pi >= k_max, else (false, n).
/// `k_min` is the value in force this round (see GateConfig::k_min_at).
ConvResult conv(double diff, double y_bar, std::size_t n_stable, std::size_t k_pi,
                const GateConfig& config, std::size_t k_min);

inline ConvResult conv(double diff, double y_bar, std::size_t n_stable, std::size_t k_pi,
                       const GateConfig& config) {
  return conv(diff, y_bar, n_stable, k_pi, config, config.k_min);
}

}  // namespace svlab
