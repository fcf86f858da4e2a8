#include "svlab/gate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace svlab {

GateConfig GateConfig::fixed_interval(std::size_t k) {
  GateConfig g;
  g.delta_v = std::numeric_limits<double>::infinity();
  g.k_min = k;
  g.k_max = k;
  g.static_mode = true;
  return g;
}

GateConfig GateConfig::always_update() {
  GateConfig g;
  g.delta_v = std::numeric_limits<double>::infinity();
  g.k_min = 1;
  g.k_max = 1;
  return g;
}

void GateConfig::validate() const {
  if (k_min < 1 || k_min > k_max) throw std::invalid_argument("gate: need 1 <= k_min <= k_max");
  if (!(delta_v >= 0.0)) throw std::invalid_argument("gate: delta_v must be >= 0");
  if (!(kmin_decay_fraction >= 0.0 && kmin_decay_fraction <= 1.0)) {
    throw std::invalid_argument("gate: kmin_decay_fraction must lie in [0, 1]");
  }
}

std::size_t GateConfig::k_min_at(std::size_t round, std::size_t total_rounds) const {
  if (static_mode || kmin_decay_fraction <= 0.0 || k_min <= 1) return k_min;
  const double decay_rounds = kmin_decay_fraction * static_cast<double>(total_rounds);
  if (decay_rounds <= 0.0) return k_min;
  const double progress = std::min(1.0, static_cast<double>(round) / decay_rounds);
  const double value = static_cast<double>(k_min) - static_cast<double>(k_min - 1) * progress;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(value)));
}

DiffResult compute_diff(std::span<const double> targets, std::span<const double> values) {
  if (targets.empty()) throw std::invalid_argument("compute_diff: empty batch");
  if (targets.size() != values.size()) throw std::invalid_argument("compute_diff: length mismatch");
  DiffResult r;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    r.diff += std::abs(targets[t] - values[t]);
    r.y_bar += std::abs(targets[t]);
  }
  const double n = static_cast<double>(targets.size());
  r.diff /= n;
  r.y_bar /= n;
  return r;
}

ConvResult conv(double diff, double y_bar, std::size_t n_stable, std::size_t k_pi,
                const GateConfig& config, std::size_t k_min) {
  const bool always = config.static_mode || std::isinf(config.delta_v);
  const bool indicator = always || diff <= y_bar * config.delta_v;
  const std::size_t next = indicator ? n_stable + 1 : 0;
  if (next >= k_min || k_pi >= config.k_max) return {true, 0};
  return {false, next};
}

}  // namespace svlab
