#include "svlab/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace svlab {

namespace {

void check_finite(std::span<const double> xs, const char* what) {
  for (double x : xs) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string("non-finite ") + what);
  }
}

void check_segment(const Segment& seg) {
  const std::size_t T = seg.rewards.size();
  if (seg.terminals.size() != T || seg.target_logprobs.size() != T ||
      seg.behavior_logprobs.size() != T) {
    throw std::invalid_argument("estimator: per-step sequences differ in length");
  }
  if (seg.values.size() != T + 1) {
    throw std::invalid_argument("estimator: values must hold T + 1 entries (bootstrap last)");
  }
  check_finite(seg.rewards, "reward");
  check_finite(seg.values, "value");
  for (double lp : seg.target_logprobs) {
    if (std::isnan(lp)) throw std::invalid_argument("NaN target log-probability");
  }
  check_finite(seg.behavior_logprobs, "behavior log-probability");
}

}  // namespace

IsWeights importance_weights(std::span<const double> target_logprobs,
                             std::span<const double> behavior_logprobs, double lambda,
                             double rho_bar) {
  if (target_logprobs.size() != behavior_logprobs.size()) {
    throw std::invalid_argument("importance_weights: length mismatch");
  }
  IsWeights w;
  w.rho.resize(target_logprobs.size());
  w.c.resize(target_logprobs.size());
  for (std::size_t t = 0; t < target_logprobs.size(); ++t) {
    const double ratio = std::exp(target_logprobs[t] - behavior_logprobs[t]);
    w.rho[t] = std::min(rho_bar, ratio);
    w.c[t] = std::min(lambda, ratio);
  }
  return w;
}

std::vector<double> vtrace_targets(const Segment& seg, double gamma, double lambda,
                                   double rho_bar) {
  check_segment(seg);
  const std::size_t T = seg.rewards.size();
  const auto w = importance_weights(seg.target_logprobs, seg.behavior_logprobs, lambda, rho_bar);
  std::vector<double> y(T);
  // correction carried backward: y_{t+1} - v(s_{t+1}), zero past the segment
  double tail = 0.0;
  for (std::size_t i = T; i-- > 0;) {
    const double not_done = seg.terminals[i] ? 0.0 : 1.0;
    const double delta = seg.rewards[i] + gamma * not_done * seg.values[i + 1] - seg.values[i];
    y[i] = seg.values[i] + w.rho[i] * delta + gamma * w.c[i] * not_done * tail;
    tail = y[i] - seg.values[i];
  }
  return y;
}

std::vector<double> retrace_gae(const Segment& seg, double gamma, double lambda, double rho_bar) {
  check_segment(seg);
  const std::size_t T = seg.rewards.size();
  const auto w = importance_weights(seg.target_logprobs, seg.behavior_logprobs, lambda, rho_bar);
  std::vector<double> adv(T);
  double next = 0.0;
  for (std::size_t i = T; i-- > 0;) {
    const double not_done = seg.terminals[i] ? 0.0 : 1.0;
    const double delta = seg.rewards[i] + gamma * not_done * seg.values[i + 1] - seg.values[i];
    adv[i] = delta + gamma * w.c[i] * not_done * next;
    next = adv[i];
  }
  return adv;
}

std::vector<double> scale_advantages(std::span<const double> advantages) {
  if (advantages.empty()) throw std::invalid_argument("scale_advantages: empty batch");
  const double n = static_cast<double>(advantages.size());
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double std_dev = std::sqrt(var / n);
  std::vector<double> out(advantages.begin(), advantages.end());
  if (!(std_dev > 0.0)) return out;
  for (double& a : out) a /= std_dev;
  return out;
}

EstimatorOutput estimate_batch(const TransitionBatch& batch, std::span<const double> target_logprobs,
                               std::span<const double> values,
                               std::span<const double> next_values, double gamma, double lambda,
                               double rho_bar) {
  batch.validate();
  const std::size_t n = batch.size();
  if (target_logprobs.size() != n || values.size() != n || next_values.size() != n) {
    throw std::invalid_argument("estimate_batch: inputs do not match batch size");
  }
  const std::size_t H = batch.horizon;
  EstimatorOutput out;
  out.targets.resize(n);
  std::vector<double> raw_adv(n);
  std::vector<double> seg_values(H + 1);
  for (std::size_t e = 0; e < batch.num_envs; ++e) {
    const std::size_t begin = e * H;
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(begin), H, seg_values.begin());
    seg_values[H] = next_values[begin + H - 1];
    const Segment seg{
        std::span(batch.rewards).subspan(begin, H),
        std::span(batch.terminals).subspan(begin, H),
        seg_values,
        target_logprobs.subspan(begin, H),
        std::span(batch.behavior_logprobs).subspan(begin, H),
    };
    const auto y = vtrace_targets(seg, gamma, lambda, rho_bar);
    const auto a = retrace_gae(seg, gamma, lambda, rho_bar);
    std::copy(y.begin(), y.end(), out.targets.begin() + static_cast<std::ptrdiff_t>(begin));
    std::copy(a.begin(), a.end(), raw_adv.begin() + static_cast<std::ptrdiff_t>(begin));
  }
  const auto w = importance_weights(target_logprobs, batch.behavior_logprobs, lambda, rho_bar);
  const double on_policy_rho = std::min(rho_bar, 1.0);
  for (double rho : w.rho) {
    out.max_rho_deviation = std::max(out.max_rho_deviation, std::abs(rho - on_policy_rho));
  }
  out.advantages = scale_advantages(raw_adv);
  return out;
}

}  // namespace svlab
