#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "svlab/mdp.hpp"

namespace svlab {

enum class FeatureKind { OneHot, GridCoords };

/// Fixed state -> feature table, shared by every network over the same MDP.
class FeatureMap {
 public:
  FeatureMap() = default;
  static FeatureMap one_hot(std::size_t num_states);
  /// (row, col) scaled to [0, 1]; requires grid geometry on the MDP.
  static FeatureMap grid_coords(const TabularMdp& mdp);
  static FeatureMap make(FeatureKind kind, const TabularMdp& mdp);

  FeatureKind kind() const { return kind_; }
  std::size_t num_states() const { return num_states_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> row(StateIndex s) const { return {table_.data() + s * dim_, dim_}; }
  /// Indices of the nonzero entries of row(s).
  std::span<const std::uint32_t> support(StateIndex s) const {
    return {support_.data() + support_offsets_[s], support_offsets_[s + 1] - support_offsets_[s]};
  }

 private:
  void index_support();

  FeatureKind kind_ = FeatureKind::OneHot;
  std::size_t num_states_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> table_;
  std::vector<std::uint32_t> support_;
  std::vector<std::size_t> support_offsets_;
};

/// Fully connected net: inputs -> tanh hidden layer -> outputs. hidden == 0
/// gives a linear map. Parameters are flat: W1 (hidden x inputs), b1, W2
/// (outputs x hidden), b2.
struct NetworkShape {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::size_t outputs = 0;

  std::size_t num_params() const;
  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

/// Read-only view of a network's parameters over a feature map.
struct NetworkView {
  NetworkShape shape;
  std::span<const double> params;
  const FeatureMap* features = nullptr;

  /// Writes the outputs for state `s` into `out` (size shape.outputs).
  void forward(StateIndex s, std::span<double> out) const;
};

/// Scratch buffers for one forward/backward pass.
class NetworkWorkspace {
 public:
  explicit NetworkWorkspace(const NetworkShape& shape);
  /// Forward pass that keeps activations for backward().
  std::span<const double> forward(const NetworkView& net, StateIndex s);
  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(outputs).
  void backward(const NetworkView& net, StateIndex s, std::span<const double> out_grad,
                std::span<double> grad);

 private:
  std::vector<double> hidden_;
  std::vector<double> out_;
  std::vector<double> hidden_grad_;
};

struct InitConfig {
  std::size_t hidden = 64;
  double hidden_gain = 1.4142135623730951;
  double policy_output_gain = 0.01;
  double value_output_gain = 1.0;
  FeatureKind features = FeatureKind::OneHot;
};

/// Frozen copy of policy parameters. Cheap to copy and safe to share.
class Snapshot {
 public:
  Snapshot() = default;
  Snapshot(NetworkShape shape, std::vector<double> params,
           std::shared_ptr<const FeatureMap> features);

  NetworkView policy() const { return {shape_, *params_, features_.get()}; }
  const std::vector<double>& params() const { return *params_; }
  /// True when both snapshots share the same frozen storage.
  bool same_storage(const Snapshot& other) const { return params_ == other.params_; }

 private:
  NetworkShape shape_;
  std::shared_ptr<const std::vector<double>> params_;
  std::shared_ptr<const FeatureMap> features_;
};

/// Separate policy (logits) and value networks over a shared feature map.
class ActorCritic {
 public:
  ActorCritic() = default;
  ActorCritic(const TabularMdp& mdp, const InitConfig& config, std::uint64_t seed);
  ActorCritic(std::shared_ptr<const FeatureMap> features, NetworkShape policy_shape,
              NetworkShape value_shape, std::vector<double> policy_params,
              std::vector<double> value_params);

  NetworkView policy() const { return {policy_shape_, policy_params_, features_.get()}; }
  NetworkView value() const { return {value_shape_, value_params_, features_.get()}; }
  std::vector<double>& policy_params() { return policy_params_; }
  std::vector<double>& value_params() { return value_params_; }
  const std::vector<double>& policy_params() const { return policy_params_; }
  const std::vector<double>& value_params() const { return value_params_; }
  const NetworkShape& policy_shape() const { return policy_shape_; }
  const NetworkShape& value_shape() const { return value_shape_; }
  const std::shared_ptr<const FeatureMap>& features() const { return features_; }
  std::size_t num_actions() const { return policy_shape_.outputs; }

  Snapshot snapshot() const;
  /// Copies a snapshot's parameters back into the live policy.
  void restore(const Snapshot& snap);

  std::vector<double> values(std::span<const StateIndex> states) const;

 private:
  std::shared_ptr<const FeatureMap> features_;
  NetworkShape policy_shape_;
  NetworkShape value_shape_;
  std::vector<double> policy_params_;
  std::vector<double> value_params_;
};

/// Log-softmax of the policy logits at every state, row-major (s, a).
std::vector<double> policy_log_table(const NetworkView& policy);

/// log pi(actions[t] | states[t]).
std::vector<double> policy_logprobs(const NetworkView& policy, std::span<const StateIndex> states,
                                    std::span<const ActionIndex> actions);

/// Exact per-state action distributions of the policy network.
TabularPolicy project_to_tabular(const NetworkView& policy, const TabularMdp& mdp);

struct LossResult {
  double loss = 0.0;
  std::vector<double> gradient;
};

struct PolicyLossResult : LossResult {
  double surrogate = 0.0;     // mean clipped surrogate (before negation)
  double entropy = 0.0;       // mean entropy over the batch states
  double clip_fraction = 0.0;
};

/// Clipped surrogate with ratio beta_theta / beta_old plus an entropy bonus.
/// Returns the loss to minimize,
///   -mean_t min(r_t A_t, clip(r_t, 1-eps, 1+eps) A_t) - entropy_coef * mean_t H_t,
/// and its gradient with respect to the policy parameters.
PolicyLossResult ppo_policy_loss(const NetworkView& policy, std::span<const StateIndex> states,
                                 std::span<const ActionIndex> actions,
                                 std::span<const double> old_logprobs,
                                 std::span<const double> advantages, double clip_eps,
                                 double entropy_coef);

/// Convenience overload: old log-probabilities come from `previous_behavior`.
PolicyLossResult ppo_policy_loss(const ActorCritic& ac, const Snapshot& previous_behavior,
                                 const TransitionBatch& batch, std::span<const double> advantages,
                                 double clip_eps, double entropy_coef);

/// 0.5 * mean_t (targets_t - v(states_t))^2 and its gradient.
LossResult value_loss(const NetworkView& value, std::span<const StateIndex> states,
                      std::span<const double> targets);

/// Mean policy entropy over `states` (nats).
double mean_entropy(const NetworkView& policy, std::span<const StateIndex> states);

/// Scales `grad` in place so that its L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_by_global_norm(std::span<double> grad, double max_norm);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-5;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Adam with global-norm gradient clipping applied first.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(std::size_t num_params, AdamConfig config = {});

  void step(std::span<double> params, std::span<const double> gradient, double learning_rate,
            double max_grad_norm);
  std::size_t steps_taken() const { return steps_; }

  friend bool operator==(const AdamOptimizer&, const AdamOptimizer&) = default;

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::vector<double> scratch_;
  std::size_t steps_ = 0;
};

/// Linear interpolation from `initial` at progress 0 to `final` at progress 1.
double linear_schedule(double initial, double final_value, double progress);

/// Checkpoint document with shape header and flat parameter arrays.
nlohmann::json to_json(const ActorCritic& ac);
ActorCritic actor_critic_from_json(const nlohmann::json& doc, const TabularMdp& mdp);

}  // namespace svlab
