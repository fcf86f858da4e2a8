#include "svlab/actor_critic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace svlab {

// ---------------------------------------------------------------- features

FeatureMap FeatureMap::one_hot(std::size_t num_states) {
  FeatureMap f;
  f.kind_ = FeatureKind::OneHot;
  f.num_states_ = num_states;
  f.dim_ = num_states;
  f.table_.assign(num_states * num_states, 0.0);
  for (StateIndex s = 0; s < num_states; ++s) f.table_[s * num_states + s] = 1.0;
  f.index_support();
  return f;
}

FeatureMap FeatureMap::grid_coords(const TabularMdp& mdp) {
  if (!mdp.cells()) throw std::invalid_argument("grid_coords features need a grid MDP");
  FeatureMap f;
  f.kind_ = FeatureKind::GridCoords;
  f.num_states_ = mdp.num_states();
  f.dim_ = 2;
  f.table_.resize(f.num_states_ * 2);
  const double row_scale = 1.0 / std::max(1, mdp.grid_rows() - 1);
  const double col_scale = 1.0 / std::max(1, mdp.grid_cols() - 1);
  for (StateIndex s = 0; s < f.num_states_; ++s) {
    f.table_[2 * s] = (*mdp.cells())[s].row * row_scale;
    f.table_[2 * s + 1] = (*mdp.cells())[s].col * col_scale;
  }
  f.index_support();
  return f;
}

FeatureMap FeatureMap::make(FeatureKind kind, const TabularMdp& mdp) {
  return kind == FeatureKind::OneHot ? one_hot(mdp.num_states()) : grid_coords(mdp);
}

void FeatureMap::index_support() {
  support_.clear();
  support_offsets_.assign(1, 0);
  for (StateIndex s = 0; s < num_states_; ++s) {
    for (std::size_t i = 0; i < dim_; ++i) {
      if (table_[s * dim_ + i] != 0.0) support_.push_back(static_cast<std::uint32_t>(i));
    }
    support_offsets_.push_back(support_.size());
  }
}

// ---------------------------------------------------------------- network

std::size_t NetworkShape::num_params() const {
  if (hidden == 0) return outputs * inputs + outputs;
  return hidden * inputs + hidden + outputs * hidden + outputs;
}

void NetworkView::forward(StateIndex s, std::span<double> out) const {
  const auto x = features->row(s);
  const auto nz = features->support(s);
  const std::size_t in = shape.inputs;
  if (shape.hidden == 0) {
    const double* W = params.data();
    const double* b = W + shape.outputs * in;
    for (std::size_t o = 0; o < shape.outputs; ++o) {
      double z = b[o];
      for (auto i : nz) z += W[o * in + i] * x[i];
      out[o] = z;
    }
    return;
  }
  const std::size_t H = shape.hidden;
  const double* W1 = params.data();
  const double* b1 = W1 + H * in;
  const double* W2 = b1 + H;
  const double* b2 = W2 + shape.outputs * H;
  thread_local std::vector<double> h;
  h.resize(H);
  for (std::size_t j = 0; j < H; ++j) {
    double z = b1[j];
    for (auto i : nz) z += W1[j * in + i] * x[i];
    h[j] = std::tanh(z);
  }
  for (std::size_t o = 0; o < shape.outputs; ++o) {
    double z = b2[o];
    for (std::size_t j = 0; j < H; ++j) z += W2[o * H + j] * h[j];
    out[o] = z;
  }
}

NetworkWorkspace::NetworkWorkspace(const NetworkShape& shape)
    : hidden_(shape.hidden), out_(shape.outputs), hidden_grad_(shape.hidden) {}

std::span<const double> NetworkWorkspace::forward(const NetworkView& net, StateIndex s) {
  const auto x = net.features->row(s);
  const auto nz = net.features->support(s);
  const auto& shape = net.shape;
  const std::size_t in = shape.inputs;
  if (shape.hidden == 0) {
    net.forward(s, out_);
    return out_;
  }
  const std::size_t H = shape.hidden;
  const double* W1 = net.params.data();
  const double* b1 = W1 + H * in;
  const double* W2 = b1 + H;
  const double* b2 = W2 + shape.outputs * H;
  for (std::size_t j = 0; j < H; ++j) {
    double z = b1[j];
    for (auto i : nz) z += W1[j * in + i] * x[i];
    hidden_[j] = std::tanh(z);
  }
  for (std::size_t o = 0; o < shape.outputs; ++o) {
    double z = b2[o];
    for (std::size_t j = 0; j < H; ++j) z += W2[o * H + j] * hidden_[j];
    out_[o] = z;
  }
  return out_;
}

void NetworkWorkspace::backward(const NetworkView& net, StateIndex s,
                                std::span<const double> out_grad, std::span<double> grad) {
  const auto x = net.features->row(s);
  const auto nz = net.features->support(s);
  const auto& shape = net.shape;
  const std::size_t in = shape.inputs;
  if (shape.hidden == 0) {
    double* gW = grad.data();
    double* gb = gW + shape.outputs * in;
    for (std::size_t o = 0; o < shape.outputs; ++o) {
      for (auto i : nz) gW[o * in + i] += out_grad[o] * x[i];
      gb[o] += out_grad[o];
    }
    return;
  }
  const std::size_t H = shape.hidden;
  const double* W2 = net.params.data() + H * in + H;
  double* gW1 = grad.data();
  double* gb1 = gW1 + H * in;
  double* gW2 = gb1 + H;
  double* gb2 = gW2 + shape.outputs * H;
  std::fill(hidden_grad_.begin(), hidden_grad_.end(), 0.0);
  for (std::size_t o = 0; o < shape.outputs; ++o) {
    const double g = out_grad[o];
    if (g == 0.0) continue;
    gb2[o] += g;
    for (std::size_t j = 0; j < H; ++j) {
      gW2[o * H + j] += g * hidden_[j];
      hidden_grad_[j] += g * W2[o * H + j];
    }
  }
  for (std::size_t j = 0; j < H; ++j) {
    const double g = hidden_grad_[j] * (1.0 - hidden_[j] * hidden_[j]);
    gb1[j] += g;
    for (auto i : nz) gW1[j * in + i] += g * x[i];
  }
}

namespace {

// rows x cols block with orthonormal rows or columns (whichever is fewer), scaled by gain
void orthogonal_init(std::span<double> block, std::size_t rows, std::size_t cols, double gain,
                     std::mt19937_64& rng) {
  if (gain == 0.0) {
    std::fill(block.begin(), block.end(), 0.0);
    return;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto big = static_cast<Eigen::Index>(std::max(rows, cols));
  const auto small = static_cast<Eigen::Index>(std::min(rows, cols));
  Eigen::MatrixXd g(big, small);
  for (Eigen::Index c = 0; c < small; ++c) {
    for (Eigen::Index r = 0; r < big; ++r) g(r, c) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // sign correction makes the draw uniform over the orthogonal group
  const Eigen::MatrixXd r = qr.matrixQR();
  for (Eigen::Index c = 0; c < small; ++c) {
    if (r(c, c) < 0.0) q.col(c) *= -1.0;
  }
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double value = rows >= cols ? q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
                                        : q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
      block[i * cols + j] = gain * value;
    }
  }
}

std::vector<double> init_network(const NetworkShape& shape, double hidden_gain, double output_gain,
                                 std::mt19937_64& rng) {
  std::vector<double> params(shape.num_params(), 0.0);
  std::span<double> p(params);
  if (shape.hidden == 0) {
    orthogonal_init(p.first(shape.outputs * shape.inputs), shape.outputs, shape.inputs,
                    output_gain, rng);
    return params;
  }
  const std::size_t H = shape.hidden;
  orthogonal_init(p.first(H * shape.inputs), H, shape.inputs, hidden_gain, rng);
  orthogonal_init(p.subspan(H * shape.inputs + H, shape.outputs * H), shape.outputs, H,
                  output_gain, rng);
  return params;
}

void log_softmax(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - mx);
  const double lse = mx + std::log(total);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

}  // namespace

// ---------------------------------------------------------------- actor-critic

Snapshot::Snapshot(NetworkShape shape, std::vector<double> params,
                   std::shared_ptr<const FeatureMap> features)
    : shape_(shape),
      params_(std::make_shared<const std::vector<double>>(std::move(params))),
      features_(std::move(features)) {}

ActorCritic::ActorCritic(const TabularMdp& mdp, const InitConfig& config, std::uint64_t seed)
    : features_(std::make_shared<const FeatureMap>(FeatureMap::make(config.features, mdp))) {
  const std::size_t dim = features_->dim();
  policy_shape_ = {dim, config.hidden, mdp.num_actions()};
  value_shape_ = {dim, config.hidden, 1};
  std::mt19937_64 rng(seed);
  policy_params_ = init_network(policy_shape_, config.hidden_gain, config.policy_output_gain, rng);
  value_params_ = init_network(value_shape_, config.hidden_gain, config.value_output_gain, rng);
}

ActorCritic::ActorCritic(std::shared_ptr<const FeatureMap> features, NetworkShape policy_shape,
                         NetworkShape value_shape, std::vector<double> policy_params,
                         std::vector<double> value_params)
    : features_(std::move(features)),
      policy_shape_(policy_shape),
      value_shape_(value_shape),
      policy_params_(std::move(policy_params)),
      value_params_(std::move(value_params)) {
  if (policy_params_.size() != policy_shape_.num_params() ||
      value_params_.size() != value_shape_.num_params()) {
    throw std::invalid_argument("ActorCritic: parameter count does not match shape");
  }
  if (policy_shape_.inputs != features_->dim() || value_shape_.inputs != features_->dim() ||
      value_shape_.outputs != 1) {
    throw std::invalid_argument("ActorCritic: network shapes do not match feature map");
  }
}

Snapshot ActorCritic::snapshot() const { return {policy_shape_, policy_params_, features_}; }

void ActorCritic::restore(const Snapshot& snap) {
  if (snap.params().size() != policy_params_.size()) {
    throw std::invalid_argument("restore: snapshot shape mismatch");
  }
  policy_params_ = snap.params();
}

std::vector<double> ActorCritic::values(std::span<const StateIndex> states) const {
  std::vector<double> out(states.size());
  const auto net = value();
  double v = 0.0;
  for (std::size_t t = 0; t < states.size(); ++t) {
    net.forward(states[t], std::span(&v, 1));
    out[t] = v;
  }
  return out;
}

std::vector<double> policy_log_table(const NetworkView& policy) {
  const std::size_t ns = policy.features->num_states();
  const std::size_t na = policy.shape.outputs;
  std::vector<double> table(ns * na);
  std::vector<double> logits(na);
  for (StateIndex s = 0; s < ns; ++s) {
    policy.forward(s, logits);
    log_softmax(logits, std::span(table).subspan(s * na, na));
  }
  return table;
}

std::vector<double> policy_logprobs(const NetworkView& policy, std::span<const StateIndex> states,
                                    std::span<const ActionIndex> actions) {
  if (states.size() != actions.size()) {
    throw std::invalid_argument("policy_logprobs: states and actions differ in length");
  }
  const std::size_t na = policy.shape.outputs;
  std::vector<double> logits(na);
  std::vector<double> logp(na);
  std::vector<double> out(states.size());
  for (std::size_t t = 0; t < states.size(); ++t) {
    policy.forward(states[t], logits);
    log_softmax(logits, logp);
    out[t] = logp[actions[t]];
  }
  return out;
}

TabularPolicy project_to_tabular(const NetworkView& policy, const TabularMdp& mdp) {
  if (policy.features->num_states() != mdp.num_states() ||
      policy.shape.outputs != mdp.num_actions()) {
    throw std::invalid_argument("project_to_tabular: network does not match MDP");
  }
  const auto table = policy_log_table(policy);
  TabularPolicy pi(mdp.num_states(), mdp.num_actions());
  for (StateIndex s = 0; s < mdp.num_states(); ++s) {
    double total = 0.0;
    for (ActionIndex a = 0; a < mdp.num_actions(); ++a) {
      pi(s, a) = std::exp(table[s * mdp.num_actions() + a]);
      total += pi(s, a);
    }
    for (ActionIndex a = 0; a < mdp.num_actions(); ++a) pi(s, a) /= total;
  }
  return pi;
}

// ---------------------------------------------------------------- losses

PolicyLossResult ppo_policy_loss(const NetworkView& policy, std::span<const StateIndex> states,
                                 std::span<const ActionIndex> actions,
                                 std::span<const double> old_logprobs,
                                 std::span<const double> advantages, double clip_eps,
                                 double entropy_coef) {
  const std::size_t n = states.size();
  if (actions.size() != n || old_logprobs.size() != n || advantages.size() != n || n == 0) {
    throw std::invalid_argument("ppo_policy_loss: inputs must be nonempty and equally long");
  }
  if (!(clip_eps > 0.0)) throw std::invalid_argument("ppo_policy_loss: clip_eps must be > 0");
  const std::size_t na = policy.shape.outputs;
  PolicyLossResult result;
  result.gradient.assign(policy.shape.num_params(), 0.0);
  NetworkWorkspace ws(policy.shape);
  std::vector<double> logp(na);
  std::vector<double> out_grad(na);
  const double inv_n = 1.0 / static_cast<double>(n);
  double surrogate = 0.0;
  double entropy = 0.0;
  std::size_t clipped = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const auto logits = ws.forward(policy, states[t]);
    log_softmax(logits, logp);
    const double ratio = std::exp(logp[actions[t]] - old_logprobs[t]);
    const double adv = advantages[t];
    const double unclipped = ratio * adv;
    const double clipped_term = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv;
    const bool use_unclipped = unclipped <= clipped_term;
    surrogate += std::min(unclipped, clipped_term);
    if (!use_unclipped) ++clipped;

    double h = 0.0;
    for (ActionIndex a = 0; a < na; ++a) h -= std::exp(logp[a]) * logp[a];
    entropy += h;

    // d/dlogits of [-min(...) - entropy_coef * H] / n
    for (ActionIndex a = 0; a < na; ++a) {
      const double p = std::exp(logp[a]);
      double g = entropy_coef * p * (logp[a] + h);
      if (use_unclipped) g -= unclipped * ((a == actions[t] ? 1.0 : 0.0) - p);
      out_grad[a] = g * inv_n;
    }
    ws.backward(policy, states[t], out_grad, result.gradient);
  }
  result.surrogate = surrogate * inv_n;
  result.entropy = entropy * inv_n;
  result.clip_fraction = static_cast<double>(clipped) * inv_n;
  result.loss = -result.surrogate - entropy_coef * result.entropy;
  if (!std::isfinite(result.loss)) throw std::runtime_error("ppo_policy_loss: non-finite loss");
  return result;
}

PolicyLossResult ppo_policy_loss(const ActorCritic& ac, const Snapshot& previous_behavior,
                                 const TransitionBatch& batch, std::span<const double> advantages,
                                 double clip_eps, double entropy_coef) {
  const auto old = policy_logprobs(previous_behavior.policy(), batch.states, batch.actions);
  return ppo_policy_loss(ac.policy(), batch.states, batch.actions, old, advantages, clip_eps,
                         entropy_coef);
}

LossResult value_loss(const NetworkView& value, std::span<const StateIndex> states,
                      std::span<const double> targets) {
  const std::size_t n = states.size();
  if (targets.size() != n || n == 0) {
    throw std::invalid_argument("value_loss: inputs must be nonempty and equally long");
  }
  LossResult result;
  result.gradient.assign(value.shape.num_params(), 0.0);
  NetworkWorkspace ws(value.shape);
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double v = ws.forward(value, states[t])[0];
    const double err = v - targets[t];
    total += err * err;
    const double g = err * inv_n;
    ws.backward(value, states[t], std::span(&g, 1), result.gradient);
  }
  result.loss = 0.5 * total * inv_n;
  if (!std::isfinite(result.loss)) throw std::runtime_error("value_loss: non-finite loss");
  return result;
}

double mean_entropy(const NetworkView& policy, std::span<const StateIndex> states) {
  if (states.empty()) return 0.0;
  const std::size_t na = policy.shape.outputs;
  std::vector<double> logits(na);
  std::vector<double> logp(na);
  double total = 0.0;
  for (StateIndex s : states) {
    policy.forward(s, logits);
    log_softmax(logits, logp);
    for (double lp : logp) total -= std::exp(lp) * lp;
  }
  return total / static_cast<double>(states.size());
}

// ---------------------------------------------------------------- optimizer

double clip_by_global_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

AdamOptimizer::AdamOptimizer(std::size_t num_params, AdamConfig config)
    : config_(config), m_(num_params, 0.0), v_(num_params, 0.0), scratch_(num_params, 0.0) {}

void AdamOptimizer::step(std::span<double> params, std::span<const double> gradient,
                         double learning_rate, double max_grad_norm) {
  if (params.size() != m_.size() || gradient.size() != m_.size()) {
    throw std::invalid_argument("AdamOptimizer: size mismatch");
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("AdamOptimizer: learning rate <= 0");
  std::copy(gradient.begin(), gradient.end(), scratch_.begin());
  clip_by_global_norm(scratch_, max_grad_norm);
  ++steps_;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = scratch_[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
    const double m_hat = m_[i] / bias1;
    const double v_hat = v_[i] / bias2;
    params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
  }
}

double linear_schedule(double initial, double final_value, double progress) {
  progress = std::clamp(progress, 0.0, 1.0);
  return initial + (final_value - initial) * progress;
}

// ---------------------------------------------------------------- checkpoints

namespace {

nlohmann::json shape_json(const NetworkShape& s) { return {s.inputs, s.hidden, s.outputs}; }

NetworkShape shape_from(const nlohmann::json& j) {
  return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(), j.at(2).get<std::size_t>()};
}

}  // namespace

nlohmann::json to_json(const ActorCritic& ac) {
  return {
      {"format", "svlab-actor-critic"},
      {"version", 1},
      {"features", ac.features()->kind() == FeatureKind::OneHot ? "one_hot" : "grid_coords"},
      {"policy_shape", shape_json(ac.policy_shape())},
      {"value_shape", shape_json(ac.value_shape())},
      {"policy_params", ac.policy_params()},
      {"value_params", ac.value_params()},
  };
}

ActorCritic actor_critic_from_json(const nlohmann::json& doc, const TabularMdp& mdp) {
  if (doc.at("format").get<std::string>() != "svlab-actor-critic") {
    throw std::invalid_argument("checkpoint: unknown format");
  }
  const auto kind = doc.at("features").get<std::string>() == "one_hot" ? FeatureKind::OneHot
                                                                        : FeatureKind::GridCoords;
  return ActorCritic(std::make_shared<const FeatureMap>(FeatureMap::make(kind, mdp)),
                     shape_from(doc.at("policy_shape")), shape_from(doc.at("value_shape")),
                     doc.at("policy_params").get<std::vector<double>>(),
                     doc.at("value_params").get<std::vector<double>>());
}

}  // namespace svlab
