#include "svlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace svlab {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> policy_rewards(const TabularMdp& mdp, const TabularPolicy& policy) {
  std::vector<double> r(mdp.num_states(), 0.0);
  for (StateIndex s = 0; s < mdp.num_states(); ++s) {
    for (ActionIndex a = 0; a < mdp.num_actions(); ++a) r[s] += policy(s, a) * mdp.reward(s, a);
  }
  return r;
}

// Q(s,a) = r(s,a) + gamma sum_{s'} P(s'|s,a) V(s')
std::vector<double> backup_q(const TabularMdp& mdp, std::span<const double> v) {
  const std::size_t ns = mdp.num_states();
  const std::size_t na = mdp.num_actions();
  std::vector<double> q(ns * na);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(ns); ++si) {
    const auto s = static_cast<StateIndex>(si);
    for (ActionIndex a = 0; a < na; ++a) {
      double expected = 0.0;
      const auto row = mdp.transition_row(s, a);
      for (StateIndex next = 0; next < ns; ++next) expected += row[next] * v[next];
      q[s * na + a] = mdp.reward(s, a) + mdp.gamma() * expected;
    }
  }
  return q;
}

std::vector<double> solve_values(const TabularMdp& mdp, const TabularPolicy& policy) {
  const std::size_t ns = mdp.num_states();
  const auto kernel = policy_transition_matrix(mdp, policy);
  const auto r = policy_rewards(mdp, policy);
  std::vector<double> v(ns, 0.0);
  if (ns <= kDenseSolveLimit) {
    RowMatrix system = -mdp.gamma() * Eigen::Map<const RowMatrix>(kernel.data(), ns, ns);
    system.diagonal().array() += 1.0;
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(r.data(), ns);
    Eigen::VectorXd x = system.partialPivLu().solve(rhs);
    // one step of iterative refinement keeps the residual near machine precision
    x += system.partialPivLu().solve(rhs - system * x);
    Eigen::Map<Eigen::VectorXd>(v.data(), ns) = x;
    return v;
  }
  std::vector<double> next(ns);
  for (int iter = 0; iter < 1'000'000; ++iter) {
    double change = 0.0;
    for (StateIndex s = 0; s < ns; ++s) {
      double expected = 0.0;
      for (StateIndex t = 0; t < ns; ++t) expected += kernel[s * ns + t] * v[t];
      next[s] = r[s] + mdp.gamma() * expected;
      change = std::max(change, std::abs(next[s] - v[s]));
    }
    v.swap(next);
    if (change * mdp.gamma() / (1.0 - mdp.gamma()) < 1e-12) break;
  }
  return v;
}

}  // namespace

std::vector<double> VisitationDistribution::state_marginal() const {
  const std::size_t ns = num_actions == 0 ? 0 : d.size() / num_actions;
  std::vector<double> out(ns, 0.0);
  for (StateIndex s = 0; s < ns; ++s) {
    for (ActionIndex a = 0; a < num_actions; ++a) out[s] += d[s * num_actions + a];
  }
  return out;
}

std::vector<double> policy_transition_matrix(const TabularMdp& mdp, const TabularPolicy& policy) {
  policy.validate_for(mdp, 1e-9);
  const std::size_t ns = mdp.num_states();
  std::vector<double> kernel(ns * ns, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(ns); ++si) {
    const auto s = static_cast<StateIndex>(si);
    for (ActionIndex a = 0; a < mdp.num_actions(); ++a) {
      const double p = policy(s, a);
      if (p == 0.0) continue;
      const auto row = mdp.transition_row(s, a);
      for (StateIndex next = 0; next < ns; ++next) kernel[s * ns + next] += p * row[next];
    }
  }
  return kernel;
}

ExactEvaluation evaluate_policy_exact(const TabularMdp& mdp, const TabularPolicy& policy) {
  ExactEvaluation out;
  out.num_actions = mdp.num_actions();
  out.v = solve_values(mdp, policy);
  out.q = backup_q(mdp, out.v);
  // V is re-derived from Q so that sum_a pi(a|s) A(s,a) vanishes to rounding
  for (StateIndex s = 0; s < mdp.num_states(); ++s) {
    double v = 0.0;
    for (ActionIndex a = 0; a < mdp.num_actions(); ++a) v += policy(s, a) * out.q_at(s, a);
    out.v[s] = v;
  }
  out.adv.resize(out.q.size());
  for (StateIndex s = 0; s < mdp.num_states(); ++s) {
    for (ActionIndex a = 0; a < mdp.num_actions(); ++a) {
      out.adv[s * out.num_actions + a] = out.q_at(s, a) - out.v[s];
    }
  }
  return out;
}

VisitationDistribution visitation_distribution(const TabularMdp& mdp,
                                               const TabularPolicy& policy) {
  const std::size_t ns = mdp.num_states();
  const auto kernel = policy_transition_matrix(mdp, policy);
  // (I - gamma P_pi^T) d_s = (1 - gamma) e_{s0}
  RowMatrix system = -mdp.gamma() * Eigen::Map<const RowMatrix>(kernel.data(), ns, ns).transpose();
  system.diagonal().array() += 1.0;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ns));
  rhs(static_cast<Eigen::Index>(mdp.initial_state())) = 1.0 - mdp.gamma();
  const auto lu = system.partialPivLu();
  Eigen::VectorXd state_d = lu.solve(rhs);
  state_d += lu.solve(rhs - system * state_d);

  VisitationDistribution out;
  out.num_actions = mdp.num_actions();
  out.d.resize(ns * mdp.num_actions());
  for (StateIndex s = 0; s < ns; ++s) {
    const double mass = std::max(0.0, state_d(static_cast<Eigen::Index>(s)));
    for (ActionIndex a = 0; a < mdp.num_actions(); ++a) {
      out.d[s * out.num_actions + a] = mass * policy(s, a);
    }
  }
  return out;
}

TabularPolicy greedy_policy(std::span<const double> q, std::size_t num_states,
                            std::size_t num_actions, double tie_tolerance) {
  TabularPolicy pi(num_states, num_actions);
  for (StateIndex s = 0; s < num_states; ++s) {
    const auto row = q.subspan(s * num_actions, num_actions);
    const double best = *std::max_element(row.begin(), row.end());
    std::size_t ties = 0;
    for (double value : row) ties += (best - value) <= tie_tolerance ? 1 : 0;
    for (ActionIndex a = 0; a < num_actions; ++a) {
      pi(s, a) = (best - row[a]) <= tie_tolerance ? 1.0 / static_cast<double>(ties) : 0.0;
    }
  }
  return pi;
}

ValueIterationResult value_iteration(const TabularMdp& mdp, std::size_t num_iters,
                                     double tie_tolerance) {
  if (num_iters == 0) throw std::invalid_argument("value_iteration: num_iters must be >= 1");
  const std::size_t ns = mdp.num_states();
  const std::size_t na = mdp.num_actions();
  std::vector<double> v(ns, 0.0);
  std::vector<double> next(ns);
  for (std::size_t iter = 0; iter < num_iters; ++iter) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(ns); ++si) {
      const auto s = static_cast<StateIndex>(si);
      double best = -std::numeric_limits<double>::infinity();
      for (ActionIndex a = 0; a < na; ++a) {
        const auto row = mdp.transition_row(s, a);
        double expected = 0.0;
        for (StateIndex t = 0; t < ns; ++t) expected += row[t] * v[t];
        best = std::max(best, mdp.reward(s, a) + mdp.gamma() * expected);
      }
      next[s] = best;
    }
    v.swap(next);
  }
  const auto q = backup_q(mdp, v);
  return {v, greedy_policy(q, ns, na, tie_tolerance)};
}

ValueIterationResult value_iteration_serial(const TabularMdp& mdp, std::size_t num_iters,
                                            double tie_tolerance) {
  if (num_iters == 0) throw std::invalid_argument("value_iteration: num_iters must be >= 1");
  const std::size_t ns = mdp.num_states();
  const std::size_t na = mdp.num_actions();
  std::vector<double> v(ns, 0.0);
  std::vector<double> next(ns);
  std::vector<double> q(ns * na);
  for (std::size_t iter = 0; iter <= num_iters; ++iter) {
    for (StateIndex s = 0; s < ns; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (ActionIndex a = 0; a < na; ++a) {
        const auto row = mdp.transition_row(s, a);
        double expected = 0.0;
        for (StateIndex t = 0; t < ns; ++t) expected += row[t] * v[t];
        q[s * na + a] = mdp.reward(s, a) + mdp.gamma() * expected;
        best = std::max(best, q[s * na + a]);
      }
      next[s] = best;
    }
    if (iter == num_iters) break;  // last pass only fills q
    v.swap(next);
  }
  return {v, greedy_policy(q, ns, na, tie_tolerance)};
}

double performance_difference(const TabularMdp& mdp, const TabularPolicy& pi,
                              const TabularPolicy& pi_prime, double tol) {
  const auto eval = evaluate_policy_exact(mdp, pi);
  const auto eval_prime = evaluate_policy_exact(mdp, pi_prime);
  const auto d_prime = visitation_distribution(mdp, pi_prime);
  double expected_adv = 0.0;
  for (std::size_t i = 0; i < d_prime.d.size(); ++i) expected_adv += d_prime.d[i] * eval.adv[i];
  const double pdl = expected_adv / (1.0 - mdp.gamma());
  const StateIndex s0 = mdp.initial_state();
  const double gap = eval_prime.v[s0] - eval.v[s0];
  if (std::abs(pdl - gap) > tol) {
    throw std::logic_error("performance difference identity violated: " + std::to_string(pdl) +
                           " vs " + std::to_string(gap));
  }
  return pdl;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_distance: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - q[i]);
  return 0.5 * total;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    total += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(total, 0.0);
}

std::vector<double> reset_chain_stationary(const TabularMdp& mdp, const TabularPolicy& policy) {
  const std::size_t ns = mdp.num_states();
  auto kernel = policy_transition_matrix(mdp, policy);
  for (StateIndex s = 0; s < ns; ++s) {
    for (StateIndex t = 0; t < ns; ++t) {
      if (mdp.is_terminal(t) && kernel[s * ns + t] > 0.0) {
        kernel[s * ns + mdp.initial_state()] += kernel[s * ns + t];
        kernel[s * ns + t] = 0.0;
      }
    }
  }
  // (P^T - I) x = 0 with the last equation replaced by sum(x) = 1
  RowMatrix system = Eigen::Map<const RowMatrix>(kernel.data(), ns, ns).transpose();
  system.diagonal().array() -= 1.0;
  system.row(static_cast<Eigen::Index>(ns) - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ns));
  rhs(static_cast<Eigen::Index>(ns) - 1) = 1.0;
  Eigen::VectorXd x = system.fullPivLu().solve(rhs);
  std::vector<double> out(ns * mdp.num_actions());
  for (StateIndex s = 0; s < ns; ++s) {
    for (ActionIndex a = 0; a < mdp.num_actions(); ++a) {
      out[s * mdp.num_actions() + a] = std::max(0.0, x(static_cast<Eigen::Index>(s))) * policy(s, a);
    }
  }
  return out;
}

}  // namespace svlab
