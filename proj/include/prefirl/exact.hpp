#pragma once

#include <ostream>
#include <span>
#include <vector>

#include "prefirl/tabular.hpp"

namespace prefirl {

/// p(tau) = rho(tau) exp(-C(tau) / T) / Z over every enumerated trajectory,
/// where rho(tau) = mu(s0) prod_t p(s_{t+1}|s_t,a_t) is the dynamics weight
/// (identically 1 on deterministic MDPs with a fixed start state).
struct BoltzmannDistribution {
  std::vector<Trajectory> support;
  std::vector<double> costs;        // C(tau)
  std::vector<double> log_weights;  // -C(tau)/T + log rho(tau)
  double log_partition = 0.0;
  std::vector<double> probabilities;
};

/// Numerically stable log(sum(exp(v))).
double log_sum_exp(std::span<const double> v);

BoltzmannDistribution boltzmann_distribution(const TabularMdp& env, const CostFunction& cost,
                                             double temperature = 1.0, std::size_t cap = 1'000'000);

/// Soft-optimal time-indexed policy from backward soft value iteration:
///   Q_t(s,a) = -c(s,a)/T + sum_s' p(s'|s,a) V_{t+1}(s'),  V_H = 0
///   V_t(s)   = log sum_a exp Q_t(s,a),  pi_t(a|s) = exp(Q_t(s,a) - V_t(s))
/// On deterministic dynamics its trajectory distribution is exactly the
/// Boltzmann distribution of `cost`.
struct ExpertPolicy {
  PolicyTable table;
  std::vector<double> values;  // V_t(s), [t][s], t = 0..H-1
};

ExpertPolicy soft_expert(const TabularMdp& env, const CostFunction& cost, double temperature = 1.0);

/// 0.5 * sum |p_i - q_i|; the supports must be aligned.
double total_variation(std::span<const double> p, std::span<const double> q);

/// Frequency of each support element among `samples` (matched by state and
/// action sequence). Throws when a sample is not in the support.
std::vector<double> empirical_distribution(std::span<const Trajectory> samples, std::span<const Trajectory> support);

/// Probabilities of the support trajectories under `policy` (aligned with `support`).
std::vector<double> induced_distribution(const TabularMdp& env, const PolicyTable& policy,
                                         std::span<const Trajectory> support);

/// Expectation of C(tau) under probabilities aligned with `support`.
double expected_cost(std::span<const Trajectory> support, std::span<const double> probabilities,
                     const CostFunction& cost);

/// CSV with columns trajectory_index, cost, probability.
void write_distribution_csv(std::ostream& out, const BoltzmannDistribution& dist);

}  // namespace prefirl
