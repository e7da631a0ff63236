#include "prefirl/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "prefirl/format.hpp"

namespace prefirl {

namespace {

std::vector<int> tabular_key(const Trajectory& t) {
  std::vector<int> key;
  key.reserve(2 * t.pairs.size());
  for (const StateActionPair& p : t.pairs) {
    key.push_back(state_index(p.state));
    key.push_back(p.action.index());
  }
  return key;
}

}  // namespace

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

BoltzmannDistribution boltzmann_distribution(const TabularMdp& env, const CostFunction& cost, double temperature,
                                             std::size_t cap) {
  if (!(temperature > 0.0)) throw std::invalid_argument("boltzmann_distribution: temperature must be positive");
  // With the uniform policy each probability is rho(tau) / |A|^H.
  std::vector<WeightedTrajectory> all = enumerate_trajectories(env, nullptr, cap);
  const double log_policy = env.horizon() * std::log(static_cast<double>(env.n_actions()));
  BoltzmannDistribution dist;
  dist.support.reserve(all.size());
  for (WeightedTrajectory& w : all) {
    const double c = evaluate_cost(w.trajectory, cost);
    dist.costs.push_back(c);
    dist.log_weights.push_back(-c / temperature + std::log(w.probability) + log_policy);
    dist.support.push_back(std::move(w.trajectory));
  }
  dist.log_partition = log_sum_exp(dist.log_weights);
  dist.probabilities.reserve(dist.support.size());
  for (double lw : dist.log_weights) dist.probabilities.push_back(std::exp(lw - dist.log_partition));
  return dist;
}

ExpertPolicy soft_expert(const TabularMdp& env, const CostFunction& cost, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("soft_expert: temperature must be positive");
  const int ns = env.n_states(), na = env.n_actions(), horizon = env.horizon();
  ExpertPolicy expert{PolicyTable(ns, na, horizon), std::vector<double>(static_cast<std::size_t>(ns * horizon))};
  std::vector<double> next_value(static_cast<std::size_t>(ns), 0.0);
  std::vector<double> q(static_cast<std::size_t>(na));
  std::vector<double> row(static_cast<std::size_t>(na));
  for (int t = horizon - 1; t >= 0; --t) {
    std::vector<double> value(static_cast<std::size_t>(ns));
    for (int s = 0; s < ns; ++s) {
      for (int a = 0; a < na; ++a) {
        double continuation = 0.0;
        for (int n = 0; n < ns; ++n) continuation += env.p(s, a, n) * next_value[static_cast<std::size_t>(n)];
        const StateActionPair pair{tabular_state(s), Action::discrete(a), t};
        q[static_cast<std::size_t>(a)] = -cost(pair) / temperature + continuation;
      }
      const double v = log_sum_exp(q);
      for (int a = 0; a < na; ++a) row[static_cast<std::size_t>(a)] = std::exp(q[static_cast<std::size_t>(a)] - v);
      expert.table.set_row(t, s, row);
      value[static_cast<std::size_t>(s)] = v;
      expert.values[static_cast<std::size_t>(t * ns + s)] = v;
    }
    next_value = std::move(value);
  }
  return expert;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("total_variation: support sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

std::vector<double> empirical_distribution(std::span<const Trajectory> samples, std::span<const Trajectory> support) {
  std::map<std::vector<int>, std::size_t> index;
  for (std::size_t i = 0; i < support.size(); ++i) index.emplace(tabular_key(support[i]), i);
  std::vector<double> freq(support.size(), 0.0);
  for (const Trajectory& t : samples) {
    auto it = index.find(tabular_key(t));
    if (it == index.end()) {
      std::string seq;
      for (const StateActionPair& p : t.pairs) {
        seq += "(" + std::to_string(state_index(p.state)) + "," + std::to_string(p.action.index()) + ")";
      }
      throw std::invalid_argument("empirical_distribution: sample outside the support: " + seq);
    }
    freq[it->second] += 1.0;
  }
  if (!samples.empty()) {
    for (double& f : freq) f /= static_cast<double>(samples.size());
  }
  return freq;
}

std::vector<double> induced_distribution(const TabularMdp& env, const PolicyTable& policy,
                                         std::span<const Trajectory> support) {
  std::vector<double> out;
  out.reserve(support.size());
  for (const Trajectory& t : support) out.push_back(trajectory_probability(env, policy, t));
  return out;
}

double expected_cost(std::span<const Trajectory> support, std::span<const double> probabilities,
                     const CostFunction& cost) {
  if (support.size() != probabilities.size()) throw std::invalid_argument("expected_cost: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) acc += probabilities[i] * evaluate_cost(support[i], cost);
  return acc;
}

void write_distribution_csv(std::ostream& out, const BoltzmannDistribution& dist) {
  out << "trajectory_index,cost,probability\n";
  for (std::size_t i = 0; i < dist.support.size(); ++i) {
    out << i << ',' << format_double(dist.costs[i]) << ',' << format_double(dist.probabilities[i]) << '\n';
  }
}

}  // namespace prefirl
