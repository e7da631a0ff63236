#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prefirl/env.hpp"

namespace prefirl {

/// Finite MDP with states encoded as the one-element vector {index}.
/// Observations are one-hot over (step, state), so a policy over
/// observations can represent any time-indexed tabular policy.
class TabularMdp final : public Environment {
 public:
  struct Spec {
    std::string id;
    int n_states = 1;
    int n_actions = 1;
    int horizon = 5;
    double gamma = 0.99;
    std::vector<double> transition;   // [s][a][s'], row-stochastic
    std::vector<double> initial;      // mu over states
    std::vector<double> basic_cost;   // [s][a]
    std::vector<double> target_cost;  // [s][a]
  };

  explicit TabularMdp(Spec spec);

  std::string id() const override { return spec_.id; }
  std::size_t state_dim() const override { return 1; }
  const ActionSpace& action_space() const override { return actions_; }
  int horizon() const override { return spec_.horizon; }
  double gamma() const override { return spec_.gamma; }

  State initial_state(Rng& rng) const override;
  State transition(const State& s, const Action& a, Rng& rng) const override;
  bool contains(const State& s) const override;

  double basic_cost(const State& s, const Action& a) const override;
  double target_cost(const State& s, const Action& a) const override;

  std::vector<double> observe(const State& s, int step) const override;
  std::size_t observation_dim() const override {
    return static_cast<std::size_t>(spec_.n_states * spec_.horizon);
  }
  /// One-hot over (step, state, action): a linear head on these features is
  /// an arbitrary time-indexed tabular cost.
  std::vector<double> pair_features(const StateActionPair& p) const override;
  std::size_t pair_feature_dim() const override {
    return static_cast<std::size_t>(spec_.n_states * spec_.horizon * spec_.n_actions);
  }

  int n_states() const { return spec_.n_states; }
  int n_actions() const { return spec_.n_actions; }
  double p(int s, int a, int next) const {
    return spec_.transition[static_cast<std::size_t>((s * spec_.n_actions + a) * spec_.n_states + next)];
  }
  double initial_probability(int s) const { return spec_.initial[static_cast<std::size_t>(s)]; }
  double basic_cost(int s, int a) const { return spec_.basic_cost[static_cast<std::size_t>(s * spec_.n_actions + a)]; }
  double target_cost(int s, int a) const { return spec_.target_cost[static_cast<std::size_t>(s * spec_.n_actions + a)]; }
  bool deterministic() const;
  const Spec& spec() const { return spec_; }

 private:
  Spec spec_;
  ActionSpace actions_;
};

int state_index(const State& s);
State tabular_state(int index);

/// Time-indexed action distributions pi_t(a|s).
class PolicyTable {
 public:
  PolicyTable(int n_states, int n_actions, int horizon);  // uniform

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  int horizon() const { return horizon_; }

  double prob(int step, int state, int action) const { return probs_[offset(step, state) + static_cast<std::size_t>(action)]; }
  std::span<const double> row(int step, int state) const {
    return {probs_.data() + offset(step, state), static_cast<std::size_t>(n_actions_)};
  }
  void set_row(int step, int state, std::span<const double> probs);

  Action sample(int step, int state, Rng& rng) const;
  /// Sampler usable by `rollout`; keeps a copy of the table.
  ActionSampler sampler() const;

 private:
  std::size_t offset(int step, int state) const {
    return static_cast<std::size_t>((step * n_states_ + state) * n_actions_);
  }
  int n_states_, n_actions_, horizon_;
  std::vector<double> probs_;
};

struct WeightedTrajectory {
  Trajectory trajectory;
  double probability = 0.0;
};

/// Number of horizon-length trajectories with non-zero dynamics weight.
std::size_t count_trajectories(const TabularMdp& env);

/// Exhaustive enumeration in a fixed order (initial state, then actions, then
/// successor states, all ascending). Probability of each trajectory is
/// mu(s0) * prod_t pi_t(a_t|s_t) p(s_{t+1}|s_t,a_t); without a policy the
/// uniform policy is used. Throws when the count exceeds `cap`.
std::vector<WeightedTrajectory> enumerate_trajectories(const TabularMdp& env,
                                                       const PolicyTable* policy = nullptr,
                                                       std::size_t cap = 1'000'000);

/// Probability of `traj` under the tabular policy and the env dynamics.
double trajectory_probability(const TabularMdp& env, const PolicyTable& policy, const Trajectory& traj);

/// Fixtures used by tests, the acceptance suite and the CLI.
std::vector<std::string> tabular_fixture_names();
std::unique_ptr<TabularMdp> make_tabular_fixture(std::string_view name);

/// Random MDP with one-hot transition rows, initial state 0 and costs drawn
/// uniformly from [0, cost_scale).
std::unique_ptr<TabularMdp> random_tabular_mdp(int n_states, int n_actions, int horizon, std::uint64_t seed,
                                               bool deterministic = true, double cost_scale = 1.0);

}  // namespace prefirl
