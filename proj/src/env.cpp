#include "prefirl/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace prefirl {

int Action::index() const {
  if (const int* i = std::get_if<int>(&value_)) return *i;
  throw std::logic_error("Action::index on a continuous action");
}

const std::vector<double>& Action::values() const {
  if (const auto* v = std::get_if<std::vector<double>>(&value_)) return *v;
  throw std::logic_error("Action::values on a discrete action");
}

ActionSpace ActionSpace::discrete(int n) {
  if (n < 1) throw std::invalid_argument("discrete action space needs at least one action");
  ActionSpace space;
  space.kind = Kind::kDiscrete;
  space.count = n;
  return space;
}

ActionSpace ActionSpace::box(std::vector<double> low, std::vector<double> high) {
  if (low.empty() || low.size() != high.size()) {
    throw std::invalid_argument("box action space needs matching non-empty bounds");
  }
  for (std::size_t i = 0; i < low.size(); ++i) {
    if (!(low[i] < high[i])) throw std::invalid_argument("box action space needs low < high");
  }
  ActionSpace space;
  space.kind = Kind::kContinuous;
  space.low = std::move(low);
  space.high = std::move(high);
  return space;
}

bool ActionSpace::contains(const Action& a) const {
  if (is_discrete()) return a.is_discrete() && a.index() >= 0 && a.index() < count;
  if (a.is_discrete() || a.values().size() != low.size()) return false;
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

Action ActionSpace::clip(const Action& a) const {
  if (is_discrete()) return a;
  std::vector<double> v = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(v[i], low[i], high[i]);
  return Action::continuous(std::move(v));
}

bool Trajectory::well_formed() const {
  for (std::size_t t = 0; t < pairs.size(); ++t) {
    if (pairs[t].step != static_cast<int>(t)) return false;
  }
  return true;
}

std::vector<double> Environment::pair_features(const StateActionPair& p) const {
  std::vector<double> f = observe(p.state, p.step);
  const ActionSpace& space = action_space();
  if (space.is_discrete()) {
    const std::size_t base = f.size();
    f.resize(base + static_cast<std::size_t>(space.count), 0.0);
    f[base + static_cast<std::size_t>(p.action.index())] = 1.0;
  } else {
    const std::vector<double>& v = p.action.values();
    f.insert(f.end(), v.begin(), v.end());
  }
  return f;
}

std::size_t Environment::pair_feature_dim() const {
  const ActionSpace& space = action_space();
  return observation_dim() + (space.is_discrete() ? static_cast<std::size_t>(space.count) : space.dim());
}

CostFunction Environment::basic() const {
  return {"basic", [this](const StateActionPair& p) { return basic_cost(p.state, p.action); }};
}

CostFunction Environment::target() const {
  return {"target", [this](const StateActionPair& p) { return target_cost(p.state, p.action); }};
}

Trajectory rollout(const Environment& env, const ActionSampler& policy, std::uint64_t seed) {
  Rng rng(seed);
  Trajectory traj;
  traj.env_id = env.id();
  const int horizon = env.horizon();
  traj.pairs.reserve(static_cast<std::size_t>(horizon));
  State s = env.initial_state(rng);
  for (int t = 0; t < horizon; ++t) {
    Action a = policy(s, t, rng);
    if (!env.action_space().contains(a)) {
      throw std::invalid_argument("rollout: policy emitted an out-of-space action at step " +
                                  std::to_string(t));
    }
    State next = env.transition(s, a, rng);
    traj.pairs.push_back({std::move(s), std::move(a), t});
    s = std::move(next);
  }
  return traj;
}

double evaluate_cost(const Trajectory& traj, const CostFunction& cost) {
  double total = 0.0;
  for (const StateActionPair& p : traj.pairs) total += cost(p);
  return total;
}

double trajectory_cost(Trajectory& traj, const CostFunction& cost) {
  const double total = evaluate_cost(traj, cost);
  traj.costs[cost.id] = total;
  return total;
}

double mean_cost(const TrajectorySet& set, const CostFunction& cost) {
  if (set.empty()) throw std::invalid_argument("mean_cost of an empty trajectory set");
  double total = 0.0;
  for (const Trajectory& t : set.trajectories) total += evaluate_cost(t, cost);
  return total / static_cast<double>(set.size());
}

TrajectorySet sample_rollouts(const Environment& env, const ActionSampler& sampler, std::size_t n,
                              std::uint64_t seed) {
  TrajectorySet set;
  set.provenance = {Provenance::Kind::kInitialDemos, 0};
  set.trajectories.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Trajectory t = rollout(env, sampler, derive_seed(seed, Stream::kDemos, k));
    t.origin = {0, static_cast<int>(k)};
    set.trajectories.push_back(std::move(t));
  }
  return set;
}

}  // namespace prefirl
