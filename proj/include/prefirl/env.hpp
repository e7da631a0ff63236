#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "prefirl/rng.hpp"

namespace prefirl {

using State = std::vector<double>;

/// A discrete action index or a continuous action vector.
class Action {
 public:
  Action() : value_(0) {}
  static Action discrete(int index) { return Action(index); }
  static Action continuous(std::vector<double> values) { return Action(std::move(values)); }

  bool is_discrete() const { return std::holds_alternative<int>(value_); }
  int index() const;
  const std::vector<double>& values() const;

  bool operator==(const Action&) const = default;

 private:
  explicit Action(int index) : value_(index) {}
  explicit Action(std::vector<double> values) : value_(std::move(values)) {}
  std::variant<int, std::vector<double>> value_;
};

struct ActionSpace {
  enum class Kind { kDiscrete, kContinuous };

  Kind kind = Kind::kDiscrete;
  int count = 0;             // discrete
  std::vector<double> low;   // continuous box
  std::vector<double> high;

  static ActionSpace discrete(int n);
  static ActionSpace box(std::vector<double> low, std::vector<double> high);

  bool is_discrete() const { return kind == Kind::kDiscrete; }
  /// Number of action components (1 for a discrete index).
  std::size_t dim() const { return is_discrete() ? 1 : low.size(); }
  /// Discrete: index in [0, count). Box: right dimension and finite; box
  /// actions saturate at the bounds inside the dynamics.
  bool contains(const Action& a) const;
  /// Box actions clipped to the bounds; discrete actions unchanged.
  Action clip(const Action& a) const;
};

struct StateActionPair {
  State state;
  Action action;
  int step = 0;
};

/// Where a trajectory came from: episode 0 is the initial demonstration set,
/// episode i > 0 is the i-th candidate generation step.
struct Origin {
  int episode = 0;
  int index = 0;
  bool operator==(const Origin&) const = default;
};

struct Trajectory {
  std::string env_id;
  std::vector<StateActionPair> pairs;
  std::map<std::string, double> costs;
  Origin origin;

  std::size_t size() const { return pairs.size(); }
  /// The trajectory is temporally ordered with steps 0, 1, ..., size-1.
  bool well_formed() const;
};

struct Provenance {
  enum class Kind { kInitialDemos, kGenerated, kSelected };
  Kind kind = Kind::kInitialDemos;
  int episode = 0;
};

struct TrajectorySet {
  std::vector<Trajectory> trajectories;
  Provenance provenance;

  std::size_t size() const { return trajectories.size(); }
  bool empty() const { return trajectories.empty(); }
};

/// Per-step cost map with an identifier used as the cache key.
struct CostFunction {
  std::string id;
  std::function<double(const StateActionPair&)> fn;

  double operator()(const StateActionPair& p) const { return fn(p); }
};

/// Reflection M of a mirror-symmetric environment, written on observations
/// and actions: observe(M s, t) = observation_signs * observe(s, t), actions
/// map to action_signs * a, and the dynamics, mu and the basic cost commute
/// with M.
struct Reflection {
  std::vector<double> observation_signs;
  std::vector<double> action_signs;
};

/// Reward-free MDP (S, A, T, gamma, mu) together with the ground-truth basic
/// and target costs. Implementations are immutable after construction.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string id() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual const ActionSpace& action_space() const = 0;
  virtual int horizon() const = 0;
  virtual double gamma() const = 0;

  virtual State initial_state(Rng& rng) const = 0;
  virtual State transition(const State& s, const Action& a, Rng& rng) const = 0;
  virtual bool contains(const State& s) const = 0;

  virtual double basic_cost(const State& s, const Action& a) const = 0;
  virtual double target_cost(const State& s, const Action& a) const = 0;

  /// Input features of the policy at (s, t).
  virtual std::vector<double> observe(const State& s, int step) const = 0;
  virtual std::size_t observation_dim() const = 0;

  /// Input features of the discriminator's cost head. By default the
  /// observation followed by a one-hot action (discrete) or the raw sampled
  /// action vector (box), so the classifier sees the full action density.
  virtual std::vector<double> pair_features(const StateActionPair& p) const;
  virtual std::size_t pair_feature_dim() const;

  /// The environment's mirror symmetry, if it has one.
  virtual std::optional<Reflection> reflection() const { return std::nullopt; }

  CostFunction basic() const;
  CostFunction target() const;
};

using ActionSampler = std::function<Action(const State&, int step, Rng&)>;

/// Horizon-length rollout. Policy and environment noise share one generator
/// seeded with `seed`, so equal seeds give bit-identical trajectories.
Trajectory rollout(const Environment& env, const ActionSampler& policy, std::uint64_t seed);

/// Sum of per-step costs; stores the value under `cost.id` in the cache.
double trajectory_cost(Trajectory& traj, const CostFunction& cost);
/// Same sum without touching the cache.
double evaluate_cost(const Trajectory& traj, const CostFunction& cost);

double mean_cost(const TrajectorySet& set, const CostFunction& cost);

/// `n` independent rollouts; rollout k uses seed derive_seed(seed, Stream::kDemos, k)
/// and gets origin {episode 0, index k}.
TrajectorySet sample_rollouts(const Environment& env, const ActionSampler& sampler, std::size_t n,
                              std::uint64_t seed);

}  // namespace prefirl
