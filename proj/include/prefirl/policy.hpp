#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prefirl/env.hpp"
#include "prefirl/nn.hpp"

namespace prefirl {

enum class PolicyKind { kCategorical, kGaussian };

std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& name);

/// pi(a|s) over environment observations. Categorical policies read logits
/// from the head. Gaussian policies squash the head output into the action
/// box with tanh to get the mean and keep a free log-std vector, clamped to
/// [kMinLogStd, kMaxLogStd] wherever it is used.
class StochasticPolicy {
 public:
  static constexpr double kMinLogStd = -5.0;
  static constexpr double kMaxLogStd = 2.0;

  StochasticPolicy() = default;
  static StochasticPolicy categorical(ParamFunction head);
  static StochasticPolicy gaussian(ParamFunction head, std::vector<double> log_std, ActionSpace space);
  /// Head sized for `env` with the given hidden layers; gaussian heads start
  /// with log-std `init_log_std`. The output layer is scaled by 0.1 so the
  /// initial policy is close to uniform / zero-mean.
  static StochasticPolicy for_environment(const Environment& env, const std::vector<std::size_t>& hidden,
                                          Activation activation, std::uint64_t seed, double init_log_std = -0.5);

  /// Gaussian only: returns a policy whose pre-squash mean is symmetrized
  /// under `r`, m'(o) = (m(o) + action_signs * m(observation_signs * o)) / 2,
  /// so pi(M a | M s) = pi(a | s) by construction.
  StochasticPolicy with_reflection(Reflection r) const;
  const std::optional<Reflection>& reflection() const { return reflection_; }

  PolicyKind kind() const { return kind_; }
  const ParamFunction& head() const { return head_; }
  std::size_t observation_dim() const { return head_.input_dim(); }
  std::size_t action_dim() const { return kind_ == PolicyKind::kGaussian ? log_std_.size() : 1; }
  int n_actions() const { return static_cast<int>(head_.output_dim()); }
  const std::vector<double>& raw_log_std() const { return log_std_; }
  double log_std(std::size_t i) const;
  /// Gaussian mean of component i given the head output.
  double mean(std::span<const double> out, std::size_t i) const;

  /// Head parameters followed by the log-std vector.
  std::size_t parameter_count() const { return head_.parameter_count() + log_std_.size(); }
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> p);

  /// Categorical only: softmax of the logits.
  std::vector<double> action_probabilities(std::span<const double> obs) const;
  double log_prob(std::span<const double> obs, const Action& a) const;
  Action sample(std::span<const double> obs, Rng& rng) const;
  /// Same draw as `sample`, also returning log pi(a|s).
  Action sample(std::span<const double> obs, Rng& rng, double& log_prob) const;
  /// log pi(a|s); adds coef * d log pi(a|s) / d params into `grad`.
  double accumulate_log_prob_gradient(std::span<const double> obs, const Action& a, double coef,
                                      std::span<double> grad) const;

  /// Sampler for `rollout`; holds a copy of the policy and refers to `env`.
  ActionSampler sampler(const Environment& env) const;

 private:
  void check_action(const Action& a) const;
  std::vector<double> head_output(std::span<const double> obs) const;
  std::vector<double> reflect_observation(std::span<const double> obs) const;

  PolicyKind kind_ = PolicyKind::kCategorical;
  ParamFunction head_;
  std::vector<double> log_std_;
  ActionSpace space_;
  std::optional<Reflection> reflection_;
};

/// Mean of -log pi(a|s) with a ~ pi(.|s), `samples_per_state` draws per state.
double entropy_estimate(const StochasticPolicy& policy, std::span<const std::vector<double>> observations, Rng& rng,
                        int samples_per_state = 1);

enum class Baseline { kMovingAverage, kNone };

struct PolicyGradientConfig {
  int batch_episodes = 16;
  double entropy_weight = 0.1;
  Baseline baseline = Baseline::kMovingAverage;
  double baseline_decay = 0.9;
  /// Reward-to-go discount; a negative value means the environment's gamma.
  double discount = -1.0;
  AdamConfig adam;
};

/// One sampled episode with the policy inputs and log-densities recorded
/// at sampling time.
struct Rollout {
  Trajectory trajectory;
  std::vector<std::vector<double>> observations;
  std::vector<double> log_probs;
};

/// Same draws as `rollout(env, policy.sampler(env), seed)`.
Rollout sample_rollout(const Environment& env, const StochasticPolicy& policy, std::uint64_t seed);

struct BatchStats {
  double mean_return = 0.0;  // undiscounted sum of rewards, entropy bonus excluded
  double entropy = 0.0;      // mean -log pi over visited pairs
};

/// Per-step reward r(s, a) given the pair, its observation and log pi(a|s).
using RewardFn = std::function<double(const StateActionPair&, std::span<const double> obs, double log_prob)>;

/// Score-function policy optimizer: reward-to-go, time-indexed moving-average
/// baseline, loss -(1/B) sum_episodes sum_t A_t log pi(a_t|s_t).
class PolicyGradient {
 public:
  PolicyGradient(const Environment& env, PolicyGradientConfig cfg, std::size_t n_params);

  const PolicyGradientConfig& config() const { return cfg_; }
  OptimizerState& optimizer() { return opt_; }

  /// `n` rollouts; rollout j uses derive_seed(seed, Stream::kFit, j).
  std::vector<Rollout> collect(const StochasticPolicy& policy, int n, std::uint64_t seed) const;
  /// One parameter update from rewards[episode][step]. Throws on a
  /// non-finite reward without touching the policy.
  BatchStats update(StochasticPolicy& policy, const std::vector<Rollout>& batch,
                    const std::vector<std::vector<double>>& rewards);
  /// collect + evaluate `reward` + update.
  BatchStats step(StochasticPolicy& policy, const RewardFn& reward, std::uint64_t seed);

 private:
  const Environment& env_;
  PolicyGradientConfig cfg_;
  OptimizerState opt_;
  std::vector<double> baseline_;
  bool baseline_ready_ = false;
};

/// Checkpoint with the head, the log-std vector as extra data and a
/// "policy_kind" header field.
void save_policy(const std::string& path, const StochasticPolicy& policy, const nlohmann::json& fields = {});
StochasticPolicy load_policy(const std::string& path, const Environment& env);

}  // namespace prefirl
