#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefirl/env.hpp"
#include "prefirl/json_fields.hpp"
#include "prefirl/nn.hpp"
#include "prefirl/policy.hpp"
#include "prefirl/tabular.hpp"

namespace prefirl {

/// Floor applied to probabilities and densities before taking logs.
inline constexpr double kDensityFloor = 1e-12;

/// Structured classifier D(s,a) = exp(-c~(s,a)) / (exp(-c~(s,a)) + pi(a|s)).
/// The head outputs the learned cost c~ directly; the paired policy supplies
/// pi(a|s) at evaluation time.
struct Discriminator {
  ParamFunction cost_head;

  double cost(std::span<const double> features) const { return cost_head.forward(features)[0]; }
};

/// D from the learned cost and log pi(a|s): sigmoid(-c~ - log pi).
double discriminator_output(double learned_cost, double log_pi);
/// D at a pair; refuses pairs with pi(a|s) = 0.
double discriminator_output(const Discriminator& d, const StochasticPolicy& policy, const Environment& env,
                            const StateActionPair& pair);

/// c~ = log(1 - D) - log D - log G for 0 < D < 1 and G > 0.
double extract_cost(double d_value, double g_value);
/// Version taking log G, for densities that are only known in log-space.
double extract_cost_log(double d_value, double log_g);
/// D clamped into [kDensityFloor, 1 - kDensityFloor].
double clamp_probability(double d);

/// Discriminator input for one pair: cost-head features and log pi(a|s).
struct LabeledPair {
  std::vector<double> features;
  double log_pi = 0.0;
};

LabeledPair label_pair(const Environment& env, const StochasticPolicy& policy, const StateActionPair& pair);

/// L_D = mean_demos[-log D] + mean_samples[-log(1 - D)].
double discriminator_loss(const Discriminator& d, std::span<const LabeledPair> demos,
                          std::span<const LabeledPair> samples);

/// L_D and its gradient with respect to the cost head, written into `grad`.
double discriminator_loss_gradient(const Discriminator& d, std::span<const LabeledPair> demos,
                                   std::span<const LabeledPair> samples, std::span<double> grad);

/// One optimizer step on L_D with demos labeled 1; returns the loss at the
/// pre-update parameters. Non-finite values abort with the offending indices.
double discriminator_update(Discriminator& d, OptimizerState& opt, std::span<const LabeledPair> demos,
                            std::span<const LabeledPair> samples);

/// The head as a per-step cost map with id "learned".
CostFunction learned_cost(const Environment& env, const Discriminator& d);

/// Importance-sampled MaxEnt objective of a trajectory cost:
///   mean_demos C(tau) + log mean_samples exp(-C(tau)) / q(tau)
/// with the second term as a log-sum-exp. Each sample carries its cost and
/// log q under the proposal it was drawn from. It estimates the negative
/// log-likelihood of the demos under the Boltzmann distribution of C, so it
/// is invariant to constant shifts of C.
double sampled_cost_objective(std::span<const double> demo_costs, std::span<const double> sample_costs,
                              std::span<const double> sample_log_q);

struct IrlConfig {
  int steps = 500;
  int batch_episodes = 16;
  /// Demo pairs per discriminator step; 0 uses the number of sampled pairs.
  std::size_t demo_pairs = 0;
  int disc_steps = 1;
  std::vector<std::size_t> policy_hidden{32, 32};
  std::vector<std::size_t> cost_hidden{32, 32};
  Activation activation = Activation::kTanh;
  AdamConfig policy_adam;
  AdamConfig cost_adam;
  /// Extra -log pi bonus on top of the discriminator reward, which already
  /// contains -log pi.
  double entropy_weight = 0.0;
  double discount = -1.0;  // negative: the environment's gamma
  /// Step sizes decay linearly to this fraction of their initial values.
  double final_step_fraction = 1.0;
  double init_log_std = -0.5;
  double divergence_loss = 0.01;
  int divergence_patience = 200;
  /// Maximum-likelihood steps on demo pairs before the adversarial loop;
  /// under fixed dynamics the trajectory log-likelihood of the demos is the
  /// sum of their per-pair log pi(a|s).
  int warm_start_steps = 0;
  std::size_t warm_start_batch = 256;
  double warm_start_step_size = 1e-3;
  /// Fraction of the final steps over which the parameters of both players
  /// are averaged; the fit returns the averages. 0 returns the last iterate.
  double average_fraction = 0.0;
  /// Interval of the optional distance probe; 0 probes only after the last step.
  int probe_every = 0;
};

nlohmann::json to_json(const IrlConfig& cfg);
/// Applies the keys present in `j` on top of `base`; unknown keys and bad
/// values raise ConfigError naming `section.key`.
IrlConfig irl_config_from_json(const nlohmann::json& j, IrlConfig base = {}, const std::string& section = "irl");

/// Generator and discriminator trained together.
struct IrlModel {
  StochasticPolicy policy;
  Discriminator discriminator;
};

IrlModel init_irl_model(const Environment& env, const IrlConfig& cfg, std::uint64_t seed);

struct IrlStepRecord {
  int step = 0;
  double disc_loss = 0.0;
  double surrogate = 0.0;  // mean return under r = log D - log(1 - D)
  double entropy = 0.0;
  double demo_cost = 0.0;    // mean c~ over the demo batch
  double sample_cost = 0.0;  // mean c~ over the sampled pairs
  double tv = std::numeric_limits<double>::quiet_NaN();
};

struct IrlFitReport {
  std::vector<IrlStepRecord> steps;

  /// step,disc_loss,surrogate,entropy,demo_cost,sample_cost,tv (tv empty
  /// when no oracle was available).
  void write_csv(std::ostream& out) const;
  std::optional<double> final_tv() const;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Distance of a policy to ground truth, evaluated by an exact oracle.
using PolicyProbe = std::function<double(const StochasticPolicy&)>;

struct IrlFitResult {
  IrlModel model;
  IrlFitReport report;
};

/// Maximum-likelihood fit of the policy to the demo pairs; returns the
/// final mean log-likelihood of the last batch.
double warm_start_policy(StochasticPolicy& policy, const TrajectorySet& demos, const Environment& env, int steps,
                         std::size_t batch, double step_size, std::uint64_t seed);

/// Alternates discriminator updates on (demos, fresh samples) and policy
/// updates on r = log D - log(1 - D). Starts from `init` when given, after
/// the optional warm start (seeded by derive_seed(seed, Stream::kDemos, 1)).
/// All draws of step k derive from derive_seed(seed, Stream::kFit, k).
IrlFitResult fit_irl(const TrajectorySet& demos, const Environment& env, const IrlConfig& cfg, std::uint64_t seed,
                     const IrlModel* init = nullptr, const PolicyProbe& probe = {});

/// Time-indexed table of a categorical policy on a tabular MDP.
PolicyTable tabulate(const TabularMdp& env, const StochasticPolicy& policy);

/// TV between the policy's exact induced distribution and the Boltzmann
/// distribution of `cost` on `env`.
PolicyProbe boltzmann_tv_probe(const TabularMdp& env, const CostFunction& cost);

void save_discriminator(const std::string& path, const Discriminator& d);
Discriminator load_discriminator(const std::string& path);

}  // namespace prefirl
