#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefirl/env.hpp"
#include "prefirl/irl.hpp"
#include "prefirl/policy.hpp"
#include "prefirl/tabular.hpp"
#include "prefirl/transfer.hpp"

namespace prefirl {

/// Direct policy-gradient training against a known cost, used for the
/// continuous demonstrations and baselines.
struct ExpertConfig {
  int steps = 2000;
  int batch_episodes = 16;
  double step_size = 3e-3;
  double entropy_weight = 0.1;
  std::vector<std::size_t> hidden{32, 32};
  double init_log_std = -1.0;
  /// Symmetrize the policy under the environment's reflection, which keeps
  /// both modes of a mirror-symmetric cost.
  bool symmetric = false;
};

nlohmann::json to_json(const ExpertConfig& cfg);
ExpertConfig expert_config_from_json(const nlohmann::json& j, ExpertConfig base, const std::string& section);

/// Everything a run needs besides the seed, with per-environment defaults.
struct ExperimentSetup {
  IrlConfig irl;
  TransferConfig transfer;
  ExpertConfig basic_expert;
  ExpertConfig target_expert;
  std::size_t demos = 100;
  std::size_t eval_episodes = 200;
};

ExperimentSetup default_setup(const Environment& env);

/// Policy trained on `cost`; all draws derive from `seed`.
StochasticPolicy train_expert(const Environment& env, const CostFunction& cost, const ExpertConfig& cfg,
                              std::uint64_t seed);

/// Initial demonstrations: tabular environments sample the soft-optimal policy of the basic
/// cost; continuous ones roll out an expert trained on it (seed
/// derive_seed(seed, kExpert, 0)). Rollout k uses derive_seed(seed, kDemos, k).
TrajectorySet initial_demos(const Environment& env, const ExperimentSetup& setup, std::uint64_t seed);

/// Mean target cost of a policy: exact on tabular environments, otherwise
/// over `episodes` rollouts seeded derive_seed(seed, kEval, j).
double mean_target_cost(const Environment& env, const StochasticPolicy& policy, std::size_t episodes,
                        std::uint64_t seed);

/// Target-task reference: the exact Boltzmann expectation of C_tar on tabular
/// environments, otherwise an expert trained directly on the target cost
/// (seed derive_seed(seed, kExpert, 1)) and evaluated like `mean_target_cost`.
double target_baseline(const Environment& env, const ExperimentSetup& setup, std::uint64_t seed);

}  // namespace prefirl
