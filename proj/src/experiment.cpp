#include "prefirl/experiment.hpp"

#include "prefirl/exact.hpp"

namespace prefirl {

nlohmann::json to_json(const ExpertConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  j["steps"] = cfg.steps;
  j["batch_episodes"] = cfg.batch_episodes;
  j["step_size"] = cfg.step_size;
  j["entropy_weight"] = cfg.entropy_weight;
  j["hidden"] = cfg.hidden;
  j["init_log_std"] = cfg.init_log_std;
  j["symmetric"] = cfg.symmetric;
  return j;
}

ExpertConfig expert_config_from_json(const nlohmann::json& j, ExpertConfig cfg, const std::string& section) {
  FieldReader r(j, section);
  r.read("steps", cfg.steps);
  r.read("batch_episodes", cfg.batch_episodes);
  r.read("step_size", cfg.step_size);
  r.read("entropy_weight", cfg.entropy_weight);
  r.read("hidden", cfg.hidden);
  r.read("init_log_std", cfg.init_log_std);
  r.read("symmetric", cfg.symmetric);
  r.finish();
  if (cfg.steps < 0) throw ConfigError(r.path("steps"), "must not be negative");
  if (cfg.batch_episodes < 1) throw ConfigError(r.path("batch_episodes"), "must be at least 1");
  if (!(cfg.step_size > 0.0)) throw ConfigError(r.path("step_size"), "must be positive");
  if (cfg.entropy_weight < 0.0) throw ConfigError(r.path("entropy_weight"), "must not be negative");
  return cfg;
}

ExperimentSetup default_setup(const Environment& env) {
  ExperimentSetup s;
  if (dynamic_cast<const TabularMdp*>(&env)) {
    s.irl.policy_hidden = {};
    s.irl.cost_hidden = {};
    s.irl.policy_adam.step_size = 0.02;
    s.irl.cost_adam.step_size = 0.05;
    s.irl.batch_episodes = 256;
    s.irl.steps = 8000;
    s.irl.final_step_fraction = 0.005;
    s.irl.discount = 1.0;
    s.irl.warm_start_steps = 1000;
    s.irl.warm_start_step_size = 0.05;
    s.irl.average_fraction = 0.5;
    s.transfer.inner_steps = 2000;
    s.demos = 1000;
    return s;
  }
  s.irl.cost_adam.step_size = 3e-3;
  s.irl.policy_adam.step_size = 3e-4;
  s.irl.final_step_fraction = 0.1;
  s.irl.init_log_std = -1.0;
  s.irl.steps = 1000;
  s.irl.warm_start_steps = 4000;
  s.irl.warm_start_step_size = 3e-3;
  s.transfer.inner_steps = 1000;
  s.basic_expert.symmetric = true;
  s.target_expert.steps = 1500;
  s.demos = 100;
  return s;
}

StochasticPolicy train_expert(const Environment& env, const CostFunction& cost, const ExpertConfig& cfg,
                              std::uint64_t seed) {
  StochasticPolicy policy = StochasticPolicy::for_environment(env, cfg.hidden, Activation::kTanh,
                                                              derive_seed(seed, Stream::kInit, 0), cfg.init_log_std);
  if (cfg.symmetric) {
    const auto r = env.reflection();
    if (!r) throw std::invalid_argument("train_expert: '" + env.id() + "' has no reflection symmetry");
    policy = policy.with_reflection(*r);
  }
  PolicyGradientConfig pg_cfg;
  pg_cfg.batch_episodes = cfg.batch_episodes;
  pg_cfg.entropy_weight = cfg.entropy_weight;
  pg_cfg.adam.step_size = cfg.step_size;
  PolicyGradient pg(env, pg_cfg, policy.parameter_count());
  const RewardFn reward = [&cost](const StateActionPair& p, std::span<const double>, double) { return -cost(p); };
  for (int k = 0; k < cfg.steps; ++k) pg.step(policy, reward, derive_seed(seed, Stream::kExpert, static_cast<std::uint64_t>(k)));
  return policy;
}

TrajectorySet initial_demos(const Environment& env, const ExperimentSetup& setup, std::uint64_t seed) {
  TrajectorySet demos;
  if (const auto* mdp = dynamic_cast<const TabularMdp*>(&env)) {
    demos = sample_rollouts(env, soft_expert(*mdp, env.basic()).table.sampler(), setup.demos, seed);
  } else {
    const StochasticPolicy expert =
        train_expert(env, env.basic(), setup.basic_expert, derive_seed(seed, Stream::kExpert, 0));
    demos = sample_rollouts(env, expert.sampler(env), setup.demos, seed);
  }
  const CostFunction basic = env.basic(), target = env.target();
  for (Trajectory& t : demos.trajectories) {
    trajectory_cost(t, basic);
    trajectory_cost(t, target);
  }
  return demos;
}

double mean_target_cost(const Environment& env, const StochasticPolicy& policy, std::size_t episodes,
                        std::uint64_t seed) {
  if (const auto* mdp = dynamic_cast<const TabularMdp*>(&env)) {
    const PolicyTable table = tabulate(*mdp, policy);
    std::vector<Trajectory> support;
    for (WeightedTrajectory& w : enumerate_trajectories(*mdp)) support.push_back(std::move(w.trajectory));
    return expected_cost(support, induced_distribution(*mdp, table, support), env.target());
  }
  if (episodes == 0) throw std::invalid_argument("mean_target_cost: no evaluation episodes");
  const CostFunction target = env.target();
  double total = 0.0;
  for (std::size_t j = 0; j < episodes; ++j) {
    total += evaluate_cost(sample_rollout(env, policy, derive_seed(seed, Stream::kEval, j)).trajectory, target);
  }
  return total / static_cast<double>(episodes);
}

double target_baseline(const Environment& env, const ExperimentSetup& setup, std::uint64_t seed) {
  if (const auto* mdp = dynamic_cast<const TabularMdp*>(&env)) {
    const BoltzmannDistribution dist = boltzmann_distribution(*mdp, env.target());
    return expected_cost(dist.support, dist.probabilities, env.target());
  }
  const StochasticPolicy expert =
      train_expert(env, env.target(), setup.target_expert, derive_seed(seed, Stream::kExpert, 1));
  return mean_target_cost(env, expert, setup.eval_episodes, seed);
}

}  // namespace prefirl
