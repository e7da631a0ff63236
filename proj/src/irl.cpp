#include "prefirl/irl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

#include "prefirl/exact.hpp"
#include "prefirl/format.hpp"

namespace prefirl {

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const double kLogDensityFloor = std::log(kDensityFloor);

}  // namespace

double discriminator_output(double learned_cost, double log_pi) { return sigmoid(-learned_cost - log_pi); }

double discriminator_output(const Discriminator& d, const StochasticPolicy& policy, const Environment& env,
                            const StateActionPair& pair) {
  const double lp = policy.log_prob(env.observe(pair.state, pair.step), pair.action);
  if (!(lp > -std::numeric_limits<double>::infinity())) {
    throw std::domain_error("discriminator_output: pi(a|s) = 0 at step " + std::to_string(pair.step));
  }
  return discriminator_output(d.cost(env.pair_features(pair)), lp);
}

double extract_cost(double d_value, double g_value) {
  if (!(g_value > 0.0)) throw std::domain_error("extract_cost: G(s,a) must be positive");
  return extract_cost_log(d_value, std::log(g_value));
}

double extract_cost_log(double d_value, double log_g) {
  if (!(d_value > 0.0 && d_value < 1.0)) {
    throw std::domain_error("extract_cost: D must lie strictly inside (0, 1), got " + std::to_string(d_value));
  }
  return std::log1p(-d_value) - std::log(d_value) - log_g;
}

double clamp_probability(double d) { return std::clamp(d, kDensityFloor, 1.0 - kDensityFloor); }

LabeledPair label_pair(const Environment& env, const StochasticPolicy& policy, const StateActionPair& pair) {
  const double lp = policy.log_prob(env.observe(pair.state, pair.step), pair.action);
  return {env.pair_features(pair), std::max(lp, kLogDensityFloor)};
}

double discriminator_loss(const Discriminator& d, std::span<const LabeledPair> demos,
                          std::span<const LabeledPair> samples) {
  if (demos.empty() || samples.empty()) throw std::invalid_argument("discriminator_loss: empty batch");
  double demo_term = 0.0, sample_term = 0.0;
  for (const LabeledPair& p : demos) demo_term += softplus(d.cost(p.features) + p.log_pi);
  for (const LabeledPair& p : samples) sample_term += softplus(-d.cost(p.features) - p.log_pi);
  return demo_term / static_cast<double>(demos.size()) + sample_term / static_cast<double>(samples.size());
}

double discriminator_loss_gradient(const Discriminator& d, std::span<const LabeledPair> demos,
                                   std::span<const LabeledPair> samples, std::span<double> grad) {
  if (demos.empty() || samples.empty()) throw std::invalid_argument("discriminator_update: empty batch");
  if (grad.size() != d.cost_head.parameter_count()) throw std::invalid_argument("discriminator gradient: wrong size");
  std::fill(grad.begin(), grad.end(), 0.0);
  ParamFunction::Tape tape;
  double loss = 0.0;
  auto accumulate = [&](std::span<const LabeledPair> batch, bool demo, const char* name) {
    const double scale = 1.0 / static_cast<double>(batch.size());
    double term = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double c = d.cost_head.forward(batch[i].features, tape)[0];
      const double z = -c - batch[i].log_pi;
      const double piece = demo ? softplus(-z) : softplus(z);
      if (!std::isfinite(piece)) {
        throw std::domain_error(std::string("discriminator_update: non-finite loss at ") + name + " pair " +
                                std::to_string(i));
      }
      term += piece;
      const double dz = demo ? 1.0 - sigmoid(z) : -sigmoid(z);
      const double seed = scale * dz;
      d.cost_head.backward(tape, std::span<const double>(&seed, 1), grad);
    }
    loss += term * scale;
  };
  accumulate(demos, true, "demo");
  accumulate(samples, false, "sample");
  return loss;
}

double discriminator_update(Discriminator& d, OptimizerState& opt, std::span<const LabeledPair> demos,
                            std::span<const LabeledPair> samples) {
  std::vector<double> grad(d.cost_head.parameter_count());
  const double loss = discriminator_loss_gradient(d, demos, samples, grad);
  opt.step(d.cost_head.parameters(), grad);
  return loss;
}

CostFunction learned_cost(const Environment& env, const Discriminator& d) {
  return {"learned", [&env, head = d.cost_head](const StateActionPair& p) {
            return head.forward(env.pair_features(p))[0];
          }};
}

nlohmann::json to_json(const IrlConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  j["steps"] = cfg.steps;
  j["batch_episodes"] = cfg.batch_episodes;
  j["demo_pairs"] = cfg.demo_pairs;
  j["disc_steps"] = cfg.disc_steps;
  j["policy_hidden"] = cfg.policy_hidden;
  j["cost_hidden"] = cfg.cost_hidden;
  j["activation"] = to_string(cfg.activation);
  j["policy_step_size"] = cfg.policy_adam.step_size;
  j["cost_step_size"] = cfg.cost_adam.step_size;
  j["entropy_weight"] = cfg.entropy_weight;
  j["discount"] = cfg.discount;
  j["final_step_fraction"] = cfg.final_step_fraction;
  j["init_log_std"] = cfg.init_log_std;
  j["divergence_loss"] = cfg.divergence_loss;
  j["divergence_patience"] = cfg.divergence_patience;
  j["warm_start_steps"] = cfg.warm_start_steps;
  j["average_fraction"] = cfg.average_fraction;
  j["warm_start_batch"] = cfg.warm_start_batch;
  j["warm_start_step_size"] = cfg.warm_start_step_size;
  j["probe_every"] = cfg.probe_every;
  return j;
}

IrlConfig irl_config_from_json(const nlohmann::json& j, IrlConfig cfg, const std::string& section) {
  FieldReader r(j, section);
  r.read("steps", cfg.steps);
  r.read("batch_episodes", cfg.batch_episodes);
  r.read("demo_pairs", cfg.demo_pairs);
  r.read("disc_steps", cfg.disc_steps);
  r.read("policy_hidden", cfg.policy_hidden);
  r.read("cost_hidden", cfg.cost_hidden);
  r.read_with("activation", cfg.activation, activation_from_string);
  r.read("policy_step_size", cfg.policy_adam.step_size);
  r.read("cost_step_size", cfg.cost_adam.step_size);
  r.read("entropy_weight", cfg.entropy_weight);
  r.read("discount", cfg.discount);
  r.read("final_step_fraction", cfg.final_step_fraction);
  r.read("init_log_std", cfg.init_log_std);
  r.read("divergence_loss", cfg.divergence_loss);
  r.read("divergence_patience", cfg.divergence_patience);
  r.read("warm_start_steps", cfg.warm_start_steps);
  r.read("average_fraction", cfg.average_fraction);
  r.read("warm_start_batch", cfg.warm_start_batch);
  r.read("warm_start_step_size", cfg.warm_start_step_size);
  r.read("probe_every", cfg.probe_every);
  r.finish();
  auto positive = [&](const char* key, double v) {
    if (!(v > 0.0)) throw ConfigError(r.path(key), "must be positive");
  };
  positive("steps", cfg.steps);
  positive("batch_episodes", cfg.batch_episodes);
  positive("disc_steps", cfg.disc_steps);
  positive("policy_step_size", cfg.policy_adam.step_size);
  positive("cost_step_size", cfg.cost_adam.step_size);
  if (cfg.warm_start_steps < 0) throw ConfigError(r.path("warm_start_steps"), "must not be negative");
  positive("warm_start_batch", static_cast<double>(cfg.warm_start_batch));
  positive("warm_start_step_size", cfg.warm_start_step_size);
  if (!(cfg.average_fraction >= 0.0 && cfg.average_fraction <= 1.0)) {
    throw ConfigError(r.path("average_fraction"), "must lie in [0, 1]");
  }
  if (cfg.entropy_weight < 0.0) throw ConfigError(r.path("entropy_weight"), "must not be negative");
  if (cfg.discount > 1.0) throw ConfigError(r.path("discount"), "must be at most 1 (negative: environment gamma)");
  if (!(cfg.final_step_fraction > 0.0 && cfg.final_step_fraction <= 1.0)) {
    throw ConfigError(r.path("final_step_fraction"), "must lie in (0, 1]");
  }
  for (std::size_t w : cfg.policy_hidden) if (w == 0) throw ConfigError(r.path("policy_hidden"), "layer widths must be positive");
  for (std::size_t w : cfg.cost_hidden) if (w == 0) throw ConfigError(r.path("cost_hidden"), "layer widths must be positive");
  return cfg;
}

double sampled_cost_objective(std::span<const double> demo_costs, std::span<const double> sample_costs,
                              std::span<const double> sample_log_q) {
  if (demo_costs.empty() || sample_costs.empty()) throw std::invalid_argument("sampled_cost_objective: empty batch");
  if (sample_costs.size() != sample_log_q.size()) throw std::invalid_argument("sampled_cost_objective: size mismatch");
  double demo_mean = 0.0;
  for (double c : demo_costs) demo_mean += c / static_cast<double>(demo_costs.size());
  std::vector<double> log_ratio(sample_costs.size());
  for (std::size_t j = 0; j < sample_costs.size(); ++j) log_ratio[j] = -sample_costs[j] - sample_log_q[j];
  return demo_mean + log_sum_exp(log_ratio) - std::log(static_cast<double>(sample_costs.size()));
}

IrlModel init_irl_model(const Environment& env, const IrlConfig& cfg, std::uint64_t seed) {
  IrlModel m;
  m.policy = StochasticPolicy::for_environment(env, cfg.policy_hidden, cfg.activation, derive_seed(seed, Stream::kInit, 1),
                                               cfg.init_log_std);
  std::vector<std::size_t> sizes{env.pair_feature_dim()};
  sizes.insert(sizes.end(), cfg.cost_hidden.begin(), cfg.cost_hidden.end());
  sizes.push_back(1);
  m.discriminator.cost_head = ParamFunction(sizes, cfg.activation, derive_seed(seed, Stream::kInit, 2));
  return m;
}

void IrlFitReport::write_csv(std::ostream& out) const {
  out << "step,disc_loss,surrogate,entropy,demo_cost,sample_cost,tv\n";
  for (const IrlStepRecord& r : steps) {
    out << r.step << ',' << format_double(r.disc_loss) << ',' << format_double(r.surrogate) << ','
        << format_double(r.entropy) << ',' << format_double(r.demo_cost) << ',' << format_double(r.sample_cost) << ',';
    if (!std::isnan(r.tv)) out << format_double(r.tv);
    out << '\n';
  }
}

std::optional<double> IrlFitReport::final_tv() const {
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    if (!std::isnan(it->tv)) return it->tv;
  }
  return std::nullopt;
}

double warm_start_policy(StochasticPolicy& policy, const TrajectorySet& demos, const Environment& env, int steps,
                         std::size_t batch, double step_size, std::uint64_t seed) {
  std::vector<const StateActionPair*> pairs;
  for (const Trajectory& t : demos.trajectories) {
    for (const StateActionPair& p : t.pairs) pairs.push_back(&p);
  }
  if (pairs.empty()) throw std::invalid_argument("warm_start_policy: demonstrations contain no pairs");
  AdamConfig adam;
  adam.step_size = step_size;
  OptimizerState opt(policy.parameter_count(), adam);
  Rng rng(seed);
  std::vector<double> grad(policy.parameter_count());
  std::vector<double> params;
  double mean_ll = 0.0;
  for (int k = 0; k < steps; ++k) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double ll = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const StateActionPair& p = *pairs[uniform_index(rng, pairs.size())];
      ll += policy.accumulate_log_prob_gradient(env.observe(p.state, p.step), p.action,
                                                -1.0 / static_cast<double>(batch), grad);
    }
    params = policy.parameters();
    opt.step(params, grad);
    policy.set_parameters(params);
    mean_ll = ll / static_cast<double>(batch);
  }
  return mean_ll;
}

IrlFitResult fit_irl(const TrajectorySet& demos, const Environment& env, const IrlConfig& cfg, std::uint64_t seed,
                     const IrlModel* init, const PolicyProbe& probe) {
  if (demos.empty()) throw std::invalid_argument("fit_irl: no demonstrations");
  if (cfg.steps < 1) throw std::invalid_argument("fit_irl: steps must be >= 1");
  std::vector<const StateActionPair*> demo_pairs;
  for (const Trajectory& t : demos.trajectories) {
    for (const StateActionPair& p : t.pairs) demo_pairs.push_back(&p);
  }
  if (demo_pairs.empty()) throw std::invalid_argument("fit_irl: demonstrations contain no pairs");

  IrlFitResult result;
  result.model = init ? *init : init_irl_model(env, cfg, seed);
  StochasticPolicy& policy = result.model.policy;
  Discriminator& disc = result.model.discriminator;
  if (cfg.warm_start_steps > 0) {
    warm_start_policy(policy, demos, env, cfg.warm_start_steps, cfg.warm_start_batch, cfg.warm_start_step_size,
                      derive_seed(seed, Stream::kDemos, 1));
  }

  PolicyGradientConfig pg_cfg;
  pg_cfg.batch_episodes = cfg.batch_episodes;
  pg_cfg.entropy_weight = cfg.entropy_weight;
  pg_cfg.discount = cfg.discount;
  pg_cfg.adam = cfg.policy_adam;
  PolicyGradient pg(env, pg_cfg, policy.parameter_count());
  OptimizerState disc_opt(disc.cost_head.parameter_count(), cfg.cost_adam);

  const int average_from =
      cfg.steps - static_cast<int>(std::ceil(cfg.average_fraction * static_cast<double>(cfg.steps)));
  std::vector<double> policy_mean, disc_mean;
  int averaged = 0;

  double best_surrogate = -std::numeric_limits<double>::infinity();
  int stalled = 0;
  result.report.steps.reserve(static_cast<std::size_t>(cfg.steps));
  for (int k = 0; k < cfg.steps; ++k) {
    const double frac = 1.0 - (1.0 - cfg.final_step_fraction) * static_cast<double>(k) / cfg.steps;
    pg.optimizer().config().step_size = cfg.policy_adam.step_size * frac;
    disc_opt.config().step_size = cfg.cost_adam.step_size * frac;

    const std::uint64_t step_seed = derive_seed(seed, Stream::kFit, static_cast<std::uint64_t>(k));
    std::vector<Rollout> batch = pg.collect(policy, cfg.batch_episodes, derive_seed(step_seed, Stream::kFit, 1));
    std::vector<LabeledPair> samples;
    for (const Rollout& r : batch) {
      for (std::size_t t = 0; t < r.trajectory.size(); ++t) {
        samples.push_back({env.pair_features(r.trajectory.pairs[t]), std::max(r.log_probs[t], kLogDensityFloor)});
      }
    }
    const std::size_t n_demo = cfg.demo_pairs > 0 ? cfg.demo_pairs : samples.size();
    Rng demo_rng(derive_seed(step_seed, Stream::kDemos, 0));
    std::vector<LabeledPair> demo_batch;
    demo_batch.reserve(n_demo);
    for (std::size_t j = 0; j < n_demo; ++j) {
      demo_batch.push_back(label_pair(env, policy, *demo_pairs[uniform_index(demo_rng, demo_pairs.size())]));
    }

    IrlStepRecord rec;
    rec.step = k + 1;
    for (int u = 0; u < cfg.disc_steps; ++u) {
      const double loss = discriminator_update(disc, disc_opt, demo_batch, samples);
      if (u == 0) rec.disc_loss = loss;
    }

    std::vector<std::vector<double>> rewards(batch.size());
    std::size_t n = 0;
    for (std::size_t e = 0; e < batch.size(); ++e) {
      rewards[e].reserve(batch[e].trajectory.size());
      for (std::size_t t = 0; t < batch[e].trajectory.size(); ++t, ++n) {
        const double c = disc.cost(samples[n].features);
        rec.sample_cost += c;
        rewards[e].push_back(-c - samples[n].log_pi);
      }
    }
    rec.sample_cost /= static_cast<double>(std::max<std::size_t>(n, 1));
    for (const LabeledPair& p : demo_batch) rec.demo_cost += disc.cost(p.features);
    rec.demo_cost /= static_cast<double>(demo_batch.size());

    const BatchStats stats = pg.update(policy, batch, rewards);
    rec.surrogate = stats.mean_return;
    rec.entropy = stats.entropy;

    if (probe && ((cfg.probe_every > 0 && rec.step % cfg.probe_every == 0) || rec.step == cfg.steps)) {
      rec.tv = probe(policy);
    }
    if (!std::isfinite(rec.disc_loss) || !std::isfinite(rec.surrogate)) {
      throw DivergenceError("fit_irl: non-finite loss at step " + std::to_string(rec.step));
    }
    if (rec.surrogate > best_surrogate) {
      best_surrogate = rec.surrogate;
      stalled = 0;
    } else if (rec.disc_loss < cfg.divergence_loss) {
      if (++stalled >= cfg.divergence_patience) {
        throw DivergenceError("discriminator overpowered: L_D = " + std::to_string(rec.disc_loss) +
                              " with no policy improvement for " + std::to_string(stalled) + " steps (step " +
                              std::to_string(rec.step) + ")");
      }
    } else {
      stalled = 0;
    }
    result.report.steps.push_back(rec);

    if (k >= average_from) {
      const auto running_mean = [&averaged](std::vector<double>& mean, std::span<const double> now) {
        if (mean.empty()) mean.assign(now.size(), 0.0);
        for (std::size_t i = 0; i < now.size(); ++i) mean[i] += (now[i] - mean[i]) / (averaged + 1);
      };
      running_mean(policy_mean, policy.parameters());
      running_mean(disc_mean, disc.cost_head.parameters());
      ++averaged;
    }
  }
  if (averaged > 1) {
    policy.set_parameters(policy_mean);
    disc.cost_head.set_parameters(disc_mean);
    if (probe) result.report.steps.back().tv = probe(policy);
  }
  return result;
}

PolicyTable tabulate(const TabularMdp& env, const StochasticPolicy& policy) {
  PolicyTable table(env.n_states(), env.n_actions(), env.horizon());
  for (int t = 0; t < env.horizon(); ++t) {
    for (int s = 0; s < env.n_states(); ++s) {
      table.set_row(t, s, policy.action_probabilities(env.observe(tabular_state(s), t)));
    }
  }
  return table;
}

PolicyProbe boltzmann_tv_probe(const TabularMdp& env, const CostFunction& cost) {
  auto dist = std::make_shared<BoltzmannDistribution>(boltzmann_distribution(env, cost));
  return [&env, dist](const StochasticPolicy& policy) {
    const PolicyTable table = tabulate(env, policy);
    return total_variation(induced_distribution(env, table, dist->support), dist->probabilities);
  };
}

void save_discriminator(const std::string& path, const Discriminator& d) {
  save_checkpoint(path, d.cost_head, {{"role", "discriminator"}});
}

Discriminator load_discriminator(const std::string& path) { return {load_checkpoint(path).function}; }

}  // namespace prefirl
