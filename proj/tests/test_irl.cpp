#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "prefirl/exact.hpp"
#include "prefirl/experiment.hpp"
#include "prefirl/irl.hpp"

using namespace prefirl;

namespace {

TrajectorySet expert_demos(const TabularMdp& env, std::size_t n, std::uint64_t seed) {
  return sample_rollouts(env, soft_expert(env, env.basic()).table.sampler(), n, seed);
}

Discriminator linear_discriminator(std::size_t dim, std::uint64_t seed) {
  return {ParamFunction({dim, 1}, Activation::kTanh, seed)};
}

}  // namespace

TEST_CASE("discriminator output") {
  CHECK(discriminator_output(0.0, 0.0) == 0.5);
  CHECK(discriminator_output(800.0, std::log(0.5)) < 1e-300);
  const double d = discriminator_output(3.0, std::log(0.3));
  CHECK(d == doctest::Approx(std::exp(-3.0) / (std::exp(-3.0) + 0.3)).epsilon(1e-14));
  CHECK(extract_cost(d, 0.3) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("cost extraction") {
  CHECK(extract_cost(0.5, 1.0) == 0.0);
  CHECK(extract_cost(0.5, 0.1) == doctest::Approx(2.302585).epsilon(1e-7));
  CHECK_THROWS_AS(extract_cost(0.0, 0.5), std::domain_error);
  CHECK_THROWS_AS(extract_cost(1.0, 0.5), std::domain_error);
  CHECK_THROWS_AS(extract_cost(0.5, 0.0), std::domain_error);

  Rng rng(12);
  for (int k = 0; k < 100; ++k) {
    const double c = 4.0 * uniform01(rng) - 2.0;
    const double log_z = 2.0 * uniform01(rng) - 1.0;
    const double g = 0.01 + 0.99 * uniform01(rng);
    const double d = discriminator_output(c + log_z, std::log(g));
    CHECK(std::abs(extract_cost(d, g) - (c + log_z)) <= 1e-9);
  }
}

TEST_CASE("discriminator loss gradient matches finite differences") {
  Rng rng(5);
  for (const std::vector<std::size_t> hidden : {std::vector<std::size_t>{}, std::vector<std::size_t>{32, 32}}) {
    for (int draw = 0; draw < 20; ++draw) {
      std::vector<std::size_t> sizes{4};
      sizes.insert(sizes.end(), hidden.begin(), hidden.end());
      sizes.push_back(1);
      Discriminator d{ParamFunction(sizes, Activation::kTanh, rng())};
      std::vector<LabeledPair> demos(6), samples(5);
      for (auto* batch : {&demos, &samples}) {
        for (LabeledPair& p : *batch) {
          p.features = {uniform01(rng), uniform01(rng) - 0.5, 2 * uniform01(rng), -uniform01(rng)};
          p.log_pi = -3.0 * uniform01(rng);
        }
      }
      std::vector<double> analytic(d.cost_head.parameter_count());
      discriminator_loss_gradient(d, demos, samples, analytic);
      const double h = 1e-5;
      for (std::size_t i = 0; i < analytic.size(); ++i) {
        Discriminator up = d, down = d;
        up.cost_head.parameters()[i] += h;
        down.cost_head.parameters()[i] -= h;
        const double numeric =
            (discriminator_loss(up, demos, samples) - discriminator_loss(down, demos, samples)) / (2 * h);
        CHECK(std::abs(numeric - analytic[i]) / std::max(1.0, std::abs(numeric) + std::abs(analytic[i])) <= 1e-4);
      }
    }
  }
}

TEST_CASE("discriminator training") {
  SUBCASE("indistinguishable batches settle at D = 1/2") {
    Rng rng(3);
    std::vector<LabeledPair> same(64);
    for (LabeledPair& p : same) {
      p.features = {uniform01(rng), uniform01(rng)};
      p.log_pi = std::log(0.5);
    }
    Discriminator d{ParamFunction({2, 8, 1}, Activation::kTanh, 4)};
    AdamConfig cfg;
    cfg.step_size = 0.01;
    OptimizerState opt(d.cost_head.parameter_count(), cfg);
    for (int k = 0; k < 2000; ++k) discriminator_update(d, opt, same, same);
    for (const LabeledPair& p : same) CHECK(std::abs(discriminator_output(d.cost(p.features), p.log_pi) - 0.5) <= 0.05);
    CHECK(discriminator_loss(d, same, same) == doctest::Approx(std::log(4.0)).epsilon(1e-3));
  }
  SUBCASE("separable one-dimensional data") {
    Rng rng(6);
    std::vector<LabeledPair> demos(100), samples(100);
    for (LabeledPair& p : demos) p = {{-0.1 - 0.9 * uniform01(rng)}, 0.0};
    for (LabeledPair& p : samples) p = {{0.1 + 0.9 * uniform01(rng)}, 0.0};
    Discriminator d = linear_discriminator(1, 7);
    AdamConfig cfg;
    cfg.step_size = 0.01;
    OptimizerState opt(d.cost_head.parameter_count(), cfg);
    for (int k = 0; k < 2000; ++k) discriminator_update(d, opt, demos, samples);
    int correct = 0;
    for (const LabeledPair& p : demos) correct += discriminator_output(d.cost(p.features), p.log_pi) > 0.5;
    for (const LabeledPair& p : samples) correct += discriminator_output(d.cost(p.features), p.log_pi) < 0.5;
    CHECK(correct / 200.0 >= 0.99);
  }
  SUBCASE("zero step size changes nothing") {
    Discriminator d = linear_discriminator(2, 8);
    const std::vector<double> before(d.cost_head.parameters().begin(), d.cost_head.parameters().end());
    AdamConfig cfg;
    cfg.step_size = 0.0;
    OptimizerState opt(d.cost_head.parameter_count(), cfg);
    const std::vector<LabeledPair> demos{{{1.0, 0.0}, -0.5}}, samples{{{0.0, 1.0}, -1.5}};
    discriminator_update(d, opt, demos, samples);
    CHECK(std::vector<double>(d.cost_head.parameters().begin(), d.cost_head.parameters().end()) == before);
  }
  SUBCASE("non-finite inputs name the pair") {
    Discriminator d = linear_discriminator(1, 8);
    OptimizerState opt(d.cost_head.parameter_count(), AdamConfig{});
    const std::vector<LabeledPair> demos{{{1.0}, -0.5}}, samples{{{0.0}, -0.1}, {{NAN}, -0.1}};
    CHECK_THROWS_WITH(discriminator_update(d, opt, demos, samples), doctest::Contains("sample pair 1"));
  }
}

TEST_CASE("discriminator output refuses zero-probability pairs") {
  auto env = make_tabular_fixture("bandit2");
  ParamFunction head({env->observation_dim(), 2}, Activation::kTanh, 0);
  std::vector<double> p(head.parameter_count(), 0.0);
  p[3] = -std::numeric_limits<double>::infinity();  // bias of action 1
  head.set_parameters(p);
  const StochasticPolicy policy = StochasticPolicy::categorical(head);
  const Discriminator d = linear_discriminator(env->pair_feature_dim(), 1);
  const StateActionPair pair{tabular_state(0), Action::discrete(1), 0};
  CHECK_THROWS_AS(discriminator_output(d, policy, *env, pair), std::domain_error);
}

TEST_CASE("fit_irl recovers the Boltzmann distribution on two_state") {
  auto env = make_tabular_fixture("two_state");
  const ExperimentSetup setup = default_setup(*env);
  const TrajectorySet demos = expert_demos(*env, setup.demos, 1);
  const IrlFitResult fit = fit_irl(demos, *env, setup.irl, 2, nullptr, boltzmann_tv_probe(*env, env->basic()));
  REQUIRE(fit.report.final_tv());
  CHECK(*fit.report.final_tv() <= 0.05);
}

TEST_CASE("learned cost differences match the true ones on the bandit") {
  auto env = make_tabular_fixture("bandit2");
  const ExperimentSetup setup = default_setup(*env);
  const TrajectorySet demos = expert_demos(*env, setup.demos, 3);
  const IrlFitResult fit = fit_irl(demos, *env, setup.irl, 4);
  const CostFunction learned = learned_cost(*env, fit.model.discriminator);
  const auto d = boltzmann_distribution(*env, env->basic());
  const double learned_gap = evaluate_cost(d.support[1], learned) - evaluate_cost(d.support[0], learned);
  const double true_gap = d.costs[1] - d.costs[0];
  CHECK(learned_gap > 0.0);
  CHECK(std::abs(learned_gap - true_gap) <= 0.1);
}

TEST_CASE("demos from the generator itself are a fixed point") {
  auto env = make_tabular_fixture("two_state");
  IrlConfig cfg = default_setup(*env).irl;
  cfg.steps = 300;
  const IrlModel start = init_irl_model(*env, cfg, 9);
  const TrajectorySet demos = sample_rollouts(*env, start.policy.sampler(*env), 1000, 10);
  const PolicyTable start_table = tabulate(*env, start.policy);
  const auto support = enumerate_trajectories(*env);
  std::vector<Trajectory> traj;
  for (const auto& w : support) traj.push_back(w.trajectory);
  const std::vector<double> start_dist = induced_distribution(*env, start_table, traj);
  const PolicyProbe drift = [&](const StochasticPolicy& p) {
    return total_variation(induced_distribution(*env, tabulate(*env, p), traj), start_dist);
  };
  const IrlFitResult fit = fit_irl(demos, *env, cfg, 9, &start, drift);
  double late_loss = 0.0;
  for (std::size_t k = fit.report.steps.size() - 50; k < fit.report.steps.size(); ++k) late_loss += fit.report.steps[k].disc_loss;
  CHECK(late_loss / 50 == doctest::Approx(std::log(4.0)).epsilon(0.05));
  CHECK(*fit.report.final_tv() <= 0.05);
}

TEST_CASE("fit_irl is deterministic and reports every step") {
  auto env = make_tabular_fixture("bandit2");
  IrlConfig cfg = default_setup(*env).irl;
  cfg.steps = 50;
  const TrajectorySet demos = expert_demos(*env, 50, 1);
  std::ostringstream a, b;
  fit_irl(demos, *env, cfg, 7).report.write_csv(a);
  fit_irl(demos, *env, cfg, 7).report.write_csv(b);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("step,disc_loss,surrogate,entropy,demo_cost,sample_cost,tv\n", 0) == 0);
  const std::string text = a.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 51);
}

TEST_CASE("iterate averaging returns the mean of the final iterates") {
  auto env = make_tabular_fixture("two_state");
  IrlConfig cfg = default_setup(*env).irl;
  cfg.final_step_fraction = 1.0;
  const TrajectorySet demos = expert_demos(*env, 100, 1);
  std::vector<double> policy_mean, disc_mean;
  for (int steps = 2; steps <= 4; ++steps) {
    cfg.steps = steps;
    cfg.average_fraction = 0.0;
    const IrlFitResult fit = fit_irl(demos, *env, cfg, 3);
    const std::vector<double> p = fit.model.policy.parameters();
    const auto c = fit.model.discriminator.cost_head.parameters();
    if (policy_mean.empty()) {
      policy_mean.assign(p.size(), 0.0);
      disc_mean.assign(c.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) policy_mean[i] += p[i] / 3.0;
    for (std::size_t i = 0; i < c.size(); ++i) disc_mean[i] += c[i] / 3.0;
  }
  cfg.steps = 4;
  cfg.average_fraction = 0.75;
  const IrlFitResult averaged = fit_irl(demos, *env, cfg, 3);
  const std::vector<double> p = averaged.model.policy.parameters();
  const auto c = averaged.model.discriminator.cost_head.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(policy_mean[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(disc_mean[i]).epsilon(1e-12));
  CHECK_THROWS_WITH_AS(irl_config_from_json({{"average_fraction", 1.5}}), doctest::Contains("irl.average_fraction"),
                       ConfigError);
}

TEST_CASE("sampled cost objective") {
  auto env = make_tabular_fixture("two_state");
  const auto truth = boltzmann_distribution(*env, env->basic());
  const TrajectorySet demos = expert_demos(*env, 20000, 5);
  const auto support_index = [&](const Trajectory& t) {
    for (std::size_t k = 0; k < truth.support.size(); ++k) {
      bool same = true;
      for (std::size_t i = 0; i < t.pairs.size() && same; ++i) {
        same = state_index(t.pairs[i].state) == state_index(truth.support[k].pairs[i].state) &&
               t.pairs[i].action.index() == truth.support[k].pairs[i].action.index();
      }
      if (same) return k;
    }
    FAIL("demo outside the support");
    return std::size_t{0};
  };
  std::vector<std::size_t> demo_index;
  for (const Trajectory& t : demos.trajectories) demo_index.push_back(support_index(t));

  const auto objective = [&](const std::vector<double>& cost) {
    std::vector<double> demo_costs;
    for (std::size_t k : demo_index) demo_costs.push_back(cost[k]);
    const std::vector<double> uniform(cost.size(), -std::log(static_cast<double>(cost.size())));
    return sampled_cost_objective(demo_costs, cost, uniform);
  };
  double demo_mean = 0.0;
  for (std::size_t k : demo_index) demo_mean += truth.costs[k] / static_cast<double>(demo_index.size());
  const double at_truth = objective(truth.costs);
  CHECK(at_truth == doctest::Approx(demo_mean + truth.log_partition).epsilon(1e-12));

  std::vector<double> shifted = truth.costs;
  for (double& c : shifted) c += 0.7;
  CHECK(objective(shifted) == doctest::Approx(at_truth).epsilon(1e-12));

  Rng rng(6);
  for (int draw = 0; draw < 20; ++draw) {
    std::vector<double> perturbed = truth.costs;
    for (double& c : perturbed) c += 2.0 * uniform01(rng) - 1.0;
    CHECK(objective(perturbed) > at_truth);
  }

  std::vector<double> sample_costs, sample_log_q;
  for (const Trajectory& t : expert_demos(*env, 5000, 8).trajectories) {
    const std::size_t k = support_index(t);
    sample_costs.push_back(truth.costs[k]);
    sample_log_q.push_back(std::log(truth.probabilities[k]));
  }
  std::vector<double> demo_costs;
  for (std::size_t k : demo_index) demo_costs.push_back(truth.costs[k]);
  CHECK(std::abs(sampled_cost_objective(demo_costs, sample_costs, sample_log_q) - at_truth) <= 0.05);

  const std::vector<double> none;
  CHECK_THROWS_AS(sampled_cost_objective(none, sample_costs, sample_log_q), std::invalid_argument);
  CHECK_THROWS_AS(sampled_cost_objective(demo_costs, sample_costs, none), std::invalid_argument);
}

TEST_CASE("an overpowering discriminator is reported as divergence") {
  auto env = make_tabular_fixture("two_state");
  IrlConfig cfg = default_setup(*env).irl;
  cfg.steps = 200;
  cfg.divergence_loss = 1e9;
  cfg.divergence_patience = 3;
  const TrajectorySet demos = expert_demos(*env, 50, 1);
  CHECK_THROWS_AS(fit_irl(demos, *env, cfg, 1), DivergenceError);
}

TEST_CASE("config round-trip and validation") {
  IrlConfig cfg;
  cfg.steps = 77;
  cfg.cost_hidden = {};
  cfg.activation = Activation::kSoftplus;
  const IrlConfig back = irl_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK_THROWS_WITH_AS(irl_config_from_json({{"steps", 0}}), doctest::Contains("irl.steps"), ConfigError);
  CHECK_THROWS_WITH_AS(irl_config_from_json({{"stepz", 3}}), doctest::Contains("irl.stepz"), ConfigError);
  CHECK_THROWS_AS(irl_config_from_json({{"activation", "sigmoid"}}), ConfigError);
  CHECK_THROWS_AS(irl_config_from_json({{"final_step_fraction", 1.5}}), ConfigError);
}

TEST_CASE("warm start raises the demo likelihood") {
  auto env = make_tabular_fixture("grid4");
  const TrajectorySet demos = expert_demos(*env, 200, 2);
  IrlModel m = init_irl_model(*env, default_setup(*env).irl, 3);
  const double first = warm_start_policy(m.policy, demos, *env, 1, 256, 0.05, 1);
  const double later = warm_start_policy(m.policy, demos, *env, 200, 256, 0.05, 2);
  CHECK(later > first);
}

TEST_CASE("discriminator checkpoints") {
  const Discriminator d{ParamFunction({3, 4, 1}, Activation::kTanh, 2)};
  const std::string path = (std::filesystem::temp_directory_path() / "prefirl_disc_test.ckpt").string();
  save_discriminator(path, d);
  const std::vector<double> x{0.3, 0.2, 0.1};
  CHECK(load_discriminator(path).cost(x) == d.cost(x));
  std::filesystem::remove(path);
}
