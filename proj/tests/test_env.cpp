#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "prefirl/continuous.hpp"
#include "prefirl/exact.hpp"
#include "prefirl/tabular.hpp"
#include "prefirl/trajectory_io.hpp"

using namespace prefirl;

namespace {

ActionSampler constant_action(int a) {
  return [a](const State&, int, Rng&) { return Action::discrete(a); };
}

CostFunction per_step(std::vector<double> values) {
  return {"listed", [values](const StateActionPair& p) { return values[static_cast<std::size_t>(p.step)]; }};
}

Trajectory three_step_trajectory() {
  Trajectory t;
  t.env_id = "two_state";
  for (int k = 0; k < 3; ++k) t.pairs.push_back({tabular_state(0), Action::discrete(0), k});
  return t;
}

}  // namespace

TEST_CASE("deterministic rollout follows the transition table") {
  auto env = make_tabular_fixture("two_state");
  TabularMdp::Spec spec = env->spec();
  spec.horizon = 3;
  const TabularMdp mdp(spec);
  const Trajectory t = rollout(mdp, constant_action(1), 5);
  REQUIRE(t.size() == 3);
  CHECK(t.well_formed());
  // Action 1 switches state: 0 -> 1 -> 0.
  CHECK(state_index(t.pairs[0].state) == 0);
  CHECK(state_index(t.pairs[1].state) == 1);
  CHECK(state_index(t.pairs[2].state) == 0);
  for (int k = 0; k < 3; ++k) CHECK(t.pairs[static_cast<std::size_t>(k)].step == k);
}

TEST_CASE("rollouts are reproducible from the seed") {
  auto env = make_tabular_fixture("slippery_chain5");
  PolicyTable uniform(env->n_states(), env->n_actions(), env->horizon());
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Trajectory a = rollout(*env, uniform.sampler(), seed);
    const Trajectory b = rollout(*env, uniform.sampler(), seed);
    REQUIRE(trajectory_to_json(a) == trajectory_to_json(b));
  }
}

TEST_CASE("out-of-space actions are rejected with the step") {
  auto env = make_tabular_fixture("two_state");
  const ActionSampler bad = [](const State&, int step, Rng&) { return Action::discrete(step == 2 ? 7 : 0); };
  CHECK_THROWS_WITH_AS(rollout(*env, bad, 0), doctest::Contains("step 2"), std::invalid_argument);
}

TEST_CASE("TwoPeaks matches an independent simulation of its dynamics") {
  TwoPeaks::Params p;
  p.action_noise = 0.0;
  const TwoPeaks env(p);
  const ActionSampler right = [](const State&, int, Rng&) { return Action::continuous({1.0}); };
  const Trajectory t = rollout(env, right, 11);

  // x'' dynamics written out by hand from the documented update.
  auto hill = [&](double x, double c) { return std::exp(-(x - c) * (x - c) / (2 * p.peak_width * p.peak_width)); };
  double x = t.pairs[0].state[0], v = 0.0;
  CHECK(std::abs(x) <= p.start_halfwidth);
  for (std::size_t k = 1; k < t.size(); ++k) {
    const double w2 = p.peak_width * p.peak_width;
    const double grad = -(x - 1.0) / w2 * hill(x, 1.0) - (x + 1.0) / w2 * hill(x, -1.0);
    v = v + p.dt * (p.force * 1.0 - p.damping * v - p.gravity * grad);
    v = std::max(-p.v_max, std::min(p.v_max, v));
    x = x + p.dt * v;
    if (std::abs(x) > p.x_max) {
      x = std::max(-p.x_max, std::min(p.x_max, x));
      v = 0.0;
    }
    REQUIRE(t.pairs[k].state[0] == doctest::Approx(x).epsilon(1e-12));
    REQUIRE(t.pairs[k].state[1] == doctest::Approx(v).epsilon(1e-12));
  }
  CHECK(t.pairs.back().state[0] > 0.5);

  const TwoPeaks noisy;
  CHECK(rollout(noisy, right, 11).pairs.back().state[0] > 0.5);
}

TEST_CASE("continuous states stay within bounds") {
  const PointReacher env;
  const ActionSampler push = [](const State&, int, Rng&) { return Action::continuous({3.0, 3.0}); };
  const Trajectory t = rollout(env, push, 2);
  for (const StateActionPair& p : t.pairs) CHECK(env.contains(p.state));
  CHECK(t.pairs.back().state[1] == doctest::Approx(2.0));
}

TEST_CASE("trajectory cost sums the per-step map and fills the cache") {
  Trajectory t = three_step_trajectory();
  CHECK(trajectory_cost(t, {"zero", [](const StateActionPair&) { return 0.0; }}) == 0.0);
  const CostFunction listed = per_step({0.5, -1.0, 2.0});
  CHECK(trajectory_cost(t, listed) == doctest::Approx(1.5));
  CHECK(t.costs.at("listed") == doctest::Approx(1.5));

  auto env = make_tabular_fixture("chain5");
  Trajectory five = rollout(*env, constant_action(0), 0);
  CHECK(evaluate_cost(five, {"one", [](const StateActionPair&) { return 1.0; }}) == 5.0);

  Trajectory head = five, tail = five;
  head.pairs.resize(2);
  tail.pairs.erase(tail.pairs.begin(), tail.pairs.begin() + 2);
  CHECK(evaluate_cost(head, env->basic()) + evaluate_cost(tail, env->basic()) ==
        doctest::Approx(evaluate_cost(five, env->basic())));
}

TEST_CASE("enumeration probabilities") {
  SUBCASE("one state, H=1, uniform") {
    TabularMdp::Spec spec = make_tabular_fixture("bandit2")->spec();
    const TabularMdp env(spec);
    const auto all = enumerate_trajectories(env);
    REQUIRE(all.size() == 2);
    CHECK(all[0].probability == doctest::Approx(0.5));
    CHECK(all[1].probability == doctest::Approx(0.5));
  }
  SUBCASE("two actions, H=2") {
    TabularMdp::Spec spec = make_tabular_fixture("two_state")->spec();
    spec.horizon = 2;
    const TabularMdp env(spec);
    const auto uniform = enumerate_trajectories(env);
    REQUIRE(uniform.size() == 4);
    for (const auto& w : uniform) CHECK(w.probability == doctest::Approx(0.25));

    PolicyTable skewed(2, 2, 2);
    const double row[2] = {0.9, 0.1};
    for (int t = 0; t < 2; ++t) {
      for (int s = 0; s < 2; ++s) skewed.set_row(t, s, row);
    }
    const auto weighted = enumerate_trajectories(env, &skewed);
    std::vector<double> probs;
    for (const auto& w : weighted) probs.push_back(w.probability);
    std::sort(probs.rbegin(), probs.rend());
    CHECK(probs[0] == doctest::Approx(0.81));
    CHECK(probs[1] == doctest::Approx(0.09));
    CHECK(probs[2] == doctest::Approx(0.09));
    CHECK(probs[3] == doctest::Approx(0.01));
  }
  SUBCASE("sums to one everywhere") {
    for (const std::string& name : tabular_fixture_names()) {
      auto env = make_tabular_fixture(name);
      double total = 0.0;
      for (const auto& w : enumerate_trajectories(*env)) total += w.probability;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto env = random_tabular_mdp(3, 2, 3, seed, false);
      double total = 0.0;
      for (const auto& w : enumerate_trajectories(*env)) total += w.probability;
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
  SUBCASE("cap is enforced") {
    auto env = make_tabular_fixture("grid4");
    CHECK_THROWS_AS(enumerate_trajectories(*env, nullptr, 10), std::length_error);
  }
}

TEST_CASE("empirical rollout frequencies match the enumeration") {
  auto env = make_tabular_fixture("slippery_chain5");
  PolicyTable policy(env->n_states(), env->n_actions(), env->horizon());
  Rng rng(3);
  for (int t = 0; t < env->horizon(); ++t) {
    for (int s = 0; s < env->n_states(); ++s) {
      const double p0 = 0.2 + 0.6 * uniform01(rng);
      const double row[2] = {p0, 1.0 - p0};
      policy.set_row(t, s, row);
    }
  }
  const auto weighted = enumerate_trajectories(*env, &policy);
  std::vector<Trajectory> support;
  std::vector<double> exact;
  for (const auto& w : weighted) {
    support.push_back(w.trajectory);
    exact.push_back(w.probability);
  }
  std::vector<Trajectory> samples;
  for (std::uint64_t k = 0; k < 100000; ++k) samples.push_back(rollout(*env, policy.sampler(), k));
  CHECK(total_variation(empirical_distribution(samples, support), exact) <= 0.02);
}

TEST_CASE("trajectory JSON has a fixed layout and round-trips") {
  Trajectory t;
  t.env_id = "two_peaks";
  t.pairs.push_back({{0.1, -0.2}, Action::continuous({0.3}), 0});
  t.costs["basic"] = 1.0 / 3.0;
  const std::string line = trajectory_to_json(t);
  CHECK(line.find("{\"env\":\"two_peaks\",\"pairs\":[{\"s\":[") == 0);
  CHECK(line.find("0.33333333333333331") != std::string::npos);
  CHECK(line.find("\"costs\"") > line.find("\"pairs\""));

  const Trajectory back = trajectory_from_json(nlohmann::json::parse(line));
  CHECK(trajectory_to_json(back) == line);
  CHECK(back.pairs[0].state[1] == -0.2);

  auto env = make_tabular_fixture("two_goal");
  PolicyTable uniform(env->n_states(), env->n_actions(), env->horizon());
  const TrajectorySet set = sample_rollouts(*env, uniform.sampler(), 5, 9);
  std::stringstream io;
  write_jsonl(io, set);
  const TrajectorySet read = read_jsonl(io);
  REQUIRE(read.size() == 5);
  CHECK(read.trajectories[4].pairs[2].action.index() == set.trajectories[4].pairs[2].action.index());
}

TEST_CASE("malformed JSON lines report the line") {
  std::stringstream in;
  in << R"({"env":"bandit2","pairs":[{"s":[0],"a":1,"t":0}],"costs":{}})" << '\n' << "{bad" << '\n';
  try {
    read_jsonl(in);
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::stringstream steps;
  steps << R"({"env":"bandit2","pairs":[{"s":[0],"a":1,"t":3}],"costs":{}})" << '\n';
  CHECK_THROWS_AS(read_jsonl(steps), ParseError);
}
