#include "prefirl/tabular.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace prefirl {

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

int sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = static_cast<int>(i);
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return last_positive;
}

}  // namespace

TabularMdp::TabularMdp(Spec spec) : spec_(std::move(spec)) {
  const int ns = spec_.n_states, na = spec_.n_actions;
  if (ns < 1 || na < 1 || spec_.horizon < 1) throw std::invalid_argument("tabular MDP: sizes must be positive");
  if (!(spec_.gamma >= 0.0 && spec_.gamma < 1.0)) throw std::invalid_argument("tabular MDP: gamma must lie in [0, 1)");
  if (spec_.transition.size() != sz(ns * na * ns)) throw std::invalid_argument("tabular MDP: transition table has wrong size");
  if (spec_.initial.size() != sz(ns)) throw std::invalid_argument("tabular MDP: initial distribution has wrong size");
  if (spec_.basic_cost.size() != sz(ns * na) || spec_.target_cost.size() != sz(ns * na)) {
    throw std::invalid_argument("tabular MDP: cost tables have wrong size");
  }
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      double row = 0.0;
      for (int n = 0; n < ns; ++n) {
        const double v = p(s, a, n);
        if (v < 0.0) throw std::invalid_argument("tabular MDP: negative transition probability");
        row += v;
      }
      if (std::abs(row - 1.0) > 1e-12) throw std::invalid_argument("tabular MDP: transition row does not sum to 1");
      if (!std::isfinite(basic_cost(s, a)) || !std::isfinite(target_cost(s, a))) {
        throw std::invalid_argument("tabular MDP: non-finite cost");
      }
    }
  }
  const double mu = std::accumulate(spec_.initial.begin(), spec_.initial.end(), 0.0);
  if (std::abs(mu - 1.0) > 1e-12) throw std::invalid_argument("tabular MDP: initial distribution does not sum to 1");
  actions_ = ActionSpace::discrete(na);
}

State TabularMdp::initial_state(Rng& rng) const { return tabular_state(sample_categorical(spec_.initial, rng)); }

State TabularMdp::transition(const State& s, const Action& a, Rng& rng) const {
  const int si = state_index(s);
  const int ai = a.index();
  const std::span<const double> row(spec_.transition.data() + sz((si * spec_.n_actions + ai) * spec_.n_states),
                                    sz(spec_.n_states));
  return tabular_state(sample_categorical(row, rng));
}

bool TabularMdp::contains(const State& s) const {
  if (s.size() != 1) return false;
  const double v = s[0];
  return v >= 0.0 && v < spec_.n_states && v == std::floor(v);
}

double TabularMdp::basic_cost(const State& s, const Action& a) const { return basic_cost(state_index(s), a.index()); }
double TabularMdp::target_cost(const State& s, const Action& a) const { return target_cost(state_index(s), a.index()); }

std::vector<double> TabularMdp::observe(const State& s, int step) const {
  std::vector<double> obs(observation_dim(), 0.0);
  obs[sz(step * spec_.n_states + state_index(s))] = 1.0;
  return obs;
}

std::vector<double> TabularMdp::pair_features(const StateActionPair& p) const {
  std::vector<double> f(pair_feature_dim(), 0.0);
  f[sz((p.step * spec_.n_states + state_index(p.state)) * spec_.n_actions + p.action.index())] = 1.0;
  return f;
}

bool TabularMdp::deterministic() const {
  for (double v : spec_.transition) {
    if (v != 0.0 && v != 1.0) return false;
  }
  for (double v : spec_.initial) {
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

int state_index(const State& s) {
  if (s.size() != 1) throw std::invalid_argument("tabular state must have exactly one component");
  return static_cast<int>(s[0]);
}

State tabular_state(int index) { return State{static_cast<double>(index)}; }

PolicyTable::PolicyTable(int n_states, int n_actions, int horizon)
    : n_states_(n_states), n_actions_(n_actions), horizon_(horizon),
      probs_(sz(n_states * n_actions * horizon), 1.0 / n_actions) {}

void PolicyTable::set_row(int step, int state, std::span<const double> probs) {
  if (probs.size() != sz(n_actions_)) throw std::invalid_argument("PolicyTable::set_row: wrong row size");
  std::copy(probs.begin(), probs.end(), probs_.begin() + static_cast<std::ptrdiff_t>(offset(step, state)));
}

Action PolicyTable::sample(int step, int state, Rng& rng) const {
  return Action::discrete(sample_categorical(row(step, state), rng));
}

ActionSampler PolicyTable::sampler() const {
  return [table = *this](const State& s, int step, Rng& rng) { return table.sample(step, state_index(s), rng); };
}

std::size_t count_trajectories(const TabularMdp& env) {
  const int ns = env.n_states(), na = env.n_actions();
  std::vector<double> remaining(sz(ns), 1.0);  // trajectories from (t, s) to the end
  for (int t = env.horizon() - 1; t >= 0; --t) {
    std::vector<double> here(sz(ns), 0.0);
    for (int s = 0; s < ns; ++s) {
      for (int a = 0; a < na; ++a) {
        // The successor of the last step is not part of the trajectory.
        if (t == env.horizon() - 1) {
          here[sz(s)] += 1.0;
          continue;
        }
        for (int n = 0; n < ns; ++n) {
          if (env.p(s, a, n) > 0.0) here[sz(s)] += remaining[sz(n)];
        }
      }
    }
    remaining = std::move(here);
  }
  double total = 0.0;
  for (int s = 0; s < ns; ++s) {
    if (env.initial_probability(s) > 0.0) total += remaining[sz(s)];
  }
  return total > 1e18 ? static_cast<std::size_t>(-1) : static_cast<std::size_t>(total);
}

namespace {

struct Enumerator {
  const TabularMdp& env;
  const PolicyTable& policy;
  std::vector<WeightedTrajectory>& out;
  std::vector<StateActionPair> prefix;

  void visit(int state, int step, double prob) {
    const int horizon = env.horizon();
    for (int a = 0; a < env.n_actions(); ++a) {
      const double pa = prob * policy.prob(step, state, a);
      prefix.push_back({tabular_state(state), Action::discrete(a), step});
      if (step == horizon - 1) {
        Trajectory traj;
        traj.env_id = env.id();
        traj.pairs = prefix;
        out.push_back({std::move(traj), pa});
      } else {
        for (int n = 0; n < env.n_states(); ++n) {
          const double pn = env.p(state, a, n);
          if (pn > 0.0) visit(n, step + 1, pa * pn);
        }
      }
      prefix.pop_back();
    }
  }
};

}  // namespace

std::vector<WeightedTrajectory> enumerate_trajectories(const TabularMdp& env, const PolicyTable* policy,
                                                       std::size_t cap) {
  const std::size_t count = count_trajectories(env);
  if (count > cap) {
    throw std::length_error("enumerate_trajectories: " + std::to_string(count) +
                            " trajectories exceed the cap of " + std::to_string(cap) +
                            "; a cap of at least " + std::to_string(count) + " is required");
  }
  const PolicyTable uniform(env.n_states(), env.n_actions(), env.horizon());
  const PolicyTable& pi = policy != nullptr ? *policy : uniform;
  if (pi.n_states() != env.n_states() || pi.n_actions() != env.n_actions() || pi.horizon() != env.horizon()) {
    throw std::invalid_argument("enumerate_trajectories: policy table does not match the MDP");
  }
  std::vector<WeightedTrajectory> out;
  out.reserve(count);
  Enumerator e{env, pi, out, {}};
  e.prefix.reserve(sz(env.horizon()));
  for (int s = 0; s < env.n_states(); ++s) {
    const double mu = env.initial_probability(s);
    if (mu > 0.0) e.visit(s, 0, mu);
  }
  return out;
}

double trajectory_probability(const TabularMdp& env, const PolicyTable& policy, const Trajectory& traj) {
  if (traj.pairs.empty()) return 0.0;
  double prob = env.initial_probability(state_index(traj.pairs.front().state));
  for (std::size_t t = 0; t < traj.pairs.size(); ++t) {
    const int s = state_index(traj.pairs[t].state);
    const int a = traj.pairs[t].action.index();
    prob *= policy.prob(static_cast<int>(t), s, a);
    if (t + 1 < traj.pairs.size()) prob *= env.p(s, a, state_index(traj.pairs[t + 1].state));
  }
  return prob;
}

namespace {

TabularMdp::Spec base_spec(std::string id, int ns, int na, int horizon) {
  TabularMdp::Spec spec;
  spec.id = std::move(id);
  spec.n_states = ns;
  spec.n_actions = na;
  spec.horizon = horizon;
  spec.transition.assign(sz(ns * na * ns), 0.0);
  spec.initial.assign(sz(ns), 0.0);
  spec.initial[0] = 1.0;
  spec.basic_cost.assign(sz(ns * na), 0.0);
  spec.target_cost.assign(sz(ns * na), 0.0);
  return spec;
}

void set_next(TabularMdp::Spec& spec, int s, int a, int next) {
  spec.transition[sz((s * spec.n_actions + a) * spec.n_states + next)] = 1.0;
}

// Two actions, one state, one step.
TabularMdp::Spec bandit2() {
  auto spec = base_spec("bandit2", 1, 2, 1);
  set_next(spec, 0, 0, 0);
  set_next(spec, 0, 1, 0);
  spec.basic_cost = {0.0, std::log(2.0)};
  spec.target_cost = {std::log(2.0), 0.0};
  return spec;
}

// Action 0 stays, action 1 switches state.
TabularMdp::Spec two_state() {
  auto spec = base_spec("two_state", 2, 2, 4);
  for (int s = 0; s < 2; ++s) {
    set_next(spec, s, 0, s);
    set_next(spec, s, 1, 1 - s);
  }
  spec.basic_cost = {0.0, 0.6, 0.3, 0.9};
  spec.target_cost = {0.8, 0.2, 0.1, 0.5};
  return spec;
}

// two_state with the target equal to the basic cost: nothing to transfer.
TabularMdp::Spec zero_gap() {
  auto spec = two_state();
  spec.id = "zero_gap";
  spec.target_cost = spec.basic_cost;
  return spec;
}

// Five-state corridor, actions left/right, walls at both ends, start in the middle.
TabularMdp::Spec chain5(bool slippery) {
  auto spec = base_spec(slippery ? "slippery_chain5" : "chain5", 5, 2, 5);
  spec.initial = {0.0, 0.0, 1.0, 0.0, 0.0};
  for (int s = 0; s < 5; ++s) {
    const int left = std::max(s - 1, 0), right = std::min(s + 1, 4);
    for (int a = 0; a < 2; ++a) {
      const int intended = a == 0 ? left : right;
      const int other = a == 0 ? right : left;
      const double slip = slippery ? 0.1 : 0.0;
      spec.transition[sz((s * 2 + a) * 5 + intended)] += 1.0 - slip;
      spec.transition[sz((s * 2 + a) * 5 + other)] += slip;
    }
    spec.basic_cost[sz(s * 2 + 0)] = 0.2 * (4 - s) + 0.1;
    spec.basic_cost[sz(s * 2 + 1)] = 0.2 * (4 - s);
    spec.target_cost[sz(s * 2 + 0)] = 0.2 * s;
    spec.target_cost[sz(s * 2 + 1)] = 0.2 * s + 0.1;
  }
  return spec;
}

// 2x2 grid (state = 2*row + col), actions up/down/left/right, walls keep the agent in place.
TabularMdp::Spec grid4() {
  auto spec = base_spec("grid4", 4, 4, 3);
  const double distance_to_3[4] = {2, 1, 1, 0};
  for (int s = 0; s < 4; ++s) {
    const int row = s / 2, col = s % 2;
    const int up = row == 0 ? s : s - 2;
    const int down = row == 1 ? s : s + 2;
    const int left = col == 0 ? s : s - 1;
    const int right = col == 1 ? s : s + 1;
    const int next[4] = {up, down, left, right};
    for (int a = 0; a < 4; ++a) {
      set_next(spec, s, a, next[a]);
      spec.basic_cost[sz(s * 4 + a)] = 0.4 * distance_to_3[s] + 0.05 * a;
      spec.target_cost[sz(s * 4 + a)] = 0.4 * (2 - distance_to_3[s]) + 0.05 * (3 - a);
    }
  }
  return spec;
}

// Seven-state corridor with absorbing goals A (state 0) and B (state 6); start
// in the middle. The basic cost is 1 per step away from either goal; the
// target cost additionally charges 2 per step spent at goal B.
TabularMdp::Spec two_goal() {
  auto spec = base_spec("two_goal", 7, 2, 5);
  spec.initial = {0, 0, 0, 1, 0, 0, 0};
  for (int s = 0; s < 7; ++s) {
    for (int a = 0; a < 2; ++a) {
      int next = a == 0 ? s - 1 : s + 1;
      if (s == 0 || s == 6) next = s;
      set_next(spec, s, a, next);
      const double base = (s == 0 || s == 6) ? 0.0 : 1.0;
      spec.basic_cost[sz(s * 2 + a)] = base;
      spec.target_cost[sz(s * 2 + a)] = base + (s == 6 ? 2.0 : 0.0);
    }
  }
  return spec;
}

}  // namespace

std::vector<std::string> tabular_fixture_names() {
  return {"bandit2", "two_state", "chain5", "slippery_chain5", "grid4", "two_goal", "zero_gap"};
}

std::unique_ptr<TabularMdp> make_tabular_fixture(std::string_view name) {
  if (name == "bandit2") return std::make_unique<TabularMdp>(bandit2());
  if (name == "two_state") return std::make_unique<TabularMdp>(two_state());
  if (name == "chain5") return std::make_unique<TabularMdp>(chain5(false));
  if (name == "slippery_chain5") return std::make_unique<TabularMdp>(chain5(true));
  if (name == "grid4") return std::make_unique<TabularMdp>(grid4());
  if (name == "two_goal") return std::make_unique<TabularMdp>(two_goal());
  if (name == "zero_gap") return std::make_unique<TabularMdp>(zero_gap());
  throw std::invalid_argument("unknown tabular fixture '" + std::string(name) + "'");
}

std::unique_ptr<TabularMdp> random_tabular_mdp(int n_states, int n_actions, int horizon, std::uint64_t seed,
                                               bool deterministic, double cost_scale) {
  Rng rng(seed);
  auto spec = base_spec("random_" + std::to_string(seed), n_states, n_actions, horizon);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      if (deterministic) {
        set_next(spec, s, a, static_cast<int>(uniform_index(rng, sz(n_states))));
      } else {
        double total = 0.0;
        std::vector<double> row(sz(n_states));
        for (double& v : row) {
          v = 0.1 + uniform01(rng);
          total += v;
        }
        for (int n = 0; n < n_states; ++n) spec.transition[sz((s * n_actions + a) * n_states + n)] = row[sz(n)] / total;
        // Renormalize the last entry so the row sums to one to within rounding.
        double sum = 0.0;
        for (int n = 0; n + 1 < n_states; ++n) sum += spec.transition[sz((s * n_actions + a) * n_states + n)];
        spec.transition[sz((s * n_actions + a) * n_states + n_states - 1)] = 1.0 - sum;
      }
      spec.basic_cost[sz(s * n_actions + a)] = cost_scale * uniform01(rng);
      spec.target_cost[sz(s * n_actions + a)] = cost_scale * uniform01(rng);
    }
  }
  return std::make_unique<TabularMdp>(std::move(spec));
}

}  // namespace prefirl
