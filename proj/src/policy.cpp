#include "prefirl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "prefirl/exact.hpp"

namespace prefirl {

std::string to_string(PolicyKind kind) { return kind == PolicyKind::kGaussian ? "gaussian" : "categorical"; }

PolicyKind policy_kind_from_string(const std::string& name) {
  if (name == "categorical") return PolicyKind::kCategorical;
  if (name == "gaussian") return PolicyKind::kGaussian;
  throw std::invalid_argument("unknown policy kind '" + name + "'");
}

StochasticPolicy StochasticPolicy::categorical(ParamFunction head) {
  StochasticPolicy p;
  p.kind_ = PolicyKind::kCategorical;
  p.space_ = ActionSpace::discrete(static_cast<int>(head.output_dim()));
  p.head_ = std::move(head);
  return p;
}

StochasticPolicy StochasticPolicy::gaussian(ParamFunction head, std::vector<double> log_std, ActionSpace space) {
  if (space.is_discrete() || head.output_dim() != space.dim() || log_std.size() != space.dim()) {
    throw std::invalid_argument("gaussian policy: head output, log-std and action box dimensions must agree");
  }
  StochasticPolicy p;
  p.kind_ = PolicyKind::kGaussian;
  p.head_ = std::move(head);
  p.log_std_ = std::move(log_std);
  p.space_ = std::move(space);
  return p;
}

StochasticPolicy StochasticPolicy::for_environment(const Environment& env, const std::vector<std::size_t>& hidden,
                                                   Activation activation, std::uint64_t seed, double init_log_std) {
  const ActionSpace& space = env.action_space();
  std::vector<std::size_t> sizes{env.observation_dim()};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(space.is_discrete() ? static_cast<std::size_t>(space.count) : space.dim());
  ParamFunction head(sizes, activation, seed);
  head.scale_output_layer(0.1);
  if (space.is_discrete()) return categorical(std::move(head));
  return gaussian(std::move(head), std::vector<double>(space.dim(), init_log_std), space);
}

StochasticPolicy StochasticPolicy::with_reflection(Reflection r) const {
  if (kind_ != PolicyKind::kGaussian) throw std::logic_error("with_reflection needs a gaussian policy");
  if (r.observation_signs.size() != observation_dim() || r.action_signs.size() != action_dim()) {
    throw std::invalid_argument("with_reflection: sign vectors do not match the policy dimensions");
  }
  StochasticPolicy p = *this;
  p.reflection_ = std::move(r);
  return p;
}

std::vector<double> StochasticPolicy::reflect_observation(std::span<const double> obs) const {
  std::vector<double> o(obs.begin(), obs.end());
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= reflection_->observation_signs[i];
  return o;
}

std::vector<double> StochasticPolicy::head_output(std::span<const double> obs) const {
  std::vector<double> out = head_.forward(obs);
  if (reflection_) {
    const std::vector<double> mirrored = head_.forward(reflect_observation(obs));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (out[i] + reflection_->action_signs[i] * mirrored[i]);
  }
  return out;
}

double StochasticPolicy::mean(std::span<const double> out, std::size_t i) const {
  return 0.5 * (space_.high[i] + space_.low[i]) + 0.5 * (space_.high[i] - space_.low[i]) * std::tanh(out[i]);
}

double StochasticPolicy::log_std(std::size_t i) const { return std::clamp(log_std_[i], kMinLogStd, kMaxLogStd); }

std::vector<double> StochasticPolicy::parameters() const {
  std::vector<double> p(head_.parameters().begin(), head_.parameters().end());
  p.insert(p.end(), log_std_.begin(), log_std_.end());
  return p;
}

void StochasticPolicy::set_parameters(std::span<const double> p) {
  if (p.size() != parameter_count()) throw std::invalid_argument("StochasticPolicy::set_parameters: wrong size");
  head_.set_parameters(p.first(head_.parameter_count()));
  std::copy(p.begin() + static_cast<std::ptrdiff_t>(head_.parameter_count()), p.end(), log_std_.begin());
}

void StochasticPolicy::check_action(const Action& a) const {
  if (!space_.contains(a)) throw std::invalid_argument("policy: action outside the action space");
}

namespace {

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += p[i] = std::exp(logits[i] - m);
  for (double& v : p) v /= total;
  return p;
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;

}  // namespace

std::vector<double> StochasticPolicy::action_probabilities(std::span<const double> obs) const {
  if (kind_ != PolicyKind::kCategorical) throw std::logic_error("action_probabilities on a gaussian policy");
  return softmax(head_.forward(obs));
}

double StochasticPolicy::log_prob(std::span<const double> obs, const Action& a) const {
  check_action(a);
  const std::vector<double> out = head_output(obs);
  if (kind_ == PolicyKind::kCategorical) return out[static_cast<std::size_t>(a.index())] - log_sum_exp(out);
  double lp = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double ls = log_std(i);
    const double z = (a.values()[i] - mean(out, i)) * std::exp(-ls);
    lp += -0.5 * z * z - ls - kHalfLog2Pi;
  }
  return lp;
}

Action StochasticPolicy::sample(std::span<const double> obs, Rng& rng) const {
  double unused = 0.0;
  return sample(obs, rng, unused);
}

Action StochasticPolicy::sample(std::span<const double> obs, Rng& rng, double& log_prob) const {
  const std::vector<double> out = head_output(obs);
  if (kind_ == PolicyKind::kCategorical) {
    const std::vector<double> p = softmax(out);
    const double u = uniform01(rng);
    std::size_t k = p.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      acc += p[i];
      if (u < acc) {
        k = i;
        break;
      }
    }
    log_prob = out[k] - log_sum_exp(out);
    return Action::discrete(static_cast<int>(k));
  }
  std::vector<double> v(out.size());
  log_prob = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double ls = log_std(i);
    const double z = standard_normal(rng);
    v[i] = mean(out, i) + std::exp(ls) * z;
    log_prob += -0.5 * z * z - ls - kHalfLog2Pi;
  }
  return Action::continuous(std::move(v));
}

double StochasticPolicy::accumulate_log_prob_gradient(std::span<const double> obs, const Action& a, double coef,
                                                      std::span<double> grad) const {
  check_action(a);
  if (grad.size() != parameter_count()) throw std::invalid_argument("accumulate_log_prob_gradient: wrong size");
  thread_local ParamFunction::Tape tape, mirrored_tape;
  std::vector<double> out;
  {
    const std::span<const double> direct = head_.forward(obs, tape);
    out.assign(direct.begin(), direct.end());
  }
  if (reflection_) {
    const std::span<const double> mirrored = head_.forward(reflect_observation(obs), mirrored_tape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (out[i] + reflection_->action_signs[i] * mirrored[i]);
  }
  std::vector<double> seed(out.size());
  double lp = 0.0;
  if (kind_ == PolicyKind::kCategorical) {
    const std::vector<double> p = softmax(out);
    const std::size_t k = static_cast<std::size_t>(a.index());
    lp = out[k] - log_sum_exp(out);
    for (std::size_t i = 0; i < out.size(); ++i) seed[i] = coef * ((i == k ? 1.0 : 0.0) - p[i]);
  } else {
    const std::size_t offset = head_.parameter_count();
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double ls = log_std(i);
      const double inv = std::exp(-ls);
      const double half = 0.5 * (space_.high[i] - space_.low[i]);
      const double squashed = std::tanh(out[i]);
      const double z = (a.values()[i] - (0.5 * (space_.high[i] + space_.low[i]) + half * squashed)) * inv;
      lp += -0.5 * z * z - ls - kHalfLog2Pi;
      seed[i] = coef * z * inv * half * (1.0 - squashed * squashed);
      if (log_std_[i] > kMinLogStd && log_std_[i] < kMaxLogStd) grad[offset + i] += coef * (z * z - 1.0);
    }
  }
  if (reflection_) {
    std::vector<double> mirrored_seed(seed.size());
    for (std::size_t i = 0; i < seed.size(); ++i) {
      mirrored_seed[i] = 0.5 * reflection_->action_signs[i] * seed[i];
      seed[i] *= 0.5;
    }
    head_.backward(mirrored_tape, mirrored_seed, grad.first(head_.parameter_count()));
  }
  head_.backward(tape, seed, grad.first(head_.parameter_count()));
  return lp;
}

ActionSampler StochasticPolicy::sampler(const Environment& env) const {
  return [policy = *this, &env](const State& s, int step, Rng& rng) { return policy.sample(env.observe(s, step), rng); };
}

double entropy_estimate(const StochasticPolicy& policy, std::span<const std::vector<double>> observations, Rng& rng,
                        int samples_per_state) {
  if (observations.empty() || samples_per_state < 1) throw std::invalid_argument("entropy_estimate: empty batch");
  double total = 0.0;
  for (const std::vector<double>& obs : observations) {
    for (int k = 0; k < samples_per_state; ++k) total -= policy.log_prob(obs, policy.sample(obs, rng));
  }
  return total / static_cast<double>(observations.size() * static_cast<std::size_t>(samples_per_state));
}

Rollout sample_rollout(const Environment& env, const StochasticPolicy& policy, std::uint64_t seed) {
  Rng rng(seed);
  Rollout r;
  r.trajectory.env_id = env.id();
  const int horizon = env.horizon();
  r.trajectory.pairs.reserve(static_cast<std::size_t>(horizon));
  r.observations.reserve(static_cast<std::size_t>(horizon));
  r.log_probs.reserve(static_cast<std::size_t>(horizon));
  State s = env.initial_state(rng);
  for (int t = 0; t < horizon; ++t) {
    std::vector<double> obs = env.observe(s, t);
    double lp = 0.0;
    Action a = policy.sample(obs, rng, lp);
    r.log_probs.push_back(lp);
    State next = env.transition(s, a, rng);
    r.trajectory.pairs.push_back({std::move(s), std::move(a), t});
    r.observations.push_back(std::move(obs));
    s = std::move(next);
  }
  return r;
}

PolicyGradient::PolicyGradient(const Environment& env, PolicyGradientConfig cfg, std::size_t n_params)
    : env_(env), cfg_(cfg), opt_(n_params, cfg.adam) {
  if (cfg_.batch_episodes < 1) throw std::invalid_argument("policy gradient: batch_episodes must be >= 1");
  if (cfg_.entropy_weight < 0.0) throw std::invalid_argument("policy gradient: entropy_weight must be >= 0");
  if (cfg_.discount > 1.0) throw std::invalid_argument("policy gradient: discount must be <= 1");
}

std::vector<Rollout> PolicyGradient::collect(const StochasticPolicy& policy, int n, std::uint64_t seed) const {
  std::vector<Rollout> batch;
  batch.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    batch.push_back(sample_rollout(env_, policy, derive_seed(seed, Stream::kFit, static_cast<std::uint64_t>(j))));
  }
  return batch;
}

BatchStats PolicyGradient::update(StochasticPolicy& policy, const std::vector<Rollout>& batch,
                                  const std::vector<std::vector<double>>& rewards) {
  if (batch.empty() || rewards.size() != batch.size()) throw std::invalid_argument("policy gradient: empty batch");
  for (std::size_t e = 0; e < batch.size(); ++e) {
    if (rewards[e].size() != batch[e].trajectory.size()) {
      throw std::invalid_argument("policy gradient: reward count differs from episode length");
    }
    for (std::size_t t = 0; t < rewards[e].size(); ++t) {
      if (!std::isfinite(rewards[e][t])) {
        throw std::domain_error("policy gradient: non-finite reward in episode " + std::to_string(e) + " at step " +
                                std::to_string(t) + "; batch aborted");
      }
    }
  }
  const double discount = cfg_.discount < 0.0 ? env_.gamma() : cfg_.discount;
  const std::size_t horizon = batch.front().trajectory.size();
  BatchStats stats;
  std::size_t n_pairs = 0;
  std::vector<std::vector<double>> returns(batch.size());
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const std::size_t len = batch[e].trajectory.size();
    returns[e].assign(len, 0.0);
    double acc = 0.0;
    for (std::size_t t = len; t-- > 0;) {
      acc = rewards[e][t] - cfg_.entropy_weight * batch[e].log_probs[t] + discount * acc;
      returns[e][t] = acc;
      stats.mean_return += rewards[e][t];
      stats.entropy -= batch[e].log_probs[t];
    }
    n_pairs += len;
  }
  stats.mean_return /= static_cast<double>(batch.size());
  stats.entropy /= static_cast<double>(std::max<std::size_t>(n_pairs, 1));

  std::vector<double> mean(horizon, 0.0), count(horizon, 0.0);
  for (const std::vector<double>& g : returns) {
    for (std::size_t t = 0; t < g.size() && t < horizon; ++t) {
      mean[t] += g[t];
      count[t] += 1.0;
    }
  }
  for (std::size_t t = 0; t < horizon; ++t) mean[t] /= std::max(count[t], 1.0);
  std::vector<double> baseline(horizon, 0.0);
  if (cfg_.baseline == Baseline::kMovingAverage) {
    if (!baseline_ready_) {
      baseline_ = mean;
      baseline_ready_ = true;
    }
    baseline = baseline_;
    for (std::size_t t = 0; t < horizon; ++t) {
      baseline_[t] = cfg_.baseline_decay * baseline_[t] + (1.0 - cfg_.baseline_decay) * mean[t];
    }
  }

  std::vector<double> grad(policy.parameter_count(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const Rollout& r = batch[e];
    for (std::size_t t = 0; t < r.trajectory.size(); ++t) {
      const double advantage = returns[e][t] - (t < horizon ? baseline[t] : 0.0);
      if (advantage == 0.0) continue;
      policy.accumulate_log_prob_gradient(r.observations[t], r.trajectory.pairs[t].action, -scale * advantage, grad);
    }
  }
  std::vector<double> params = policy.parameters();
  opt_.step(params, grad);
  policy.set_parameters(params);
  return stats;
}

BatchStats PolicyGradient::step(StochasticPolicy& policy, const RewardFn& reward, std::uint64_t seed) {
  std::vector<Rollout> batch = collect(policy, cfg_.batch_episodes, seed);
  std::vector<std::vector<double>> rewards(batch.size());
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const Rollout& r = batch[e];
    rewards[e].reserve(r.trajectory.size());
    for (std::size_t t = 0; t < r.trajectory.size(); ++t) {
      rewards[e].push_back(reward(r.trajectory.pairs[t], r.observations[t], r.log_probs[t]));
    }
  }
  return update(policy, batch, rewards);
}

void save_policy(const std::string& path, const StochasticPolicy& policy, const nlohmann::json& fields) {
  nlohmann::json header = fields.is_object() ? fields : nlohmann::json::object();
  header["policy_kind"] = to_string(policy.kind());
  if (policy.reflection()) {
    header["reflection"] = {{"observation_signs", policy.reflection()->observation_signs},
                            {"action_signs", policy.reflection()->action_signs}};
  }
  save_checkpoint(path, policy.head(), header, policy.raw_log_std());
}

StochasticPolicy load_policy(const std::string& path, const Environment& env) {
  Checkpoint ck = load_checkpoint(path);
  const PolicyKind kind = policy_kind_from_string(ck.header.at("policy_kind").get<std::string>());
  if (ck.function.input_dim() != env.observation_dim()) {
    throw std::runtime_error("policy checkpoint " + path + " does not match environment " + env.id());
  }
  if (kind == PolicyKind::kCategorical) return StochasticPolicy::categorical(std::move(ck.function));
  StochasticPolicy policy = StochasticPolicy::gaussian(std::move(ck.function), std::move(ck.extra), env.action_space());
  if (ck.header.contains("reflection")) {
    const nlohmann::json& r = ck.header.at("reflection");
    policy = policy.with_reflection({r.at("observation_signs").get<std::vector<double>>(),
                                     r.at("action_signs").get<std::vector<double>>()});
  }
  return policy;
}

}  // namespace prefirl
