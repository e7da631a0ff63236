#include "prefirl/preference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prefirl/trajectory_io.hpp"

namespace prefirl {

std::string to_string(GapMode mode) { return mode == GapMode::kFixedGap ? "fixed_gap" : "adaptive_gap"; }

GapMode gap_mode_from_string(const std::string& name) {
  if (name == "fixed_gap") return GapMode::kFixedGap;
  if (name == "adaptive_gap") return GapMode::kAdaptiveGap;
  throw std::invalid_argument("unknown gap mode '" + name + "'");
}

std::string to_string(Normalization n) { return n == Normalization::kRatio ? "ratio" : "set_normalized"; }

Normalization normalization_from_string(const std::string& name) {
  if (name == "set_normalized") return Normalization::kSetNormalized;
  if (name == "ratio") return Normalization::kRatio;
  throw std::invalid_argument("unknown normalization '" + name + "'");
}

HiddenCostModel HiddenCostModel::fixed_gap(const Environment& env) {
  return {GapMode::kFixedGap, env.target(), env.basic()};
}

HiddenCostModel HiddenCostModel::adaptive_gap(const Environment& env, CostFunction learned) {
  return {GapMode::kAdaptiveGap, env.target(), std::move(learned)};
}

double HiddenCostModel::operator()(const Trajectory& traj) const {
  double total = 0.0;
  for (const StateActionPair& p : traj.pairs) {
    const double gap = per_step(p);
    if (!std::isfinite(gap)) {
      throw std::domain_error("hidden cost is not finite at step " + std::to_string(p.step));
    }
    total += gap;
  }
  return total;
}

std::vector<double> HiddenCostModel::evaluate(const TrajectorySet& set) const {
  std::vector<double> out;
  out.reserve(set.size());
  for (const Trajectory& t : set.trajectories) out.push_back((*this)(t));
  return out;
}

std::vector<double> acceptance_probabilities(std::span<const double> hidden_costs, const AcceptanceRule& rule) {
  if (hidden_costs.empty()) throw std::invalid_argument("acceptance_probabilities: no candidates");
  const double lowest = *std::min_element(hidden_costs.begin(), hidden_costs.end());
  // log M' relative to the shift by the lowest hidden cost.
  double log_bound = 0.0;
  if (rule.mode == Normalization::kRatio && rule.bound > 0.0) log_bound = std::log(rule.bound) + lowest;
  std::vector<double> acc;
  acc.reserve(hidden_costs.size());
  for (double h : hidden_costs) acc.push_back(std::min(1.0, std::exp(-(h - lowest) - log_bound)));
  return acc;
}

std::vector<double> acceptance_prob(const HiddenCostModel& model, const TrajectorySet& candidates,
                                    const AcceptanceRule& rule) {
  return acceptance_probabilities(model.evaluate(candidates), rule);
}

std::size_t max_drops(std::size_t n_candidates) { return n_candidates / 2; }

double PreferenceOutcome::drop_fraction() const {
  const std::size_t n = kept_indices.size() + dropped_indices.size();
  return n == 0 ? 0.0 : static_cast<double>(dropped_indices.size()) / static_cast<double>(n);
}

PreferenceOutcome outcome_from_mask(const TrajectorySet& candidates, const std::vector<bool>& keep, int episode,
                                    std::vector<double> acceptance) {
  if (keep.size() != candidates.size()) {
    throw SelectionError("selection has " + std::to_string(keep.size()) + " entries for " +
                         std::to_string(candidates.size()) + " candidates");
  }
  const std::size_t drops = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), false));
  if (drops > max_drops(candidates.size())) {
    throw SelectionError("max_drops exceeded: " + std::to_string(drops) + " of " + std::to_string(candidates.size()) +
                         " candidates dropped, at most " + std::to_string(max_drops(candidates.size())) + " allowed");
  }
  PreferenceOutcome out;
  out.kept.provenance = {Provenance::Kind::kSelected, episode};
  out.dropped.provenance = {Provenance::Kind::kGenerated, episode};
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) {
      out.kept.trajectories.push_back(candidates.trajectories[i]);
      out.kept_indices.push_back(i);
    } else {
      out.dropped.trajectories.push_back(candidates.trajectories[i]);
      out.dropped_indices.push_back(i);
    }
  }
  out.acceptance = std::move(acceptance);
  out.query_count = candidates.size();
  return out;
}

std::vector<bool> mask_from_json(const nlohmann::json& response, std::size_t n_candidates) {
  if (!response.is_object() || !response.contains("kept") || !response.contains("dropped") ||
      !response.at("kept").is_array() || !response.at("dropped").is_array()) {
    throw SelectionError("selection must be an object with \"kept\" and \"dropped\" index arrays");
  }
  std::vector<int> seen(n_candidates, 0);
  std::vector<bool> keep(n_candidates, true);
  for (const char* key : {"kept", "dropped"}) {
    for (const nlohmann::json& v : response.at(key)) {
      if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() >= static_cast<long long>(n_candidates)) {
        throw SelectionError(std::string("selection: invalid index in \"") + key + "\": " + v.dump());
      }
      const std::size_t i = v.get<std::size_t>();
      if (seen[i]++) throw SelectionError("selection: candidate " + std::to_string(i) + " listed twice");
      keep[i] = std::string(key) == "kept";
    }
  }
  for (std::size_t i = 0; i < n_candidates; ++i) {
    if (!seen[i]) throw SelectionError("selection: candidate " + std::to_string(i) + " is neither kept nor dropped");
  }
  return keep;
}

nlohmann::json mask_to_json(const std::vector<bool>& keep) {
  nlohmann::json kept = nlohmann::json::array(), dropped = nlohmann::json::array();
  for (std::size_t i = 0; i < keep.size(); ++i) (keep[i] ? kept : dropped).push_back(i);
  return {{"kept", kept}, {"dropped", dropped}};
}

std::vector<bool> emulated_mask(std::span<const double> acceptance, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<bool> keep(acceptance.size());
  std::vector<std::size_t> dropped;
  for (std::size_t i = 0; i < acceptance.size(); ++i) {
    keep[i] = uniform01(rng) < acceptance[i];
    if (!keep[i]) dropped.push_back(i);
  }
  const std::size_t limit = max_drops(acceptance.size());
  if (dropped.size() > limit) {
    std::stable_sort(dropped.begin(), dropped.end(),
                     [&](std::size_t a, std::size_t b) { return acceptance[a] > acceptance[b]; });
    for (std::size_t k = 0; k < dropped.size() - limit; ++k) keep[dropped[k]] = true;
  }
  return keep;
}

nlohmann::json query_payload(const PreferenceQuery& q) {
  nlohmann::json candidates = nlohmann::json::array();
  for (const Trajectory& t : q.candidates.trajectories) candidates.push_back(nlohmann::json::parse(trajectory_to_json(t)));
  nlohmann::json j = nlohmann::json::object();
  j["session"] = q.session;
  j["episode"] = q.episode;
  j["candidates"] = std::move(candidates);
  j["max_drops"] = q.max_drops;
  return j;
}

EmulatedOracle::EmulatedOracle(HiddenCostModel model, AcceptanceRule rule)
    : model_(std::move(model)), rule_(rule) {}

std::vector<bool> EmulatedOracle::decide(const PreferenceQuery& query) const {
  return emulated_mask(acceptance_prob(model_, query.candidates, rule_), query.seed);
}

PreferenceOutcome EmulatedOracle::select(const PreferenceQuery& query) {
  std::vector<double> acc = acceptance_prob(model_, query.candidates, rule_);
  const std::vector<bool> keep = emulated_mask(acc, query.seed);
  return outcome_from_mask(query.candidates, keep, query.episode, std::move(acc));
}

PreferenceOutcome HumanOracle::select(const PreferenceQuery& query) {
  std::unique_lock lock(mu_);
  pending_ = query;
  answer_.reset();
  cancelled_ = false;
  const bool answered = cv_.wait_for(lock, timeout_, [&] { return answer_.has_value() || cancelled_; });
  PreferenceQuery q = std::move(*pending_);
  pending_.reset();
  if (!answered || !answer_) {
    throw OracleTimeout("no preference received for episode " + std::to_string(q.episode), std::move(q));
  }
  std::vector<bool> keep = std::move(*answer_);
  answer_.reset();
  return outcome_from_mask(q.candidates, keep, q.episode);
}

std::optional<PreferenceQuery> HumanOracle::pending() const {
  std::lock_guard lock(mu_);
  if (answer_) return std::nullopt;
  return pending_;
}

HumanOracle::Reply HumanOracle::respond(const nlohmann::json& response, std::string& reason) {
  std::lock_guard lock(mu_);
  if (!pending_ || answer_) {
    reason = "no pending query";
    return Reply::kNoQuery;
  }
  try {
    std::vector<bool> keep = mask_from_json(response, pending_->candidates.size());
    outcome_from_mask(pending_->candidates, keep, pending_->episode);
    answer_ = std::move(keep);
  } catch (const SelectionError& e) {
    reason = e.what();
    return Reply::kInvalid;
  }
  cv_.notify_all();
  return Reply::kAccepted;
}

void HumanOracle::cancel() {
  std::lock_guard lock(mu_);
  cancelled_ = true;
  cv_.notify_all();
}

std::vector<std::size_t> putback_indices(const PreferenceOutcome& outcome, double beta, std::uint64_t seed) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("apply_putback: beta must lie in [0, 1]");
  std::vector<std::size_t> pool = outcome.dropped_indices;
  const std::size_t k = std::min(pool.size(), static_cast<std::size_t>(std::floor(beta * pool.size() + 1e-9)));
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

TrajectorySet apply_putback(const PreferenceOutcome& outcome, double beta, std::uint64_t seed) {
  const std::vector<std::size_t> restored = putback_indices(outcome, beta, seed);
  std::vector<std::pair<std::size_t, const Trajectory*>> merged;
  for (std::size_t i = 0; i < outcome.kept_indices.size(); ++i) {
    merged.emplace_back(outcome.kept_indices[i], &outcome.kept.trajectories[i]);
  }
  for (std::size_t idx : restored) {
    const auto it = std::find(outcome.dropped_indices.begin(), outcome.dropped_indices.end(), idx);
    merged.emplace_back(idx, &outcome.dropped.trajectories[static_cast<std::size_t>(it - outcome.dropped_indices.begin())]);
  }
  std::sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  TrajectorySet out;
  out.provenance = outcome.kept.provenance;
  for (const auto& [idx, traj] : merged) out.trajectories.push_back(*traj);
  return out;
}

std::pair<double, double> monotonicity_stat(std::span<const double> hidden_costs) {
  if (hidden_costs.empty()) throw std::invalid_argument("monotonicity_stat: empty set");
  const double lowest = *std::min_element(hidden_costs.begin(), hidden_costs.end());
  double before = 0.0, weighted = 0.0, weight = 0.0;
  for (double h : hidden_costs) {
    before -= h;
    const double w = std::exp(-(h - lowest));
    weighted -= w * h;
    weight += w;
  }
  return {before / static_cast<double>(hidden_costs.size()), weighted / weight};
}

std::pair<double, double> monotonicity_stat(const HiddenCostModel& model, const TrajectorySet& before) {
  return monotonicity_stat(model.evaluate(before));
}

}  // namespace prefirl
