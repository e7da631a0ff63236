#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prefirl/env.hpp"

namespace prefirl {

enum class GapMode { kFixedGap, kAdaptiveGap };

std::string to_string(GapMode mode);
GapMode gap_mode_from_string(const std::string& name);

/// Hidden cost C_h(tau) = C_tar(tau) - C_ref(tau), summed per step. The
/// reference is the basic cost (fixed gap) or the current learned cost
/// (adaptive gap).
struct HiddenCostModel {
  GapMode mode = GapMode::kFixedGap;
  CostFunction target;
  CostFunction reference;

  static HiddenCostModel fixed_gap(const Environment& env);
  static HiddenCostModel adaptive_gap(const Environment& env, CostFunction learned);

  double per_step(const StateActionPair& p) const { return target(p) - reference(p); }
  double operator()(const Trajectory& traj) const;
  std::vector<double> evaluate(const TrajectorySet& set) const;
};

enum class Normalization { kSetNormalized, kRatio };

std::string to_string(Normalization n);
Normalization normalization_from_string(const std::string& name);

/// How acceptance probabilities are scaled. Set-normalized: exp(-C_h)
/// relative to the set's largest weight. Ratio: min(1, exp(-C_h) / M'),
/// with M' = `bound` when positive and the set maximum of exp(-C_h) otherwise.
struct AcceptanceRule {
  Normalization mode = Normalization::kSetNormalized;
  double bound = 0.0;
};

std::vector<double> acceptance_probabilities(std::span<const double> hidden_costs, const AcceptanceRule& rule = {});
std::vector<double> acceptance_prob(const HiddenCostModel& model, const TrajectorySet& candidates,
                                    const AcceptanceRule& rule = {});

/// Largest number of candidates that may be dropped in one episode.
std::size_t max_drops(std::size_t n_candidates);

/// Keep/drop decision for one episode. Indices refer to candidate order.
struct PreferenceOutcome {
  TrajectorySet kept;
  TrajectorySet dropped;
  std::vector<std::size_t> kept_indices;
  std::vector<std::size_t> dropped_indices;
  std::vector<double> acceptance;  // empty for human decisions
  std::size_t query_count = 0;

  double drop_fraction() const;
};

/// Rejected keep/drop response; the message explains the violated rule.
class SelectionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Builds an outcome from a keep mask, refusing masks that drop more than
/// max_drops(candidates).
PreferenceOutcome outcome_from_mask(const TrajectorySet& candidates, const std::vector<bool>& keep, int episode,
                                    std::vector<double> acceptance = {});
/// Parses {"kept": [...], "dropped": [...]} into a keep mask; every index
/// must appear exactly once.
std::vector<bool> mask_from_json(const nlohmann::json& response, std::size_t n_candidates);
nlohmann::json mask_to_json(const std::vector<bool>& keep);

/// Emulated Bernoulli selection with the half-drop rule enforced by
/// restoring the dropped candidates of highest acceptance first (ties by
/// lower index).
std::vector<bool> emulated_mask(std::span<const double> acceptance, std::uint64_t seed);

/// The pending question for one episode.
struct PreferenceQuery {
  std::string session;
  int episode = 0;
  TrajectorySet candidates;
  std::size_t max_drops = 0;
  std::uint64_t seed = 0;  // for emulated oracles
};

/// {"session", "episode", "candidates": [trajectory objects], "max_drops"}.
nlohmann::json query_payload(const PreferenceQuery& q);

class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual PreferenceOutcome select(const PreferenceQuery& query) = 0;
};

class EmulatedOracle final : public Oracle {
 public:
  EmulatedOracle(HiddenCostModel model, AcceptanceRule rule = {});
  PreferenceOutcome select(const PreferenceQuery& query) override;
  /// The keep mask that `select` would produce.
  std::vector<bool> decide(const PreferenceQuery& query) const;
  const HiddenCostModel& model() const { return model_; }

 private:
  HiddenCostModel model_;
  AcceptanceRule rule_;
};

/// Raised when no response arrives in time; the query stays pending so it
/// can be re-issued.
class OracleTimeout : public std::runtime_error {
 public:
  OracleTimeout(const std::string& what, PreferenceQuery query)
      : std::runtime_error(what), query_(std::move(query)) {}
  const PreferenceQuery& query() const { return query_; }

 private:
  PreferenceQuery query_;
};

/// Mailbox between the engine (which blocks in `select`) and a remote
/// responder. At most one query is outstanding.
class HumanOracle final : public Oracle {
 public:
  enum class Reply { kAccepted, kInvalid, kNoQuery };

  explicit HumanOracle(std::chrono::milliseconds timeout = std::chrono::hours(1)) : timeout_(timeout) {}

  PreferenceOutcome select(const PreferenceQuery& query) override;

  std::optional<PreferenceQuery> pending() const;
  /// Validates and delivers a response. kNoQuery when nothing is pending or
  /// the pending query was already answered; kInvalid with `reason` set
  /// when the mask is malformed or drops too many.
  Reply respond(const nlohmann::json& response, std::string& reason);
  /// Wakes a blocked `select`, which then throws OracleTimeout.
  void cancel();

 private:
  std::chrono::milliseconds timeout_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<PreferenceQuery> pending_;
  std::optional<std::vector<bool>> answer_;
  bool cancelled_ = false;
};

/// B_i plus floor(beta * |dropped|) dropped trajectories drawn uniformly
/// without replacement, in candidate order.
TrajectorySet apply_putback(const PreferenceOutcome& outcome, double beta, std::uint64_t seed);
/// The dropped indices restored by `apply_putback`, ascending.
std::vector<std::size_t> putback_indices(const PreferenceOutcome& outcome, double beta, std::uint64_t seed);

/// (mean of -C_h, exp(-C_h)-weighted mean of -C_h) over one set.
std::pair<double, double> monotonicity_stat(std::span<const double> hidden_costs);
std::pair<double, double> monotonicity_stat(const HiddenCostModel& model, const TrajectorySet& before);

}  // namespace prefirl
