#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefirl/env.hpp"
#include "prefirl/irl.hpp"
#include "prefirl/json_fields.hpp"
#include "prefirl/preference.hpp"

namespace prefirl {

struct TransferConfig {
  double epsilon = 0.1;
  int max_episodes = 10;
  double beta = 0.1;
  int inner_steps = 500;
  std::size_t candidates_per_episode = 100;
  bool inherit_params = true;
  GapMode gap = GapMode::kFixedGap;
  AcceptanceRule acceptance;

  void validate() const;
};

nlohmann::json to_json(const TransferConfig& cfg);
TransferConfig transfer_config_from_json(const nlohmann::json& j, TransferConfig base = {},
                                         const std::string& section = "transfer");

struct EpisodeMetrics {
  int episode = 0;
  double drop_fraction = 0.0;
  double mean_target_cost = 0.0;  // over the generated candidates
  std::size_t query_count = 0;    // cumulative
};

/// episode,drop_fraction,mean_target_cost,query_count
void write_metrics_csv(std::ostream& out, std::span<const EpisodeMetrics> history);

enum class SessionStatus { kRunning, kAwaitingPreference, kStopped };

std::string to_string(SessionStatus s);

/// Stop reason after an episode, or nullopt to continue. The episode bound
/// is checked first, so a run capped at one episode always reports it.
std::optional<std::string> check_stop(const EpisodeMetrics& last, const TransferConfig& cfg);

/// 64-bit FNV-1a digest of a trajectory's serialized form.
std::uint64_t trajectory_digest(const Trajectory& traj);

/// State of the outer loop. One episode is `prepare_episode` (fit on the
/// retained set, generate candidates) followed by `submit` (select, put back,
/// record, check stop). Seeds per episode i:
///   fit       derive_seed(seed, kFit, i)
///   init      derive_seed(seed, kInit, i)   (fresh models only)
///   candidate derive_seed(seed, kCandidates, i, j)
///   oracle    derive_seed(seed, kOracle, i)
///   put-back  derive_seed(seed, kPutback, i)
class TransferSession {
 public:
  TransferSession(std::string id, const Environment& env, TrajectorySet demos, TransferConfig cfg, IrlConfig irl,
                  std::uint64_t seed);

  const std::string& id() const { return id_; }
  const Environment& env() const { return env_; }
  const TransferConfig& config() const { return cfg_; }
  const IrlConfig& irl_config() const { return irl_; }
  std::uint64_t seed() const { return seed_; }

  SessionStatus status() const { return status_; }
  const std::string& stop_reason() const { return stop_reason_; }
  /// Episodes completed so far.
  int episode() const { return static_cast<int>(history_.size()); }
  const std::vector<EpisodeMetrics>& history() const { return history_; }
  const TrajectorySet& retained() const { return retained_; }
  const std::optional<IrlModel>& model() const { return model_; }
  const std::optional<PreferenceQuery>& query() const { return query_; }
  /// Candidate sets of completed episodes and the pending one, by episode.
  const TrajectorySet& candidates(int episode) const;
  const std::vector<IrlFitReport>& fit_reports() const { return reports_; }

  /// Fits on B_{i-1} and samples B~_i. Retries a diverged fit once with
  /// halved step sizes. Status becomes kAwaitingPreference.
  const PreferenceQuery& prepare_episode();
  /// Applies a selection for the pending query.
  void submit(const PreferenceOutcome& outcome);

  /// The emulated oracle for the current episode (fixed or adaptive gap).
  EmulatedOracle emulated_oracle() const;

  /// Every retained trajectory is an initial demonstration or a recorded
  /// candidate, unchanged. Returns the problems found.
  std::vector<std::string> audit() const;

  /// Directory with session.json, metrics.csv, retained.jsonl,
  /// candidates_<i>.jsonl, provenance.jsonl and the model checkpoints.
  void save(const std::string& dir) const;
  static TransferSession load(const std::string& dir, const Environment& env);

 private:
  std::string id_;
  const Environment& env_;
  TransferConfig cfg_;
  IrlConfig irl_;
  std::uint64_t seed_;

  SessionStatus status_ = SessionStatus::kRunning;
  std::string stop_reason_;
  TrajectorySet retained_;
  std::optional<IrlModel> model_;
  std::optional<PreferenceQuery> query_;
  std::vector<TrajectorySet> candidate_sets_;
  std::vector<EpisodeMetrics> history_;
  std::vector<IrlFitReport> reports_;
  std::vector<std::pair<Origin, std::uint64_t>> ledger_;
};

/// Drives the session until it stops. A null oracle uses the session's
/// emulated oracle; a given oracle may throw (e.g. OracleTimeout), leaving
/// the session at kAwaitingPreference.
void run_transfer(TransferSession& session, Oracle* oracle = nullptr);

/// One exact step p_{i+1} ∝ p_i * a_i with a_i the acceptance of C_h under
/// `rule`. Entries with p_i = 0 stay 0. Throws when no mass survives.
std::vector<double> trajectory_distribution_iterate(std::span<const double> p, std::span<const double> hidden_costs,
                                                    const AcceptanceRule& rule = {});
/// C_h = log p - log p_target, the hidden cost that makes ratio-mode
/// acceptance the rejection step towards p_target.
std::vector<double> ratio_hidden_costs(std::span<const double> p, std::span<const double> p_target);
/// `ratio_hidden_costs` followed by a ratio-mode step.
std::vector<double> ratio_iterate(std::span<const double> p, std::span<const double> p_target, double bound = 0.0);

}  // namespace prefirl
