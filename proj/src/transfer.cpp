#include "prefirl/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "prefirl/format.hpp"
#include "prefirl/trajectory_io.hpp"

namespace prefirl {

namespace fs = std::filesystem;

void TransferConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("transfer.epsilon", "must lie in (0, 1)");
  if (max_episodes < 1) throw ConfigError("transfer.max_episodes", "must be at least 1");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("transfer.beta", "must lie in [0, 1]");
  if (inner_steps < 1) throw ConfigError("transfer.inner_steps", "must be at least 1");
  if (candidates_per_episode < 2) throw ConfigError("transfer.candidates_per_episode", "must be at least 2");
  if (!(acceptance.bound >= 0.0) || !std::isfinite(acceptance.bound)) {
    throw ConfigError("transfer.acceptance_bound", "must be a finite non-negative number (0: set maximum)");
  }
}

nlohmann::json to_json(const TransferConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  j["epsilon"] = cfg.epsilon;
  j["max_episodes"] = cfg.max_episodes;
  j["beta"] = cfg.beta;
  j["inner_steps"] = cfg.inner_steps;
  j["candidates_per_episode"] = cfg.candidates_per_episode;
  j["inherit_params"] = cfg.inherit_params;
  j["gap"] = to_string(cfg.gap);
  j["normalization"] = to_string(cfg.acceptance.mode);
  j["acceptance_bound"] = cfg.acceptance.bound;
  return j;
}

TransferConfig transfer_config_from_json(const nlohmann::json& j, TransferConfig cfg, const std::string& section) {
  FieldReader r(j, section);
  r.read("epsilon", cfg.epsilon);
  r.read("max_episodes", cfg.max_episodes);
  r.read("beta", cfg.beta);
  r.read("inner_steps", cfg.inner_steps);
  r.read("candidates_per_episode", cfg.candidates_per_episode);
  r.read("inherit_params", cfg.inherit_params);
  r.read_with("gap", cfg.gap, gap_mode_from_string);
  r.read_with("normalization", cfg.acceptance.mode, normalization_from_string);
  r.read("acceptance_bound", cfg.acceptance.bound);
  r.finish();
  cfg.validate();
  return cfg;
}

void write_metrics_csv(std::ostream& out, std::span<const EpisodeMetrics> history) {
  out << "episode,drop_fraction,mean_target_cost,query_count\n";
  for (const EpisodeMetrics& m : history) {
    out << m.episode << ',' << format_double(m.drop_fraction) << ',' << format_double(m.mean_target_cost) << ','
        << m.query_count << '\n';
  }
}

namespace {

std::vector<EpisodeMetrics> read_metrics_csv(std::istream& in) {
  std::vector<EpisodeMetrics> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell[4];
    for (std::string& c : cell) std::getline(row, c, ',');
    out.push_back({std::stoi(cell[0]), std::strtod(cell[1].c_str(), nullptr), std::strtod(cell[2].c_str(), nullptr),
                   static_cast<std::size_t>(std::stoull(cell[3]))});
  }
  return out;
}

SessionStatus status_from_string(const std::string& s) {
  if (s == "running") return SessionStatus::kRunning;
  if (s == "awaiting_preference") return SessionStatus::kAwaitingPreference;
  if (s == "stopped") return SessionStatus::kStopped;
  throw std::invalid_argument("unknown session status '" + s + "'");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::kRunning: return "running";
    case SessionStatus::kAwaitingPreference: return "awaiting_preference";
    case SessionStatus::kStopped: return "stopped";
  }
  return "running";
}

std::optional<std::string> check_stop(const EpisodeMetrics& last, const TransferConfig& cfg) {
  if (last.episode >= cfg.max_episodes) return "max_episodes";
  if (last.drop_fraction < cfg.epsilon) return "epsilon";
  return std::nullopt;
}

std::uint64_t trajectory_digest(const Trajectory& traj) {
  Trajectory bare;
  bare.env_id = traj.env_id;
  bare.pairs = traj.pairs;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : trajectory_to_json(bare)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

TransferSession::TransferSession(std::string id, const Environment& env, TrajectorySet demos, TransferConfig cfg,
                                 IrlConfig irl, std::uint64_t seed)
    : id_(std::move(id)), env_(env), cfg_(cfg), irl_(std::move(irl)), seed_(seed), retained_(std::move(demos)) {
  cfg_.validate();
  if (retained_.empty()) throw std::invalid_argument("transfer: the initial demonstration set is empty");
  retained_.provenance = {Provenance::Kind::kInitialDemos, 0};
  for (std::size_t k = 0; k < retained_.size(); ++k) {
    Trajectory& t = retained_.trajectories[k];
    if (t.env_id != env_.id()) {
      throw std::invalid_argument("transfer: demonstration " + std::to_string(k) + " belongs to '" + t.env_id +
                                  "', not '" + env_.id() + "'");
    }
    t.origin = {0, static_cast<int>(k)};
    ledger_.emplace_back(t.origin, trajectory_digest(t));
  }
}

const TrajectorySet& TransferSession::candidates(int episode) const {
  if (episode < 1 || episode > static_cast<int>(candidate_sets_.size())) {
    throw std::out_of_range("no candidates recorded for episode " + std::to_string(episode));
  }
  return candidate_sets_[static_cast<std::size_t>(episode - 1)];
}

const PreferenceQuery& TransferSession::prepare_episode() {
  if (status_ != SessionStatus::kRunning) {
    throw std::logic_error("prepare_episode: session is " + to_string(status_));
  }
  const int i = episode() + 1;
  IrlConfig fit_cfg = irl_;
  fit_cfg.steps = cfg_.inner_steps;
  const IrlModel start = (cfg_.inherit_params && model_)
                             ? *model_
                             : init_irl_model(env_, fit_cfg, derive_seed(seed_, Stream::kInit, static_cast<std::uint64_t>(i)));
  const std::uint64_t fit_seed = derive_seed(seed_, Stream::kFit, static_cast<std::uint64_t>(i));
  std::optional<IrlFitResult> fit;
  try {
    fit = fit_irl(retained_, env_, fit_cfg, fit_seed, &start);
  } catch (const DivergenceError&) {
    fit_cfg.policy_adam.step_size *= 0.5;
    fit_cfg.cost_adam.step_size *= 0.5;
    fit = fit_irl(retained_, env_, fit_cfg, fit_seed, &start);
  }
  model_ = std::move(fit->model);
  reports_.push_back(std::move(fit->report));

  TrajectorySet cands;
  cands.provenance = {Provenance::Kind::kGenerated, i};
  const CostFunction target = env_.target(), basic = env_.basic();
  for (std::size_t j = 0; j < cfg_.candidates_per_episode; ++j) {
    Trajectory t =
        sample_rollout(env_, model_->policy, derive_seed(seed_, Stream::kCandidates, static_cast<std::uint64_t>(i), j))
            .trajectory;
    t.origin = {i, static_cast<int>(j)};
    trajectory_cost(t, target);
    trajectory_cost(t, basic);
    ledger_.emplace_back(t.origin, trajectory_digest(t));
    cands.trajectories.push_back(std::move(t));
  }
  candidate_sets_.push_back(cands);
  query_ = PreferenceQuery{id_, i, std::move(cands), max_drops(cfg_.candidates_per_episode),
                           derive_seed(seed_, Stream::kOracle, static_cast<std::uint64_t>(i))};
  status_ = SessionStatus::kAwaitingPreference;
  return *query_;
}

void TransferSession::submit(const PreferenceOutcome& outcome) {
  if (status_ != SessionStatus::kAwaitingPreference || !query_) {
    throw std::logic_error("submit: no preference query is pending");
  }
  const std::size_t n = query_->candidates.size();
  if (outcome.kept_indices.size() + outcome.dropped_indices.size() != n) {
    throw SelectionError("submit: the outcome does not cover the " + std::to_string(n) + " candidates");
  }
  if (outcome.dropped_indices.size() > query_->max_drops) {
    throw SelectionError("max_drops exceeded: " + std::to_string(outcome.dropped_indices.size()) + " dropped, at most " +
                         std::to_string(query_->max_drops) + " allowed");
  }
  const int i = query_->episode;
  EpisodeMetrics m;
  m.episode = i;
  m.drop_fraction = outcome.drop_fraction();
  m.mean_target_cost = mean_cost(query_->candidates, env_.target());
  m.query_count = (history_.empty() ? 0 : history_.back().query_count) + n;

  retained_ = apply_putback(outcome, cfg_.beta, derive_seed(seed_, Stream::kPutback, static_cast<std::uint64_t>(i)));
  retained_.provenance = {Provenance::Kind::kSelected, i};
  history_.push_back(m);
  query_.reset();
  if (const auto reason = check_stop(m, cfg_)) {
    status_ = SessionStatus::kStopped;
    stop_reason_ = *reason;
  } else {
    status_ = SessionStatus::kRunning;
  }
}

EmulatedOracle TransferSession::emulated_oracle() const {
  if (cfg_.gap == GapMode::kFixedGap) return EmulatedOracle(HiddenCostModel::fixed_gap(env_), cfg_.acceptance);
  if (!model_) throw std::logic_error("adaptive gap needs a fitted cost");
  return EmulatedOracle(HiddenCostModel::adaptive_gap(env_, learned_cost(env_, model_->discriminator)), cfg_.acceptance);
}

std::vector<std::string> TransferSession::audit() const {
  std::map<std::pair<int, int>, std::uint64_t> known;
  for (const auto& [origin, digest] : ledger_) known[{origin.episode, origin.index}] = digest;
  std::vector<std::string> problems;
  for (std::size_t k = 0; k < retained_.size(); ++k) {
    const Trajectory& t = retained_.trajectories[k];
    const auto it = known.find({t.origin.episode, t.origin.index});
    const std::string where = "retained trajectory " + std::to_string(k) + " (episode " +
                              std::to_string(t.origin.episode) + ", index " + std::to_string(t.origin.index) + ")";
    if (it == known.end()) {
      problems.push_back(where + " has no recorded origin");
    } else if (it->second != trajectory_digest(t)) {
      problems.push_back(where + " differs from its recorded origin");
    }
  }
  return problems;
}

void TransferSession::save(const std::string& dir) const {
  fs::create_directories(dir);
  const fs::path root(dir);
  nlohmann::json j = nlohmann::json::object();
  j["id"] = id_;
  j["env"] = env_.id();
  j["seed"] = seed_;
  j["status"] = to_string(status_);
  j["stop_reason"] = stop_reason_;
  j["episode"] = episode();
  j["transfer"] = to_json(cfg_);
  j["irl"] = to_json(irl_);
  std::ofstream(root / "session.json") << j.dump(2) << '\n';

  std::ofstream metrics(root / "metrics.csv");
  write_metrics_csv(metrics, history_);

  save_jsonl((root / "retained.jsonl").string(), retained_);
  nlohmann::json origins = nlohmann::json::array();
  for (const Trajectory& t : retained_.trajectories) origins.push_back({t.origin.episode, t.origin.index});
  std::ofstream(root / "retained_origins.json") << origins.dump() << '\n';

  for (std::size_t e = 0; e < candidate_sets_.size(); ++e) {
    save_jsonl((root / ("candidates_" + std::to_string(e + 1) + ".jsonl")).string(), candidate_sets_[e]);
  }
  std::ofstream prov(root / "provenance.jsonl");
  for (const auto& [origin, digest] : ledger_) {
    prov << nlohmann::json{{"episode", origin.episode}, {"index", origin.index}, {"digest", hex64(digest)}}.dump()
         << '\n';
  }
  for (std::size_t e = 0; e < reports_.size(); ++e) {
    std::ofstream report(root / ("fit_" + std::to_string(e + 1) + ".csv"));
    reports_[e].write_csv(report);
  }
  if (model_) {
    save_policy((root / "policy.ckpt").string(), model_->policy);
    save_discriminator((root / "discriminator.ckpt").string(), model_->discriminator);
  }
}

TransferSession TransferSession::load(const std::string& dir, const Environment& env) {
  const fs::path root(dir);
  std::ifstream in(root / "session.json");
  if (!in) throw std::runtime_error("no session.json in " + dir);
  const nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("env").get<std::string>() != env.id()) {
    throw std::invalid_argument("session was saved for '" + j.at("env").get<std::string>() + "'");
  }
  TrajectorySet retained = load_jsonl((root / "retained.jsonl").string());
  TransferSession s(j.at("id").get<std::string>(), env, retained, transfer_config_from_json(j.at("transfer")),
                    irl_config_from_json(j.at("irl")), j.at("seed").get<std::uint64_t>());
  std::ifstream origins_in(root / "retained_origins.json");
  const nlohmann::json origins = nlohmann::json::parse(origins_in);
  for (std::size_t k = 0; k < s.retained_.size(); ++k) {
    s.retained_.trajectories[k].origin = {origins.at(k).at(0).get<int>(), origins.at(k).at(1).get<int>()};
  }
  s.ledger_.clear();
  std::ifstream prov(root / "provenance.jsonl");
  std::string line;
  while (std::getline(prov, line)) {
    if (line.empty()) continue;
    const nlohmann::json p = nlohmann::json::parse(line);
    s.ledger_.emplace_back(Origin{p.at("episode").get<int>(), p.at("index").get<int>()},
                           std::stoull(p.at("digest").get<std::string>(), nullptr, 16));
  }
  std::ifstream metrics(root / "metrics.csv");
  s.history_ = read_metrics_csv(metrics);
  s.status_ = status_from_string(j.at("status").get<std::string>());
  s.stop_reason_ = j.at("stop_reason").get<std::string>();
  const int episodes = s.episode() + (s.status_ == SessionStatus::kAwaitingPreference ? 1 : 0);
  for (int e = 1; e <= episodes; ++e) {
    TrajectorySet c = load_jsonl((root / ("candidates_" + std::to_string(e) + ".jsonl")).string());
    c.provenance = {Provenance::Kind::kGenerated, e};
    for (std::size_t k = 0; k < c.size(); ++k) c.trajectories[k].origin = {e, static_cast<int>(k)};
    s.candidate_sets_.push_back(std::move(c));
  }
  s.retained_.provenance = s.episode() == 0 ? Provenance{Provenance::Kind::kInitialDemos, 0}
                                            : Provenance{Provenance::Kind::kSelected, s.episode()};
  if (fs::exists(root / "policy.ckpt")) {
    s.model_ = IrlModel{load_policy((root / "policy.ckpt").string(), env),
                        load_discriminator((root / "discriminator.ckpt").string())};
  }
  if (s.status_ == SessionStatus::kAwaitingPreference) {
    const int i = episodes;
    s.query_ = PreferenceQuery{s.id_, i, s.candidate_sets_.back(), max_drops(s.candidate_sets_.back().size()),
                               derive_seed(s.seed_, Stream::kOracle, static_cast<std::uint64_t>(i))};
  }
  return s;
}

void run_transfer(TransferSession& session, Oracle* oracle) {
  while (session.status() != SessionStatus::kStopped) {
    if (session.status() == SessionStatus::kRunning) session.prepare_episode();
    const PreferenceQuery& q = *session.query();
    const PreferenceOutcome outcome = oracle ? oracle->select(q) : session.emulated_oracle().select(q);
    session.submit(outcome);
  }
}

std::vector<double> trajectory_distribution_iterate(std::span<const double> p, std::span<const double> hidden_costs,
                                                    const AcceptanceRule& rule) {
  if (p.size() != hidden_costs.size()) throw std::invalid_argument("trajectory_distribution_iterate: size mismatch");
  std::vector<std::size_t> support;
  std::vector<double> h;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) {
      support.push_back(k);
      h.push_back(hidden_costs[k]);
    }
  }
  if (support.empty()) throw std::domain_error("trajectory_distribution_iterate: the distribution has no mass");
  const std::vector<double> acc = acceptance_probabilities(h, rule);
  std::vector<double> next(p.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < support.size(); ++k) {
    next[support[k]] = p[support[k]] * acc[k];
    total += next[support[k]];
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::domain_error("trajectory_distribution_iterate: no mass survives the selection");
  }
  for (double& v : next) v /= total;
  return next;
}

std::vector<double> ratio_hidden_costs(std::span<const double> p, std::span<const double> p_target) {
  if (p.size() != p_target.size()) throw std::invalid_argument("ratio_hidden_costs: size mismatch");
  std::vector<double> h(p.size(), 0.0);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) {
      h[k] = p_target[k] > 0.0 ? std::log(p[k]) - std::log(p_target[k]) : std::numeric_limits<double>::infinity();
    }
  }
  return h;
}

std::vector<double> ratio_iterate(std::span<const double> p, std::span<const double> p_target, double bound) {
  return trajectory_distribution_iterate(p, ratio_hidden_costs(p, p_target), {Normalization::kRatio, bound});
}

}  // namespace prefirl
