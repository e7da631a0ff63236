#include "prefirl/service.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>

#include <httplib.h>

#include "prefirl/trajectory_io.hpp"

namespace prefirl {

namespace fs = std::filesystem;

struct SessionManager::Session {
  std::string id;
  RunConfig cfg;
  std::unique_ptr<HumanOracle> human;
  std::thread worker;
  std::atomic<bool> stopping{false};

  mutable std::mutex mu;
  mutable std::condition_variable changed;
  std::string status = "running";
  std::string stop_reason;
  std::string error;
  int episode = 0;
  std::vector<EpisodeMetrics> history;
  std::vector<std::shared_ptr<const TrajectorySet>> candidates;
  bool done = false;

  void publish(const TransferSession& s) {
    std::lock_guard lock(mu);
    status = to_string(s.status());
    stop_reason = s.stop_reason();
    episode = s.episode();
    history = s.history();
    const int generated = s.episode() + (s.status() == SessionStatus::kAwaitingPreference ? 1 : 0);
    while (static_cast<int>(candidates.size()) < generated) {
      candidates.push_back(std::make_shared<const TrajectorySet>(s.candidates(static_cast<int>(candidates.size()) + 1)));
    }
    changed.notify_all();
  }

  void finish(const std::string& failure) {
    std::lock_guard lock(mu);
    if (!failure.empty()) {
      status = "failed";
      error = failure;
    }
    done = true;
    changed.notify_all();
  }

  void run(const std::string& dir) {
    std::string failure;
    try {
      TransferRun run = prepare_run(cfg, id);
      TransferSession& s = *run.session;
      publish(s);
      while (s.status() != SessionStatus::kStopped) {
        if (stopping) return finish("service shut down");
        if (s.status() == SessionStatus::kRunning) s.prepare_episode();
        publish(s);
        if (!dir.empty()) s.save((fs::path(dir) / "session").string());
        const PreferenceQuery& q = *s.query();
        std::optional<PreferenceOutcome> outcome;
        if (!human) {
          outcome = s.emulated_oracle().select(q);
        } else {
          while (!outcome) {
            if (stopping) return finish("service shut down");
            try {
              outcome = human->select(q);
            } catch (const OracleTimeout&) {
              // The same query is offered again.
            }
          }
        }
        s.submit(*outcome);
        publish(s);
      }
      if (!dir.empty()) {
        run.config.output_dir = dir;
        write_run_artifacts(run);
      }
    } catch (const std::exception& e) {
      failure = e.what();
    }
    finish(failure);
  }
};

SessionManager::SessionManager(std::string root_dir) : root_dir_(std::move(root_dir)) {}

SessionManager::~SessionManager() { shutdown(); }

std::string SessionManager::create(const RunConfig& cfg) {
  auto session = std::make_shared<Session>();
  session->cfg = cfg;
  if (cfg.oracle == "human") {
    session->human = std::make_unique<HumanOracle>(
        std::chrono::milliseconds(static_cast<long long>(cfg.human_timeout_s * 1000.0)));
  }
  std::string dir;
  {
    std::lock_guard lock(mu_);
    session->id = "session-" + std::to_string(next_id_++);
    sessions_[session->id] = session;
  }
  if (!root_dir_.empty()) dir = (fs::path(root_dir_) / session->id).string();
  Session* raw = session.get();
  session->worker = std::thread([raw, dir] { raw->run(dir); });
  return session->id;
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw SessionNotFound("no session '" + id + "'");
  return it->second;
}

nlohmann::json SessionManager::status(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  nlohmann::json history = nlohmann::json::array();
  for (const EpisodeMetrics& m : s->history) {
    history.push_back({{"episode", m.episode},
                       {"drop_fraction", m.drop_fraction},
                       {"mean_target_cost", m.mean_target_cost},
                       {"query_count", m.query_count}});
  }
  nlohmann::json j = {{"id", s->id},         {"env", s->cfg.env},   {"oracle", s->cfg.oracle},
                      {"status", s->status}, {"stop_reason", s->stop_reason}, {"episode", s->episode},
                      {"history", history}};
  if (!s->error.empty()) j["error"] = s->error;
  return j;
}

std::optional<nlohmann::json> SessionManager::query(const std::string& id) const {
  const auto s = find(id);
  if (!s->human) return std::nullopt;
  const std::optional<PreferenceQuery> q = s->human->pending();
  if (!q) return std::nullopt;
  return query_payload(*q);
}

HumanOracle::Reply SessionManager::submit(const std::string& id, const nlohmann::json& selection,
                                          std::string& reason) {
  const auto s = find(id);
  if (!s->human) {
    reason = "session '" + id + "' uses the emulated oracle";
    return HumanOracle::Reply::kNoQuery;
  }
  return s->human->respond(selection, reason);
}

std::optional<nlohmann::json> SessionManager::trajectories(const std::string& id, int episode) const {
  const auto s = find(id);
  std::shared_ptr<const TrajectorySet> set;
  {
    std::lock_guard lock(s->mu);
    if (episode < 1 || episode > static_cast<int>(s->candidates.size())) return std::nullopt;
    set = s->candidates[static_cast<std::size_t>(episode - 1)];
  }
  nlohmann::json candidates = nlohmann::json::array();
  for (const Trajectory& t : set->trajectories) candidates.push_back(nlohmann::json::parse(trajectory_to_json(t)));
  return nlohmann::json{{"episode", episode}, {"candidates", std::move(candidates)}};
}

void SessionManager::wait(const std::string& id) const {
  const auto s = find(id);
  std::unique_lock lock(s->mu);
  s->changed.wait(lock, [&] { return s->done; });
}

std::vector<std::string> SessionManager::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

void SessionManager::shutdown() {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [_, s] : sessions_) all.push_back(s);
  }
  for (const auto& s : all) {
    s->stopping = true;
    while (s->worker.joinable()) {
      if (s->human) s->human->cancel();
      {
        std::unique_lock lock(s->mu);
        if (s->changed.wait_for(lock, std::chrono::milliseconds(10), [&] { return s->done; })) break;
      }
    }
    if (s->worker.joinable()) s->worker.join();
  }
}

namespace {

void reply(httplib::Response& res, int code, const nlohmann::json& body) {
  res.status = code;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int code, const std::string& message) {
  reply(res, code, {{"error", message}});
}

template <class Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const SessionNotFound& e) {
      reply_error(res, 404, e.what());
    } catch (const nlohmann::json::exception& e) {
      reply_error(res, 400, std::string("malformed JSON: ") + e.what());
    } catch (const std::invalid_argument& e) {
      reply_error(res, 400, e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, e.what());
    }
  };
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& sessions) {
  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"ok", true}}); });

  server.Post("/sessions", guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
                const RunConfig cfg = run_config_from_json(nlohmann::json::parse(req.body));
                reply(res, 201, {{"id", sessions.create(cfg)}});
              }));

  server.Get(R"(/sessions/([^/]+))", guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
               reply(res, 200, sessions.status(req.matches[1]));
             }));

  server.Get(R"(/sessions/([^/]+)/query)",
             guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
               const auto q = sessions.query(req.matches[1]);
               if (!q) return reply_error(res, 404, "no preference query is pending");
               reply(res, 200, *q);
             }));

  server.Post(R"(/sessions/([^/]+)/selection)",
              guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
                const nlohmann::json body = nlohmann::json::parse(req.body);
                std::string reason;
                switch (sessions.submit(req.matches[1], body, reason)) {
                  case HumanOracle::Reply::kAccepted: return reply(res, 200, {{"accepted", true}});
                  case HumanOracle::Reply::kInvalid: return reply_error(res, 400, reason);
                  case HumanOracle::Reply::kNoQuery: return reply_error(res, 409, reason);
                }
              }));

  server.Get(R"(/sessions/([^/]+)/trajectories/(\d+))",
             guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
               const auto t = sessions.trajectories(req.matches[1], std::stoi(req.matches[2]));
               if (!t) return reply_error(res, 404, "no candidates for that episode");
               reply(res, 200, *t);
             }));
}

void serve(const std::string& host, int port, const std::string& root_dir) {
  httplib::Server server;
  SessionManager sessions(root_dir);
  register_routes(server, sessions);
  if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace prefirl
