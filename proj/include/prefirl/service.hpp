#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "prefirl/config.hpp"
#include "prefirl/preference.hpp"

namespace httplib {
class Server;
}

namespace prefirl {

class SessionNotFound : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Hosts transfer sessions, each driven by its own engine thread. Readers
/// only see snapshots published by the engine, so polling never touches
/// engine state.
class SessionManager {
 public:
  /// Session checkpoints go to `root_dir/<id>` whenever a session waits for
  /// a preference or stops; an empty root disables persistence.
  explicit SessionManager(std::string root_dir = {});
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  /// Validates the config and starts the engine; returns the session id.
  std::string create(const RunConfig& cfg);

  /// {"id", "env", "oracle", "status", "stop_reason", "episode", "history": [...], "error"?}
  nlohmann::json status(const std::string& id) const;
  /// The pending preference query payload, if any.
  std::optional<nlohmann::json> query(const std::string& id) const;
  HumanOracle::Reply submit(const std::string& id, const nlohmann::json& selection, std::string& reason);
  /// {"episode", "candidates": [...]} for a generated episode.
  std::optional<nlohmann::json> trajectories(const std::string& id, int episode) const;
  /// Blocks until the session has stopped or failed.
  void wait(const std::string& id) const;
  std::vector<std::string> ids() const;

  void shutdown();

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;

  std::string root_dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  int next_id_ = 1;
};

/// Registers the HTTP routes on `server`:
///   POST /sessions                         config JSON -> 201 {"id"}
///   GET  /sessions/{id}                    status and metrics history
///   GET  /sessions/{id}/query              pending query, 404 when none
///   POST /sessions/{id}/selection          {"kept", "dropped"}; 400 with the
///                                          violated rule, 409 when nothing is pending
///   GET  /sessions/{id}/trajectories/{e}   candidates of episode e
///   GET  /healthz                          200
void register_routes(httplib::Server& server, SessionManager& sessions);

/// Blocking HTTP service on host:port.
void serve(const std::string& host, int port, const std::string& root_dir);

}  // namespace prefirl
