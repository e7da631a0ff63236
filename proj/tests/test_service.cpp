#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "prefirl/service.hpp"
#include "prefirl/trajectory_io.hpp"

using namespace prefirl;

namespace {

class TestServer {
 public:
  TestServer() {
    register_routes(server_, sessions_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~TestServer() {
    server_.stop();
    thread_.join();
    sessions_.shutdown();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }
  SessionManager& sessions() { return sessions_; }

 private:
  SessionManager sessions_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

const nlohmann::json kRun = {{"env", "two_goal"},
                             {"seeds", {{"master", 7}}},
                             {"demos", {{"count", 200}}},
                             {"transfer", {{"inner_steps", 200}, {"candidates_per_episode", 40}, {"max_episodes", 3}}}};

nlohmann::json body(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

std::string create(httplib::Client& c, nlohmann::json cfg) {
  const auto r = c.Post("/sessions", cfg.dump(), "application/json");
  REQUIRE(r);
  REQUIRE(r->status == 201);
  return body(r).at("id").get<std::string>();
}

// Polls until a query is pending or the session has stopped.
std::optional<nlohmann::json> next_query(httplib::Client& c, const std::string& id) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::minutes(5);
  while (std::chrono::steady_clock::now() < deadline) {
    const auto q = c.Get("/sessions/" + id + "/query");
    REQUIRE(q);
    if (q->status == 200) return body(q);
    const auto s = c.Get("/sessions/" + id);
    const std::string status = body(s).at("status").get<std::string>();
    if (status == "stopped" || status == "failed") return std::nullopt;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  FAIL("no query within the deadline");
  return std::nullopt;
}

}  // namespace

TEST_CASE("health and unknown resources") {
  TestServer server;
  auto c = server.client();
  const auto h = c.Get("/healthz");
  REQUIRE(h);
  CHECK(h->status == 200);
  CHECK(c.Get("/sessions/nope")->status == 404);
  CHECK(c.Get("/sessions/nope/query")->status == 404);
  CHECK(c.Post("/sessions/nope/selection", R"({"kept": [], "dropped": []})", "application/json")->status == 404);
}

TEST_CASE("session creation validates the config") {
  TestServer server;
  auto c = server.client();
  nlohmann::json bad = kRun;
  bad["transfer"]["epsilon"] = 1.5;
  const auto r = c.Post("/sessions", bad.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);
  CHECK(body(r).at("error").get<std::string>().find("transfer.epsilon") != std::string::npos);
  const auto garbled = c.Post("/sessions", "{\"env\": ", "application/json");
  CHECK(garbled->status == 400);
}

TEST_CASE("an emulated session runs on its own") {
  TestServer server;
  auto c = server.client();
  nlohmann::json cfg = kRun;
  cfg["transfer"]["max_episodes"] = 1;
  const std::string id = create(c, cfg);
  server.sessions().wait(id);
  const nlohmann::json s = body(c.Get("/sessions/" + id));
  CHECK(s.at("status") == "stopped");
  CHECK(s.at("stop_reason") == "max_episodes");
  CHECK(s.at("history").size() == 1);
  CHECK(c.Get("/sessions/" + id + "/query")->status == 404);
  CHECK(c.Post("/sessions/" + id + "/selection", R"({"kept": [], "dropped": []})", "application/json")->status == 409);
  const auto t = c.Get("/sessions/" + id + "/trajectories/1");
  REQUIRE(t->status == 200);
  CHECK(body(t).at("candidates").size() == 40);
  CHECK(c.Get("/sessions/" + id + "/trajectories/2")->status == 404);
}

TEST_CASE("a human session answered like the emulator matches the headless run") {
  nlohmann::json cfg = kRun;
  cfg["oracle"] = "human";
  const RunConfig run_cfg = run_config_from_json(cfg);
  TransferRun headless = prepare_run(run_cfg);
  TransferSession& mirror = *headless.session;

  TestServer server;
  auto c = server.client();
  const std::string id = create(c, cfg);
  const std::string selection = "/sessions/" + id + "/selection";

  while (mirror.status() != SessionStatus::kStopped) {
    const PreferenceQuery& expected = mirror.prepare_episode();
    const auto q = next_query(c, id);
    REQUIRE(q);
    CHECK(q->at("session") == id);
    CHECK(q->at("episode") == expected.episode);
    CHECK(q->at("max_drops") == expected.max_drops);
    REQUIRE(q->at("candidates").size() == expected.candidates.size());
    for (std::size_t k = 0; k < expected.candidates.size(); ++k) {
      CHECK(q->at("candidates")[k] == nlohmann::json::parse(trajectory_to_json(expected.candidates.trajectories[k])));
    }

    const std::vector<bool> keep = mirror.emulated_oracle().decide(expected);
    std::vector<bool> all_dropped(keep.size(), false);
    const auto too_many = c.Post(selection, mask_to_json(all_dropped).dump(), "application/json");
    CHECK(too_many->status == 400);
    CHECK(body(too_many).at("error").get<std::string>().find("max_drops") != std::string::npos);
    CHECK(c.Post(selection, R"({"kept": [0]})", "application/json")->status == 400);
    CHECK(c.Post(selection, "not json", "application/json")->status == 400);

    const auto ok = c.Post(selection, mask_to_json(keep).dump(), "application/json");
    REQUIRE(ok);
    CHECK(ok->status == 200);
    mirror.submit(outcome_from_mask(expected.candidates, keep, expected.episode));
  }
  CHECK(c.Post(selection, R"({"kept": [], "dropped": []})", "application/json")->status == 409);

  server.sessions().wait(id);
  const nlohmann::json s = body(c.Get("/sessions/" + id));
  CHECK(s.at("status") == "stopped");
  CHECK(s.at("stop_reason") == mirror.stop_reason());
  REQUIRE(s.at("history").size() == mirror.history().size());
  for (std::size_t k = 0; k < mirror.history().size(); ++k) {
    const EpisodeMetrics& m = mirror.history()[k];
    const nlohmann::json& h = s.at("history")[k];
    CHECK(h.at("episode") == m.episode);
    CHECK(h.at("drop_fraction").get<double>() == m.drop_fraction);
    CHECK(h.at("mean_target_cost").get<double>() == m.mean_target_cost);
    CHECK(h.at("query_count") == m.query_count);
  }
}

TEST_CASE("shutdown releases a session waiting for a person") {
  nlohmann::json cfg = kRun;
  cfg["oracle"] = "human";
  SessionManager sessions;
  const std::string id = sessions.create(run_config_from_json(cfg));
  while (!sessions.query(id)) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  sessions.shutdown();
  CHECK(sessions.status(id).at("status") == "failed");
}
