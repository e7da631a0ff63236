#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "prefirl_cli_test";

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Result cli(const std::string& args) {
  fs::create_directories(kWork);
  const fs::path out = kWork / "stdout.txt", err = kWork / "stderr.txt";
  const std::string command = std::string(PREFIRL_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(command.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::size_t lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_CASE("usage errors exit with status 2") {
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  const Result bad = cli("transfer run --set env=two_goal --set transfer.epsilon=1.5");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("epsilon") != std::string::npos);
  CHECK(cli("transfer run --set env=two_goal --set oracle=human").code == 2);
  CHECK(cli("oracle enumerate --env two_peaks").code == 2);
}

TEST_CASE("zero-gap transfer stops after one episode") {
  const fs::path out = kWork / "zero_gap";
  fs::remove_all(out);
  const Result r = cli("transfer run --no-baseline --set env=zero_gap --set transfer.inner_steps=50 --set output_dir=" +
                       out.string());
  REQUIRE(r.code == 0);
  const nlohmann::json summary = nlohmann::json::parse(r.out);
  CHECK(summary.at("stop_reason") == "epsilon");
  CHECK(summary.at("episodes") == 1);
  const std::string metrics = slurp(out / "metrics.csv");
  CHECK(lines(metrics) == 2);
  CHECK(metrics.find("\n1,0,") != std::string::npos);
  for (const char* file : {"effective_config.json", "demos.jsonl", "policy.ckpt", "discriminator.ckpt"}) {
    CHECK(fs::exists(out / file));
  }
  const nlohmann::json effective = nlohmann::json::parse(slurp(out / "effective_config.json"));
  CHECK(effective.at("transfer").at("inner_steps") == 50);
}

TEST_CASE("bad demonstration files are rejected") {
  const fs::path empty = kWork / "empty.jsonl", broken = kWork / "broken.jsonl";
  fs::create_directories(kWork);
  std::ofstream(empty).close();
  std::ofstream(broken) << "{\"env\": \"two_state\", \"pairs\": [\n";
  const Result e = cli("irl fit --env two_state --demos " + empty.string());
  CHECK(e.code == 2);
  CHECK(e.err.find("no trajectories") != std::string::npos);
  const Result b = cli("irl fit --env two_state --demos " + broken.string());
  CHECK(b.code == 2);
  CHECK(b.err.find("line 1") != std::string::npos);
  CHECK(cli("irl fit --env two_state --demos " + (kWork / "missing.jsonl").string()).code == 2);
}

TEST_CASE("exact oracle table") {
  const Result r = cli("oracle enumerate --env two_state --cost target");
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("trajectory_index,cost,probability\n", 0) == 0);
  CHECK(lines(r.out) == 17);
}

TEST_CASE("IRL fit from generated demonstrations") {
  const fs::path demos = kWork / "two_state_demos.jsonl";
  REQUIRE(cli("demos generate --set env=two_state --set demos.count=1000 --set seeds.master=3 --out " + demos.string())
              .code == 0);
  CHECK(lines(slurp(demos)) == 1000);

  const fs::path a = kWork / "fit_a", b = kWork / "fit_b";
  const Result first = cli("irl fit --env two_state --seed 5 --demos " + demos.string() + " --out " + a.string());
  REQUIRE(first.code == 0);
  REQUIRE(cli("irl fit --env two_state --seed 5 --demos " + demos.string() + " --out " + b.string()).code == 0);
  CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
  CHECK(nlohmann::json::parse(first.out).at("final_tv").get<double>() <= 0.05);

  const Result eval = cli("eval policy --env two_state --checkpoint " + (a / "policy.ckpt").string());
  REQUIRE(eval.code == 0);
  CHECK(nlohmann::json::parse(eval.out).at("exact") == true);
  CHECK(cli("eval policy --env grid4 --checkpoint " + (a / "policy.ckpt").string()).code == 2);
  fs::remove_all(kWork);
}
