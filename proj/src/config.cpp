#include "prefirl/config.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "prefirl/continuous.hpp"
#include "prefirl/trajectory_io.hpp"

extern char** environ;

namespace prefirl {

namespace fs = std::filesystem;

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  j["env"] = cfg.env;
  j["oracle"] = cfg.oracle;
  j["seeds"] = {{"master", cfg.master_seed}};
  j["output_dir"] = cfg.output_dir;
  j["demos"] = {{"count", cfg.setup.demos}, {"path", cfg.demos_path}};
  j["eval_episodes"] = cfg.setup.eval_episodes;
  j["human_timeout_s"] = cfg.human_timeout_s;
  j["transfer"] = to_json(cfg.setup.transfer);
  j["irl"] = to_json(cfg.setup.irl);
  j["basic_expert"] = to_json(cfg.setup.basic_expert);
  j["target_expert"] = to_json(cfg.setup.target_expert);
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  FieldReader r(j, "");
  RunConfig cfg;
  if (!r.has("env")) throw ConfigError("env", "required");
  r.read("env", cfg.env);
  std::unique_ptr<Environment> env;
  try {
    env = make_environment(cfg.env);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("env", e.what());
  }
  cfg.setup = default_setup(*env);
  r.read("oracle", cfg.oracle);
  if (cfg.oracle != "emulated" && cfg.oracle != "human") throw ConfigError("oracle", "must be 'emulated' or 'human'");
  if (const nlohmann::json* seeds = r.take("seeds")) {
    FieldReader s(*seeds, "seeds");
    s.read("master", cfg.master_seed);
    s.finish();
  }
  r.read("output_dir", cfg.output_dir);
  if (const nlohmann::json* demos = r.take("demos")) {
    FieldReader d(*demos, "demos");
    d.read("count", cfg.setup.demos);
    d.read("path", cfg.demos_path);
    d.finish();
    if (cfg.setup.demos == 0) throw ConfigError("demos.count", "must be at least 1");
  }
  r.read("eval_episodes", cfg.setup.eval_episodes);
  if (cfg.setup.eval_episodes == 0) throw ConfigError("eval_episodes", "must be at least 1");
  r.read("human_timeout_s", cfg.human_timeout_s);
  if (!(cfg.human_timeout_s > 0.0)) throw ConfigError("human_timeout_s", "must be positive");
  if (const nlohmann::json* t = r.take("transfer")) cfg.setup.transfer = transfer_config_from_json(*t, cfg.setup.transfer);
  cfg.setup.transfer.validate();
  if (const nlohmann::json* i = r.take("irl")) cfg.setup.irl = irl_config_from_json(*i, cfg.setup.irl);
  if (const nlohmann::json* e = r.take("basic_expert")) {
    cfg.setup.basic_expert = expert_config_from_json(*e, cfg.setup.basic_expert, "basic_expert");
  }
  if (const nlohmann::json* e = r.take("target_expert")) {
    cfg.setup.target_expert = expert_config_from_json(*e, cfg.setup.target_expert, "target_expert");
  }
  r.finish();
  return cfg;
}

nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError("config", path + " line " + std::to_string(line) + ": " + e.what());
  }
}

namespace {

void assign_path(nlohmann::json& j, const std::vector<std::string>& path, const std::string& raw,
                 const std::string& origin) {
  if (path.empty() || std::any_of(path.begin(), path.end(), [](const std::string& p) { return p.empty(); })) {
    throw ConfigError(origin, "malformed override key");
  }
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  if (!j.is_object()) j = nlohmann::json::object();
  nlohmann::json* node = &j;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    nlohmann::json& next = (*node)[path[k]];
    if (next.is_null()) next = nlohmann::json::object();
    if (!next.is_object()) throw ConfigError(path[k], "is not a section");
    node = &next;
  }
  (*node)[path.back()] = std::move(value);
}

std::vector<std::string> split(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) return out;
    start = pos + sep.size();
  }
}

}  // namespace

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError(assignment, "override must look like key=value");
  const std::string key = assignment.substr(0, eq);
  assign_path(j, split(key, "."), assignment.substr(eq + 1), key);
}

void apply_env_overrides(nlohmann::json& j, const std::vector<std::string>& variables) {
  const std::string prefix = kEnvPrefix;
  for (const std::string& var : variables) {
    if (var.rfind(prefix, 0) != 0) continue;
    const std::size_t eq = var.find('=');
    if (eq == std::string::npos) continue;
    std::string key = var.substr(prefix.size(), eq - prefix.size());
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    assign_path(j, split(key, "__"), var.substr(eq + 1), var.substr(0, eq));
  }
}

std::vector<std::string> process_environment() {
  std::vector<std::string> out;
  for (char** e = environ; e && *e; ++e) out.emplace_back(*e);
  return out;
}

RunConfig resolve_run_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides,
                             const std::vector<std::string>& environment) {
  nlohmann::json j = path ? read_config_file(*path) : nlohmann::json::object();
  apply_env_overrides(j, environment);
  for (const std::string& o : overrides) apply_override(j, o);
  return run_config_from_json(j);
}

TransferRun prepare_run(const RunConfig& cfg, const std::string& session_id) {
  TransferRun run;
  run.config = cfg;
  run.env = make_environment(cfg.env);
  if (!cfg.demos_path.empty()) {
    run.demos = load_jsonl(cfg.demos_path);
    if (run.demos.empty()) throw ConfigError("demos.path", cfg.demos_path + " contains no trajectories");
  } else {
    run.demos = initial_demos(*run.env, cfg.setup, cfg.master_seed);
  }
  run.session = std::make_unique<TransferSession>(session_id, *run.env, run.demos, cfg.setup.transfer, cfg.setup.irl,
                                                  cfg.master_seed);
  return run;
}

void write_run_artifacts(const TransferRun& run) {
  const fs::path root(run.config.output_dir);
  fs::create_directories(root);
  std::ofstream(root / "effective_config.json") << to_json(run.config).dump(2) << '\n';
  save_jsonl((root / "demos.jsonl").string(), run.demos);
  std::ofstream metrics(root / "metrics.csv");
  write_metrics_csv(metrics, run.session->history());
  if (run.session->model()) {
    save_policy((root / "policy.ckpt").string(), run.session->model()->policy);
    save_discriminator((root / "discriminator.ckpt").string(), run.session->model()->discriminator);
  }
  run.session->save((root / "session").string());
}

}  // namespace prefirl
