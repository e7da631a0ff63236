#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefirl/experiment.hpp"
#include "prefirl/json_fields.hpp"
#include "prefirl/transfer.hpp"

namespace prefirl {

/// Prefix of environment-variable overrides: PREFIRL_<KEY> for top-level
/// keys and PREFIRL_<SECTION>__<KEY> for section keys, e.g.
/// PREFIRL_TRANSFER__EPSILON=0.2. Values are parsed as JSON when possible.
inline constexpr const char* kEnvPrefix = "PREFIRL_";

/// Resolved run description. Sections left out of the file take the
/// environment's defaults; the effective copy written by a run has every
/// field spelled out.
struct RunConfig {
  std::string env;
  std::string oracle = "emulated";  // emulated | human
  std::uint64_t master_seed = 0;
  std::string output_dir = "prefirl_run";
  /// Initial demonstrations from a JSON-lines file instead of the generated demonstrations.
  std::string demos_path;
  double human_timeout_s = 3600.0;
  ExperimentSetup setup;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Strict parse; errors are ConfigError naming the field.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Parses a config file; syntax errors report the line.
nlohmann::json read_config_file(const std::string& path);
/// "section.key=value" or "key=value" applied to the raw JSON.
void apply_override(nlohmann::json& j, const std::string& assignment);
/// PREFIRL_* variables from `environ`-style "NAME=value" strings.
void apply_env_overrides(nlohmann::json& j, const std::vector<std::string>& variables);
std::vector<std::string> process_environment();

/// File (optional), then environment variables, then `--set` overrides.
RunConfig resolve_run_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides,
                             const std::vector<std::string>& environment);

/// A prepared transfer run: environment, initial demonstrations and the session.
struct TransferRun {
  RunConfig config;
  std::unique_ptr<Environment> env;
  TrajectorySet demos;
  std::unique_ptr<TransferSession> session;
};

TransferRun prepare_run(const RunConfig& cfg, const std::string& session_id = "run");

/// Writes effective_config.json, demos.jsonl, metrics.csv, policy.ckpt,
/// discriminator.ckpt and the session checkpoint under output_dir/session.
void write_run_artifacts(const TransferRun& run);

}  // namespace prefirl
