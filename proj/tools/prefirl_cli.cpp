#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "prefirl/config.hpp"
#include "prefirl/continuous.hpp"
#include "prefirl/exact.hpp"
#include "prefirl/experiment.hpp"
#include "prefirl/format.hpp"
#include "prefirl/service.hpp"
#include "prefirl/trajectory_io.hpp"

namespace fs = std::filesystem;
using namespace prefirl;

namespace {

constexpr int kUsageError = 2;
constexpr int kEngineError = 1;

std::unique_ptr<Environment> environment_or_exit(const std::string& name) {
  try {
    return make_environment(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("env", e.what());
  }
}

int transfer_run(const std::optional<std::string>& config_path, const std::vector<std::string>& overrides,
                 bool baseline) {
  const RunConfig cfg = resolve_run_config(config_path, overrides, process_environment());
  if (cfg.oracle != "emulated") {
    throw ConfigError("oracle", "transfer run uses the emulated oracle; host human sessions with `serve`");
  }
  TransferRun run = prepare_run(cfg);
  run_transfer(*run.session);
  write_run_artifacts(run);
  const TransferSession& s = *run.session;
  nlohmann::json summary = {{"stop_reason", s.stop_reason()}, {"episodes", s.episode()}};
  if (baseline) {
    const double reference = target_baseline(*run.env, cfg.setup, cfg.master_seed);
    const double final_cost = mean_target_cost(*run.env, s.model()->policy, cfg.setup.eval_episodes, cfg.master_seed);
    summary["baseline_mean_target_cost"] = reference;
    summary["final_mean_target_cost"] = final_cost;
    summary["relative_error"] = std::abs(final_cost - reference) / std::abs(reference);
    std::ofstream(fs::path(cfg.output_dir) / "baseline.json") << summary.dump(2) << '\n';
  }
  std::cout << summary.dump() << '\n';
  return 0;
}

int irl_fit(const std::string& demos_path, const std::string& env_name, int steps, std::uint64_t seed,
            const std::string& out_dir, const std::string& truth, const std::vector<std::string>& overrides) {
  const auto env = environment_or_exit(env_name);
  TrajectorySet demos;
  try {
    demos = load_jsonl(demos_path);
  } catch (const ParseError& e) {
    throw ConfigError("demos", e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError("demos", e.what());
  }
  if (demos.empty()) throw ConfigError("demos", demos_path + " contains no trajectories");
  for (std::size_t k = 0; k < demos.size(); ++k) {
    if (demos.trajectories[k].env_id != env->id()) {
      throw ConfigError("demos", "line " + std::to_string(k + 1) + " belongs to '" + demos.trajectories[k].env_id + "'");
    }
  }
  nlohmann::json irl_json = to_json(default_setup(*env).irl);
  for (const std::string& o : overrides) apply_override(irl_json, o);
  IrlConfig cfg = irl_config_from_json(irl_json);
  if (steps > 0) cfg.steps = steps;

  PolicyProbe probe;
  const auto* mdp = dynamic_cast<const TabularMdp*>(env.get());
  if (mdp && truth != "none") probe = boltzmann_tv_probe(*mdp, truth == "target" ? env->target() : env->basic());
  const IrlFitResult fit = fit_irl(demos, *env, cfg, seed, nullptr, probe);

  fs::create_directories(out_dir);
  std::ofstream report(fs::path(out_dir) / "report.csv");
  fit.report.write_csv(report);
  save_policy((fs::path(out_dir) / "policy.ckpt").string(), fit.model.policy);
  save_discriminator((fs::path(out_dir) / "discriminator.ckpt").string(), fit.model.discriminator);
  nlohmann::json summary = {{"steps", cfg.steps}, {"final_disc_loss", fit.report.steps.back().disc_loss}};
  if (const auto tv = fit.report.final_tv()) summary["final_tv"] = *tv;
  std::cout << summary.dump() << '\n';
  return 0;
}

int oracle_enumerate(const std::string& env_name, const std::string& cost, const std::string& out) {
  const auto env = environment_or_exit(env_name);
  const auto* mdp = dynamic_cast<const TabularMdp*>(env.get());
  if (!mdp) throw ConfigError("env", "'" + env_name + "' is not tabular");
  if (cost != "basic" && cost != "target") throw ConfigError("cost", "must be 'basic' or 'target'");
  const BoltzmannDistribution dist = boltzmann_distribution(*mdp, cost == "basic" ? env->basic() : env->target());
  if (out.empty() || out == "-") {
    write_distribution_csv(std::cout, dist);
  } else {
    std::ofstream file(out);
    write_distribution_csv(file, dist);
  }
  return 0;
}

int eval_policy(const std::string& checkpoint, const std::string& env_name, std::size_t episodes,
                std::uint64_t seed) {
  const auto env = environment_or_exit(env_name);
  StochasticPolicy policy;
  try {
    policy = load_policy(checkpoint, *env);
  } catch (const std::exception& e) {
    throw ConfigError("checkpoint", e.what());
  }
  const double cost = mean_target_cost(*env, policy, episodes, seed);
  const bool exact = dynamic_cast<const TabularMdp*>(env.get()) != nullptr;
  std::cout << nlohmann::json{{"env", env->id()}, {"mean_target_cost", cost}, {"exact", exact}}.dump() << '\n';
  return 0;
}

int demos_generate(const std::optional<std::string>& config_path, const std::vector<std::string>& overrides,
                   const std::string& out) {
  const RunConfig cfg = resolve_run_config(config_path, overrides, process_environment());
  const auto env = make_environment(cfg.env);
  const TrajectorySet demos = initial_demos(*env, cfg.setup, cfg.master_seed);
  if (out.empty() || out == "-") {
    write_jsonl(std::cout, demos);
  } else {
    save_jsonl(out, demos);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-based task transfer with adversarial maximum-entropy IRL"};
  app.require_subcommand(1);

  auto* transfer = app.add_subcommand("transfer", "Transfer loop");
  transfer->require_subcommand(1);
  auto* run = transfer->add_subcommand("run", "Run the transfer loop with the emulated oracle");
  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  bool no_baseline = false;
  run->add_option("-c,--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
  run->add_option("--set", overrides, "Override, e.g. transfer.epsilon=0.2");
  run->add_flag("--no-baseline", no_baseline, "Skip the target-task baseline");

  auto* irl = app.add_subcommand("irl", "Adversarial IRL");
  irl->require_subcommand(1);
  auto* fit = irl->add_subcommand("fit", "Fit a policy and cost to demonstrations");
  std::string demos_path, env_name, out_dir = "irl_fit", truth = "basic";
  int steps = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> irl_overrides;
  fit->add_option("--demos", demos_path, "Demonstrations (JSON lines)")->required();
  fit->add_option("--env", env_name, "Environment")->required();
  fit->add_option("--steps", steps, "Outer steps (default: the environment's)");
  fit->add_option("--seed", seed, "Seed");
  fit->add_option("--out", out_dir, "Output directory");
  fit->add_option("--truth", truth, "Tabular cost that generated the demos: basic, target or none");
  fit->add_option("--set", irl_overrides, "IRL override, e.g. cost_step_size=0.01");

  auto* oracle = app.add_subcommand("oracle", "Exact oracles");
  oracle->require_subcommand(1);
  auto* enumerate = oracle->add_subcommand("enumerate", "Boltzmann table of a tabular environment as CSV");
  std::string cost = "basic", table_out;
  enumerate->add_option("--env", env_name, "Tabular environment")->required();
  enumerate->add_option("--cost", cost, "basic or target");
  enumerate->add_option("--out", table_out, "Output file (default stdout)");

  auto* eval = app.add_subcommand("eval", "Evaluation");
  eval->require_subcommand(1);
  auto* eval_policy_cmd = eval->add_subcommand("policy", "Mean target cost of a policy checkpoint");
  std::string checkpoint;
  std::size_t episodes = 200;
  eval_policy_cmd->add_option("--checkpoint", checkpoint, "Policy checkpoint")->required();
  eval_policy_cmd->add_option("--env", env_name, "Environment")->required();
  eval_policy_cmd->add_option("--episodes", episodes, "Rollouts for continuous environments");
  eval_policy_cmd->add_option("--seed", seed, "Seed");

  auto* demos_cmd = app.add_subcommand("demos", "Demonstrations");
  demos_cmd->require_subcommand(1);
  auto* generate = demos_cmd->add_subcommand("generate", "Write the initial demonstrations for a run config");
  std::string demos_out;
  generate->add_option("-c,--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
  generate->add_option("--set", overrides, "Override, e.g. env=two_goal");
  generate->add_option("--out", demos_out, "Output file (default stdout)");

  auto* serve_cmd = app.add_subcommand("serve", "HTTP session service");
  std::string host = "127.0.0.1", root = "sessions";
  int port = 8080;
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port");
  serve_cmd->add_option("--root", root, "Session checkpoint directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (run->parsed()) return transfer_run(config_path, overrides, !no_baseline);
    if (fit->parsed()) return irl_fit(demos_path, env_name, steps, seed, out_dir, truth, irl_overrides);
    if (enumerate->parsed()) return oracle_enumerate(env_name, cost, table_out);
    if (eval_policy_cmd->parsed()) return eval_policy(checkpoint, env_name, episodes, seed);
    if (generate->parsed()) return demos_generate(config_path, overrides, demos_out);
    if (serve_cmd->parsed()) {
      std::cerr << "listening on " << host << ':' << port << '\n';
      serve(host, port, root);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEngineError;
  }
  return kUsageError;
}
