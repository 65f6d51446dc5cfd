// Command-line front end over the C API.
//   solve     oracle LP on an environment
//   run       experiment from a key = value config file
//   validate  invariant sweep on a serialized model
// Exit codes: 0 ok, 1 configuration or input error, 2 replication or
// invariant failure.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cmdplab/cmdplab.h"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRunFailure = 2;

struct ModelOptions {
  std::string env = "queue";
  std::size_t buffer = 5;
  std::size_t states = 5;
  std::size_t actions = 2;
  std::size_t channels = 1;
  double floor = 0.02;
  std::size_t length = 4;
  double p_forward = 0.6;
  std::uint64_t seed = 0;
  std::string path;
};

int report(cmdplab_status status) {
  // Library messages already start with the status name.
  const char* message = cmdplab_last_error();
  std::fprintf(stderr, "error: %s\n", *message ? message : cmdplab_status_name(status));
  return kConfigError;
}

cmdplab_status open_model(const ModelOptions& o, cmdplab_model** out) {
  if (o.env == "queue") return cmdplab_model_queue(o.buffer, out);
  if (o.env == "random") return cmdplab_model_random(o.states, o.actions, o.channels, o.floor, o.seed, out);
  if (o.env == "chain") return cmdplab_model_chain(o.length, o.p_forward, o.seed, out);
  return cmdplab_model_load(o.path.c_str(), out);
}

int run_solve(const ModelOptions& o, bool unconstrained, bool original_units, const std::string& save_path) {
  cmdplab_model* model = nullptr;
  if (auto st = open_model(o, &model); st != CMDPLAB_OK) return report(st);
  std::size_t S = 0, A = 0, m = 0;
  cmdplab_model_shape(model, &S, &A, &m);
  std::vector<double> channels(m), occupancy(S * A);
  cmdplab_solution sol{0.0, channels.data(), occupancy.data()};
  auto st = cmdplab_solve(model, unconstrained ? 0 : 1, &sol);
  if (st == CMDPLAB_OK && !save_path.empty()) st = cmdplab_model_save(model, save_path.c_str());
  if (st != CMDPLAB_OK) {
    cmdplab_model_free(model);
    return report(st);
  }
  auto scale = [&](std::size_t ch) {
    double f = 1.0;
    if (original_units) cmdplab_model_unit_scale(model, ch, &f);
    return f;
  };
  std::printf("states=%zu\nactions=%zu\nconstrained=%d\n", S, A, unconstrained ? 0 : 1);
  std::printf("objective=%.17g\n", scale(0) * sol.objective);
  for (std::size_t k = 0; k < m; ++k) std::printf("channel_%zu=%.17g\n", k + 1, scale(k + 1) * channels[k]);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      if (occupancy[s * A + a] > 1e-12) std::printf("nu[%zu,%zu]=%.17g\n", s, a, occupancy[s * A + a]);
    }
  }
  cmdplab_model_free(model);
  return kOk;
}

int run_experiment(const std::string& path, const std::vector<std::string>& overrides, std::size_t workers) {
  cmdplab_config* config = nullptr;
  if (auto st = cmdplab_config_load(path.c_str(), &config); st != CMDPLAB_OK) return report(st);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      cmdplab_config_free(config);
      return kConfigError;
    }
    if (auto st = cmdplab_config_set(config, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()); st != CMDPLAB_OK) {
      cmdplab_config_free(config);
      return report(st);
    }
  }
  cmdplab_run_summary summary{};
  const auto st = cmdplab_run_experiment(config, workers, &summary);
  cmdplab_config_free(config);
  if (st != CMDPLAB_OK) return report(st);
  std::printf("oracle_gain=%.17g\nreplications=%zu\nfailures=%zu\nmean_regret=%.17g\nmean_reward_rate=%.17g\n",
              summary.oracle_gain, summary.replications, summary.failures, summary.mean_regret,
              summary.mean_reward_rate);
  if (summary.failures > 0) {
    std::fprintf(stderr, "error: %zu replication(s) failed; see failures.csv\n", summary.failures);
    return kRunFailure;
  }
  return kOk;
}

int run_validate(const std::string& path, double tol) {
  cmdplab_model* model = nullptr;
  if (auto st = cmdplab_model_load(path.c_str(), &model); st != CMDPLAB_OK) return report(st);
  cmdplab_check_report r{};
  const auto st = cmdplab_model_check(model, &r);
  cmdplab_model_free(model);
  if (st != CMDPLAB_OK) return report(st);
  std::printf("tables_ok=%d\nuniform_ergodic=%d\nfeasible=%d\noccupancy_residual=%.3g\nbellman_residual=%.3g\n",
              r.tables_ok, r.uniform_ergodic, r.feasible, r.occupancy_residual, r.bellman_residual);
  const bool pass = r.tables_ok && r.feasible && r.occupancy_residual <= tol && r.bellman_residual <= tol;
  std::printf("result=%s\n", pass ? "pass" : "fail");
  return pass ? kOk : kRunFailure;
}

void add_model_options(CLI::App* cmd, ModelOptions& o) {
  cmd->add_option("--env", o.env, "Environment")
      ->check(CLI::IsMember({"queue", "random", "chain", "file"}))
      ->capture_default_str();
  cmd->add_option("--buffer", o.buffer, "Queue buffer size")->capture_default_str();
  cmd->add_option("--states", o.states, "Random model states")->capture_default_str();
  cmd->add_option("--actions", o.actions, "Random model actions")->capture_default_str();
  cmd->add_option("--channels", o.channels, "Random model cost channels")->capture_default_str();
  cmd->add_option("--floor", o.floor, "Random model transition floor")->capture_default_str();
  cmd->add_option("--length", o.length, "Chain length")->capture_default_str();
  cmd->add_option("--p-forward", o.p_forward, "Chain forward probability")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Seed for generated models")->capture_default_str();
  cmd->add_option("--model", o.path, "Serialized model (with --env file)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained MDP laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cmdplab_version()));

  ModelOptions model;
  bool unconstrained = false, original_units = false;
  std::string save_path;
  auto* solve = app.add_subcommand("solve", "Solve the oracle LP on an environment");
  add_model_options(solve, model);
  solve->add_flag("--unconstrained", unconstrained, "Drop the cost rows");
  solve->add_flag("--original-units", original_units, "Report values in the environment's original units");
  solve->add_option("--save", save_path, "Write the model in the text format");

  std::string config_path;
  std::vector<std::string> overrides;
  std::size_t workers = 0;
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  run->add_option("config", config_path, "key = value config file")->required();
  run->add_option("--set", overrides, "Override a config key (key=value), repeatable");
  run->add_option("--workers", workers, "Worker threads (0: CMDPLAB_WORKERS or hardware)")->capture_default_str();

  std::string model_path;
  double tol = 1e-8;
  auto* validate = app.add_subcommand("validate", "Invariant sweep on a serialized model");
  validate->add_option("model", model_path, "Model file")->required();
  validate->add_option("--tol", tol, "Residual tolerance")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*solve) {
    if (model.env == "file" && model.path.empty()) {
      std::fprintf(stderr, "error: --env file needs --model\n");
      return kConfigError;
    }
    return run_solve(model, unconstrained, original_units, save_path);
  }
  if (*run) return run_experiment(config_path, overrides, workers);
  return run_validate(model_path, tol);
}
