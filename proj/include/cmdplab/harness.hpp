#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cmdplab/learner.hpp"
#include "cmdplab/model.hpp"
#include "cmdplab/model_based.hpp"
#include "cmdplab/regret.hpp"
#include "cmdplab/rng.hpp"

namespace cmdplab {

enum class Algorithm { Cucrl, Cpsrl, Pg, Fha };

const char* to_string(Algorithm algorithm);

/// Which environment to build. `kind` is queue, random, chain or file.
struct EnvSpec {
  std::string kind = "queue";
  std::size_t buffer = 5;             // queue
  std::size_t states = 5;             // random
  std::size_t actions = 2;            // random
  std::size_t channels = 1;           // random
  double floor = 0.02;                // random
  std::size_t length = 4;             // chain
  double p_forward = 0.6;             // chain
  double jitter = 0.0;                // chain
  std::uint64_t seed = 0;             // random, chain
  std::string path;                   // file
};

TabularCmdp build_env(const EnvSpec& spec);

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::Cucrl;
  EnvSpec env;
  std::size_t horizon = 0;  // T
  std::uint64_t seed = 0;
  std::size_t replications = 1;
  std::string output_dir = "out";
  bool plots = true;

  // Model-based learners.
  EpochMode mode = EpochMode::Linear;
  double k = 1.0;
  double radius_scale = 1.0;

  // Policy gradient.
  double xi = 0.4;
  double h_constant = 16.0;
  std::optional<double> beta;
  std::optional<double> alpha;
  std::optional<double> slater_delta;
  std::optional<double> smoothness;

  // Finite-horizon approximation.
  double delta = 0.1;
  std::optional<double> span_bound;

  /// Throws ConfigInvalid.
  void validate() const;
};

/// Line-oriented `key = value` format; `#` starts a comment. Keys:
/// algorithm, T, seed, replications, output_dir, plots, env, env.buffer,
/// env.states, env.actions, env.channels, env.floor, env.length,
/// env.p_forward, env.jitter, env.seed, env.path, mode, k, radius_scale, xi,
/// h_constant, beta, alpha, slater_delta, smoothness, delta, span_bound.
/// Unknown keys and malformed values throw ConfigInvalid.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

/// Long-run optimum J* of the true model (normalized units).
double oracle_gain(const TabularCmdp& cmdp);

/// Learner for one replication. `env` must outlive it.
std::unique_ptr<Learner> make_learner(const ExperimentConfig& config, const TabularCmdp& env, Rng rng);

struct ReplicationOutcome {
  std::size_t index = 0;
  bool ok = false;
  std::string error;
  RegretLedger ledger{0.0, 0};
  std::string epoch_log;
  double seconds = 0.0;
};

/// Replication `index` draws its streams from Rng(seed).split(index).
ReplicationOutcome run_replication(const ExperimentConfig& config, const TabularCmdp& env, double gain,
                                   std::size_t index);

struct ExperimentReport {
  double oracle_gain = 0.0;
  std::vector<ReplicationOutcome> replications;
  std::size_t failures() const;
};

/// Worker count from CMDPLAB_WORKERS, else the hardware concurrency.
std::size_t default_workers();

/// Runs every replication on a bounded worker pool and writes, under
/// output_dir: rep_NNN.csv, rep_NNN_epochs.csv, summary.csv, failures.csv,
/// timing.csv (wall-clock, the only non-reproducible file) and, with plots
/// on, regret.svg and violation.svg. workers = 0 uses default_workers().
ExperimentReport run_experiment(const ExperimentConfig& config, std::size_t workers = 0);

/// Mean and sample standard deviation per trace row over the successful
/// replications. Header: t, then <col>_mean,<col>_std for every ledger column.
void write_summary_csv(const std::vector<ReplicationOutcome>& reps, std::ostream& out);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> spread;  // half-width of the shaded band
};

/// Standalone SVG line chart with a shaded mean +- spread band per series.
void write_svg_plot(const std::vector<PlotSeries>& series, const std::string& title, const std::string& y_label,
                    std::ostream& out);

}  // namespace cmdplab
