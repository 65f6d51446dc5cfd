#include "cmdplab/cmdplab.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

#include "cmdplab/envs.hpp"
#include "cmdplab/error.hpp"
#include "cmdplab/harness.hpp"
#include "cmdplab/model.hpp"
#include "cmdplab/occupancy.hpp"

struct cmdplab_model {
  cmdplab::TabularCmdp cmdp;
};

struct cmdplab_config {
  std::string text;  // accumulated key = value lines; later lines win
};

namespace {

thread_local std::string last_error;

cmdplab_status map_code(cmdplab::ErrorCode code) {
  using cmdplab::ErrorCode;
  switch (code) {
    case ErrorCode::MalformedProblem: return CMDPLAB_MALFORMED_PROBLEM;
    case ErrorCode::NumericalBreakdown: return CMDPLAB_NUMERICAL_BREAKDOWN;
    case ErrorCode::ShapeMismatch: return CMDPLAB_SHAPE_MISMATCH;
    case ErrorCode::NotErgodic: return CMDPLAB_NOT_ERGODIC;
    case ErrorCode::SingularSystem: return CMDPLAB_SINGULAR_SYSTEM;
    case ErrorCode::MixingCap: return CMDPLAB_MIXING_CAP;
    case ErrorCode::Infeasible: return CMDPLAB_INFEASIBLE;
    case ErrorCode::ConfigInvalid: return CMDPLAB_CONFIG_INVALID;
    case ErrorCode::HorizonDegenerate: return CMDPLAB_HORIZON_DEGENERATE;
    case ErrorCode::ScheduleTooShort: return CMDPLAB_SCHEDULE_TOO_SHORT;
    case ErrorCode::Io: return CMDPLAB_IO;
  }
  return CMDPLAB_INTERNAL;
}

// Runs `fn`, translating exceptions into status codes.
template <typename Fn>
cmdplab_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return CMDPLAB_OK;
  } catch (const cmdplab::Error& e) {
    last_error = e.what();
    return map_code(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown failure";
  }
  return CMDPLAB_INTERNAL;
}

cmdplab_status invalid(const char* what) {
  last_error = std::string("InvalidArgument: ") + what;
  return CMDPLAB_INVALID_ARGUMENT;
}

cmdplab_status wrap_model(cmdplab::TabularCmdp cmdp, cmdplab_model** out) {
  *out = new cmdplab_model{std::move(cmdp)};
  return CMDPLAB_OK;
}

// Largest |J + v(s) - sum_a pi(a|s) (g(s,a) + P v)| over states and channels.
double bellman_residual(const cmdplab::TabularCmdp& m, const cmdplab::StationaryPolicy& pi,
                        const cmdplab::PolicyEvaluation& ev) {
  double worst = 0.0;
  for (std::size_t ch = 0; ch < ev.gain.size(); ++ch) {
    const auto& g = ch == 0 ? m.reward : m.costs[ch - 1];
    const auto& v = ev.bias[ch];
    for (std::size_t s = 0; s < m.num_states; ++s) {
      double rhs = 0.0;
      for (std::size_t a = 0; a < m.num_actions; ++a) {
        double next = 0.0;
        for (std::size_t t = 0; t < m.num_states; ++t) next += m.p(s, a, t) * v[t];
        rhs += pi(s, a) * (g[m.pair(s, a)] + next);
      }
      worst = std::max(worst, std::abs(ev.gain[ch] + v[s] - rhs));
    }
  }
  return worst;
}

}  // namespace

extern "C" {

const char* cmdplab_version(void) { return "1.0.0"; }

const char* cmdplab_status_name(cmdplab_status status) {
  switch (status) {
    case CMDPLAB_OK: return "Ok";
    case CMDPLAB_MALFORMED_PROBLEM: return "MalformedProblem";
    case CMDPLAB_NUMERICAL_BREAKDOWN: return "NumericalBreakdown";
    case CMDPLAB_SHAPE_MISMATCH: return "ShapeMismatch";
    case CMDPLAB_NOT_ERGODIC: return "NotErgodic";
    case CMDPLAB_SINGULAR_SYSTEM: return "SingularSystem";
    case CMDPLAB_MIXING_CAP: return "MixingCap";
    case CMDPLAB_INFEASIBLE: return "Infeasible";
    case CMDPLAB_CONFIG_INVALID: return "ConfigInvalid";
    case CMDPLAB_HORIZON_DEGENERATE: return "HorizonDegenerate";
    case CMDPLAB_SCHEDULE_TOO_SHORT: return "ScheduleTooShort";
    case CMDPLAB_IO: return "Io";
    case CMDPLAB_INVALID_ARGUMENT: return "InvalidArgument";
    case CMDPLAB_INTERNAL: return "Internal";
  }
  return "Unknown";
}

const char* cmdplab_last_error(void) { return last_error.c_str(); }

cmdplab_status cmdplab_model_queue(size_t buffer, cmdplab_model** out) {
  if (!out) return invalid("out is null");
  return guarded([&] {
    cmdplab::QueueConfig q;
    q.buffer = buffer;
    wrap_model(cmdplab::build_queue(q), out);
  });
}

cmdplab_status cmdplab_model_random(size_t states, size_t actions, size_t channels, double floor, uint64_t seed,
                                    cmdplab_model** out) {
  if (!out) return invalid("out is null");
  return guarded([&] {
    cmdplab::Rng rng(seed);
    wrap_model(cmdplab::random_ergodic_cmdp(states, actions, channels, rng, floor), out);
  });
}

cmdplab_status cmdplab_model_chain(size_t length, double p_forward, uint64_t seed, cmdplab_model** out) {
  if (!out) return invalid("out is null");
  return guarded([&] {
    cmdplab::Rng rng(seed);
    wrap_model(cmdplab::weakly_communicating_chain(length, p_forward, rng), out);
  });
}

cmdplab_status cmdplab_model_load(const char* path, cmdplab_model** out) {
  if (!path || !out) return invalid("path or out is null");
  return guarded([&] { wrap_model(cmdplab::load_cmdp(path), out); });
}

cmdplab_status cmdplab_model_save(const cmdplab_model* model, const char* path) {
  if (!model || !path) return invalid("model or path is null");
  return guarded([&] { cmdplab::save_cmdp(model->cmdp, path); });
}

void cmdplab_model_free(cmdplab_model* model) { delete model; }

cmdplab_status cmdplab_model_shape(const cmdplab_model* model, size_t* states, size_t* actions, size_t* channels) {
  if (!model) return invalid("model is null");
  if (states) *states = model->cmdp.num_states;
  if (actions) *actions = model->cmdp.num_actions;
  if (channels) *channels = model->cmdp.num_channels();
  last_error.clear();
  return CMDPLAB_OK;
}

cmdplab_status cmdplab_model_unit_scale(const cmdplab_model* model, size_t channel, double* scale) {
  if (!model || !scale) return invalid("model or scale is null");
  if (channel > model->cmdp.num_channels()) return invalid("channel out of range");
  *scale = channel == 0 ? model->cmdp.reward_units.scale
                        : (model->cmdp.cost_units.size() >= channel ? model->cmdp.cost_units[channel - 1].scale : 1.0);
  last_error.clear();
  return CMDPLAB_OK;
}

cmdplab_status cmdplab_solve(const cmdplab_model* model, int constrained, cmdplab_solution* out) {
  if (!model || !out) return invalid("model or out is null");
  return guarded([&] {
    const auto& m = model->cmdp;
    cmdplab::TabularCmdp problem = m;
    if (!constrained) {
      problem.costs.clear();
      problem.channel_names.clear();
      problem.cost_units.clear();
    }
    const auto res = cmdplab::solve_true_model(problem);
    out->objective = res.objective;
    if (out->channel_values) {
      for (std::size_t k = 0; k < m.num_channels(); ++k) {
        double v = 0.0;
        for (std::size_t i = 0; i < res.occupancy.mass.size(); ++i) v += res.occupancy.mass[i] * m.costs[k][i];
        out->channel_values[k] = v;
      }
    }
    if (out->occupancy) std::copy(res.occupancy.mass.begin(), res.occupancy.mass.end(), out->occupancy);
  });
}

cmdplab_status cmdplab_model_check(const cmdplab_model* model, cmdplab_check_report* out) {
  if (!model || !out) return invalid("model or out is null");
  *out = cmdplab_check_report{0, 0, 0, 0.0, 0.0};
  return guarded([&] {
    const auto& m = model->cmdp;
    try {
      m.validate();
    } catch (const cmdplab::Error&) {
      return;
    }
    out->tables_ok = 1;
    out->uniform_ergodic = cmdplab::is_ergodic(
        cmdplab::induced_chain(m, cmdplab::StationaryPolicy::uniform(m.num_states, m.num_actions)));
    cmdplab::OccupancyResult res;
    try {
      res = cmdplab::solve_true_model(m);
    } catch (const cmdplab::Error& e) {
      if (e.code() == cmdplab::ErrorCode::Infeasible) return;
      throw;
    }
    out->feasible = 1;
    out->occupancy_residual = cmdplab::occupancy_violation(res.occupancy, m.transition);
    const auto pi = cmdplab::extract_policy(res.occupancy);
    out->bellman_residual = bellman_residual(m, pi, cmdplab::evaluate_unichain(m, pi));
  });
}

cmdplab_status cmdplab_config_parse(const char* text, cmdplab_config** out) {
  if (!text || !out) return invalid("text or out is null");
  return guarded([&] {
    std::istringstream in(text);
    cmdplab::parse_config(in);
    *out = new cmdplab_config{text};
  });
}

cmdplab_status cmdplab_config_load(const char* path, cmdplab_config** out) {
  if (!path || !out) return invalid("path or out is null");
  return guarded([&] {
    cmdplab::load_config(path);
    std::ifstream in(path);
    std::ostringstream text;
    text << in.rdbuf();
    *out = new cmdplab_config{text.str()};
  });
}

cmdplab_status cmdplab_config_set(cmdplab_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return invalid("config, key or value is null");
  const std::string line = std::string("\n") + key + " = " + value + "\n";
  if (line.find('\n', 1) != line.size() - 1) return invalid("key and value must be single-line");
  return guarded([&] {
    std::istringstream in(config->text + line);
    cmdplab::parse_config(in);
    config->text += line;
  });
}

void cmdplab_config_free(cmdplab_config* config) { delete config; }

cmdplab_status cmdplab_run_experiment(const cmdplab_config* config, size_t workers, cmdplab_run_summary* summary) {
  if (!config) return invalid("config is null");
  return guarded([&] {
    std::istringstream in(config->text);
    const auto cfg = cmdplab::parse_config(in);
    const auto report = cmdplab::run_experiment(cfg, workers);
    if (!summary) return;
    summary->oracle_gain = report.oracle_gain;
    summary->replications = report.replications.size();
    summary->failures = report.failures();
    double regret = 0.0, rate = 0.0;
    std::size_t ok = 0;
    for (const auto& r : report.replications) {
      if (!r.ok) continue;
      ++ok;
      regret += r.ledger.regret();
      rate += r.ledger.cum_reward() / static_cast<double>(r.ledger.t());
    }
    summary->mean_regret = ok ? regret / static_cast<double>(ok) : NAN;
    summary->mean_reward_rate = ok ? rate / static_cast<double>(ok) : NAN;
  });
}

}  // extern "C"
