#include "cmdplab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include "cmdplab/envs.hpp"
#include "cmdplab/error.hpp"
#include "cmdplab/finite_horizon.hpp"
#include "cmdplab/format.hpp"
#include "cmdplab/occupancy.hpp"
#include "cmdplab/policy_gradient.hpp"

namespace cmdplab {

const char* to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::Cucrl: return "cucrl";
    case Algorithm::Cpsrl: return "cpsrl";
    case Algorithm::Pg: return "pg";
    case Algorithm::Fha: return "fha";
  }
  return "unknown";
}

TabularCmdp build_env(const EnvSpec& spec) {
  if (spec.kind == "queue") {
    QueueConfig q;
    q.buffer = spec.buffer;
    return build_queue(q);
  }
  if (spec.kind == "random") {
    Rng rng(spec.seed);
    return random_ergodic_cmdp(spec.states, spec.actions, spec.channels, rng, spec.floor);
  }
  if (spec.kind == "chain") {
    Rng rng(spec.seed);
    return weakly_communicating_chain(spec.length, spec.p_forward, rng, spec.jitter);
  }
  if (spec.kind == "file") return load_cmdp(spec.path);
  throw Error(ErrorCode::ConfigInvalid, "unknown env kind '" + spec.kind + "'");
}

void ExperimentConfig::validate() const {
  if (horizon < 1) throw Error(ErrorCode::ConfigInvalid, "T must be >= 1");
  if (replications < 1) throw Error(ErrorCode::ConfigInvalid, "replications must be >= 1");
  if (output_dir.empty()) throw Error(ErrorCode::ConfigInvalid, "output_dir must be set");
  if (!(k > 0.0)) throw Error(ErrorCode::ConfigInvalid, "k must be positive");
  if (!(radius_scale > 0.0)) throw Error(ErrorCode::ConfigInvalid, "radius_scale must be positive");
  if (!(xi > 0.0 && xi < 1.0)) throw Error(ErrorCode::ConfigInvalid, "xi must be in (0, 1)");
  if (!(h_constant > 0.0)) throw Error(ErrorCode::ConfigInvalid, "h_constant must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::ConfigInvalid, "delta must be in (0, 1)");
  if (span_bound && !(*span_bound >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "span_bound must be >= 0");
  if (env.kind == "file" && env.path.empty()) throw Error(ErrorCode::ConfigInvalid, "env.path must be set");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || !std::isfinite(out)) {
    throw Error(ErrorCode::ConfigInvalid, key + ": expected a number, got '" + value + "'");
  }
  return out;
}

std::uint64_t parse_count(const std::string& key, const std::string& value) {
  // Accept 1e5-style counts as long as they are whole.
  const double v = parse_real(key, value);
  if (v < 0.0 || v != std::floor(v) || v > 1.8e19) {
    throw Error(ErrorCode::ConfigInvalid, key + ": expected a non-negative integer, got '" + value + "'");
  }
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error(ErrorCode::ConfigInvalid, key + ": expected true or false, got '" + value + "'");
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"algorithm",
       [&](const std::string& k, const std::string& v) {
         if (v == "cucrl") cfg.algorithm = Algorithm::Cucrl;
         else if (v == "cpsrl") cfg.algorithm = Algorithm::Cpsrl;
         else if (v == "pg") cfg.algorithm = Algorithm::Pg;
         else if (v == "fha") cfg.algorithm = Algorithm::Fha;
         else throw Error(ErrorCode::ConfigInvalid, k + ": unknown algorithm '" + v + "'");
       }},
      {"T", [&](const std::string& k, const std::string& v) { cfg.horizon = parse_count(k, v); }},
      {"seed", [&](const std::string& k, const std::string& v) { cfg.seed = parse_count(k, v); }},
      {"replications", [&](const std::string& k, const std::string& v) { cfg.replications = parse_count(k, v); }},
      {"output_dir", [&](const std::string&, const std::string& v) { cfg.output_dir = v; }},
      {"plots", [&](const std::string& k, const std::string& v) { cfg.plots = parse_bool(k, v); }},
      {"env", [&](const std::string&, const std::string& v) { cfg.env.kind = v; }},
      {"env.buffer", [&](const std::string& k, const std::string& v) { cfg.env.buffer = parse_count(k, v); }},
      {"env.states", [&](const std::string& k, const std::string& v) { cfg.env.states = parse_count(k, v); }},
      {"env.actions", [&](const std::string& k, const std::string& v) { cfg.env.actions = parse_count(k, v); }},
      {"env.channels", [&](const std::string& k, const std::string& v) { cfg.env.channels = parse_count(k, v); }},
      {"env.floor", [&](const std::string& k, const std::string& v) { cfg.env.floor = parse_real(k, v); }},
      {"env.length", [&](const std::string& k, const std::string& v) { cfg.env.length = parse_count(k, v); }},
      {"env.p_forward", [&](const std::string& k, const std::string& v) { cfg.env.p_forward = parse_real(k, v); }},
      {"env.jitter", [&](const std::string& k, const std::string& v) { cfg.env.jitter = parse_real(k, v); }},
      {"env.seed", [&](const std::string& k, const std::string& v) { cfg.env.seed = parse_count(k, v); }},
      {"env.path", [&](const std::string&, const std::string& v) { cfg.env.path = v; }},
      {"mode",
       [&](const std::string& k, const std::string& v) {
         if (v == "linear") cfg.mode = EpochMode::Linear;
         else if (v == "doubling") cfg.mode = EpochMode::Doubling;
         else throw Error(ErrorCode::ConfigInvalid, k + ": expected linear or doubling, got '" + v + "'");
       }},
      {"k", [&](const std::string& k, const std::string& v) { cfg.k = parse_real(k, v); }},
      {"radius_scale", [&](const std::string& k, const std::string& v) { cfg.radius_scale = parse_real(k, v); }},
      {"xi", [&](const std::string& k, const std::string& v) { cfg.xi = parse_real(k, v); }},
      {"h_constant", [&](const std::string& k, const std::string& v) { cfg.h_constant = parse_real(k, v); }},
      {"beta", [&](const std::string& k, const std::string& v) { cfg.beta = parse_real(k, v); }},
      {"alpha", [&](const std::string& k, const std::string& v) { cfg.alpha = parse_real(k, v); }},
      {"slater_delta", [&](const std::string& k, const std::string& v) { cfg.slater_delta = parse_real(k, v); }},
      {"smoothness", [&](const std::string& k, const std::string& v) { cfg.smoothness = parse_real(k, v); }},
      {"delta", [&](const std::string& k, const std::string& v) { cfg.delta = parse_real(k, v); }},
      {"span_bound", [&](const std::string& k, const std::string& v) { cfg.span_bound = parse_real(k, v); }},
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigInvalid, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw Error(ErrorCode::ConfigInvalid, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    it->second(key, value);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config '" + path + "'");
  return parse_config(in);
}

double oracle_gain(const TabularCmdp& cmdp) { return solve_true_model(cmdp).objective; }

std::unique_ptr<Learner> make_learner(const ExperimentConfig& config, const TabularCmdp& env, Rng rng) {
  switch (config.algorithm) {
    case Algorithm::Cucrl:
    case Algorithm::Cpsrl: {
      ModelBasedConfig mb;
      mb.planner = config.algorithm == Algorithm::Cucrl ? Planner::Optimistic : Planner::Posterior;
      mb.mode = config.mode;
      mb.k = config.k;
      mb.radius_scale = config.radius_scale;
      return std::make_unique<ModelBasedLearner>(env, mb, rng);
    }
    case Algorithm::Pg: {
      PolicyGradientConfig pg;
      pg.horizon = config.horizon;
      pg.xi = config.xi;
      pg.h_constant = config.h_constant;
      pg.beta = config.beta;
      pg.alpha = config.alpha;
      pg.slater_delta = config.slater_delta;
      pg.smoothness = config.smoothness;
      return std::make_unique<PolicyGradientLearner>(env, pg, rng);
    }
    case Algorithm::Fha:
      return std::make_unique<FhaLearner>(env, FhaConfig{config.horizon, config.delta, config.span_bound}, rng);
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown algorithm");
}

ReplicationOutcome run_replication(const ExperimentConfig& config, const TabularCmdp& env, double gain,
                                   std::size_t index) {
  ReplicationOutcome out;
  out.index = index;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const Rng stream = Rng(config.seed).split(index);
    auto learner = make_learner(config, env, stream.split("learner"));
    out.ledger = play(env, *learner, config.horizon, stream.split("env"), gain, trace_interval(config.horizon));
    std::ostringstream log;
    learner->write_epoch_log(log);
    out.epoch_log = log.str();
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::size_t ExperimentReport::failures() const {
  return static_cast<std::size_t>(
      std::count_if(replications.begin(), replications.end(), [](const auto& r) { return !r.ok; }));
}

std::size_t default_workers() {
  if (const char* env = std::getenv("CMDPLAB_WORKERS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Ledger columns in CSV order for one trace row.
std::vector<double> trace_columns(const TracePoint& p) {
  std::vector<double> cols{p.regret};
  cols.insert(cols.end(), p.violation.begin(), p.violation.end());
  cols.push_back(p.reward_rate);
  cols.insert(cols.end(), p.cost_rate.begin(), p.cost_rate.end());
  return cols;
}

std::vector<std::string> column_names(std::size_t channels) {
  std::vector<std::string> names{"R"};
  for (std::size_t k = 1; k <= channels; ++k) names.push_back("C_" + std::to_string(k));
  names.push_back("reward_rate");
  for (std::size_t k = 1; k <= channels; ++k) names.push_back("cost_rate_" + std::to_string(k));
  return names;
}

struct Summary {
  std::vector<std::size_t> t;
  std::vector<std::vector<double>> mean, sd;  // [row][column]
  std::size_t channels = 0;
};

Summary summarize(const std::vector<ReplicationOutcome>& reps) {
  Summary out;
  std::vector<const RegretLedger*> ok;
  for (const auto& r : reps) {
    if (r.ok) ok.push_back(&r.ledger);
  }
  if (ok.empty()) return out;
  const auto& first = ok.front()->trace();
  out.channels = ok.front()->cum_cost().size();
  for (const auto* l : ok) {
    if (l->trace().size() != first.size()) throw Error(ErrorCode::ShapeMismatch, "replication traces differ");
  }
  const double n = static_cast<double>(ok.size());
  for (std::size_t row = 0; row < first.size(); ++row) {
    out.t.push_back(first[row].t);
    const std::size_t cols = trace_columns(first[row]).size();
    std::vector<double> sum(cols, 0.0), sq(cols, 0.0);
    for (const auto* l : ok) {
      const auto& p = l->trace()[row];
      if (p.t != first[row].t) throw Error(ErrorCode::ShapeMismatch, "replication traces differ");
      const auto v = trace_columns(p);
      for (std::size_t c = 0; c < cols; ++c) sum[c] += v[c];
    }
    std::vector<double> mean(cols), sd(cols, 0.0);
    for (std::size_t c = 0; c < cols; ++c) mean[c] = sum[c] / n;
    for (const auto* l : ok) {
      const auto v = trace_columns(l->trace()[row]);
      for (std::size_t c = 0; c < cols; ++c) sq[c] += (v[c] - mean[c]) * (v[c] - mean[c]);
    }
    if (ok.size() > 1) {
      for (std::size_t c = 0; c < cols; ++c) sd[c] = std::sqrt(sq[c] / (n - 1.0));
    }
    out.mean.push_back(std::move(mean));
    out.sd.push_back(std::move(sd));
  }
  return out;
}

std::string rep_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rep_%03zu", index);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

template <typename Fn>
std::string render(Fn&& fn) {
  std::ostringstream out;
  fn(out);
  return out.str();
}

}  // namespace

void write_summary_csv(const std::vector<ReplicationOutcome>& reps, std::ostream& out) {
  const auto s = summarize(reps);
  out << "t";
  for (const auto& name : column_names(s.channels)) out << ',' << name << "_mean," << name << "_std";
  out << '\n';
  for (std::size_t row = 0; row < s.t.size(); ++row) {
    out << s.t[row];
    for (std::size_t c = 0; c < s.mean[row].size(); ++c) {
      out << ',' << format_double(s.mean[row][c]) << ',' << format_double(s.sd[row][c]);
    }
    out << '\n';
  }
}

void write_svg_plot(const std::vector<PlotSeries>& series, const std::string& title, const std::string& y_label,
                    std::ostream& out) {
  constexpr double width = 720, height = 440, left = 80, right = 170, top = 40, bottom = 60;
  constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  bool any = false;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double lo = s.mean[i] - s.spread[i], hi = s.mean[i] + s.spread[i];
      if (!any) {
        x_lo = x_hi = s.x[i];
        y_lo = lo;
        y_hi = hi;
        any = true;
      }
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, lo);
      y_hi = std::max(y_hi, hi);
    }
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1;
  if (y_hi <= y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * plot_w; };
  auto py = [&](double y) { return top + (y_hi - y) / (y_hi - y_lo) * plot_h; };
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  auto tick = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return std::string(buf);
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x_lo + (x_hi - x_lo) * i / 4.0, yv = y_lo + (y_hi - y_lo) * i / 4.0;
    out << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(top + plot_h + 18) << "\" text-anchor=\"middle\">"
        << tick(xv) << "</text>\n";
    out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
        << "</text>\n";
    out << "<line x1=\"" << left << "\" x2=\"" << left + plot_w << "\" y1=\"" << num(py(yv)) << "\" y2=\""
        << num(py(yv)) << "\" stroke=\"#ddd\"/>\n";
  }
  out << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 15 << "\" text-anchor=\"middle\">t</text>\n";
  out << "<text transform=\"translate(18," << top + plot_h / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << y_label
      << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = palette[k % std::size(palette)];
    if (s.x.empty()) continue;
    out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) out << num(px(s.x[i])) << ',' << num(py(s.mean[i] + s.spread[i])) << ' ';
    for (std::size_t i = s.x.size(); i-- > 0;) out << num(px(s.x[i])) << ',' << num(py(s.mean[i] - s.spread[i])) << ' ';
    out << "\"/>\n";
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) out << num(px(s.x[i])) << ',' << num(py(s.mean[i])) << ' ';
    out << "\"/>\n";
    const double ly = top + 16 + 18.0 * static_cast<double>(k);
    out << "<line x1=\"" << left + plot_w + 12 << "\" x2=\"" << left + plot_w + 32 << "\" y1=\"" << ly << "\" y2=\""
        << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << left + plot_w + 38 << "\" y=\"" << ly + 4 << "\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
}

ExperimentReport run_experiment(const ExperimentConfig& config, std::size_t workers) {
  config.validate();
  const TabularCmdp env = build_env(config.env);
  ExperimentReport report;
  report.oracle_gain = oracle_gain(env);
  report.replications.resize(config.replications);

  const std::size_t pool = std::min(config.replications, workers == 0 ? default_workers() : workers);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.replications; i = next++) {
      report.replications[i] = run_replication(config, env, report.oracle_gain, i);
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < pool; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  std::ostringstream failures, timing;
  failures << "replication,error\n";
  timing << "replication,seconds\n";
  for (const auto& r : report.replications) {
    timing << r.index << ',' << format_double(r.seconds) << '\n';
    if (!r.ok) {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), '"', '\'');
      failures << r.index << ",\"" << msg << "\"\n";
      continue;
    }
    write_file(dir / (rep_name(r.index) + ".csv"), render([&](std::ostream& o) { r.ledger.write_csv(o); }));
    write_file(dir / (rep_name(r.index) + "_epochs.csv"), r.epoch_log);
  }
  write_file(dir / "failures.csv", failures.str());
  write_file(dir / "timing.csv", timing.str());
  write_file(dir / "summary.csv", render([&](std::ostream& o) { write_summary_csv(report.replications, o); }));

  if (config.plots) {
    const auto s = summarize(report.replications);
    const auto names = column_names(s.channels);
    auto series = [&](std::size_t col, const std::string& label) {
      PlotSeries p{label, {}, {}, {}};
      for (std::size_t row = 0; row < s.t.size(); ++row) {
        p.x.push_back(static_cast<double>(s.t[row]));
        p.mean.push_back(s.mean[row][col]);
        p.spread.push_back(s.sd[row][col]);
      }
      return p;
    };
    const std::string what = std::string(to_string(config.algorithm)) + " on " + config.env.kind;
    write_file(dir / "regret.svg",
               render([&](std::ostream& o) { write_svg_plot({series(0, "R(t)")}, "Regret, " + what, "R(t)", o); }));
    std::vector<PlotSeries> violations;
    for (std::size_t k = 0; k < s.channels; ++k) violations.push_back(series(1 + k, names[1 + k]));
    write_file(dir / "violation.svg", render([&](std::ostream& o) {
                 write_svg_plot(violations, "Constraint violation, " + what, "C(t)", o);
               }));
  }
  return report;
}

}  // namespace cmdplab
