// Exercises the shared library through its C header only.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "cmdplab/cmdplab.h"
#include "doctest.h"

namespace fs = std::filesystem;

TEST_CASE("queue solve through the C interface") {
  cmdplab_model* queue = nullptr;
  REQUIRE(cmdplab_model_queue(5, &queue) == CMDPLAB_OK);
  size_t S = 0, A = 0, m = 0;
  CHECK(cmdplab_model_shape(queue, &S, &A, &m) == CMDPLAB_OK);
  CHECK(S == 6);
  CHECK(A == 16);
  CHECK(m == 2);

  std::vector<double> channels(m), occupancy(S * A);
  cmdplab_solution sol{0.0, channels.data(), occupancy.data()};
  REQUIRE(cmdplab_solve(queue, 1, &sol) == CMDPLAB_OK);
  double reward_scale = 0.0, service_scale = 0.0;
  CHECK(cmdplab_model_unit_scale(queue, 0, &reward_scale) == CMDPLAB_OK);
  CHECK(cmdplab_model_unit_scale(queue, 1, &service_scale) == CMDPLAB_OK);
  CHECK(reward_scale * sol.objective == doctest::Approx(4.4737).epsilon(1e-4));
  double total = 0.0;
  for (double v : occupancy) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  REQUIRE(cmdplab_solve(queue, 0, &sol) == CMDPLAB_OK);
  CHECK(reward_scale * sol.objective == doctest::Approx(4.8).epsilon(1e-3));
  CHECK(service_scale * channels[0] == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK(cmdplab_model_unit_scale(queue, 3, &reward_scale) == CMDPLAB_INVALID_ARGUMENT);
  cmdplab_model_free(queue);
}

TEST_CASE("status codes and messages") {
  cmdplab_model* model = nullptr;
  CHECK(cmdplab_model_queue(9, &model) == CMDPLAB_CONFIG_INVALID);
  CHECK(model == nullptr);
  CHECK(std::string(cmdplab_last_error()).find("ConfigInvalid") == 0);
  CHECK(cmdplab_model_queue(5, nullptr) == CMDPLAB_INVALID_ARGUMENT);
  CHECK(cmdplab_solve(nullptr, 1, nullptr) == CMDPLAB_INVALID_ARGUMENT);
  CHECK(cmdplab_model_load("/nonexistent/model.txt", &model) == CMDPLAB_IO);
  CHECK(std::string(cmdplab_status_name(CMDPLAB_INFEASIBLE)) == "Infeasible");
  CHECK(cmdplab_model_queue(5, &model) == CMDPLAB_OK);
  CHECK(std::string(cmdplab_last_error()).empty());
  cmdplab_model_free(model);
  cmdplab_model_free(nullptr);
}

TEST_CASE("save, load and check") {
  const auto path = (fs::temp_directory_path() / "cmdplab_c_api_chain.txt").string();
  cmdplab_model* chain = nullptr;
  REQUIRE(cmdplab_model_chain(5, 0.7, 3, &chain) == CMDPLAB_OK);
  REQUIRE(cmdplab_model_save(chain, path.c_str()) == CMDPLAB_OK);
  cmdplab_model* loaded = nullptr;
  REQUIRE(cmdplab_model_load(path.c_str(), &loaded) == CMDPLAB_OK);
  cmdplab_solution a{0.0, nullptr, nullptr}, b{0.0, nullptr, nullptr};
  CHECK(cmdplab_solve(chain, 1, &a) == CMDPLAB_OK);
  CHECK(cmdplab_solve(loaded, 1, &b) == CMDPLAB_OK);
  CHECK(a.objective == b.objective);

  cmdplab_check_report report{};
  REQUIRE(cmdplab_model_check(loaded, &report) == CMDPLAB_OK);
  CHECK(report.tables_ok == 1);
  CHECK(report.feasible == 1);
  CHECK(report.occupancy_residual <= 1e-8);
  CHECK(report.bellman_residual <= 1e-8);
  cmdplab_model_free(chain);
  cmdplab_model_free(loaded);
  fs::remove(path);
}

TEST_CASE("experiment through the C interface") {
  const auto dir = fs::temp_directory_path() / "cmdplab_c_api_run";
  fs::remove_all(dir);
  const std::string text = "algorithm = cucrl\nenv = random\nenv.states = 3\nT = 2000\nreplications = 2\noutput_dir = " +
                           dir.string() + "\n";
  cmdplab_config* config = nullptr;
  REQUIRE(cmdplab_config_parse(text.c_str(), &config) == CMDPLAB_OK);
  CHECK(cmdplab_config_set(config, "colour", "red") == CMDPLAB_CONFIG_INVALID);
  CHECK(cmdplab_config_set(config, "T", "3000") == CMDPLAB_OK);
  CHECK(cmdplab_config_set(config, "seed", "1\nT = 5") == CMDPLAB_INVALID_ARGUMENT);
  cmdplab_run_summary summary{};
  REQUIRE(cmdplab_run_experiment(config, 2, &summary) == CMDPLAB_OK);
  CHECK(summary.replications == 2);
  CHECK(summary.failures == 0);
  CHECK(std::isfinite(summary.mean_regret));
  CHECK(fs::exists(dir / "rep_001.csv"));

  CHECK(cmdplab_config_set(config, "algorithm", "fha") == CMDPLAB_OK);
  CHECK(cmdplab_config_set(config, "env", "queue") == CMDPLAB_OK);
  REQUIRE(cmdplab_run_experiment(config, 1, &summary) == CMDPLAB_OK);
  CHECK(summary.failures == 2);
  cmdplab_config_free(config);

  CHECK(cmdplab_config_parse("T = -3\n", &config) == CMDPLAB_CONFIG_INVALID);
  fs::remove_all(dir);
}
