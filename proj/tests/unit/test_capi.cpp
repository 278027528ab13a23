#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "profmon/profmon.h"

namespace fs = std::filesystem;

namespace {

// y = 1 + 3x1 + 2x2 + x3 + N(0, 1) on uniform predictors
pm_batch* make_batch(std::int64_t t, std::size_t n, std::uint64_t seed, double shift = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> e;
  std::vector<double> x(n * 3), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) x[i * 3 + k] = u(rng);
    y[i] = 1 + 3 * x[i * 3] + 2 * x[i * 3 + 1] + x[i * 3 + 2] + e(rng) + shift;
  }
  pm_batch* b = nullptr;
  REQUIRE(pm_batch_create(t, n, 3, x.data(), y.data(), &b) == PM_OK);
  return b;
}

struct History {
  std::vector<pm_batch*> batches;
  explicit History(std::size_t m, std::size_t n = 64) {
    for (std::size_t j = 0; j < m; ++j) batches.push_back(make_batch(-static_cast<std::int64_t>(m) + 1 + j, n, 100 + j));
  }
  ~History() {
    for (auto* b : batches) pm_batch_destroy(b);
  }
  const pm_batch* const* data() const { return batches.data(); }
  std::size_t size() const { return batches.size(); }
};

fs::path scratch(const char* name) {
  auto p = fs::temp_directory_path() / "profmon_capi" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("status names and errors") {
  CHECK(std::strlen(pm_version()) > 0);
  CHECK(std::string(pm_status_name(PM_OK)) == "ok");
  CHECK(std::string(pm_status_name(PM_ERR_CALIBRATION_FAILED)) == "calibration_failed");

  pm_batch* b = nullptr;
  double x[3] = {0.1, 0.2, 0.3};
  double y[1] = {NAN};
  CHECK(pm_batch_create(1, 1, 3, x, y, &b) == PM_ERR_INVALID_INPUT);
  CHECK(b == nullptr);
  CHECK(std::strlen(pm_last_error()) > 0);
  CHECK(pm_batch_create(1, 1, 3, nullptr, y, &b) == PM_ERR_INVALID_INPUT);
  CHECK(pm_batch_read_csv("/nonexistent/profile.csv", 1, &b) == PM_ERR_IO);
  pm_monitor* mon = nullptr;
  CHECK(pm_monitor_from_json("{not json", &mon) == PM_ERR_PARSE);
  CHECK(pm_monitor_step(nullptr, nullptr, nullptr) == PM_ERR_INVALID_INPUT);
}

TEST_CASE("batch accessors and file input") {
  pm_batch* b = make_batch(4, 10, 1);
  CHECK(pm_batch_n(b) == 10);
  CHECK(pm_batch_p(b) == 3);
  CHECK(pm_batch_time(b) == 4);
  pm_batch_destroy(b);

  auto dir = scratch("files");
  {
    std::ofstream f(dir / "stream.csv");
    f << "t,x1,x2,y\n1,0.1,0.2,1.0\n1,0.3,0.4,2.0\n2,0.5,0.6,3.0\n";
  }
  pm_batch** arr = nullptr;
  std::size_t count = 0;
  REQUIRE(pm_batch_read_stream((dir / "stream.csv").c_str(), &arr, &count) == PM_OK);
  REQUIRE(count == 2);
  CHECK(pm_batch_n(arr[0]) == 2);
  CHECK(pm_batch_time(arr[1]) == 2);
  for (std::size_t k = 0; k < count; ++k) pm_batch_destroy(arr[k]);
  pm_batch_array_free(arr);
}

TEST_CASE("monitor lifecycle") {
  History h(5);
  pm_monitor* mon = nullptr;
  REQUIRE(pm_monitor_create(h.data(), h.size(), nullptr, 0.5, &mon) == PM_OK);
  CHECK(pm_monitor_ucl(mon) == 0.5);
  CHECK(pm_monitor_current_t(mon) == 1);
  CHECK(pm_monitor_history_len(mon) == 5);

  pm_batch* calm = make_batch(1, 64, 7);
  pm_step_result r{};
  REQUIRE(pm_monitor_step(mon, calm, &r) == PM_OK);
  CHECK(r.t == 1);
  CHECK(r.alarmed == 0);
  CHECK(r.xi >= 0.0);
  CHECK(r.argmax_j <= 0);
  CHECK(pm_monitor_current_t(mon) == 2);

  // save, load, and step both copies the same way
  auto dir = scratch("state");
  const auto path = (dir / "state.json").string();
  REQUIRE(pm_monitor_save(mon, path.c_str()) == PM_OK);
  pm_monitor* loaded = nullptr;
  REQUIRE(pm_monitor_load(path.c_str(), &loaded) == PM_OK);
  pm_batch* shifted = make_batch(2, 64, 8, 10.0);
  pm_step_result a{}, b{};
  REQUIRE(pm_monitor_step(mon, shifted, &a) == PM_OK);
  REQUIRE(pm_monitor_step(loaded, shifted, &b) == PM_OK);
  CHECK(a.xi == b.xi);
  CHECK(a.alarmed == 1);
  CHECK(b.alarmed == 1);

  char* text = nullptr;
  REQUIRE(pm_monitor_to_json(mon, &text) == PM_OK);
  auto j = nlohmann::json::parse(text);
  pm_string_free(text);
  CHECK(j.is_object());

  REQUIRE(pm_monitor_restart(mon) == PM_OK);
  CHECK(pm_monitor_current_t(mon) == 1);
  CHECK(pm_monitor_history_len(mon) == 5);
  CHECK(pm_monitor_set_ucl(mon, -1.0) == PM_ERR_INVALID_INPUT);

  // a batch with the wrong predictor count is rejected without touching the state
  double x1[2] = {0.1, 0.2}, y1[2] = {1.0, 2.0};
  pm_batch* narrow = nullptr;
  REQUIRE(pm_batch_create(1, 2, 1, x1, y1, &narrow) == PM_OK);
  CHECK(pm_monitor_step(mon, narrow, &r) == PM_ERR_INVALID_INPUT);
  CHECK(pm_monitor_current_t(mon) == 1);

  CHECK(pm_monitor_load((dir / "missing.json").c_str(), &loaded) != PM_OK);
  {
    std::ofstream f(dir / "bad.json");
    f << "{\"version\": 1, \"history\": 3}";
  }
  pm_monitor* bad = nullptr;
  CHECK(pm_monitor_load((dir / "bad.json").c_str(), &bad) != PM_OK);
  CHECK(bad == nullptr);

  pm_batch_destroy(narrow);
  pm_batch_destroy(calm);
  pm_batch_destroy(shifted);
  pm_monitor_destroy(loaded);
  pm_monitor_destroy(mon);
}

TEST_CASE("calibration through the C interface") {
  History h(3, 32);
  pm_monitor* mon = nullptr;
  REQUIRE(pm_monitor_create(h.data(), h.size(), nullptr, 1.0, &mon) == PM_OK);
  char* out = nullptr;
  REQUIRE(pm_calibrate(mon, h.data(), h.size(), R"({"target_arl0": 5, "num_runs": 10, "rng_seed": 3})", &out) ==
          PM_OK);
  auto j = nlohmann::json::parse(out);
  pm_string_free(out);
  const double ucl = j.at("ucl").get<double>();
  CHECK(pm_monitor_ucl(mon) == ucl);
  CHECK(std::abs(ucl * 32 - std::round(ucl * 32)) < 1e-9);
  CHECK(j.at("estimated_arl0").get<double>() >= 5.0);

  CHECK(pm_calibrate(mon, h.data(), h.size(), R"({"target_arl0": 0.5})", &out) == PM_ERR_INVALID_INPUT);
  CHECK(pm_calibrate(mon, h.data(), h.size(), R"({"target_arl0": )", &out) == PM_ERR_PARSE);
  pm_monitor_destroy(mon);
}

TEST_CASE("snr helpers") {
  double lambda = 0, achieved = 0, a = 0, snr = 0;
  REQUIRE(pm_snr_solve_lambda("linear", "sinusoidal", 3.0, 100000, 1, &lambda, &achieved) == PM_OK);
  CHECK(lambda == doctest::Approx(0.4568).epsilon(0.02 / 0.4568));
  CHECK(pm_snr_solve_lambda("linear", "sinusoidal", 1e6, 10000, 1, &lambda, &achieved) == PM_ERR_NO_SOLUTION);
  CHECK(pm_snr_solve_lambda("cubic", "sinusoidal", 3.0, 10000, 1, &lambda, &achieved) == PM_ERR_PARSE);
  REQUIRE(pm_snr_localized_a(3.0, 0.1, 0.0, &a) == PM_OK);
  CHECK(a == doctest::Approx(5.7735).epsilon(1e-5));
  REQUIRE(pm_snr_estimate("nonlinear", "localized", 0.0, a, 200000, 2, &snr) == PM_OK);
  CHECK(snr == doctest::Approx(3.0).epsilon(0.05));
}

struct Collected {
  std::vector<std::string> lines;
};

TEST_CASE("study run writes outputs") {
  auto dir = scratch("study");
  const char* manifest = R"({"schema_version": 1, "scenarios": [
    {"id": "toy", "replay": {"tau": 30, "trials": [[31,0],[31,1],[31,0],[31,1],[32,0]]}}]})";
  const char* unseeded = R"({"schema_version": 1, "scenarios": [{"id": "a", "m": 2}]})";
  CHECK(pm_study_run(unseeded, dir.c_str(), 1, nullptr, nullptr, nullptr) == PM_ERR_INVALID_INPUT);
  const std::uint64_t seed = 11;
  Collected c;
  auto progress = [](const char* msg, void* user) { static_cast<Collected*>(user)->lines.emplace_back(msg); };
  REQUIRE(pm_study_run(manifest, dir.c_str(), 1, &seed, progress, &c) == PM_OK);
  for (const char* f : {"trials.csv", "aggregate.csv", "ucl.csv", "summary.json"}) CHECK(fs::exists(dir / f));
  CHECK(pm_study_run("[]", dir.c_str(), 1, &seed, nullptr, nullptr) != PM_OK);
}
