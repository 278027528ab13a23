// profmon command-line front end. Talks to the library only through the C API.
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "profmon/profmon.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(pm_status st, const char* what) {
  if (st != PM_OK)
    throw CliError(std::string(what) + ": " + pm_status_name(st) + ": " + pm_last_error());
}

std::string take(char* s) {
  std::string out = s ? s : "";
  pm_string_free(s);
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw CliError("cannot open " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw CliError("cannot write " + p.string());
  f << s;
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Shared flags. Merge order: defaults <- config file <- flags.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out = ".";
  json config = json::object();

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file");
    app->add_option("--seed", seed, "RNG seed");
    app->add_option("--workers", workers, "worker threads (default: all cores)");
    app->add_option("--out", out, "output directory");
  }

  void load() {
    if (!config_path.empty()) {
      try {
        config = json::parse(read_text(config_path));
      } catch (const json::exception& e) {
        throw CliError("config " + config_path + ": " + e.what());
      }
      if (!config.is_object()) throw CliError("config must be a JSON object");
    }
    if (!seed && config.contains("seed")) seed = config["seed"].get<std::uint64_t>();
    if (!workers && config.contains("workers")) workers = config["workers"].get<std::size_t>();
    if (!workers) workers = std::max(1u, std::thread::hardware_concurrency());
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw CliError("cannot create " + out + ": " + ec.message());
  }

  std::uint64_t need_seed(const char* cmd) const {
    if (!seed) throw CliError(std::string(cmd) + " needs --seed (or \"seed\" in the config)");
    return *seed;
  }

  // Sidecar log: the only place timestamps appear.
  void log(const std::string& command, const json& resolved, const std::string& line = {}) const {
    std::ofstream f(fs::path(out) / (command + ".log"), std::ios::app);
    if (line.empty())
      f << timestamp() << " " << command << " profmon " << pm_version() << " config " << resolved.dump() << "\n";
    else
      f << timestamp() << " " << line << "\n";
  }
};

struct Batches {
  std::vector<pm_batch*> items;
  Batches() = default;
  Batches(const Batches&) = delete;
  Batches& operator=(const Batches&) = delete;
  ~Batches() {
    for (auto* b : items) pm_batch_destroy(b);
  }
  const pm_batch* const* data() const { return items.data(); }
  std::size_t size() const { return items.size(); }
};

std::vector<fs::path> csv_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// A directory of one-time files (t = 0, 1, ... in name order, shifted by
// `first_t`) or a single multi-time stream file.
void load_batches(const fs::path& src, std::int64_t first_t, Batches& out) {
  if (fs::is_directory(src)) {
    const auto files = csv_files(src);
    for (std::size_t i = 0; i < files.size(); ++i) {
      pm_batch* b = nullptr;
      check(pm_batch_read_csv(files[i].c_str(), first_t + static_cast<std::int64_t>(i), &b), files[i].c_str());
      out.items.push_back(b);
    }
    return;
  }
  if (!fs::exists(src)) throw CliError("no such file or directory: " + src.string());
  pm_batch** arr = nullptr;
  std::size_t count = 0;
  check(pm_batch_read_stream(src.c_str(), &arr, &count), src.c_str());
  for (std::size_t i = 0; i < count; ++i) out.items.push_back(arr[i]);
  pm_batch_array_free(arr);
}

struct Monitor {
  pm_monitor* h = nullptr;
  ~Monitor() { pm_monitor_destroy(h); }
};

json fit_section(const json& config) { return config.value("fit", json::object()); }

// --- calibrate ---------------------------------------------------------------

int cmd_calibrate(Common& c, const std::string& historical_dir, std::optional<double> target,
                  std::optional<int> runs) {
  c.load();
  const std::uint64_t seed = c.need_seed("calibrate");
  json fit = fit_section(c.config);
  if (!fit.contains("rng_seed")) fit["rng_seed"] = seed;
  json cal = c.config.value("calibration", json::object());
  cal["rng_seed"] = seed;
  if (target) cal["target_arl0"] = *target;
  if (runs) cal["num_runs"] = *runs;
  const std::string hist = historical_dir.empty() ? c.config.value("historical", std::string()) : historical_dir;
  if (hist.empty()) throw CliError("calibrate needs --historical");
  if (!fs::is_directory(hist)) throw CliError("historical path is not a directory: " + hist);

  Batches batches;
  load_batches(hist, 0, batches);
  if (batches.size() == 0) throw CliError("no historical CSV files in " + hist);
  // times -m+1..0 are assigned by the monitor; file order fixes the profile order

  Monitor mon;
  check(pm_monitor_create(batches.data(), batches.size(), fit.dump().c_str(), 1.0, &mon.h), "fit historical");
  cal["fit_config"] = fit;
  cal["workers"] = *c.workers;
  json resolved{{"command", "calibrate"}, {"historical", hist}, {"seed", seed}, {"workers", *c.workers},
                {"calibration", cal}, {"out", c.out}};
  c.log("calibrate", resolved);

  char* result = nullptr;
  const pm_status st = pm_calibrate(mon.h, batches.data(), batches.size(), cal.dump().c_str(), &result);
  const std::string text = take(result);
  if (!text.empty()) {
    const json r = json::parse(text);
    write_text(fs::path(c.out) / "ucl.json", r.dump(2) + "\n");
    std::string csv = "delta,arl0\n";
    for (const auto& pt : r.at("curve")) csv += fmt(pt[0].get<double>()) + "," + fmt(pt[1].get<double>()) + "\n";
    write_text(fs::path(c.out) / "curve.csv", csv);
  }
  check(st, "calibrate");
  check(pm_monitor_save(mon.h, (fs::path(c.out) / "state.json").c_str()), "save state");
  const json r = json::parse(text);
  std::cout << "ucl " << fmt(r["ucl"].get<double>()) << " estimated_arl0 " << fmt(r["estimated_arl0"].get<double>())
            << "\n";
  c.log("calibrate", resolved, "done ucl=" + fmt(r["ucl"].get<double>()));
  return 0;
}

// --- monitor -----------------------------------------------------------------

int cmd_monitor(Common& c, const std::string& state_in, const std::string& historical_dir,
                std::optional<double> ucl, const std::string& batches_src, bool keep_going) {
  c.load();
  const fs::path state_out = fs::path(c.out) / "state.json";
  const fs::path log_path = fs::path(c.out) / "steps.csv";
  Monitor mon;
  if (!state_in.empty()) {
    check(pm_monitor_load(state_in.c_str(), &mon.h), "load state");
  } else {
    if (historical_dir.empty()) throw CliError("monitor needs --state or --historical with --ucl");
    if (!ucl) throw CliError("--historical needs --ucl");
    Batches hist;
    load_batches(historical_dir, 0, hist);
    if (hist.size() == 0) throw CliError("no historical CSV files in " + historical_dir);
    json fit = fit_section(c.config);
    if (!fit.contains("rng_seed") && c.seed) fit["rng_seed"] = *c.seed;
    check(pm_monitor_create(hist.data(), hist.size(), fit.dump().c_str(), *ucl, &mon.h), "fit historical");
  }
  if (ucl && !state_in.empty()) check(pm_monitor_set_ucl(mon.h, *ucl), "set ucl");
  if (batches_src.empty()) throw CliError("monitor needs --batches");

  // Files in a directory are times 1, 2, ...; stream files carry t.
  Batches stream;
  load_batches(batches_src, 1, stream);
  const std::int64_t resume_t = pm_monitor_current_t(mon.h);

  json resolved{{"command", "monitor"}, {"state", state_in}, {"historical", historical_dir},
                {"batches", batches_src}, {"ucl", pm_monitor_ucl(mon.h)}, {"resume_t", resume_t}, {"out", c.out}};
  c.log("monitor", resolved);

  const bool fresh_log = resume_t == 1 || !fs::exists(log_path);
  std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) throw CliError("cannot write " + log_path.string());
  if (fresh_log) log << "t,xi,alarmed,argmax_j\n";

  std::optional<std::int64_t> first_alarm;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const std::int64_t t = pm_batch_time(stream.items[i]);
    if (t < pm_monitor_current_t(mon.h)) continue;  // already consumed before the resume point
    if (t != pm_monitor_current_t(mon.h))
      throw CliError("batch time " + std::to_string(t) + " does not follow state time " +
                     std::to_string(pm_monitor_current_t(mon.h)));
    pm_step_result r{};
    check(pm_monitor_step(mon.h, stream.items[i], &r), "step");
    log << r.t << ',' << fmt(r.xi) << ',' << r.alarmed << ',' << r.argmax_j << '\n';
    log.flush();
    check(pm_monitor_save(mon.h, state_out.c_str()), "save state");
    if (r.alarmed && !first_alarm) {
      first_alarm = r.t;
      if (!keep_going) break;
    }
  }
  if (first_alarm) {
    std::cout << "alarm raised at t=" << *first_alarm << "\n";
    c.log("monitor", resolved, "alarm t=" + std::to_string(*first_alarm));
    return 2;
  }
  std::cout << "completed, no alarm (t=" << pm_monitor_current_t(mon.h) - 1 << ")\n";
  c.log("monitor", resolved, "no alarm");
  return 0;
}

// --- simulate ----------------------------------------------------------------

int cmd_simulate(Common& c, const std::string& manifest_arg, bool quiet) {
  c.load();
  const std::string manifest = manifest_arg.empty() ? c.config.value("manifest", std::string()) : manifest_arg;
  if (manifest.empty()) throw CliError("simulate needs --manifest");
  const std::string text = read_text(manifest);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw CliError("manifest " + manifest + ": " + e.what());
  }
  if (!c.seed && !doc.contains("seed")) {
    bool all = doc.contains("scenarios") && doc["scenarios"].is_array();
    if (all)
      for (const auto& s : doc["scenarios"]) all = all && s.is_object() && s.contains("seed");
    if (!all) throw CliError("simulate needs --seed or seeds in the manifest");
  }
  json resolved{{"command", "simulate"}, {"manifest", manifest}, {"manifest_body", doc},
                {"workers", *c.workers}, {"out", c.out}};
  if (c.seed) resolved["seed"] = *c.seed;
  c.log("simulate", resolved);

  pm_progress_fn progress = nullptr;
  if (!quiet) progress = [](const char* msg, void*) { std::cerr << msg << "\n"; };
  const std::uint64_t seed = c.seed.value_or(0);
  check(pm_study_run(text.c_str(), c.out.c_str(), *c.workers, c.seed ? &seed : nullptr, progress, nullptr),
        "simulate");

  const json summary = json::parse(read_text(fs::path(c.out) / "summary.json"));
  int failed = 0;
  for (const auto& s : summary["scenarios"]) {
    const auto id = s["spec"]["id"].get<std::string>();
    if (s.contains("error")) {
      ++failed;
      std::cout << id << " FAILED: " << s["error"].get<std::string>() << "\n";
    } else {
      std::cout << id << " arl1=" << fmt(s["arl1"].get<double>()) << " far=" << fmt(s["far"].get<double>())
                << " n=" << s["n_trials"].get<std::size_t>() << "\n";
    }
  }
  c.log("simulate", resolved, "done failed_cells=" + std::to_string(failed));
  return 0;
}

// --- snr ---------------------------------------------------------------------

int cmd_snr(Common& c, const std::string& in_control, const std::string& forcing, std::vector<double> targets,
            std::size_t samples, double lambda_for_a) {
  c.load();
  const std::uint64_t seed = c.seed.value_or(0);
  if (targets.empty()) targets = {3.0, 5.0, 7.0};
  json resolved{{"command", "snr"}, {"in_control", in_control}, {"forcing", forcing}, {"targets", targets},
                {"samples", samples}, {"seed", seed}};
  c.log("snr", resolved);

  std::string csv = forcing == "localized" ? "target,a,achieved_snr\n" : "target,lambda,achieved_snr\n";
  for (double target : targets) {
    if (forcing == "localized") {
      double a = 0.0;
      check(pm_snr_localized_a(target, 0.1, lambda_for_a, &a), "snr");
      const double w = 1.0 - lambda_for_a;
      csv += fmt(target) + "," + fmt(a) + "," + fmt(w * w * a * a * 0.1 * 0.9) + "\n";
    } else {
      double lambda = 0.0, achieved = 0.0;
      check(pm_snr_solve_lambda(in_control.c_str(), forcing.c_str(), target, samples, seed, &lambda, &achieved),
            "snr");
      csv += fmt(target) + "," + fmt(lambda) + "," + fmt(achieved) + "\n";
    }
  }
  std::cout << csv;
  write_text(fs::path(c.out) / "snr.csv", csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonparametric profile monitoring"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pm_version()));

  Common common;

  auto* cal = app.add_subcommand("calibrate", "bootstrap UCL for a set of historical profiles");
  common.add_to(cal);
  std::string cal_hist;
  std::optional<double> cal_target;
  std::optional<int> cal_runs;
  cal->add_option("--historical", cal_hist, "directory of historical batch CSVs");
  cal->add_option("--target-arl0", cal_target, "target in-control ARL");
  cal->add_option("--runs", cal_runs, "bootstrap runs per candidate");

  auto* mon = app.add_subcommand("monitor", "run the chart over a stream of batches");
  common.add_to(mon);
  std::string mon_state, mon_hist, mon_batches;
  std::optional<double> mon_ucl;
  bool keep_going = false;
  mon->add_option("--state", mon_state, "serialized monitor state");
  mon->add_option("--historical", mon_hist, "directory of historical batch CSVs (instead of --state)");
  mon->add_option("--ucl", mon_ucl, "upper control limit");
  mon->add_option("--batches", mon_batches, "directory of batch CSVs or a multi-time stream CSV")->required();
  mon->add_flag("--keep-going", keep_going, "continue after the first alarm");

  auto* sim = app.add_subcommand("simulate", "run a simulation study manifest");
  common.add_to(sim);
  std::string manifest;
  bool quiet = false;
  sim->add_option("--manifest", manifest, "study manifest (JSON)");
  sim->add_flag("--quiet", quiet, "no progress on stderr");

  auto* snr = app.add_subcommand("snr", "solve the mixing weight (or jump height) for target SNRs");
  common.add_to(snr);
  std::string in_control = "linear", forcing = "sinusoidal";
  std::vector<double> targets;
  std::size_t samples = 1'000'000;
  double lambda_for_a = 0.0;
  snr->add_option("--in-control", in_control)->check(CLI::IsMember({"linear", "nonlinear"}));
  snr->add_option("--forcing", forcing)->check(CLI::IsMember({"sinusoidal", "nondifferentiable", "localized"}));
  snr->add_option("--targets", targets, "target SNR values")->delimiter(',');
  snr->add_option("--samples", samples, "Monte Carlo sample size");
  snr->add_option("--lambda", lambda_for_a, "mixing weight for the localized jump");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*cal) return cmd_calibrate(common, cal_hist, cal_target, cal_runs);
    if (*mon) return cmd_monitor(common, mon_state, mon_hist, mon_ucl, mon_batches, keep_going);
    if (*sim) return cmd_simulate(common, manifest, quiet);
    if (*snr) return cmd_snr(common, in_control, forcing, targets, samples, lambda_for_a);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
