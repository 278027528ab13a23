#include "profmon/study.hpp"

#include <charconv>
#include <fstream>
#include <set>

#include "profmon/error.hpp"
#include "profmon/parallel.hpp"
#include "profmon/rng.hpp"

namespace profmon {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

// --- manifest ---------------------------------------------------------------

namespace {

RegressorKind parse_method(const std::string& s) {
  if (s == "tree") return RegressorKind::tree;
  if (s == "forest") return RegressorKind::forest;
  fail(ErrorKind::parse, "method must be 'tree' or 'forest', got '" + s + "'");
}

RestartPolicy parse_restart(const std::string& s) {
  if (s == "truncate") return RestartPolicy::truncate;
  if (s == "continue") return RestartPolicy::continue_history;
  fail(ErrorKind::parse, "restart_policy must be 'truncate' or 'continue', got '" + s + "'");
}

std::vector<TrialRecord> parse_replay(const json& j, std::int64_t& tau) {
  tau = j.at("tau").get<std::int64_t>();
  std::vector<TrialRecord> out;
  for (const auto& t : j.at("trials")) {
    TrialRecord r;
    if (t.is_array()) {
      r.run_length = t.at(0).get<std::int64_t>();
      r.false_alarms = t.at(1).get<std::int64_t>();
    } else {
      r.run_length = t.at("T").get<std::int64_t>();
      r.false_alarms = t.value("false_alarms", std::int64_t{0});
    }
    if (r.run_length <= tau || r.false_alarms < 0)
      fail(ErrorKind::invalid_input, "replayed trials need T > tau and false_alarms >= 0");
    out.push_back(r);
  }
  if (out.empty()) fail(ErrorKind::invalid_input, "replay needs at least one trial");
  return out;
}

const std::set<std::string> kScenarioKeys = {
    "id", "in_control", "forcing", "snr", "m", "tau", "method", "sets", "trials_per_set",
    "seed", "n", "lambda", "jump", "ucl", "snr_samples", "restart_policy", "max_steps",
    "calibration", "fit", "replay"};

ScenarioSpec parse_scenario(const json& j, std::optional<std::uint64_t> default_seed) {
  if (!j.is_object()) fail(ErrorKind::parse, "scenario must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!kScenarioKeys.count(key)) fail(ErrorKind::parse, "unknown scenario field '" + key + "'");
  ScenarioSpec s;
  s.id = j.at("id").get<std::string>();
  if (s.id.empty() || s.id.find_first_of(",\n\"") != std::string::npos)
    fail(ErrorKind::parse, "scenario id must be non-empty and CSV-safe");
  if (j.contains("replay")) {
    s.replay = parse_replay(j.at("replay"), s.tau);
    return s;
  }
  s.in_control = parse_in_control(j.value("in_control", std::string("linear")));
  s.forcing = parse_forcing(j.value("forcing", std::string("sinusoidal")));
  s.snr = j.value("snr", 3.0);
  s.m = j.value("m", std::size_t{20});
  s.tau = j.value("tau", std::int64_t{0});
  s.method = parse_method(j.value("method", std::string("tree")));
  s.sets = j.value("sets", std::size_t{1});
  s.trials_per_set = j.value("trials_per_set", std::size_t{1});
  s.n = j.value("n", std::size_t{512});
  s.snr_samples = j.value("snr_samples", std::size_t{1'000'000});
  s.restart = parse_restart(j.value("restart_policy", std::string("truncate")));
  s.max_steps = j.value("max_steps", std::int64_t{0});
  if (j.contains("lambda")) s.lambda = j.at("lambda").get<double>();
  if (j.contains("jump")) s.jump = j.at("jump").get<double>();
  if (j.contains("ucl")) s.ucl = j.at("ucl").get<double>();

  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  else if (default_seed) s.seed = *default_seed;
  else fail(ErrorKind::invalid_input, "scenario '" + s.id + "' has no seed");

  s.fit = s.method == RegressorKind::forest ? FitConfig::forest_defaults() : FitConfig::tree_defaults();
  if (j.contains("fit")) s.fit = fit_config_from_json(j.at("fit"), s.fit);
  s.fit.regressor_kind = s.method;
  if (j.contains("calibration")) s.calibration = calibration_config_from_json(j.at("calibration"));
  s.calibration.fit_config = s.fit;

  if (s.m < 1 || s.sets < 1 || s.trials_per_set < 1 || s.n < 2)
    fail(ErrorKind::invalid_input, "scenario '" + s.id + "': m, sets, trials_per_set must be >= 1 and n >= 2");
  if (s.tau < 0) fail(ErrorKind::invalid_input, "scenario '" + s.id + "': tau must be >= 0");
  if (!(s.snr >= 0.0)) fail(ErrorKind::invalid_input, "scenario '" + s.id + "': snr must be >= 0");
  s.fit.validate(3);
  s.calibration.validate();
  return s;
}

}  // namespace

StudyManifest parse_manifest(const json& doc, std::optional<std::uint64_t> seed_override) {
  StudyManifest out;
  try {
    if (!doc.is_object()) fail(ErrorKind::parse, "manifest must be a JSON object");
    if (!doc.contains("schema_version")) fail(ErrorKind::parse, "manifest lacks schema_version");
    out.schema_version = doc.at("schema_version").get<int>();
    if (out.schema_version != kManifestSchemaVersion)
      fail(ErrorKind::parse, "unsupported manifest schema_version " + std::to_string(out.schema_version));
    std::optional<std::uint64_t> default_seed = seed_override;
    if (!default_seed && doc.contains("seed")) default_seed = doc.at("seed").get<std::uint64_t>();
    std::set<std::string> ids;
    for (const auto& js : doc.at("scenarios")) {
      auto s = parse_scenario(js, default_seed);
      if (seed_override) s.seed = *seed_override;
      if (!ids.insert(s.id).second) fail(ErrorKind::invalid_input, "duplicate scenario id '" + s.id + "'");
      out.scenarios.push_back(std::move(s));
    }
    if (out.scenarios.empty()) fail(ErrorKind::invalid_input, "manifest has no scenarios");
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("manifest: ") + e.what());
  }
  return out;
}

json to_json(const ScenarioSpec& s) {
  json j{{"id", s.id}, {"seed", s.seed}, {"tau", s.tau}};
  if (s.replay) {
    j["replay_trials"] = s.replay->size();
    return j;
  }
  j["in_control"] = to_string(s.in_control);
  j["forcing"] = to_string(s.forcing);
  j["snr"] = s.snr;
  j["m"] = s.m;
  j["method"] = s.method == RegressorKind::forest ? "forest" : "tree";
  j["sets"] = s.sets;
  j["trials_per_set"] = s.trials_per_set;
  j["n"] = s.n;
  j["snr_samples"] = s.snr_samples;
  j["restart_policy"] = s.restart == RestartPolicy::truncate ? "truncate" : "continue";
  j["max_steps"] = s.max_steps;
  if (s.lambda) j["lambda"] = *s.lambda;
  if (s.jump) j["jump"] = *s.jump;
  if (s.ucl) j["ucl"] = *s.ucl;
  j["fit"] = to_json(s.fit);
  j["calibration"] = to_json(s.calibration);
  return j;
}

// --- results ----------------------------------------------------------------

namespace {

std::vector<TrialRecord> records(const ScenarioResult& r) {
  std::vector<TrialRecord> out;
  out.reserve(r.trials.size());
  for (const auto& t : r.trials) out.push_back(t.record);
  return out;
}

}  // namespace

double ScenarioResult::arl1() const { return compute_arl1(records(*this), spec.tau); }
double ScenarioResult::arl1_stderr() const { return profmon::arl1_stderr(records(*this), spec.tau); }
double ScenarioResult::far() const { return compute_far(records(*this)); }

std::size_t ScenarioResult::censored_trials() const noexcept {
  std::size_t c = 0;
  for (const auto& t : trials) c += t.record.censored ? 1 : 0;
  return c;
}

ScenarioResult run_scenario(const ScenarioSpec& spec, std::size_t workers, const ProgressFn& progress) {
  ScenarioResult result;
  result.spec = spec;
  if (spec.replay) {
    for (std::size_t k = 0; k < spec.replay->size(); ++k) result.trials.push_back({0, k, (*spec.replay)[k]});
    return result;
  }

  GeneratorSpec gen;
  gen.in_control = spec.in_control;
  gen.forcing = spec.forcing;
  gen.tau = spec.tau;
  gen.n = spec.n;
  if (spec.forcing == Forcing::localized) {
    gen.lambda = spec.lambda.value_or(0.0);
    gen.jump = spec.jump ? *spec.jump : localized_a_for_snr(spec.snr, gen.volume, gen.lambda);
    const double w = 1.0 - gen.lambda;
    result.achieved_snr = w * w * gen.jump * gen.jump * gen.volume * (1.0 - gen.volume);
  } else if (spec.lambda) {
    gen.lambda = *spec.lambda;
    result.achieved_snr = mc_snr_estimate(gen, spec.snr_samples, derive_seed(spec.seed, {stream::snr}));
  } else {
    const auto sol = solve_lambda_for_snr(spec.in_control, spec.forcing, spec.snr, spec.snr_samples,
                                          derive_seed(spec.seed, {stream::snr}));
    gen.lambda = sol.lambda;
    result.achieved_snr = sol.achieved_snr;
  }
  gen.validate();
  result.lambda = gen.lambda;
  result.jump = gen.jump;

  TrialOptions options;
  options.restart = spec.restart;
  options.max_steps = spec.max_steps > 0 ? spec.max_steps
                                         : spec.tau + spec.calibration.resolved_max_horizon();

  for (std::size_t set = 0; set < spec.sets; ++set) {
    const std::uint64_t set_seed = derive_seed(spec.seed, {stream::set, set});
    const auto historical = generate_historical(gen, spec.m, derive_seed(set_seed, {stream::historical}));
    FitConfig fit = spec.fit;
    fit.rng_seed = derive_seed(set_seed, {stream::fit});
    auto state = MonitorState::from_historical(historical, fit, 1.0);

    SetCalibration cal{set, 0.0, 0.0, 0};
    if (spec.ucl) {
      cal.ucl = *spec.ucl;
    } else {
      CalibrationConfig cc = spec.calibration;
      cc.fit_config = fit;
      cc.rng_seed = derive_seed(set_seed, {stream::calibration});
      cc.workers = workers;
      const auto ucl = find_ucl(historical, state, cc);
      cal.ucl = ucl.ucl;
      cal.estimated_arl0 = ucl.estimated_arl0;
      cal.censored_runs = ucl.censored_runs;
    }
    result.calibrations.push_back(cal);

    std::vector<TrialRecord> recs(spec.trials_per_set);
    parallel_for(recs.size(), workers, [&](std::size_t k) {
      recs[k] = phase2_trial(gen, state, cal.ucl, derive_seed(set_seed, {stream::trial, k}), options);
    });
    for (std::size_t k = 0; k < recs.size(); ++k) result.trials.push_back({set, k, recs[k]});
    if (progress)
      progress(spec.id + ": set " + std::to_string(set + 1) + "/" + std::to_string(spec.sets) +
               " ucl=" + format_double(cal.ucl));
  }
  return result;
}

StudyReport run_study(const StudyManifest& manifest, std::size_t workers, const ProgressFn& progress) {
  StudyReport report;
  for (const auto& spec : manifest.scenarios) {
    try {
      report.scenarios.push_back(run_scenario(spec, workers, progress));
    } catch (const std::exception& e) {
      ScenarioResult failed;
      failed.spec = spec;
      failed.error = e.what();
      report.scenarios.push_back(std::move(failed));
      if (progress) progress(spec.id + ": failed: " + e.what());
    }
  }
  return report;
}

void write_study_outputs(const StudyReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) fail(ErrorKind::io, "cannot write " + (dir / name).string());
    return f;
  };

  auto trials = open("trials.csv");
  trials << "scenario_id,set_id,trial_id,T,false_alarms\n";
  auto aggregate = open("aggregate.csv");
  aggregate << "scenario_id,arl1,arl1_stderr,far,n_trials\n";
  auto ucl = open("ucl.csv");
  ucl << "scenario_id,set_id,ucl,estimated_arl0,censored_runs\n";
  json summary{{"scenarios", json::array()}};

  for (const auto& r : report.scenarios) {
    json js{{"spec", to_json(r.spec)}};
    if (r.error) {
      js["error"] = *r.error;
      summary["scenarios"].push_back(std::move(js));
      continue;
    }
    for (const auto& t : r.trials)
      trials << r.spec.id << ',' << t.set_id << ',' << t.trial_id << ',' << t.record.run_length << ','
             << t.record.false_alarms << '\n';
    for (const auto& c : r.calibrations)
      ucl << r.spec.id << ',' << c.set_id << ',' << format_double(c.ucl) << ','
          << format_double(c.estimated_arl0) << ',' << c.censored_runs << '\n';
    aggregate << r.spec.id << ',' << format_double(r.arl1()) << ',' << format_double(r.arl1_stderr())
              << ',' << format_double(r.far()) << ',' << r.trials.size() << '\n';
    js["lambda"] = r.lambda;
    js["jump"] = r.jump;
    js["achieved_snr"] = r.achieved_snr;
    js["arl1"] = r.arl1();
    js["far"] = r.far();
    js["n_trials"] = r.trials.size();
    js["censored_trials"] = r.censored_trials();
    summary["scenarios"].push_back(std::move(js));
  }
  open("summary.json") << summary.dump(2) << '\n';
}

}  // namespace profmon
