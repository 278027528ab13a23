#include "profmon/profmon.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

#include "profmon/calibration.hpp"
#include "profmon/core.hpp"
#include "profmon/monitor.hpp"
#include "profmon/parallel.hpp"
#include "profmon/simulation.hpp"
#include "profmon/study.hpp"

#define PM_STRINGIFY2(x) #x
#define PM_STRINGIFY(x) PM_STRINGIFY2(x)

struct pm_batch {
  profmon::ObservationBatch batch;
};

struct pm_monitor {
  profmon::MonitorState state;
};

namespace {

thread_local std::string g_last_error;

pm_status code_of(profmon::ErrorKind k) {
  using profmon::ErrorKind;
  switch (k) {
    case ErrorKind::invalid_input: return PM_ERR_INVALID_INPUT;
    case ErrorKind::invalid_state: return PM_ERR_INVALID_STATE;
    case ErrorKind::no_solution: return PM_ERR_NO_SOLUTION;
    case ErrorKind::calibration_failed: return PM_ERR_CALIBRATION_FAILED;
    case ErrorKind::io: return PM_ERR_IO;
    case ErrorKind::parse: return PM_ERR_PARSE;
  }
  return PM_ERR_INTERNAL;
}

template <class F>
pm_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return PM_OK;
  } catch (const profmon::Error& e) {
    g_last_error = e.what();
    return code_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return PM_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return PM_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  if (!p) profmon::fail(profmon::ErrorKind::invalid_input, std::string(what) + " is NULL");
}

std::vector<profmon::ObservationBatch> collect(const pm_batch* const* historical, size_t m) {
  if (m > 0) need(historical, "historical");
  std::vector<profmon::ObservationBatch> out;
  out.reserve(m);
  for (size_t i = 0; i < m; ++i) {
    need(historical[i], "historical batch");
    out.push_back(historical[i]->batch);
  }
  return out;
}

nlohmann::json parse_json(const char* text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    profmon::fail(profmon::ErrorKind::parse, std::string(what) + ": " + e.what());
  }
}

std::string slurp(const char* path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) profmon::fail(profmon::ErrorKind::io, std::string("cannot open ") + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

profmon::GeneratorSpec spec_from(const char* in_control, const char* forcing) {
  need(in_control, "in_control");
  need(forcing, "forcing");
  profmon::GeneratorSpec s;
  s.in_control = profmon::parse_in_control(in_control);
  s.forcing = profmon::parse_forcing(forcing);
  return s;
}

}  // namespace

extern "C" {

const char* pm_version(void) {
#ifdef PROFMON_VERSION
  return PM_STRINGIFY(PROFMON_VERSION);
#else
  return "0.0.0";
#endif
}

const char* pm_last_error(void) { return g_last_error.c_str(); }

const char* pm_status_name(pm_status status) {
  switch (status) {
    case PM_OK: return "ok";
    case PM_ERR_INVALID_INPUT: return "invalid_input";
    case PM_ERR_INVALID_STATE: return "invalid_state";
    case PM_ERR_NO_SOLUTION: return "no_solution";
    case PM_ERR_CALIBRATION_FAILED: return "calibration_failed";
    case PM_ERR_IO: return "io";
    case PM_ERR_PARSE: return "parse";
    case PM_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void pm_string_free(char* s) { std::free(s); }

pm_status pm_batch_create(int64_t t, size_t n, size_t p, const double* x, const double* y, pm_batch** out) {
  return guarded([&] {
    need(out, "out");
    need(x, "x");
    need(y, "y");
    std::vector<double> xs(x, x + n * p);
    std::vector<double> ys(y, y + n);
    *out = new pm_batch{profmon::ObservationBatch(t, p, std::move(xs), std::move(ys))};
  });
}

pm_status pm_batch_read_csv(const char* path, int64_t t, pm_batch** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new pm_batch{profmon::read_batch_csv(path, t)};
  });
}

pm_status pm_batch_read_stream(const char* path, pm_batch*** out, size_t* count) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    need(count, "count");
    auto batches = profmon::read_stream_csv(path);
    auto** arr = static_cast<pm_batch**>(std::calloc(batches.size() + 1, sizeof(pm_batch*)));
    if (!arr) throw std::bad_alloc();
    for (size_t i = 0; i < batches.size(); ++i) arr[i] = new pm_batch{std::move(batches[i])};
    *out = arr;
    *count = batches.size();
  });
}

void pm_batch_array_free(pm_batch** arr) { std::free(arr); }
size_t pm_batch_n(const pm_batch* b) { return b ? b->batch.n() : 0; }
size_t pm_batch_p(const pm_batch* b) { return b ? b->batch.p() : 0; }
int64_t pm_batch_time(const pm_batch* b) { return b ? b->batch.time_index() : 0; }
void pm_batch_destroy(pm_batch* b) { delete b; }

pm_status pm_monitor_create(const pm_batch* const* historical, size_t m, const char* fit_json, double ucl,
                            pm_monitor** out) {
  return guarded([&] {
    need(out, "out");
    auto batches = collect(historical, m);
    profmon::FitConfig fit = profmon::FitConfig::tree_defaults();
    if (fit_json) fit = profmon::fit_config_from_json(parse_json(fit_json, "fit config"), fit);
    *out = new pm_monitor{profmon::MonitorState::from_historical(batches, fit, ucl)};
  });
}

pm_status pm_monitor_step(pm_monitor* mon, const pm_batch* batch, pm_step_result* out) {
  return guarded([&] {
    need(mon, "monitor");
    need(batch, "batch");
    auto r = mon->state.step(batch->batch);
    if (out) *out = pm_step_result{r.t, r.xi, r.alarmed ? 1 : 0, r.argmax_j};
  });
}

pm_status pm_monitor_restart(pm_monitor* mon) {
  return guarded([&] {
    need(mon, "monitor");
    mon->state.restart();
  });
}

pm_status pm_monitor_set_ucl(pm_monitor* mon, double ucl) {
  return guarded([&] {
    need(mon, "monitor");
    mon->state.set_ucl(ucl);
  });
}

double pm_monitor_ucl(const pm_monitor* mon) { return mon ? mon->state.ucl() : 0.0; }
int64_t pm_monitor_current_t(const pm_monitor* mon) { return mon ? mon->state.current_t() : 0; }
size_t pm_monitor_history_len(const pm_monitor* mon) { return mon ? mon->state.history().size() : 0; }

pm_status pm_monitor_to_json(const pm_monitor* mon, char** out) {
  return guarded([&] {
    need(mon, "monitor");
    need(out, "out");
    *out = dup_string(mon->state.to_json().dump());
  });
}

pm_status pm_monitor_from_json(const char* json, pm_monitor** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    *out = new pm_monitor{profmon::MonitorState::from_json(parse_json(json, "monitor state"))};
  });
}

pm_status pm_monitor_save(const pm_monitor* mon, const char* path) {
  return guarded([&] {
    need(mon, "monitor");
    need(path, "path");
    // write-then-rename so an interrupted save never leaves a torn state file
    const std::string tmp = std::string(path) + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) profmon::fail(profmon::ErrorKind::io, "cannot write " + tmp);
      f << mon->state.to_json().dump() << '\n';
      if (!f) profmon::fail(profmon::ErrorKind::io, "write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path) != 0)
      profmon::fail(profmon::ErrorKind::io, std::string("cannot replace ") + path);
  });
}

pm_status pm_monitor_load(const char* path, pm_monitor** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new pm_monitor{profmon::MonitorState::from_json(parse_json(slurp(path).c_str(), path))};
  });
}

void pm_monitor_destroy(pm_monitor* mon) { delete mon; }

pm_status pm_calibrate(pm_monitor* mon, const pm_batch* const* historical, size_t m, const char* config_json,
                       char** result_json) {
  if (result_json) *result_json = nullptr;
  return guarded([&] {
    need(mon, "monitor");
    auto batches = collect(historical, m);
    profmon::CalibrationConfig cfg;
    cfg.fit_config = mon->state.fit_config();
    if (config_json) cfg = profmon::calibration_config_from_json(parse_json(config_json, "calibration config"), cfg);
    try {
      auto r = profmon::find_ucl(batches, mon->state, cfg);
      mon->state.set_ucl(r.ucl);
      if (result_json) *result_json = dup_string(profmon::to_json(r).dump());
    } catch (const profmon::CalibrationFailure& e) {
      if (result_json) {
        profmon::UclResult partial;
        partial.candidate_curve = e.curve();
        auto j = profmon::to_json(partial);
        j["ucl"] = nullptr;
        j["error"] = e.what();
        *result_json = dup_string(j.dump());
      }
      throw;
    }
  });
}

pm_status pm_study_run(const char* manifest_json, const char* out_dir, size_t workers, const uint64_t* seed_override,
                       pm_progress_fn progress, void* user) {
  return guarded([&] {
    need(manifest_json, "manifest");
    need(out_dir, "out_dir");
    std::optional<std::uint64_t> seed;
    if (seed_override) seed = *seed_override;
    auto manifest = profmon::parse_manifest(parse_json(manifest_json, "manifest"), seed);
    profmon::ProgressFn fn;
    if (progress) fn = [&](const std::string& msg) { progress(msg.c_str(), user); };
    auto report = profmon::run_study(manifest, workers == 0 ? profmon::default_workers() : workers, fn);
    profmon::write_study_outputs(report, out_dir);
  });
}

pm_status pm_snr_solve_lambda(const char* in_control, const char* forcing, double target, size_t samples,
                              uint64_t seed, double* lambda, double* achieved) {
  return guarded([&] {
    auto spec = spec_from(in_control, forcing);
    auto sol = profmon::solve_lambda_for_snr(spec.in_control, spec.forcing, target, samples, seed);
    if (lambda) *lambda = sol.lambda;
    if (achieved) *achieved = sol.achieved_snr;
  });
}

pm_status pm_snr_localized_a(double target, double volume, double lambda, double* a) {
  return guarded([&] {
    need(a, "a");
    *a = profmon::localized_a_for_snr(target, volume, lambda);
  });
}

pm_status pm_snr_estimate(const char* in_control, const char* forcing, double lambda, double jump, size_t samples,
                          uint64_t seed, double* snr) {
  return guarded([&] {
    need(snr, "snr");
    auto spec = spec_from(in_control, forcing);
    spec.lambda = lambda;
    spec.jump = jump;
    spec.validate();
    *snr = profmon::mc_snr_estimate(spec, samples, seed);
  });
}

}  // extern "C"
