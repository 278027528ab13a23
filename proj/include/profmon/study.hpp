#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "profmon/calibration.hpp"
#include "profmon/simulation.hpp"

namespace profmon {

inline constexpr int kManifestSchemaVersion = 1;

/// One cell of a simulation study.
struct ScenarioSpec {
  std::string id;
  InControl in_control = InControl::linear;
  Forcing forcing = Forcing::sinusoidal;
  double snr = 3.0;
  std::size_t m = 20;
  std::int64_t tau = 0;
  RegressorKind method = RegressorKind::tree;
  std::size_t sets = 1;
  std::size_t trials_per_set = 1;
  std::uint64_t seed = 0;
  std::size_t n = 512;
  std::optional<double> lambda;  // overrides the SNR solve
  std::optional<double> jump;    // overrides the localized jump
  std::optional<double> ucl;     // skips calibration
  std::size_t snr_samples = 1'000'000;
  RestartPolicy restart = RestartPolicy::truncate;
  std::int64_t max_steps = 0;  // 0 = tau + calibration max horizon
  CalibrationConfig calibration;
  FitConfig fit;

  /// Recorded outcomes replayed instead of simulated (tooling fixtures).
  std::optional<std::vector<TrialRecord>> replay;
};

struct StudyManifest {
  int schema_version = kManifestSchemaVersion;
  std::vector<ScenarioSpec> scenarios;
};

/// Validates and resolves a manifest document. `seed_override` replaces
/// every scenario seed; without it each scenario (or the top level) must
/// name a seed.
StudyManifest parse_manifest(const nlohmann::json& doc, std::optional<std::uint64_t> seed_override = {});
nlohmann::json to_json(const ScenarioSpec& s);

struct SetCalibration {
  std::size_t set_id = 0;
  double ucl = 0.0;
  double estimated_arl0 = 0.0;
  std::size_t censored_runs = 0;
};

struct TrialRow {
  std::size_t set_id = 0;
  std::size_t trial_id = 0;
  TrialRecord record;
};

struct ScenarioResult {
  ScenarioSpec spec;
  double lambda = 1.0;
  double jump = 0.0;
  double achieved_snr = 0.0;
  std::vector<SetCalibration> calibrations;
  std::vector<TrialRow> trials;
  std::optional<std::string> error;

  double arl1() const;
  double arl1_stderr() const;
  double far() const;
  std::size_t censored_trials() const noexcept;
};

struct StudyReport {
  std::vector<ScenarioResult> scenarios;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Runs one scenario; failures propagate.
ScenarioResult run_scenario(const ScenarioSpec& spec, std::size_t workers, const ProgressFn& progress = {});
/// Runs every scenario; a failing scenario is recorded and the study continues.
StudyReport run_study(const StudyManifest& manifest, std::size_t workers, const ProgressFn& progress = {});

/// Writes trials.csv, aggregate.csv, ucl.csv and summary.json into dir.
void write_study_outputs(const StudyReport& report, const std::filesystem::path& dir);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace profmon
