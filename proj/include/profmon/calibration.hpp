#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "profmon/core.hpp"
#include "profmon/error.hpp"
#include "profmon/monitor.hpp"
#include "profmon/regressors.hpp"

namespace profmon {

struct CalibrationConfig {
  double target_arl0 = 200.0;
  int num_runs = 500;
  std::int64_t max_horizon = 0;  // 0 = 20 * target_arl0
  std::uint64_t rng_seed = 0;
  FitConfig fit_config;
  std::size_t workers = 1;

  std::int64_t resolved_max_horizon() const noexcept;
  void validate() const;
};

struct CurvePoint {
  double delta = 0.0;
  double arl0 = 0.0;
};

struct UclResult {
  double ucl = 0.0;
  double estimated_arl0 = 0.0;
  std::vector<CurvePoint> candidate_curve;
  std::size_t censored_runs = 0;
};

class CalibrationFailure : public Error {
 public:
  CalibrationFailure(const std::string& what, std::vector<CurvePoint> curve)
      : Error(ErrorKind::calibration_failed, what), curve_(std::move(curve)) {}
  const std::vector<CurvePoint>& curve() const noexcept { return curve_; }

 private:
  std::vector<CurvePoint> curve_;
};

struct RunLength {
  std::int64_t value = 0;
  bool censored = false;
};

/// Read-only bootstrap context: the pooled historical rows, the running sum
/// of historical-regressor predictions on every pooled row, and the
/// historical residual ECDFs.
class BootstrapPool {
 public:
  BootstrapPool(std::span<const ObservationBatch> historical, std::span<const HistoryEntry> prefitted,
                const FitConfig& fit_config);

  std::size_t m() const noexcept { return m_; }
  std::size_t n() const noexcept { return n_; }
  std::size_t p() const noexcept { return p_; }
  std::size_t rows() const noexcept { return y_.size(); }
  const FitConfig& fit_config() const noexcept { return fit_config_; }

  /// The size-n resample drawn at step t of the run seeded with `seed`.
  ObservationBatch draw(std::uint64_t seed, std::int64_t t) const;
  std::vector<std::size_t> draw_rows(std::uint64_t seed, std::int64_t t) const;
  ObservationBatch gather(std::span<const std::size_t> rows, std::int64_t t) const;

 private:
  friend class BootstrapRun;
  std::size_t m_ = 0;
  std::size_t n_ = 0;
  std::size_t p_ = 0;
  FitConfig fit_config_;
  std::vector<double> x_;  // pooled rows, row-major
  std::vector<double> y_;
  std::vector<double> base_sum_;
  std::vector<double> ecdf_store_;  // m sorted residual vectors, n each
};

/// One resumable bootstrap run-length simulation. The xi trajectory of a run
/// depends only on its seed, so first-passage times for every threshold come
/// from the same trajectory.
class BootstrapRun {
 public:
  BootstrapRun(const BootstrapPool& pool, std::uint64_t seed, std::int64_t max_horizon);

  /// Simulates further steps until some xi >= delta or the horizon is reached.
  void advance_until(double delta);
  RunLength first_passage(double delta) const noexcept;
  std::span<const double> trajectory() const noexcept { return xi_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  void step();
  void absorb_pending();

  const BootstrapPool* pool_;
  std::uint64_t seed_;
  std::int64_t max_horizon_;
  std::vector<double> sum_;
  std::vector<double> ecdfs_;
  std::vector<double> xi_;
  double running_max_ = -1.0;
  ObservationBatch pending_;
  bool has_pending_ = false;
  std::size_t fitted_count_ = 0;
};

RunLength bootstrap_run_length(const BootstrapPool& pool, double delta, std::uint64_t seed,
                               std::int64_t max_horizon);

struct Arl0Estimate {
  double arl0 = 0.0;
  std::size_t censored_runs = 0;
  std::vector<RunLength> run_lengths;
};

/// Mean run length over num_runs bootstrap runs; censored runs count as max_horizon.
Arl0Estimate estimate_arl0(const BootstrapPool& pool, double delta, const CalibrationConfig& config);
double mean_run_length(std::span<const RunLength> runs) noexcept;

/// Ascends an increasing grid and returns the first candidate whose estimate
/// reaches target. `estimate(k)` is called for k = 0, 1, ... in order.
UclResult select_ucl(std::span<const double> grid, double target,
                     const std::function<std::pair<double, std::size_t>(std::size_t)>& estimate);

/// Smallest delta in {k/n} with estimated ARL0 >= target.
UclResult find_ucl(const BootstrapPool& pool, const CalibrationConfig& config);
UclResult find_ucl(std::span<const ObservationBatch> historical, const MonitorState& prefitted,
                   const CalibrationConfig& config);

nlohmann::json to_json(const CalibrationConfig& config);
CalibrationConfig calibration_config_from_json(const nlohmann::json& j,
                                               CalibrationConfig base = CalibrationConfig{});
nlohmann::json to_json(const UclResult& result);

}  // namespace profmon
