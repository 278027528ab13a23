#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "profmon/core.hpp"
#include "profmon/regressors.hpp"

namespace profmon {

/// sup_z |F_a(z) - F_b(z)|, evaluated exactly at the pooled jump points.
double ks_distance(const Ecdf& a, const Ecdf& b);
/// Same statistic on raw sorted arrays; returns the integer numerator
/// max |i*nb - j*na| so callers can stay on the exact 1/(na*nb) grid.
std::uint64_t ks_numerator(std::span<const double> a, std::span<const double> b) noexcept;

struct MonitoringStatistic {
  double xi = 0.0;
  std::size_t argmax = 0;  // smallest position attaining the max
};

MonitoringStatistic monitoring_statistic(const Ecdf& current,
                                         std::span<const std::shared_ptr<const Ecdf>> history);
MonitoringStatistic monitoring_statistic(const Ecdf& current, std::span<const Ecdf> history);

struct StepOutcome {
  std::int64_t t = 0;
  double xi = 0.0;
  bool alarmed = false;
  ResidualSample residuals;
  std::int64_t argmax_j = 0;  // time index of the history entry attaining xi
};

struct HistoryEntry {
  std::int64_t time_index = 0;
  std::shared_ptr<const FittedRegressor> regressor;
  std::shared_ptr<const Ecdf> ecdf;
};

/// How the historical residual ECDFs are formed when a state is built from
/// raw in-control profiles.
enum class HistoricalResiduals {
  leave_one_out,  // ensemble of the other m-1 historical regressors
  in_sample,      // each profile's own regressor
  full_ensemble,  // mean of all m historical regressors
};

/// Sequential Phase-II state: the regressor/ECDF history and the UCL.
class MonitorState {
 public:
  MonitorState() = default;
  MonitorState(std::vector<HistoryEntry> historical, double ucl, FitConfig fit_config);

  /// Fits the m historical regressors and their residual ECDFs. Batches are
  /// assigned time indices -m+1 .. 0 in the given order.
  static MonitorState from_historical(std::span<const ObservationBatch> historical,
                                      const FitConfig& fit_config, double ucl,
                                      HistoricalResiduals mode = HistoricalResiduals::leave_one_out);

  std::size_t m() const noexcept { return historical_prefix_len_; }
  std::size_t p() const noexcept;
  std::int64_t current_t() const noexcept { return current_t_; }
  double ucl() const noexcept { return ucl_; }
  void set_ucl(double ucl);
  const FitConfig& fit_config() const noexcept { return fit_config_; }
  std::span<const HistoryEntry> history() const noexcept { return history_; }

  std::vector<std::shared_ptr<const FittedRegressor>> regressors() const;
  std::vector<std::shared_ptr<const Ecdf>> ecdfs() const;

  /// One monitoring step for the batch observed at current_t().
  StepOutcome step(const ObservationBatch& batch);
  /// Drops everything after the historical prefix and resets the clock to 1.
  void restart();

  nlohmann::json to_json() const;
  static MonitorState from_json(const nlohmann::json& j);

 private:
  std::vector<HistoryEntry> history_;
  std::size_t historical_prefix_len_ = 0;
  std::int64_t current_t_ = 1;
  double ucl_ = 1.0;
  FitConfig fit_config_;
};

/// Seed used for the regressor fitted at time t (forests only consume it).
std::uint64_t step_fit_seed(std::uint64_t base, std::int64_t t) noexcept;

StepOutcome monitor_step(MonitorState& state, const ObservationBatch& batch);
void monitor_restart(MonitorState& state);

/// Builds the residual ECDFs of historical profiles.
std::vector<std::shared_ptr<const Ecdf>> historical_ecdfs(
    std::span<const ObservationBatch> historical,
    std::span<const std::shared_ptr<const FittedRegressor>> regressors, HistoricalResiduals mode);

}  // namespace profmon
