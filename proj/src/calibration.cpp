#include "profmon/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "profmon/parallel.hpp"
#include "profmon/rng.hpp"

namespace profmon {

std::int64_t CalibrationConfig::resolved_max_horizon() const noexcept {
  if (max_horizon > 0) return max_horizon;
  return static_cast<std::int64_t>(std::ceil(20.0 * target_arl0));
}

void CalibrationConfig::validate() const {
  require(std::isfinite(target_arl0) && target_arl0 > 1.0, ErrorKind::invalid_input,
          "target_arl0 must be > 1");
  require(num_runs >= 1, ErrorKind::invalid_input, "num_runs must be >= 1");
  require(static_cast<double>(resolved_max_horizon()) > target_arl0, ErrorKind::invalid_input,
          "max_horizon must exceed target_arl0");
}

// --- BootstrapPool ----------------------------------------------------------

BootstrapPool::BootstrapPool(std::span<const ObservationBatch> historical,
                             std::span<const HistoryEntry> prefitted, const FitConfig& fit_config)
    : m_(historical.size()), fit_config_(fit_config) {
  require(m_ >= 1, ErrorKind::invalid_input, "bootstrap needs at least one historical profile");
  require(prefitted.size() == m_, ErrorKind::invalid_input,
          "need one prefitted regressor/ECDF per historical profile");
  n_ = historical.front().n();
  p_ = historical.front().p();
  for (const auto& b : historical) {
    require(b.n() == n_, ErrorKind::invalid_input, "historical profiles must share n");
    require(b.p() == p_, ErrorKind::invalid_input, "historical profiles must share p");
    x_.insert(x_.end(), b.predictors().begin(), b.predictors().end());
    y_.insert(y_.end(), b.responses().begin(), b.responses().end());
  }
  base_sum_.assign(y_.size(), 0.0);
  for (const auto& e : prefitted) {
    require(e.regressor && e.ecdf, ErrorKind::invalid_input, "incomplete prefitted entry");
    require(e.regressor->p() == p_, ErrorKind::invalid_input, "prefitted regressor has the wrong p");
    require(e.ecdf->n() == n_, ErrorKind::invalid_input, "prefitted ECDF size differs from n");
    e.regressor->accumulate(x_, base_sum_);
    const auto v = e.ecdf->sorted_values();
    ecdf_store_.insert(ecdf_store_.end(), v.begin(), v.end());
  }
}

std::vector<std::size_t> BootstrapPool::draw_rows(std::uint64_t seed, std::int64_t t) const {
  Rng rng(derive_seed(seed, {stream::draw, static_cast<std::uint64_t>(t)}));
  std::uniform_int_distribution<std::size_t> pick(0, rows() - 1);
  std::vector<std::size_t> out(n_);
  for (auto& r : out) r = pick(rng);
  return out;
}

ObservationBatch BootstrapPool::gather(std::span<const std::size_t> rows, std::int64_t t) const {
  std::vector<double> x;
  std::vector<double> y;
  x.reserve(rows.size() * p_);
  y.reserve(rows.size());
  for (auto r : rows) {
    x.insert(x.end(), x_.begin() + static_cast<std::ptrdiff_t>(r * p_),
             x_.begin() + static_cast<std::ptrdiff_t>((r + 1) * p_));
    y.push_back(y_[r]);
  }
  return ObservationBatch(t, p_, std::move(x), std::move(y));
}

ObservationBatch BootstrapPool::draw(std::uint64_t seed, std::int64_t t) const {
  return gather(draw_rows(seed, t), t);
}

// --- BootstrapRun -----------------------------------------------------------

BootstrapRun::BootstrapRun(const BootstrapPool& pool, std::uint64_t seed, std::int64_t max_horizon)
    : pool_(&pool), seed_(seed), max_horizon_(max_horizon), sum_(pool.base_sum_) {
  require(max_horizon_ >= 1, ErrorKind::invalid_input, "max_horizon must be >= 1");
}

void BootstrapRun::absorb_pending() {
  if (!has_pending_) return;
  FitConfig cfg = pool_->fit_config_;
  cfg.rng_seed = step_fit_seed(seed_, pending_.time_index());
  fit_regressor(pending_, cfg).accumulate(pool_->x_, sum_);
  ++fitted_count_;
  has_pending_ = false;
}

void BootstrapRun::step() {
  // The regressor of the previous step is only needed from here on; fitting
  // it lazily saves one fit per run at the final (alarming) step.
  absorb_pending();
  const auto t = static_cast<std::int64_t>(xi_.size()) + 1;
  const std::size_t n = pool_->n_;
  const auto rows = pool_->draw_rows(seed_, t);
  const double count = static_cast<double>(pool_->m_ + fitted_count_);

  std::vector<double> residuals(n);
  for (std::size_t i = 0; i < n; ++i) residuals[i] = pool_->y_[rows[i]] - sum_[rows[i]] / count;
  std::sort(residuals.begin(), residuals.end());

  std::uint64_t best = 0;
  const std::span<const double> cur(residuals);
  for (std::size_t j = 0; j < pool_->m_; ++j)
    best = std::max(best, ks_numerator(cur, std::span<const double>(pool_->ecdf_store_).subspan(j * n, n)));
  const std::size_t own = ecdfs_.size() / n;
  for (std::size_t j = 0; j < own; ++j)
    best = std::max(best, ks_numerator(cur, std::span<const double>(ecdfs_).subspan(j * n, n)));
  const double xi = static_cast<double>(best / n) / static_cast<double>(n);

  ecdfs_.insert(ecdfs_.end(), residuals.begin(), residuals.end());
  xi_.push_back(xi);
  running_max_ = std::max(running_max_, xi);
  pending_ = pool_->gather(rows, t);
  has_pending_ = true;
}

void BootstrapRun::advance_until(double delta) {
  if (delta > 1.0) return;  // KS distances never exceed 1
  while (running_max_ < delta && static_cast<std::int64_t>(xi_.size()) < max_horizon_) step();
}

RunLength BootstrapRun::first_passage(double delta) const noexcept {
  for (std::size_t k = 0; k < xi_.size(); ++k)
    if (xi_[k] >= delta) return {static_cast<std::int64_t>(k) + 1, false};
  return {max_horizon_, true};
}

RunLength bootstrap_run_length(const BootstrapPool& pool, double delta, std::uint64_t seed,
                               std::int64_t max_horizon) {
  require(delta >= 0.0 && std::isfinite(delta), ErrorKind::invalid_input, "delta must be finite and >= 0");
  BootstrapRun run(pool, seed, max_horizon);
  run.advance_until(delta);
  return run.first_passage(delta);
}

double mean_run_length(std::span<const RunLength> runs) noexcept {
  if (runs.empty()) return 0.0;
  std::int64_t total = 0;
  for (const auto& r : runs) total += r.value;
  return static_cast<double>(total) / static_cast<double>(runs.size());
}

namespace {

std::vector<BootstrapRun> make_runs(const BootstrapPool& pool, const CalibrationConfig& config) {
  std::vector<BootstrapRun> runs;
  runs.reserve(static_cast<std::size_t>(config.num_runs));
  for (int r = 0; r < config.num_runs; ++r)
    runs.emplace_back(pool,
                      derive_seed(config.rng_seed, {stream::calibration, static_cast<std::uint64_t>(r)}),
                      config.resolved_max_horizon());
  return runs;
}

Arl0Estimate collect(std::vector<BootstrapRun>& runs, double delta, std::size_t workers) {
  parallel_for(runs.size(), workers, [&](std::size_t r) { runs[r].advance_until(delta); });
  Arl0Estimate out;
  out.run_lengths.reserve(runs.size());
  for (const auto& run : runs) {
    out.run_lengths.push_back(run.first_passage(delta));
    out.censored_runs += out.run_lengths.back().censored ? 1 : 0;
  }
  out.arl0 = mean_run_length(out.run_lengths);
  return out;
}

}  // namespace

Arl0Estimate estimate_arl0(const BootstrapPool& pool, double delta, const CalibrationConfig& config) {
  config.validate();
  require(delta >= 0.0 && std::isfinite(delta), ErrorKind::invalid_input, "delta must be finite and >= 0");
  auto runs = make_runs(pool, config);
  return collect(runs, delta, config.workers);
}

UclResult select_ucl(std::span<const double> grid, double target,
                     const std::function<std::pair<double, std::size_t>(std::size_t)>& estimate) {
  UclResult result;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto [arl0, censored] = estimate(k);
    result.candidate_curve.push_back({grid[k], arl0});
    if (arl0 >= target) {
      result.ucl = grid[k];
      result.estimated_arl0 = arl0;
      result.censored_runs = censored;
      return result;
    }
  }
  throw CalibrationFailure("no control limit on the grid reaches ARL0 " + std::to_string(target),
                           std::move(result.candidate_curve));
}

UclResult find_ucl(const BootstrapPool& pool, const CalibrationConfig& config) {
  config.validate();
  const std::size_t n = pool.n();
  std::vector<double> grid(n);
  for (std::size_t k = 0; k < n; ++k) grid[k] = static_cast<double>(k + 1) / static_cast<double>(n);
  auto runs = make_runs(pool, config);
  return select_ucl(grid, config.target_arl0, [&](std::size_t k) {
    const auto est = collect(runs, grid[k], config.workers);
    return std::make_pair(est.arl0, est.censored_runs);
  });
}

UclResult find_ucl(std::span<const ObservationBatch> historical, const MonitorState& prefitted,
                   const CalibrationConfig& config) {
  const auto prefix = prefitted.history().subspan(0, prefitted.m());
  BootstrapPool pool(historical, prefix, config.fit_config);
  return find_ucl(pool, config);
}

// --- JSON -------------------------------------------------------------------

using nlohmann::json;

json to_json(const CalibrationConfig& c) {
  return json{{"target_arl0", c.target_arl0},
              {"num_runs", c.num_runs},
              {"max_horizon", c.resolved_max_horizon()},
              {"rng_seed", c.rng_seed},
              {"fit_config", to_json(c.fit_config)}};
}

CalibrationConfig calibration_config_from_json(const json& j, CalibrationConfig c) {
  if (!j.is_object()) fail(ErrorKind::parse, "calibration config must be a JSON object");
  try {
    if (j.contains("target_arl0")) c.target_arl0 = j.at("target_arl0").get<double>();
    if (j.contains("num_runs")) c.num_runs = j.at("num_runs").get<int>();
    if (j.contains("max_horizon")) c.max_horizon = j.at("max_horizon").get<std::int64_t>();
    if (j.contains("rng_seed")) c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    if (j.contains("fit_config")) c.fit_config = fit_config_from_json(j.at("fit_config"), c.fit_config);
    if (j.contains("workers")) c.workers = std::max<std::size_t>(1, j.at("workers").get<std::size_t>());
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("calibration config: ") + e.what());
  }
  return c;
}

json to_json(const UclResult& r) {
  json curve = json::array();
  for (const auto& pt : r.candidate_curve) curve.push_back(json::array({pt.delta, pt.arl0}));
  return json{{"ucl", r.ucl},
              {"estimated_arl0", r.estimated_arl0},
              {"curve", std::move(curve)},
              {"censored_runs", r.censored_runs}};
}

}  // namespace profmon
