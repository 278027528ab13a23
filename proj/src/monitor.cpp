#include "profmon/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "profmon/error.hpp"
#include "profmon/rng.hpp"

namespace profmon {

std::uint64_t ks_numerator(std::span<const double> a, std::span<const double> b) noexcept {
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  if (na == 0 || nb == 0) return 0;
  const auto wa = static_cast<std::int64_t>(nb);
  const auto wb = static_cast<std::int64_t>(na);
  std::size_t i = 0;
  std::size_t j = 0;
  std::int64_t best = 0;
  double v = -std::numeric_limits<double>::infinity();
  // The ECDF gap is only inspected once a whole group of tied values has
  // been consumed on both sides (the next value is strictly larger than the
  // last one taken); mid-group states can overshoot.
  while (i < na && j < nb) {
    const double x = a[i];
    const double y = b[j];
    const double next = x < y ? x : y;
    const std::int64_t d = static_cast<std::int64_t>(i) * wa - static_cast<std::int64_t>(j) * wb;
    const std::int64_t ad = d < 0 ? -d : d;
    const std::int64_t seen = ad & -static_cast<std::int64_t>(next > v);
    best = seen > best ? seen : best;
    v = next;
    i += x <= y;
    j += y <= x;
  }
  // One side is exhausted; finish the tie group in progress. Past it the gap
  // only shrinks.
  while (i < na && a[i] == v) ++i;
  while (j < nb && b[j] == v) ++j;
  const std::int64_t d = static_cast<std::int64_t>(i) * wa - static_cast<std::int64_t>(j) * wb;
  best = std::max(best, d < 0 ? -d : d);
  return static_cast<std::uint64_t>(best);
}

double ks_distance(const Ecdf& a, const Ecdf& b) {
  require(a.n() > 0 && b.n() > 0, ErrorKind::invalid_input, "KS distance of an empty ECDF");
  const auto num = ks_numerator(a.sorted_values(), b.sorted_values());
  if (a.n() == b.n()) return static_cast<double>(num / a.n()) / static_cast<double>(a.n());
  return static_cast<double>(num) / (static_cast<double>(a.n()) * static_cast<double>(b.n()));
}

namespace {

template <class Get>
MonitoringStatistic max_ks(const Ecdf& current, std::size_t count, Get get) {
  require(count > 0, ErrorKind::invalid_state, "monitoring statistic needs a non-empty history");
  MonitoringStatistic out;
  for (std::size_t k = 0; k < count; ++k) {
    const double d = ks_distance(current, get(k));
    if (k == 0 || d > out.xi) {
      out.xi = d;
      out.argmax = k;
    }
  }
  return out;
}

}  // namespace

MonitoringStatistic monitoring_statistic(const Ecdf& current,
                                         std::span<const std::shared_ptr<const Ecdf>> history) {
  return max_ks(current, history.size(), [&](std::size_t k) -> const Ecdf& { return *history[k]; });
}

MonitoringStatistic monitoring_statistic(const Ecdf& current, std::span<const Ecdf> history) {
  return max_ks(current, history.size(), [&](std::size_t k) -> const Ecdf& { return history[k]; });
}

std::uint64_t step_fit_seed(std::uint64_t base, std::int64_t t) noexcept {
  return derive_seed(base, {stream::fit, static_cast<std::uint64_t>(t)});
}

// --- MonitorState -----------------------------------------------------------

MonitorState::MonitorState(std::vector<HistoryEntry> historical, double ucl, FitConfig fit_config)
    : history_(std::move(historical)),
      historical_prefix_len_(history_.size()),
      current_t_(1),
      fit_config_(fit_config) {
  require(!history_.empty(), ErrorKind::invalid_state, "monitor needs at least one historical profile");
  for (const auto& e : history_)
    require(e.regressor && e.ecdf, ErrorKind::invalid_state, "incomplete history entry");
  for (const auto& e : history_)
    require(e.regressor->p() == history_.front().regressor->p(), ErrorKind::invalid_input,
            "historical regressors disagree on p");
  set_ucl(ucl);
}

void MonitorState::set_ucl(double ucl) {
  require(std::isfinite(ucl) && ucl > 0.0, ErrorKind::invalid_input, "UCL must be finite and > 0");
  ucl_ = ucl;
}

std::size_t MonitorState::p() const noexcept {
  return history_.empty() ? 0 : history_.front().regressor->p();
}

std::vector<std::shared_ptr<const FittedRegressor>> MonitorState::regressors() const {
  std::vector<std::shared_ptr<const FittedRegressor>> out;
  out.reserve(history_.size());
  for (const auto& e : history_) out.push_back(e.regressor);
  return out;
}

std::vector<std::shared_ptr<const Ecdf>> MonitorState::ecdfs() const {
  std::vector<std::shared_ptr<const Ecdf>> out;
  out.reserve(history_.size());
  for (const auto& e : history_) out.push_back(e.ecdf);
  return out;
}

std::vector<std::shared_ptr<const Ecdf>> historical_ecdfs(
    std::span<const ObservationBatch> historical,
    std::span<const std::shared_ptr<const FittedRegressor>> regressors, HistoricalResiduals mode) {
  require(historical.size() == regressors.size() && !historical.empty(), ErrorKind::invalid_input,
          "historical batches and regressors must pair up");
  const std::size_t m = historical.size();
  std::vector<std::shared_ptr<const Ecdf>> out;
  out.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& batch = historical[j];
    std::vector<double> fitted;
    if (mode == HistoricalResiduals::in_sample || m == 1) {
      fitted = ensemble_mean_predict(regressors.subspan(j, 1), batch);
    } else if (mode == HistoricalResiduals::full_ensemble) {
      fitted = ensemble_mean_predict(regressors, batch);
    } else {
      std::vector<std::shared_ptr<const FittedRegressor>> others;
      others.reserve(m - 1);
      for (std::size_t k = 0; k < m; ++k)
        if (k != j) others.push_back(regressors[k]);
      fitted = ensemble_mean_predict(others, batch);
    }
    ResidualSample r{batch.time_index(), std::vector<double>(batch.n())};
    for (std::size_t i = 0; i < batch.n(); ++i) r.residuals[i] = batch.responses()[i] - fitted[i];
    out.push_back(std::make_shared<const Ecdf>(ecdf_build(r)));
  }
  return out;
}

MonitorState MonitorState::from_historical(std::span<const ObservationBatch> historical,
                                           const FitConfig& fit_config, double ucl,
                                           HistoricalResiduals mode) {
  require(!historical.empty(), ErrorKind::invalid_input, "need at least one historical profile");
  const std::size_t p = historical.front().p();
  const auto m = static_cast<std::int64_t>(historical.size());
  std::vector<ObservationBatch> batches;
  batches.reserve(historical.size());
  std::vector<std::shared_ptr<const FittedRegressor>> regs;
  for (std::int64_t k = 0; k < m; ++k) {
    const auto& src = historical[static_cast<std::size_t>(k)];
    require(src.p() == p, ErrorKind::invalid_input, "historical profiles disagree on p");
    const std::int64_t t = k - m + 1;
    batches.emplace_back(t, p, std::vector<double>(src.predictors().begin(), src.predictors().end()),
                         std::vector<double>(src.responses().begin(), src.responses().end()));
    FitConfig cfg = fit_config;
    cfg.rng_seed = step_fit_seed(fit_config.rng_seed, t);
    regs.push_back(std::make_shared<const FittedRegressor>(fit_regressor(batches.back(), cfg)));
  }
  auto ecdfs = historical_ecdfs(batches, regs, mode);
  std::vector<HistoryEntry> entries;
  for (std::int64_t k = 0; k < m; ++k)
    entries.push_back({k - m + 1, regs[static_cast<std::size_t>(k)], ecdfs[static_cast<std::size_t>(k)]});
  return MonitorState(std::move(entries), ucl, fit_config);
}

StepOutcome MonitorState::step(const ObservationBatch& batch) {
  require(!history_.empty(), ErrorKind::invalid_state, "monitor history is empty");
  require(batch.p() == p(), ErrorKind::invalid_input, "batch predictor dimension does not match history");

  StepOutcome out;
  out.t = current_t_;
  const auto regs = regressors();
  const auto fitted = ensemble_mean_predict(regs, batch);
  out.residuals.time_index = current_t_;
  out.residuals.residuals.resize(batch.n());
  for (std::size_t i = 0; i < batch.n(); ++i)
    out.residuals.residuals[i] = batch.responses()[i] - fitted[i];
  auto ecdf = std::make_shared<const Ecdf>(ecdf_build(out.residuals));

  const auto stat = monitoring_statistic(*ecdf, ecdfs());
  out.xi = stat.xi;
  out.argmax_j = history_[stat.argmax].time_index;
  out.alarmed = out.xi >= ucl_;

  FitConfig cfg = fit_config_;
  cfg.rng_seed = step_fit_seed(fit_config_.rng_seed, current_t_);
  auto reg = std::make_shared<const FittedRegressor>(fit_regressor(batch, cfg));
  history_.push_back({current_t_, std::move(reg), std::move(ecdf)});
  ++current_t_;
  return out;
}

void MonitorState::restart() {
  history_.resize(historical_prefix_len_);
  current_t_ = 1;
}

StepOutcome monitor_step(MonitorState& state, const ObservationBatch& batch) { return state.step(batch); }

void monitor_restart(MonitorState& state) { state.restart(); }

// --- serialization ----------------------------------------------------------

using nlohmann::json;

json MonitorState::to_json() const {
  json hist = json::array();
  for (const auto& e : history_) {
    const auto v = e.ecdf->sorted_values();
    hist.push_back(json{{"time_index", e.time_index},
                        {"regressor", profmon::to_json(*e.regressor)},
                        {"residuals", std::vector<double>(v.begin(), v.end())}});
  }
  return json{{"format", "profmon.monitor_state"},
              {"version", 1},
              {"ucl", ucl_},
              {"current_t", current_t_},
              {"historical_prefix_len", historical_prefix_len_},
              {"fit_config", profmon::to_json(fit_config_)},
              {"history", std::move(hist)}};
}

MonitorState MonitorState::from_json(const json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != "profmon.monitor_state")
      fail(ErrorKind::parse, "not a monitor state document");
    if (j.at("version").get<int>() != 1) fail(ErrorKind::parse, "unsupported monitor state version");
    std::vector<HistoryEntry> entries;
    for (const auto& je : j.at("history")) {
      HistoryEntry e;
      e.time_index = je.at("time_index").get<std::int64_t>();
      e.regressor = std::make_shared<const FittedRegressor>(regressor_from_json(je.at("regressor")));
      e.ecdf = std::make_shared<const Ecdf>(Ecdf::from_sorted(je.at("residuals").get<std::vector<double>>()));
      entries.push_back(std::move(e));
    }
    const auto prefix = j.at("historical_prefix_len").get<std::size_t>();
    const auto current_t = j.at("current_t").get<std::int64_t>();
    if (prefix == 0 || prefix > entries.size())
      fail(ErrorKind::parse, "historical prefix length out of range");
    if (current_t < 1 || static_cast<std::size_t>(current_t - 1) + prefix != entries.size())
      fail(ErrorKind::parse, "history length does not match current_t");
    std::vector<HistoryEntry> tail(entries.begin() + static_cast<std::ptrdiff_t>(prefix), entries.end());
    entries.resize(prefix);
    MonitorState s(std::move(entries), j.at("ucl").get<double>(),
                   fit_config_from_json(j.at("fit_config")));
    for (auto& e : tail) s.history_.push_back(std::move(e));
    s.current_t_ = current_t;
    return s;
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("monitor state: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::parse) throw;
    fail(ErrorKind::parse, std::string("monitor state: ") + e.what());
  }
}

}  // namespace profmon
