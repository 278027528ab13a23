#include "profmon/simulation.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "profmon/error.hpp"
#include "profmon/rng.hpp"

namespace profmon {

double GeneratorSpec::resolved_amplitude() const noexcept {
  if (amplitude != 0.0) return amplitude;
  return in_control == InControl::linear ? 5.0 : 1.0;
}

double GeneratorSpec::sphere_radius() const noexcept {
  return std::cbrt(3.0 * volume / (4.0 * std::numbers::pi));
}

void GeneratorSpec::validate() const {
  require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::invalid_input, "lambda must lie in [0, 1]");
  require(tau >= 0, ErrorKind::invalid_input, "tau must be >= 0");
  require(n >= 1, ErrorKind::invalid_input, "n must be >= 1");
  require(noise_sd >= 0.0 && std::isfinite(noise_sd), ErrorKind::invalid_input, "noise_sd must be >= 0");
  if (forcing == Forcing::localized) {
    require(volume > 0.0 && volume < 1.0, ErrorKind::invalid_input, "sphere volume must lie in (0, 1)");
    require(sphere_radius() < 0.5, ErrorKind::invalid_input, "sphere does not fit inside the unit cube");
    require(std::isfinite(jump), ErrorKind::invalid_input, "jump must be finite");
  }
}

double eval_in_control(InControl kind, Point3 x) {
  require(x.size() == 3, ErrorKind::invalid_input, "generator functions take 3 predictors");
  const double s = 3.0 * x[0] + 2.0 * x[1] + x[2];
  if (kind == InControl::linear) return 1.0 + s;
  return (4.0 / 9.0) * s * s;
}

bool in_sphere(const GeneratorSpec& spec, Point3 x) noexcept {
  const double r = spec.sphere_radius();
  const double d0 = x[0] - 0.5;
  const double d1 = x[1] - 0.5;
  const double d2 = x[2] - 0.5;
  return d0 * d0 + d1 * d1 + d2 * d2 <= r * r;
}

double eval_forcing(const GeneratorSpec& spec, Point3 x) {
  require(x.size() == 3, ErrorKind::invalid_input, "generator functions take 3 predictors");
  switch (spec.forcing) {
    case Forcing::sinusoidal:
      return spec.resolved_amplitude() * std::sin(2.0 * std::numbers::pi * x[0] * x[1]);
    case Forcing::nondifferentiable:
      return x[2] > 0.5 ? 25.0 * std::abs(x[0] - 0.5) * std::exp(-x[1]) : 0.0;
    case Forcing::localized:
      return eval_in_control(spec.in_control, x) + (in_sphere(spec, x) ? spec.jump : 0.0);
  }
  return 0.0;
}

double eval_phi(const GeneratorSpec& spec, Point3 x) {
  return spec.lambda * eval_in_control(spec.in_control, x) +
         (1.0 - spec.lambda) * eval_forcing(spec, x);
}

namespace {

// Draws S uniform points once and keeps f - g; f - phi = (1 - lambda)(f - g).
std::vector<double> signal_differences(const GeneratorSpec& spec, std::size_t samples, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> diff(samples);
  std::array<double, 3> x{};
  for (auto& d : diff) {
    for (auto& v : x) v = unif(rng);
    d = eval_in_control(spec.in_control, x) - eval_forcing(spec, x);
  }
  return diff;
}

double population_variance(std::span<const double> v) {
  double mean = 0.0;
  for (double d : v) mean += d;
  mean /= static_cast<double>(v.size());
  double acc = 0.0;
  for (double d : v) acc += (d - mean) * (d - mean);
  return acc / static_cast<double>(v.size());
}

}  // namespace

double mc_snr_estimate(const GeneratorSpec& spec, std::size_t samples, std::uint64_t seed) {
  require(samples >= 2, ErrorKind::invalid_input, "SNR estimate needs at least two samples");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> diff(samples);
  std::array<double, 3> x{};
  for (auto& d : diff) {
    for (auto& v : x) v = unif(rng);
    d = eval_in_control(spec.in_control, x) - eval_phi(spec, x);
  }
  return population_variance(diff);
}

LambdaSolution solve_lambda_for_snr(InControl in_control, Forcing forcing, double target_snr,
                                    std::size_t samples, std::uint64_t seed) {
  require(forcing != Forcing::localized, ErrorKind::invalid_input,
          "the localized forcing is sized through its jump height, not lambda");
  GeneratorSpec spec;
  spec.in_control = in_control;
  spec.forcing = forcing;
  return solve_lambda_for_snr(spec, target_snr, samples, seed);
}

LambdaSolution solve_lambda_for_snr(const GeneratorSpec& spec, double target_snr, std::size_t samples,
                                    std::uint64_t seed) {
  require(target_snr > 0.0 && std::isfinite(target_snr), ErrorKind::invalid_input, "target SNR must be > 0");
  require(samples >= 2, ErrorKind::invalid_input, "SNR estimate needs at least two samples");
  const auto diff = signal_differences(spec, samples, seed);
  std::vector<double> scaled(diff.size());
  auto snr_at = [&](double lambda) {
    const double w = 1.0 - lambda;
    for (std::size_t i = 0; i < diff.size(); ++i) scaled[i] = w * diff[i];
    return population_variance(scaled);
  };
  const double at_zero = snr_at(0.0);
  if (!(at_zero >= target_snr))
    fail(ErrorKind::no_solution, "SNR " + std::to_string(target_snr) +
                                     " is out of reach: the forcing alone gives " + std::to_string(at_zero));
  // SNR(lambda) decreases monotonically from SNR(0) to 0 at lambda = 1.
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (snr_at(mid) >= target_snr) lo = mid;
    else hi = mid;
  }
  const double snr_lo = snr_at(lo);
  const double snr_hi = snr_at(hi);
  const double lambda = std::abs(snr_lo - target_snr) <= std::abs(snr_hi - target_snr) ? lo : hi;
  return {lambda, snr_at(lambda)};
}

double localized_a_for_snr(double target_snr, double volume, double lambda) {
  require(target_snr >= 0.0 && std::isfinite(target_snr), ErrorKind::invalid_input, "target SNR must be >= 0");
  require(volume > 0.0 && volume < 1.0, ErrorKind::invalid_input, "volume must lie in (0, 1)");
  require(lambda >= 0.0 && lambda < 1.0, ErrorKind::invalid_input,
          "lambda must lie in [0, 1): at lambda = 1 the jump has no effect");
  const double w = 1.0 - lambda;
  return std::sqrt(target_snr / (w * w * volume * (1.0 - volume)));
}

ObservationBatch generate_profile(const GeneratorSpec& spec, std::int64_t t, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const bool in_control = t <= spec.tau;
  std::vector<double> x(spec.n * 3);
  std::vector<double> y(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    std::span<double> row(x.data() + 3 * i, 3);
    for (auto& v : row) v = unif(rng);
    const double mean = in_control ? eval_in_control(spec.in_control, row) : eval_phi(spec, row);
    const double e = noise(rng);
    y[i] = mean + spec.noise_sd * e;
  }
  return ObservationBatch(t, 3, std::move(x), std::move(y));
}

std::vector<ObservationBatch> generate_historical(const GeneratorSpec& spec, std::size_t m,
                                                  std::uint64_t seed) {
  require(m >= 1, ErrorKind::invalid_input, "need at least one historical profile");
  GeneratorSpec in = spec;
  in.tau = 0;
  std::vector<ObservationBatch> out;
  out.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    const auto t = static_cast<std::int64_t>(k) - static_cast<std::int64_t>(m) + 1;
    out.push_back(generate_profile(in, t, derive_seed(seed, {stream::historical, static_cast<std::uint64_t>(t)})));
  }
  return out;
}

TrialRecord phase2_trial(const GeneratorSpec& spec, const MonitorState& initial, double delta,
                         std::uint64_t seed, const TrialOptions& options) {
  spec.validate();
  require(options.max_steps > spec.tau, ErrorKind::invalid_input, "max_steps must exceed tau");
  MonitorState state = initial;
  state.restart();
  state.set_ucl(delta);
  TrialRecord rec;
  for (std::int64_t t = 1;; ++t) {
    const auto batch = generate_profile(spec, t, derive_seed(seed, {stream::draw, static_cast<std::uint64_t>(t)}));
    const auto out = state.step(batch);
    if (out.alarmed) {
      if (t > spec.tau) {
        rec.run_length = t;
        return rec;
      }
      ++rec.false_alarms;
      if (options.restart == RestartPolicy::truncate) state.restart();
    }
    if (t >= options.max_steps) {
      rec.run_length = t;
      rec.censored = true;
      return rec;
    }
  }
}

double compute_arl1(std::span<const TrialRecord> trials, std::int64_t tau) {
  require(!trials.empty(), ErrorKind::invalid_input, "ARL1 of an empty trial set");
  std::int64_t total = 0;
  for (const auto& tr : trials) {
    require(tr.run_length > tau, ErrorKind::invalid_input, "run length must exceed tau");
    total += tr.run_length - tau;
  }
  return static_cast<double>(total) / static_cast<double>(trials.size());
}

double compute_far(std::span<const TrialRecord> trials) {
  require(!trials.empty(), ErrorKind::invalid_input, "FAR of an empty trial set");
  std::int64_t fa = 0;
  for (const auto& tr : trials) fa += tr.false_alarms;
  return static_cast<double>(fa) / static_cast<double>(static_cast<std::int64_t>(trials.size()) + fa);
}

double arl1_stderr(std::span<const TrialRecord> trials, std::int64_t tau) {
  const double mean = compute_arl1(trials, tau);
  if (trials.size() < 2) return 0.0;
  double acc = 0.0;
  for (const auto& tr : trials) {
    const double d = static_cast<double>(tr.run_length - tau) - mean;
    acc += d * d;
  }
  const double n = static_cast<double>(trials.size());
  return std::sqrt(acc / (n - 1.0) / n);
}

const char* to_string(InControl kind) noexcept {
  return kind == InControl::linear ? "linear" : "nonlinear";
}

const char* to_string(Forcing kind) noexcept {
  switch (kind) {
    case Forcing::sinusoidal: return "sinusoidal";
    case Forcing::nondifferentiable: return "nondifferentiable";
    case Forcing::localized: return "localized";
  }
  return "unknown";
}

InControl parse_in_control(std::string_view s) {
  if (s == "linear") return InControl::linear;
  if (s == "nonlinear") return InControl::nonlinear;
  fail(ErrorKind::parse, "in_control must be 'linear' or 'nonlinear', got '" + std::string(s) + "'");
}

Forcing parse_forcing(std::string_view s) {
  if (s == "sinusoidal") return Forcing::sinusoidal;
  if (s == "nondifferentiable") return Forcing::nondifferentiable;
  if (s == "localized") return Forcing::localized;
  fail(ErrorKind::parse, "forcing must be sinusoidal, nondifferentiable or localized, got '" +
                             std::string(s) + "'");
}

}  // namespace profmon
