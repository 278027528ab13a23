#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "profmon/core.hpp"
#include "profmon/monitor.hpp"

namespace profmon {

enum class InControl { linear, nonlinear };
enum class Forcing { sinusoidal, nondifferentiable, localized };

/// Mass of the localized-change sphere under the uniform predictor law.
inline constexpr double kLocalizedVolume = 0.1;

struct GeneratorSpec {
  InControl in_control = InControl::linear;
  Forcing forcing = Forcing::sinusoidal;
  double lambda = 1.0;
  double amplitude = 0.0;  // sinusoidal C; 0 = 5 for linear, 1 for nonlinear
  double jump = 0.0;       // localized a
  double volume = kLocalizedVolume;
  std::int64_t tau = 0;
  std::size_t n = 512;
  double noise_sd = 1.0;  // 0 turns the noise off (test hook)

  double resolved_amplitude() const noexcept;
  double sphere_radius() const noexcept;
  void validate() const;
};

using Point3 = std::span<const double>;

double eval_in_control(InControl kind, Point3 x);
/// The forcing function g.
double eval_forcing(const GeneratorSpec& spec, Point3 x);
/// lambda * f(x) + (1 - lambda) * g(x).
double eval_phi(const GeneratorSpec& spec, Point3 x);
bool in_sphere(const GeneratorSpec& spec, Point3 x) noexcept;

/// Population-normalized variance of f - phi over S uniform draws.
double mc_snr_estimate(const GeneratorSpec& spec, std::size_t samples, std::uint64_t seed);

struct LambdaSolution {
  double lambda = 0.0;
  double achieved_snr = 0.0;
};

/// Bisection on lambda in [0, 1] against a fixed-seed Monte Carlo SNR.
LambdaSolution solve_lambda_for_snr(InControl in_control, Forcing forcing, double target_snr,
                                    std::size_t samples, std::uint64_t seed);
/// Same search for an arbitrary generator; spec.lambda is ignored.
LambdaSolution solve_lambda_for_snr(const GeneratorSpec& spec, double target_snr, std::size_t samples,
                                    std::uint64_t seed);

/// Jump height a giving target SNR = (1-lambda)^2 a^2 v (1-v).
double localized_a_for_snr(double target_snr, double volume = kLocalizedVolume, double lambda = 0.0);

/// Draws one profile at process time t: y = f(x) + e for t <= tau, else phi(x) + e.
ObservationBatch generate_profile(const GeneratorSpec& spec, std::int64_t t, std::uint64_t seed);

/// m in-control profiles at times -m+1 .. 0.
std::vector<ObservationBatch> generate_historical(const GeneratorSpec& spec, std::size_t m,
                                                  std::uint64_t seed);

enum class RestartPolicy {
  truncate,          // drop the post-historical history after a false alarm
  continue_history,  // keep monitoring on the accumulated history
};

struct TrialRecord {
  std::int64_t run_length = 0;
  std::int64_t false_alarms = 0;
  bool censored = false;
};

struct TrialOptions {
  RestartPolicy restart = RestartPolicy::truncate;
  std::int64_t max_steps = 4000;
};

/// Phase-II trial: in-control profiles up to tau, then out-of-control ones,
/// until the first alarm after tau. `initial` holds the historical prefix.
TrialRecord phase2_trial(const GeneratorSpec& spec, const MonitorState& initial, double delta,
                         std::uint64_t seed, const TrialOptions& options = {});

/// (1/N) sum (T_j - tau).
double compute_arl1(std::span<const TrialRecord> trials, std::int64_t tau);
/// N_FA / (N + N_FA).
double compute_far(std::span<const TrialRecord> trials);
/// Standard error of the per-trial delays T_j - tau (0 for a single trial).
double arl1_stderr(std::span<const TrialRecord> trials, std::int64_t tau);

const char* to_string(InControl kind) noexcept;
const char* to_string(Forcing kind) noexcept;
InControl parse_in_control(std::string_view s);
Forcing parse_forcing(std::string_view s);

}  // namespace profmon
