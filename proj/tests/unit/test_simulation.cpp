#include <doctest.h>

#include <cmath>
#include <numbers>

#include "profmon/calibration.hpp"
#include "profmon/rng.hpp"
#include "profmon/simulation.hpp"

using namespace profmon;

namespace {

GeneratorSpec spec_of(InControl ic, Forcing fc, double lambda = 1.0) {
  GeneratorSpec s;
  s.in_control = ic;
  s.forcing = fc;
  s.lambda = lambda;
  return s;
}

std::vector<TrialRecord> runs(std::initializer_list<std::int64_t> t, std::initializer_list<std::int64_t> fa = {}) {
  std::vector<TrialRecord> out;
  for (auto v : t) out.push_back({v, 0, false});
  std::size_t k = 0;
  for (auto v : fa) out[k++].false_alarms = v;
  return out;
}

}  // namespace

TEST_CASE("in-control functions") {
  using P = std::array<double, 3>;
  CHECK(eval_in_control(InControl::linear, P{0, 0, 0}) == 1.0);
  CHECK(eval_in_control(InControl::linear, P{1, 1, 1}) == 7.0);
  CHECK(eval_in_control(InControl::nonlinear, P{1, 1, 1}) == doctest::Approx(16.0));
  CHECK(eval_in_control(InControl::linear, P{0.5, 0.25, 0.125}) == 1 + 1.5 + 0.5 + 0.125);
}

TEST_CASE("forcing functions") {
  using P = std::array<double, 3>;
  auto sin5 = spec_of(InControl::linear, Forcing::sinusoidal);
  CHECK(sin5.resolved_amplitude() == 5.0);
  CHECK(eval_forcing(sin5, P{0.5, 0.5, 0.3}) == doctest::Approx(5.0));
  CHECK(spec_of(InControl::nonlinear, Forcing::sinusoidal).resolved_amplitude() == 1.0);

  auto nd = spec_of(InControl::linear, Forcing::nondifferentiable);
  CHECK(eval_forcing(nd, P{0.5, 0.7, 0.9}) == 0.0);
  CHECK(eval_forcing(nd, P{1.0, 0.0, 0.9}) == 12.5);
  CHECK(eval_forcing(nd, P{1.0, 0.0, 0.4}) == 0.0);

  auto loc = spec_of(InControl::linear, Forcing::localized);
  loc.jump = 5.7735;
  CHECK(loc.sphere_radius() == doctest::Approx(std::cbrt(0.3 / (4 * std::numbers::pi))));
  CHECK(loc.sphere_radius() == doctest::Approx(0.28794).epsilon(1e-4));
  const P c{0.5, 0.5, 0.5}, o{0, 0, 0};
  CHECK(eval_forcing(loc, c) == eval_in_control(InControl::linear, c) + 5.7735);
  CHECK(eval_forcing(loc, o) == eval_in_control(InControl::linear, o));
}

TEST_CASE("mixture phi") {
  using P = std::array<double, 3>;
  auto s = spec_of(InControl::linear, Forcing::sinusoidal, 0.5);
  Rng rng(3);
  std::uniform_real_distribution<double> u;
  for (int k = 0; k < 100; ++k) {
    P x{u(rng), u(rng), u(rng)};
    s.lambda = 1.0;
    CHECK(eval_phi(s, x) == eval_in_control(s.in_control, x));
    s.lambda = 0.0;
    CHECK(eval_phi(s, x) == eval_forcing(s, x));
    s.lambda = 0.5;
    CHECK(eval_phi(s, x) == doctest::Approx(0.5 * eval_in_control(s.in_control, x) + 0.5 * eval_forcing(s, x)));
  }
}

TEST_CASE("snr estimates") {
  auto s = spec_of(InControl::linear, Forcing::sinusoidal, 1.0);
  CHECK(mc_snr_estimate(s, 1000, 1) == 0.0);

  s.lambda = 0.4568;
  CHECK(mc_snr_estimate(s, 1'000'000, 2) == doctest::Approx(3.0).epsilon(0.05 / 3.0));

  // the estimate depends on f - phi only, not on f itself
  auto loc = spec_of(InControl::linear, Forcing::localized, 0.3);
  loc.jump = 2.0;
  auto other = loc;
  other.in_control = InControl::nonlinear;
  CHECK(mc_snr_estimate(loc, 50'000, 9) == doctest::Approx(mc_snr_estimate(other, 50'000, 9)));
  CHECK_THROWS_AS(mc_snr_estimate(s, 1, 1), Error);
}

TEST_CASE("lambda solver matches the reference weights") {
  struct Row {
    InControl ic;
    Forcing fc;
    double lambda[3];
  };
  const Row rows[] = {{InControl::linear, Forcing::sinusoidal, {0.4568, 0.2986, 0.1699}},
                      {InControl::linear, Forcing::nondifferentiable, {0.3945, 0.2184, 0.0752}},
                      {InControl::nonlinear, Forcing::sinusoidal, {0.4615, 0.3048, 0.1775}},
                      {InControl::nonlinear, Forcing::nondifferentiable, {0.5465, 0.4146, 0.3074}}};
  const double targets[] = {3.0, 5.0, 7.0};
  for (const auto& r : rows)
    for (int k = 0; k < 3; ++k) {
      auto sol = solve_lambda_for_snr(r.ic, r.fc, targets[k], 100'000, 42);
      CHECK(sol.lambda == doctest::Approx(r.lambda[k]).epsilon(0.02 / r.lambda[k]));
      CHECK(sol.achieved_snr == doctest::Approx(targets[k]).epsilon(1e-6));
    }

  CHECK_THROWS_AS(solve_lambda_for_snr(InControl::linear, Forcing::localized, 3.0, 1000, 1), Error);
  try {
    solve_lambda_for_snr(InControl::linear, Forcing::sinusoidal, 1e6, 10'000, 1);
    FAIL("expected no_solution");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::no_solution);
  }
  // g identical to f: the SNR is zero for every lambda
  auto degenerate = spec_of(InControl::linear, Forcing::localized);
  degenerate.jump = 0.0;
  CHECK_THROWS_AS(solve_lambda_for_snr(degenerate, 1.0, 10'000, 1), Error);
}

TEST_CASE("localized jump height") {
  CHECK(localized_a_for_snr(3.0) == doctest::Approx(5.7735).epsilon(1e-5));
  CHECK(localized_a_for_snr(5.0) == doctest::Approx(7.4535).epsilon(1e-5));
  CHECK(localized_a_for_snr(7.0) == doctest::Approx(8.8191).epsilon(1e-5));
  CHECK(localized_a_for_snr(0.0) == 0.0);
  CHECK(localized_a_for_snr(3.0) == doctest::Approx(10.0 / 3.0 * std::sqrt(3.0)));
  CHECK_THROWS_AS(localized_a_for_snr(3.0, 0.1, 1.0), Error);
  CHECK_THROWS_AS(localized_a_for_snr(3.0, 0.0, 0.0), Error);

  // Monte Carlo agrees with the closed form
  for (double lambda : {0.0, 0.4}) {
    auto s = spec_of(InControl::nonlinear, Forcing::localized, lambda);
    s.jump = localized_a_for_snr(3.0, s.volume, lambda);
    CHECK(mc_snr_estimate(s, 1'000'000, 5) == doctest::Approx(3.0).epsilon(0.02));
  }
}

TEST_CASE("sphere mass matches its volume") {
  auto s = spec_of(InControl::linear, Forcing::localized);
  Rng rng(77);
  std::uniform_real_distribution<double> u;
  const int S = 1'000'000;
  int inside = 0;
  for (int k = 0; k < S; ++k) {
    std::array<double, 3> x{u(rng), u(rng), u(rng)};
    inside += in_sphere(s, x) ? 1 : 0;
  }
  const double v = s.volume, sigma = std::sqrt(v * (1 - v) / S);
  CHECK(std::abs(inside / double(S) - v) < 3 * sigma);
}

TEST_CASE("profile generation") {
  auto s = spec_of(InControl::nonlinear, Forcing::sinusoidal, 0.3);
  s.tau = 2;
  s.n = 50;
  s.noise_sd = 0.0;
  auto in = generate_profile(s, 2, 11);
  for (std::size_t i = 0; i < in.n(); ++i) CHECK(in.responses()[i] == eval_in_control(s.in_control, in.row(i)));
  auto out = generate_profile(s, 3, 11);
  for (std::size_t i = 0; i < out.n(); ++i) CHECK(out.responses()[i] == eval_phi(s, out.row(i)));

  s.lambda = 1.0;
  auto a = generate_profile(s, 3, 12);
  s.tau = 10;
  auto b = generate_profile(s, 3, 12);
  CHECK(std::ranges::equal(a.responses(), b.responses()));

  s.noise_sd = 1.0;
  auto c = generate_profile(s, 1, 13), d = generate_profile(s, 1, 13);
  CHECK(std::ranges::equal(c.responses(), d.responses()));
  CHECK(std::ranges::equal(c.predictors(), d.predictors()));
  for (double x : c.predictors()) CHECK((x >= 0.0 && x < 1.0));

  auto h = generate_historical(s, 4, 1);
  REQUIRE(h.size() == 4);
  CHECK(h[0].time_index() == -3);
  CHECK(h[3].time_index() == 0);
}

TEST_CASE("toy fixtures") {
  const std::int64_t tau = 30;
  auto r = runs({tau + 1, tau + 1, tau + 1, tau + 1, tau + 2}, {0, 1, 0, 1, 0});
  CHECK(compute_arl1(r, tau) == 1.2);
  CHECK(compute_far(r) == 2.0 / 7.0);
  CHECK(compute_far(runs({5, 5, 5, 5, 5})) == 0.0);
  CHECK(compute_arl1(runs({tau + 1}), tau) == 1.0);
  CHECK(compute_arl1(runs({tau + 5}), tau) == 5.0);
  CHECK(compute_far(runs({4}, {1})) == 0.5);
  CHECK(arl1_stderr(runs({1, 3}), 0) == doctest::Approx(1.0));
  std::vector<TrialRecord> none;
  CHECK_THROWS_AS(compute_arl1(none, 0), Error);
  CHECK_THROWS_AS(compute_far(none), Error);
  CHECK_THROWS_AS(compute_arl1(runs({3}), 3), Error);
}

TEST_CASE("enum names") {
  CHECK(parse_in_control("nonlinear") == InControl::nonlinear);
  CHECK(parse_forcing("localized") == Forcing::localized);
  CHECK(std::string(to_string(Forcing::nondifferentiable)) == "nondifferentiable");
  CHECK_THROWS_AS(parse_forcing("cubic"), Error);
}

TEST_CASE("phase 2 trials") {
  auto s = spec_of(InControl::nonlinear, Forcing::sinusoidal);
  s.lambda = solve_lambda_for_snr(s.in_control, s.forcing, 3.0, 100'000, 1).lambda;
  auto hist = generate_historical(s, 10, 3);
  auto state = MonitorState::from_historical(hist, FitConfig::tree_defaults(), 1.0);

  SUBCASE("sinusoidal change at tau = 0 is caught at once") {
    int immediate = 0;
    for (std::uint64_t k = 0; k < 20; ++k) {
      auto rec = phase2_trial(s, state, 70.0 / 512.0, derive_seed(5, {k}));
      CHECK(rec.false_alarms == 0);
      immediate += rec.run_length == 1 ? 1 : 0;
    }
    CHECK(immediate >= 18);
  }
  SUBCASE("a limit above one never fires") {
    TrialOptions opt;
    opt.max_steps = 15;
    s.tau = 5;
    auto rec = phase2_trial(s, state, 1.5, 3, opt);
    CHECK(rec.censored);
    CHECK(rec.run_length == 15);
    CHECK(rec.false_alarms == 0);
  }
  SUBCASE("same seed, same record; the initial state is not modified") {
    s.tau = 3;
    const auto before = state.to_json().dump();
    auto a = phase2_trial(s, state, 0.12, 8);
    auto b = phase2_trial(s, state, 0.12, 8);
    CHECK(a.run_length == b.run_length);
    CHECK(a.false_alarms == b.false_alarms);
    CHECK(state.to_json().dump() == before);
  }
  SUBCASE("false alarms restart the monitor but not the clock") {
    s.tau = 6;
    TrialOptions opt;
    for (auto policy : {RestartPolicy::truncate, RestartPolicy::continue_history}) {
      opt.restart = policy;
      // a tiny limit alarms at every step, so every in-control step is a false alarm
      auto rec = phase2_trial(s, state, 1.0 / 512.0, 4, opt);
      CHECK(rec.false_alarms == 6);
      CHECK(rec.run_length == 7);
    }
  }
}

TEST_CASE("false alarms before tau at a calibrated limit") {
  // xi is a max over a growing history, so the alarm hazard is far from
  // constant and 30/ARL0 overstates early alarms. The bootstrap null's own
  // P(T <= 30) at the calibrated limit is the reference instead.
  auto s = spec_of(InControl::linear, Forcing::sinusoidal, 1.0);
  s.tau = 30;
  auto hist = generate_historical(s, 20, 21);
  auto state = MonitorState::from_historical(hist, FitConfig::tree_defaults(), 1.0);
  CalibrationConfig cfg;
  cfg.num_runs = 100;
  cfg.rng_seed = 5;
  cfg.fit_config = FitConfig::tree_defaults();
  const double ucl = find_ucl(hist, state, cfg).ucl;

  BootstrapPool pool(hist, state.history(), cfg.fit_config);
  const int boot_runs = 300;
  int early = 0;
  for (int r = 0; r < boot_runs; ++r) {
    auto rl = bootstrap_run_length(pool, ucl, derive_seed(31, {std::uint64_t(r)}), 31);
    early += (!rl.censored && rl.value <= 30) ? 1 : 0;
  }
  const double p_boot = double(early) / boot_runs;

  TrialOptions opt;
  opt.max_steps = 31;  // only the in-control stretch matters here
  double fa = 0.0;
  const int trials = 200;
  for (int k = 0; k < trials; ++k)
    fa += static_cast<double>(phase2_trial(s, state, ucl, derive_seed(77, {std::uint64_t(k)}), opt).false_alarms);
  const double mean = fa / trials;
  MESSAGE("ucl " << ucl << " false alarms per trial " << mean << ", bootstrap P(T<=30) " << p_boot);
  CHECK(mean <= 0.30);
  CHECK(p_boot <= 0.30);
  const double se = std::sqrt(p_boot * (1 - p_boot) / boot_runs + std::max(mean, 0.01) / trials);
  CHECK(std::abs(mean - p_boot) <= 3.5 * se);
}

TEST_CASE("localized detection speeds up with the signal") {
  // seeded aggregate; one-sided check allowing two standard errors
  auto s = spec_of(InControl::linear, Forcing::localized, 0.0);
  s.n = 512;
  auto hist = generate_historical(s, 8, 40);
  auto state = MonitorState::from_historical(hist, FitConfig::tree_defaults(), 1.0);
  TrialOptions opt;
  opt.max_steps = 300;
  std::vector<double> mean, se;
  for (double snr : {3.0, 5.0, 7.0}) {
    s.jump = localized_a_for_snr(snr, s.volume, 0.0);
    std::vector<TrialRecord> recs;
    for (std::uint64_t k = 0; k < 20; ++k) recs.push_back(phase2_trial(s, state, 75.0 / 512.0, derive_seed(9, {k}), opt));
    mean.push_back(compute_arl1(recs, 0));
    se.push_back(arl1_stderr(recs, 0));
  }
  MESSAGE("ARL1 by SNR: " << mean[0] << " " << mean[1] << " " << mean[2]);
  CHECK(mean[1] <= mean[0] + 2 * std::hypot(se[0], se[1]));
  CHECK(mean[2] <= mean[1] + 2 * std::hypot(se[1], se[2]));
}
