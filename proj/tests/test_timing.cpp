#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pipefreeze/timing.hpp"

using namespace pipefreeze;

namespace {

TimingProfile one_node_profile(double w_min, double w_max) {
  TimingProfile profile;
  profile.set_bounds(backward_action(1, 1), {w_min, w_max});
  return profile;
}

}  // namespace

TEST_CASE("sample_execution interpolates between the bounds") {
  const auto profile = one_node_profile(1.0, 2.0);
  Rng rng(1);
  const NoiseSpec exact{0.0};
  CHECK(sample_execution(profile, backward_action(1, 1), 0.0, exact, rng) == 2.0);
  CHECK(sample_execution(profile, backward_action(1, 1), 1.0, exact, rng) == 1.0);
  CHECK(sample_execution(profile, backward_action(1, 1), 0.5, exact, rng) == 1.5);
  CHECK_THROWS_AS(sample_execution(profile, backward_action(1, 1), 1.5, exact, rng),
                  std::domain_error);
}

TEST_CASE("noisy samples stay positive and scatter around the exact value") {
  const auto profile = one_node_profile(1.0, 2.0);
  Rng rng(7);
  const NoiseSpec noise{0.1};
  double sum = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double w = sample_execution(profile, backward_action(1, 1), 0.5, noise, rng);
    CHECK(w > 0.0);
    sum += w;
  }
  // lognormal mean = 1.5 * exp(sigma^2 / 2) ~ 1.5075
  CHECK(sum / 2000.0 == doctest::Approx(1.5075).epsilon(0.02));
}

TEST_CASE("freeze_ratio_of inverts the duration map") {
  const auto profile = one_node_profile(1.0, 2.0);
  CHECK(freeze_ratio_of(profile, backward_action(1, 1), 2.0) == 0.0);
  CHECK(freeze_ratio_of(profile, backward_action(1, 1), 1.0) == 1.0);
  CHECK_THROWS_AS(freeze_ratio_of(profile, backward_action(1, 1), 0.5), std::domain_error);
  CHECK_THROWS_AS(freeze_ratio_of(profile, backward_action(1, 1), 2.5), std::domain_error);
}

TEST_CASE("unfreezable nodes report ratio zero") {
  TimingProfile profile;
  profile.set_bounds(backward_action(1, 1), {3.0, 3.0});
  CHECK(freeze_ratio_of(profile, backward_action(1, 1), 3.0) == 0.0);
}

TEST_CASE("sample then invert round-trips the ratio") {
  const auto profile = one_node_profile(1.0, 2.0);
  Rng rng(3);
  const NoiseSpec exact{0.0};
  for (double r = 0.0; r <= 1.0; r += 0.05) {
    const double w = sample_execution(profile, backward_action(1, 1), r, exact, rng);
    CHECK(freeze_ratio_of(profile, backward_action(1, 1), w) ==
          doctest::Approx(r).epsilon(1e-12));
  }
}

TEST_CASE("aggregation discards the first sample and averages the rest") {
  MonitorLog log;
  const auto node = backward_action(1, 1);
  int step = 1;
  for (double v : {10.0, 8.0, 8.0}) log.record(node, step++, v, FreezeState::None);
  for (double v : {5.0, 4.0, 4.0}) log.record(node, step++, v, FreezeState::Full);
  const auto profile = aggregate_monitoring(log);
  CHECK(profile.bounds(node).w_max == 8.0);
  CHECK(profile.bounds(node).w_min == 4.0);
}

TEST_CASE("single samples are kept as-is") {
  MonitorLog log;
  const auto node = backward_action(1, 1);
  log.record(node, 1, 8.0, FreezeState::None);
  log.record(node, 2, 4.0, FreezeState::Full);
  const auto profile = aggregate_monitoring(log);
  CHECK(profile.bounds(node).w_max == 8.0);
  CHECK(profile.bounds(node).w_min == 4.0);
}

TEST_CASE("forward nodes collapse to a single value") {
  MonitorLog log;
  const auto node = forward_action(1, 1);
  int step = 1;
  for (double v : {3.0, 3.0, 3.0}) log.record(node, step++, v, FreezeState::None);
  const auto profile = aggregate_monitoring(log);
  CHECK(profile.bounds(node).w_min == 3.0);
  CHECK(profile.bounds(node).w_max == 3.0);
}

TEST_CASE("missing buckets raise insufficient-monitoring errors") {
  MonitorLog log;
  log.record(backward_action(1, 1), 1, 8.0, FreezeState::None);
  CHECK_THROWS_AS(aggregate_monitoring(log), numerical_error);
}

TEST_CASE("inverted means clamp to w_min = w_max") {
  MonitorLog log;
  const auto node = backward_action(1, 1);
  log.record(node, 1, 4.0, FreezeState::None);
  log.record(node, 2, 5.0, FreezeState::Full);  // noisier than the upper sample
  const auto profile = aggregate_monitoring(log);
  CHECK(profile.bounds(node).w_min <= profile.bounds(node).w_max);
  CHECK(profile.bounds(node).w_min == 4.0);
}

TEST_CASE("noise-free monitoring reproduces the generating profile") {
  const auto truth = TimingProfile::from_stage_defaults(2, 2, {1.0, 1.0, 1.0});
  MonitorLog log;
  Rng rng(11);
  const NoiseSpec exact{0.0};
  for (int step = 1; step <= 4; ++step)
    for (const auto& [node, bounds] : truth.all()) {
      const bool upper = step <= 2;
      log.record(node, step,
                 sample_execution(truth, node, upper ? 0.0 : 1.0, exact, rng),
                 node.kind == ActionKind::Forward || upper ? FreezeState::None
                                                           : FreezeState::Full);
    }
  const auto estimated = aggregate_monitoring(log);
  for (const auto& [node, bounds] : truth.all()) {
    CHECK(estimated.bounds(node).w_min == doctest::Approx(bounds.w_min).epsilon(1e-12));
    CHECK(estimated.bounds(node).w_max == doctest::Approx(bounds.w_max).epsilon(1e-12));
  }
}

TEST_CASE("stage defaults build the documented bounds") {
  const auto profile = TimingProfile::from_stage_defaults(1, 1, {20.0, 20.0, 25.0});
  CHECK(profile.bounds(forward_action(1, 1)).w_min == 20.0);
  CHECK(profile.bounds(forward_action(1, 1)).w_max == 20.0);
  CHECK(profile.bounds(backward_action(1, 1)).w_min == 20.0);
  CHECK(profile.bounds(backward_action(1, 1)).w_max == 45.0);
  CHECK_FALSE(profile.is_freezable(forward_action(1, 1)));
  CHECK(profile.is_freezable(backward_action(1, 1)));
}

TEST_CASE("forward nodes must have equal bounds") {
  TimingProfile profile;
  CHECK_THROWS_AS(profile.set_bounds(forward_action(1, 1), {1.0, 2.0}), std::domain_error);
  CHECK_THROWS_AS(profile.set_bounds(backward_action(1, 1), {2.0, 1.0}), std::domain_error);
}
