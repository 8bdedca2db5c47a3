#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "pipefreeze/freezectl.hpp"

using namespace pipefreeze;

namespace {

PhasePlan llama8b_plan() { return {160, 200, 250, 400}; }

}  // namespace

TEST_CASE("phase boundaries from the shipped 8b-style plan") {
  const auto plan = llama8b_plan();
  CHECK(plan.t_mid() == 180);
  CHECK(phase_of(100, plan) == Phase::Warmup);
  CHECK(phase_of(160, plan) == Phase::Warmup);
  CHECK(phase_of(161, plan) == Phase::MonitorUpper);
  CHECK(phase_of(180, plan) == Phase::MonitorUpper);
  CHECK(phase_of(181, plan) == Phase::MonitorLower);
  CHECK(phase_of(195, plan) == Phase::MonitorLower);
  CHECK(phase_of(199, plan) == Phase::MonitorLower);
  CHECK(phase_of(200, plan) == Phase::Solve);
  CHECK(phase_of(201, plan) == Phase::ProgressiveFreeze);
  CHECK(phase_of(250, plan) == Phase::ProgressiveFreeze);
  CHECK(phase_of(251, plan) == Phase::StableFreeze);
  CHECK(phase_of(300, plan) == Phase::StableFreeze);
  CHECK_THROWS_AS(phase_of(0, plan), std::domain_error);
  CHECK_THROWS_AS(phase_of(401, plan), std::domain_error);
}

TEST_CASE("phases partition the horizon contiguously and in order") {
  for (const PhasePlan plan : {PhasePlan{160, 200, 250, 400}, PhasePlan{1, 2, 2, 5},
                               PhasePlan{2, 4, 9, 12}, PhasePlan{3, 10, 10, 10}}) {
    validate_phase_plan(plan);
    Phase previous = Phase::Warmup;
    int transitions = 0;
    for (int t = 1; t <= plan.t_total; ++t) {
      const Phase current = phase_of(t, plan);
      if (current != previous) {
        ++transitions;
        CHECK(static_cast<int>(current) > static_cast<int>(previous));
        previous = current;
      }
    }
    CHECK(transitions <= 5);
  }
}

TEST_CASE("phase plan validation") {
  CHECK_THROWS_AS(validate_phase_plan({0, 2, 3, 4}), config_error);
  CHECK_THROWS_AS(validate_phase_plan({2, 2, 3, 4}), config_error);
  CHECK_THROWS_AS(validate_phase_plan({1, 3, 2, 4}), config_error);
  CHECK_THROWS_AS(validate_phase_plan({1, 2, 5, 4}), config_error);
}

TEST_CASE("ramped freeze ratio") {
  const auto plan = llama8b_plan();
  CHECK(actual_freeze_ratio(225, plan, 0.8) == 0.4);
  CHECK(actual_freeze_ratio(250, plan, 0.8) == 0.8);
  CHECK(actual_freeze_ratio(400, plan, 0.8) == 0.8);
  const PhasePlan degenerate{100, 200, 200, 300};
  CHECK(actual_freeze_ratio(201, degenerate, 0.8) == 0.8);
}

TEST_CASE("afr never decreases over the ramp and never exceeds r") {
  const auto plan = llama8b_plan();
  double previous = 0.0;
  for (int t = plan.t_monitor + 1; t <= plan.t_total; ++t) {
    const double value = actual_freeze_ratio(t, plan, 0.65);
    CHECK(value >= previous);
    CHECK(value <= 0.65);
    previous = value;
  }
  CHECK(previous == 0.65);
}

TEST_CASE("exact-count mask sampling") {
  Rng rng(42);
  CHECK(sample_mask(10, 0.0, rng).popcount() == 0);
  CHECK(sample_mask(10, 1.0, rng).popcount() == 10);
  CHECK(sample_mask(10, 0.5, rng).popcount() == 5);
  CHECK(sample_mask(10, 0.56, rng).popcount() == 5);  // floor(5.6)
  CHECK(sample_mask(0, 0.5, rng).popcount() == 0);
}

TEST_CASE("mask index frequencies concentrate at the ratio") {
  Rng rng(42);
  std::vector<int> hits(10, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto mask = sample_mask(10, 0.5, rng);
    REQUIRE(mask.popcount() == 5);
    for (int j = 0; j < 10; ++j)
      if (mask.test(j)) ++hits[j];
  }
  for (int j = 0; j < 10; ++j) {
    const double freq = static_cast<double>(hits[j]) / draws;
    CHECK(freq >= 0.47);
    CHECK(freq <= 0.53);
  }
}

TEST_CASE("mask reconciliation branches") {
  Rng rng(7);
  FreezeMask base(10);
  for (int i : {0, 2, 4}) base.set(i);

  SUBCASE("equal target returns the base mask") {
    const auto out = reconcile_mask(base, 3, rng);
    CHECK(out == base);
  }
  SUBCASE("growing keeps the base as a subset") {
    const auto out = reconcile_mask(base, 5, rng);
    CHECK(out.popcount() == 5);
    for (int i : {0, 2, 4}) CHECK(out.test(i));
  }
  SUBCASE("shrinking only removes base indices") {
    const auto out = reconcile_mask(base, 2, rng);
    CHECK(out.popcount() == 2);
    for (int i = 0; i < 10; ++i)
      if (out.test(i)) CHECK(base.test(i));
  }
}

TEST_CASE("reconciliation preserves subset relations on random cases") {
  Rng rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.index_below(64));
    const auto base = sample_mask(n, rng.unit(), rng);
    const int target = static_cast<int>(rng.index_below(n + 1));
    const auto out = reconcile_mask(base, target, rng);
    REQUIRE(out.popcount() == target);
    if (target >= base.popcount()) {
      for (int i = 0; i < n; ++i)
        if (base.test(i)) CHECK(out.test(i));
    } else {
      for (int i = 0; i < n; ++i)
        if (out.test(i)) CHECK(base.test(i));
    }
  }
}

TEST_CASE("autofreeze score arithmetic") {
  CHECK(autofreeze_score(2.0, 1.0) == 0.5);
  CHECK(autofreeze_score(1.0, 1.0) == 0.0);
  CHECK(autofreeze_score(1.0, 3.0) == 2.0);
  CHECK_THROWS_AS(autofreeze_score(0.0, 1.0), std::domain_error);
}

TEST_CASE("autofreeze prefix selection") {
  const std::vector<double> scores{0.1, 0.2, 0.9, 0.3};
  CHECK(autofreeze_select(scores, 0, 80.0) == 2);
  CHECK(autofreeze_select(scores, 0, 1e-9) == 0);
  CHECK(autofreeze_select(scores, 4, 80.0) == 4);
  CHECK(autofreeze_select(scores, 2, 80.0) == 2);  // 0.9 still blocks
}

TEST_CASE("autofreeze prefix never shrinks across calls") {
  Rng rng(9);
  std::vector<double> scores(12);
  int prefix = 0;
  for (int round = 0; round < 50; ++round) {
    for (auto& s : scores) s = rng.unit();
    const int next = autofreeze_select(scores, prefix, 70.0);
    CHECK(next >= prefix);
    prefix = next;
  }
}

TEST_CASE("apf two-step oscillation recurrence") {
  auto state = ApfState::zeros(1, 0.9);
  auto scores = apf_update(state, Eigen::VectorXd::Constant(1, 1.0));
  CHECK(state.ema(0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(state.ema_abs(0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(scores(0) == doctest::Approx(1.0).epsilon(1e-12));

  scores = apf_update(state, Eigen::VectorXd::Constant(1, -1.0));
  CHECK(state.ema(0) == doctest::Approx(-0.01).epsilon(1e-9));
  CHECK(state.ema_abs(0) == doctest::Approx(0.19).epsilon(1e-9));
  CHECK(scores(0) == doctest::Approx(1.0 / 19.0).epsilon(1e-9));
}

TEST_CASE("constant-sign updates keep the apf score at one") {
  auto state = ApfState::zeros(1, 0.9);
  for (int k = 0; k < 20; ++k) {
    const auto scores = apf_update(state, Eigen::VectorXd::Constant(1, 0.25));
    CHECK(scores(0) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("apf scores stay within [0, 1] on random update streams") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    auto state = ApfState::zeros(4, 0.5 + 0.49 * rng.unit());
    for (int k = 0; k < 50; ++k) {
      Eigen::VectorXd delta(4);
      for (int j = 0; j < 4; ++j) delta(j) = 2.0 * rng.unit() - 1.0;
      const auto scores = apf_update(state, delta);
      for (int j = 0; j < 4; ++j) {
        CHECK(scores(j) >= 0.0);
        CHECK(scores(j) <= 1.0 + 1e-12);
      }
    }
  }
}

TEST_CASE("apf eligibility thresholding") {
  Eigen::VectorXd scores(3);
  scores << 0.5, 0.0001, 0.2;
  CHECK(apf_eligible(scores, 0.01) == std::vector<int>{1});
}

TEST_CASE("noise-free monitoring round trip recovers the truth profile") {
  const auto truth = TimingProfile::from_stage_defaults(2, 2, {1.0, 1.0, 1.0});
  Rng rng(13);
  const auto log = run_monitoring(truth, 2, 2, {160, 200, 250, 400}, NoiseSpec{0.0}, rng);
  const auto estimated = aggregate_monitoring(log);
  for (const auto& [node, bounds] : truth.all()) {
    CHECK(estimated.bounds(node).w_min == doctest::Approx(bounds.w_min).epsilon(1e-12));
    CHECK(estimated.bounds(node).w_max == doctest::Approx(bounds.w_max).epsilon(1e-12));
  }
}

TEST_CASE("monitoring sample labels follow the phase windows") {
  const auto truth = TimingProfile::from_stage_defaults(1, 1, {1.0, 1.0, 1.0});
  Rng rng(13);
  const PhasePlan phases{10, 20, 25, 30};
  const auto log = run_monitoring(truth, 1, 1, phases, NoiseSpec{0.0}, rng);
  for (const auto& [node, samples] : log.entries())
    for (const auto& sample : samples) {
      const Phase phase = phase_of(sample.step, phases);
      if (node.kind == ActionKind::Backward)
        CHECK((sample.freeze_state == FreezeState::None) == (phase == Phase::MonitorUpper));
    }
}

TEST_CASE("full controller run averages stable-phase masks to the plan ratio") {
  std::map<ActionId, double> ratios{{backward_action(1, 1), 0.6}, {backward_action(2, 1), 0.6}};
  Rng rng(21);
  const PhasePlan phases{10, 20, 20, 520};  // zero-length ramp: stable from t = 21
  const auto history = run_freezing_masks(ratios, phases, 2, 1, 500, rng);
  long frozen = 0, total = 0;
  int cells = 0;
  for (const auto& record : history.records()) {
    if (record.step <= phases.t_freeze) continue;
    frozen += record.popcount;
    total += record.n_params;
    ++cells;
  }
  const double average = static_cast<double>(frozen) / static_cast<double>(total);
  CHECK(std::abs(average - 0.6) <= 2.0 / std::sqrt(static_cast<double>(cells)));
}

TEST_CASE("mask history records cells and accumulates frequencies") {
  MaskHistory history;
  Rng rng(5);
  const int steps = 400;
  for (int t = 1; t <= steps; ++t)
    for (int m = 1; m <= 2; ++m) history.add(t, backward_action(m, 1), sample_mask(8, 0.5, rng));
  CHECK(history.records().size() == static_cast<std::size_t>(steps * 2));
  long frozen = 0, total = 0;
  for (const auto& record : history.records()) {
    CHECK(record.popcount == 4);  // exact-count sampling has zero size variance
    frozen += record.popcount;
    total += record.n_params;
  }
  CHECK(static_cast<double>(frozen) / total == 0.5);
  CHECK(history.stage_draws()[0] == steps * 2);
}
