// Acceptance suite: one check per shipped guarantee, one pass/fail line each.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "pipefreeze/analysis.hpp"
#include "pipefreeze/config.hpp"
#include "pipefreeze/dag.hpp"
#include "pipefreeze/gantt.hpp"
#include "pipefreeze/lp.hpp"
#include "pipefreeze/sandbox.hpp"

using namespace pipefreeze;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  std::string name;
  std::function<bool(std::string&)> run;
};

double elapsed_s(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<double> patterned_weights(const PipelineDag& dag) {
  std::vector<double> weights(dag.node_count(), 0.0);
  for (int v = 0; v < dag.node_count(); ++v) {
    if (!dag.is_action(v)) continue;
    const auto a = dag.action_at(v);
    weights[v] = a.kind == ActionKind::Forward
                     ? 1.0 + 0.25 * ((a.microbatch + a.stage) % 3)
                     : 2.0 + 0.25 * ((2 * a.microbatch + a.stage) % 4);
  }
  return weights;
}

std::vector<std::string> fixture_paths() {
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(PIPEFREEZE_FIXTURES_DIR))
    if (entry.path().extension() == ".json") paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  return paths;
}

FreezePlan solve_fixture(const RunConfig& config, double r_max) {
  const auto dag = build_dag(build_schedule(config.pipeline));
  const auto problem = build_lp(dag, config.timing, r_max, config.lp);
  const auto solution = solve_lp(problem, config.lp);
  return extract_freeze_plan(dag, config.timing, solution, r_max, config.lp.tol);
}

int run_cli(const std::string& args) {
  const std::string command = std::string(PIPEFREEZE_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(command.c_str());
  return status < 0 ? status : WEXITSTATUS(status);
}

bool criterion_dag_oracle(std::string& detail) {
  const auto start = std::chrono::steady_clock::now();
  int checked = 0;
  for (auto kind : {ScheduleKind::GPipe, ScheduleKind::OneFOneB})
    for (int s : {1, 2})
      for (int m : {1, 2, 3, 4}) {
        const auto dag = build_dag(build_schedule({kind, s, 1, m}));
        const auto weights = patterned_weights(dag);
        const double dp = longest_path_start_times(dag, weights).makespan;
        const double brute = oracles::brute_force_makespan(dag, weights);
        if (dp != brute) {
          detail = "mismatch on " + to_string(kind) + " S=" + std::to_string(s) +
                   " M=" + std::to_string(m);
          return false;
        }
        ++checked;
      }
  const double seconds = elapsed_s(start);
  std::ostringstream out;
  out << checked << " instances bit-equal to path enumeration in " << seconds << " s";
  detail = out.str();
  return checked == 16 && seconds < 1.0;
}

bool criterion_gpipe_closed_form(std::string& detail) {
  for (auto [f, b] : {std::pair{1.25, 2.5}, std::pair{1.1, 2.3}})
    for (int s = 1; s <= 4; ++s)
      for (int m = 1; m <= 6; ++m) {
        const auto dag = build_dag(build_schedule({ScheduleKind::GPipe, s, 1, m}));
        std::vector<double> weights(dag.node_count(), 0.0);
        for (int v = 0; v < dag.node_count(); ++v)
          if (dag.is_action(v))
            weights[v] = dag.action_at(v).kind == ActionKind::Forward ? f : b;
        const double makespan = longest_path_start_times(dag, weights).makespan;
        const double closed = (m + s - 1) * (f + b);
        if (std::abs(makespan - closed) > 1e-9) {
          detail = "S=" + std::to_string(s) + " M=" + std::to_string(m) + " got " +
                   std::to_string(makespan) + " want " + std::to_string(closed);
          return false;
        }
      }
  detail = "(M+S-1)(f+b) holds for M in 1..6, S in 1..4 within 1e-9";
  return true;
}

bool criterion_lp_boundaries(std::string& detail) {
  for (const auto& path : fixture_paths()) {
    const auto config = load_run_config(path);
    const auto dag = build_dag(build_schedule(config.pipeline));
    const double base = longest_path_start_times(dag, config.timing.weights_max(dag)).makespan;
    const double floor = longest_path_start_times(dag, config.timing.weights_min(dag)).makespan;
    const auto zero = solve_fixture(config, 0.0);
    const auto full = solve_fixture(config, 1.0);
    if (std::abs(zero.makespan_opt - base) > 1e-7 ||
        std::abs(full.makespan_opt - floor) > 1e-7) {
      detail = fs::path(path).filename().string() + ": P*(0)=" +
               std::to_string(zero.makespan_opt) + " vs " + std::to_string(base) + ", P*(1)=" +
               std::to_string(full.makespan_opt) + " vs " + std::to_string(floor);
      return false;
    }
  }
  detail = "P*(0)=P_max and P*(1)=P_min within 1e-7 on all " +
           std::to_string(fixture_paths().size()) + " fixtures";
  return true;
}

bool criterion_lp_vs_grid(std::string& detail) {
  const auto start = std::chrono::steady_clock::now();
  const auto timeline = build_schedule({ScheduleKind::GPipe, 2, 1, 2});
  const auto dag = build_dag(timeline);
  const auto profile = TimingProfile::from_stage_defaults(2, 2, {1.0, 1.0, 1.0});
  const auto problem = build_lp(dag, profile, 0.5);
  const auto plan = extract_freeze_plan(dag, profile, solve_lp(problem), 0.5);
  if (std::abs(plan.makespan_opt - 7.0) > 1e-7) {
    detail = "P* = " + std::to_string(plan.makespan_opt) + ", want 7.0";
    return false;
  }
  const auto want = std::map<ActionId, double>{{backward_action(1, 1), 0.0},
                                               {backward_action(2, 1), 1.0},
                                               {backward_action(1, 2), 1.0},
                                               {backward_action(2, 2), 0.0}};
  for (const auto& [node, r] : want)
    if (std::abs(plan.ratio_of(node) - r) > 1e-6) {
      detail = "tie-broken ratio of " + to_string(node) + " is " +
               std::to_string(plan.ratio_of(node)) + ", want " + std::to_string(r);
      return false;
    }
  const auto grid = oracles::grid_search(dag, profile, 0.5, 0.01);
  const double seconds = elapsed_s(start);
  if (grid.best_makespan < 7.0 - 0.02) {
    detail = "grid found " + std::to_string(grid.best_makespan) + " beating 7.0 by > 0.02";
    return false;
  }
  std::ostringstream out;
  out << "P*=7.0, expected plan recovered, grid best " << grid.best_makespan << " in " << seconds
      << " s";
  detail = out.str();
  return seconds < 5.0;
}

bool criterion_budgets(std::string& detail) {
  for (const auto& path : fixture_paths()) {
    const auto config = load_run_config(path);
    for (double r_max : {config.r_max, 0.3}) {
      const auto plan = solve_fixture(config, r_max);
      for (const auto& [stage, avg] : plan.stage_avg_ratio)
        if (avg > r_max + 1e-7) {
          detail = fs::path(path).filename().string() + " stage " + std::to_string(stage) +
                   " mean " + std::to_string(avg) + " > " + std::to_string(r_max);
          return false;
        }
    }
  }
  detail = "stage means stay within r_max + 1e-7 on every solved fixture";
  return true;
}

bool criterion_phase_machine(std::string& detail) {
  const PhasePlan plan{160, 200, 250, 400};
  Phase previous = Phase::Warmup;
  int transitions = 0;
  for (int t = 1; t <= plan.t_total; ++t) {
    const Phase current = phase_of(t, plan);
    if (current != previous) {
      if (static_cast<int>(current) < static_cast<int>(previous)) {
        detail = "phases regressed at t=" + std::to_string(t);
        return false;
      }
      ++transitions;
      previous = current;
    }
  }
  const double afr = actual_freeze_ratio(225, plan, 0.8);
  if (afr != 0.4) {
    detail = "AFR(225, r=0.8) = " + std::to_string(afr) + ", want exactly 0.4";
    return false;
  }
  detail = "phases partition [1,400] contiguously (" + std::to_string(transitions + 1) +
           " segments), AFR(225)=0.4 exact";
  return true;
}

bool criterion_scaling(std::string& detail) {
  const auto start = std::chrono::steady_clock::now();
  const auto objective = SyntheticObjective::isotropic_quadratic(100);
  SgdHyper hyper;
  hyper.eta = 0.1;  // satisfies eta <= p_min / (L (1 + 1/M)) for p >= 0.125
  hyper.microbatches = 4;
  hyper.total_steps = 50000;
  hyper.check_stepsize = true;
  const Eigen::VectorXd theta0 = Eigen::VectorXd::Constant(100, 0.1);
  const auto table = scaling_experiment(objective, {0.5, 0.8}, 1e-3, 20, hyper, theta0, 42);
  const double seconds = elapsed_s(start);
  const double ratio_half = table.rows[0].ratio_vs_baseline;
  const double ratio_eighty = table.rows[1].ratio_vs_baseline;
  std::ostringstream out;
  out << "ratio(p=0.5)=" << ratio_half << " in [1.7,2.3], ratio(p=0.8)=" << ratio_eighty
      << " in [1.12,1.38], " << seconds << " s";
  detail = out.str();
  return ratio_half >= 1.7 && ratio_half <= 2.3 && ratio_eighty >= 1.12 &&
         ratio_eighty <= 1.38 && seconds < 30.0;
}

bool criterion_tta(std::string& detail) {
  struct Fixture {
    std::string config;
    int dim;
  };
  const std::vector<Fixture> fixtures{{"gpipe_s2m2.json", 100},
                                      {"gpipe_s2m2_r08.json", 100},
                                      {"default_gpipe_s4m8.json", 64}};
  std::ostringstream out;
  for (const auto& fixture : fixtures) {
    const auto config =
        load_run_config(std::string(PIPEFREEZE_FIXTURES_DIR) + "/" + fixture.config);
    const auto plan = solve_fixture(config, config.r_max);
    const auto objective = SyntheticObjective::isotropic_quadratic(fixture.dim);
    SgdHyper hyper;
    hyper.eta = 0.1;
    hyper.microbatches = config.pipeline.num_microbatches;
    hyper.total_steps = 100000;
    const Eigen::VectorXd theta0 = Eigen::VectorXd::Constant(fixture.dim, 0.1);
    const auto report = tta_experiment(objective, plan, config.phases,
                                       config.pipeline.total_stages(), plan.makespan_base,
                                       plan.makespan_opt, 1e-3, 20, hyper, theta0, 42);
    const double relative = std::abs(report.measured_ratio / report.predicted_ratio - 1.0);
    out << fixture.config << " measured " << report.measured_ratio << " vs predicted "
        << report.predicted_ratio << " (" << 100.0 * relative << "%); ";
    if (relative > 0.20) {
      detail = out.str() + "outside the 20% band";
      return false;
    }
  }
  detail = out.str();
  return true;
}

bool criterion_kappa(std::string& detail) {
  if (std::abs(kappa(0.8, 6.0, 9.0) - 11.0 / 15.0) > 1e-9) {
    detail = "kappa(0.8, 6, 9) = " + std::to_string(kappa(0.8, 6.0, 9.0));
    return false;
  }
  if (kappa(0.0, 3.0, 9.0) != 1.0) {
    detail = "kappa(0, ., .) != 1";
    return false;
  }
  for (double rho : {0.2, 0.5, 0.75, 1.0})
    for (double x : {1.0, 9.0, 715.0})
      if (std::abs(kappa(1.0, rho * x, x) - rho) > 1e-12) {
        detail = "kappa(1, rho x, x) != rho at rho=" + std::to_string(rho);
        return false;
      }
  detail = "kappa(0.8,6,9)=0.73333... within 1e-9; boundary identities hold";
  return true;
}

bool criterion_masks(std::string& detail) {
  Rng rng(42);
  std::vector<int> hits(10, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto mask = sample_mask(10, 0.5, rng);
    if (mask.popcount() != 5) {
      detail = "exact-count popcount drifted";
      return false;
    }
    for (int j = 0; j < 10; ++j)
      if (mask.test(j)) ++hits[j];
  }
  double lo = 1.0, hi = 0.0;
  for (int j = 0; j < 10; ++j) {
    const double freq = hits[j] / 10000.0;
    lo = std::min(lo, freq);
    hi = std::max(hi, freq);
  }
  if (lo < 0.47 || hi > 0.53) {
    detail = "index frequencies [" + std::to_string(lo) + ", " + std::to_string(hi) +
             "] escape [0.47, 0.53]";
    return false;
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.index_below(128));
    const auto base = sample_mask(n, rng.unit(), rng);
    const int target = static_cast<int>(rng.index_below(n + 1));
    const auto out = reconcile_mask(base, target, rng);
    if (out.popcount() != target) {
      detail = "reconcile popcount mismatch";
      return false;
    }
    const bool growing = target >= base.popcount();
    for (int j = 0; j < n; ++j) {
      if (growing && base.test(j) && !out.test(j)) {
        detail = "reconcile dropped a base index while growing";
        return false;
      }
      if (!growing && out.test(j) && !base.test(j)) {
        detail = "reconcile added an index while shrinking";
        return false;
      }
    }
  }
  std::ostringstream out;
  out << "10000 masks: index frequencies in [" << lo << ", " << hi
      << "]; 1000 reconciliations exact";
  detail = out.str();
  return true;
}

bool criterion_apf(std::string& detail) {
  Rng rng(7);
  for (int stream = 0; stream < 10000; ++stream) {
    auto state = ApfState::zeros(1, 0.05 + 0.9 * rng.unit());
    const int length = 1 + static_cast<int>(rng.index_below(12));
    for (int k = 0; k < length; ++k) {
      const double score =
          apf_update(state, Eigen::VectorXd::Constant(1, 4.0 * rng.unit() - 2.0))(0);
      if (score < 0.0 || score > 1.0 + 1e-12) {
        detail = "score " + std::to_string(score) + " escaped [0, 1+1e-12]";
        return false;
      }
    }
  }
  auto state = ApfState::zeros(1, 0.9);
  apf_update(state, Eigen::VectorXd::Constant(1, 1.0));
  const double score = apf_update(state, Eigen::VectorXd::Constant(1, -1.0))(0);
  if (std::abs(score - 0.0526) > 1e-4) {
    detail = "oscillation score " + std::to_string(score) + " not 0.0526 +/- 1e-4";
    return false;
  }
  std::ostringstream out;
  out << "10000 random streams bounded; oscillation score " << score;
  detail = out.str();
  return true;
}

bool criterion_determinism(std::string& detail) {
  const auto base = fs::temp_directory_path() / "pipefreeze_acceptance";
  fs::remove_all(base);
  const auto dir_a = (base / "a").string();
  const auto dir_b = (base / "b").string();
  const std::string config = std::string(PIPEFREEZE_FIXTURES_DIR) + "/default_gpipe_s4m8.json";
  for (const auto& dir : {dir_a, dir_b}) {
    if (run_cli("optimize --config " + config + " --out " + dir + " --seed 42") != 0) {
      detail = "optimize exited nonzero";
      return false;
    }
    if (run_cli("simulate --config " + config + " --plan " + dir + "/plan.json --out " + dir +
                " --seed 42 --svg --masks-out " + dir + "/masks.json") != 0) {
      detail = "simulate exited nonzero";
      return false;
    }
  }
  for (const char* name : {"plan.json", "report.json", "baseline_timeline.json",
                           "optimized_timeline.json", "optimized.svg", "masks.json"}) {
    if (read_text_file(dir_a + "/" + name) != read_text_file(dir_b + "/" + name)) {
      detail = std::string(name) + " differs between identical runs";
      return false;
    }
  }
  detail = "optimize and simulate outputs byte-identical across reruns (seed 42)";
  return true;
}

bool criterion_directional_demo(std::string& detail) {
  const auto config =
      load_run_config(std::string(PIPEFREEZE_FIXTURES_DIR) + "/default_gpipe_s4m8.json");
  const auto dag = build_dag(build_schedule(config.pipeline));
  // oracle band: the uniform r = r_max plan is feasible, so the optimum must
  // match or beat it, and nothing beats the all-frozen floor
  const double base = longest_path_start_times(dag, config.timing.weights_max(dag)).makespan;
  const double floor = longest_path_start_times(dag, config.timing.weights_min(dag)).makespan;
  const double uniform =
      longest_path_start_times(dag, config.timing.weights_at_ratio(dag, config.r_max)).makespan;
  const auto plan = solve_fixture(config, config.r_max);
  const double reduction = 100.0 * (1.0 - plan.makespan_opt / base);
  std::ostringstream out;
  out << "reduction " << reduction << "% within oracle band ["
      << 100.0 * (1.0 - uniform / base) << "%, " << 100.0 * (1.0 - floor / base) << "%]";
  detail = out.str();
  return reduction > 0.0 && plan.makespan_opt <= uniform + 1e-7 &&
         plan.makespan_opt >= floor - 1e-7;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "dag longest path vs exhaustive enumeration", criterion_dag_oracle},
      {2, "gpipe closed-form makespan", criterion_gpipe_closed_form},
      {3, "lp boundary identities on shipped fixtures", criterion_lp_boundaries},
      {4, "lp optimum and tie-break vs 0.01 grid", criterion_lp_vs_grid},
      {5, "stage freezing budgets", criterion_budgets},
      {6, "phase machine boundaries and ramp", criterion_phase_machine},
      {7, "freeze-ratio scaling of iteration counts", criterion_scaling},
      {8, "tta ratio vs kappa / p_eff", criterion_tta},
      {9, "kappa reproduction", criterion_kappa},
      {10, "mask sampling and reconciliation statistics", criterion_masks},
      {11, "apf score bound and oscillation case", criterion_apf},
      {12, "byte-identical cli reruns", criterion_determinism},
      {13, "directional demo on the synthetic default fixture", criterion_directional_demo},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    std::string detail;
    bool passed = false;
    try {
      passed = criterion.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!passed) ++failures;
    std::cout << (passed ? "[PASS]" : "[FAIL]") << " criterion " << criterion.id << ": "
              << criterion.name << " - " << detail << "\n";
  }
  std::cout << (failures == 0 ? "all criteria passed\n"
                              : std::to_string(failures) + " criteria failed\n");
  return failures;
}
