#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "pipefreeze/analysis.hpp"
#include "pipefreeze/config.hpp"
#include "pipefreeze/dag.hpp"
#include "pipefreeze/gantt.hpp"
#include "pipefreeze/lp.hpp"
#include "pipefreeze/sandbox.hpp"
#include "pipefreeze/schedule.hpp"

namespace {

using namespace pipefreeze;

bool log_enabled() {
  const char* level = std::getenv("PIPEFREEZE_LOG");
  return level != nullptr && *level != '\0' && std::string(level) != "0";
}

void note(const std::string& message) {
  if (log_enabled()) std::cerr << "[pipefreeze] " << message << "\n";
}

struct Pipeline {
  RankTimeline timeline;
  PipelineDag dag;
  TimingProfile profile;
};

Pipeline assemble(const RunConfig& config) {
  RankTimeline timeline = build_schedule(config.pipeline);
  PipelineDag dag = build_dag(timeline);
  TimingProfile profile = config.timing;
  if (config.noise_sigma > 0.0) {
    note("simulating monitoring with sigma=" + std::to_string(config.noise_sigma));
    Rng rng(config.seed);
    const auto log = run_monitoring(config.timing, config.pipeline.num_microbatches,
                                    config.pipeline.total_stages(), config.phases,
                                    NoiseSpec{config.noise_sigma}, rng);
    profile = aggregate_monitoring(log);
  }
  return {std::move(timeline), std::move(dag), std::move(profile)};
}

void check_plan_matches(const FreezePlan& plan, const PipelineConfig& config) {
  const int microbatches = config.num_microbatches;
  const int stages = config.total_stages();
  if (static_cast<int>(plan.ratios.size()) != microbatches * stages)
    throw config_error("plan has " + std::to_string(plan.ratios.size()) +
                       " ratios but the config expects " +
                       std::to_string(microbatches * stages));
  for (const auto& [node, r] : plan.ratios)
    if (node.microbatch > microbatches || node.stage > stages)
      throw config_error("plan entry " + to_string(node) + " is outside the configured pipeline");
}

int cmd_optimize(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_override, const std::string& dag_dump) {
  RunConfig config = load_run_config(config_path);
  if (seed_override) config.seed = *seed_override;
  auto pipeline = assemble(config);
  if (!dag_dump.empty()) write_text_file(dag_dump, dag_to_json_text(pipeline.dag));

  note("solving lp over " + std::to_string(pipeline.dag.node_count()) + " nodes");
  const auto problem = build_lp(pipeline.dag, pipeline.profile, config.r_max, config.lp);
  const auto solution = solve_lp(problem, config.lp);
  const auto plan =
      extract_freeze_plan(pipeline.dag, pipeline.profile, solution, config.r_max, config.lp.tol);

  const auto verification = verify_solution(pipeline.dag, pipeline.profile, plan, config.r_max);
  if (!verification.ok()) throw numerical_error("freeze plan failed self-verification");

  const auto report = build_report(plan, nullptr, nullptr, config.reference_gain_pct);
  write_text_file(out_dir + "/plan.json", freeze_plan_to_json_text(plan));
  write_text_file(out_dir + "/report.json", throughput_report_to_json_text(report));
  write_text_file(out_dir + "/report.txt", report_text(report));
  note("plan written to " + out_dir + "/plan.json");
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& plan_path,
                 const std::string& out_dir, bool svg, std::optional<int> step,
                 std::optional<std::uint64_t> seed_override, const std::string& masks_out,
                 const std::string& freq_csv, const std::string& afr_csv) {
  RunConfig config = load_run_config(config_path);
  if (seed_override) config.seed = *seed_override;
  const auto plan = freeze_plan_from_json_text(read_text_file(plan_path));
  check_plan_matches(plan, config.pipeline);
  auto pipeline = assemble(config);

  const int t = step.value_or(config.phases.t_total);
  if (t < 1 || t > config.phases.t_total)
    throw config_error("step " + std::to_string(t) + " outside the phase plan horizon");

  // per-phase durations: monitoring's lower half freezes everything, the
  // ramp scales the plan ratios, stable freezing applies them in full
  std::vector<double> step_weights;
  switch (phase_of(t, config.phases)) {
    case Phase::MonitorLower:
      step_weights = pipeline.profile.weights_min(pipeline.dag);
      break;
    case Phase::ProgressiveFreeze:
    case Phase::StableFreeze: {
      const double ramp =
          config.phases.t_freeze == config.phases.t_monitor
              ? 1.0
              : std::min(1.0, static_cast<double>(t - config.phases.t_monitor) /
                                  (config.phases.t_freeze - config.phases.t_monitor));
      step_weights = plan_weights(pipeline.dag, pipeline.profile, plan, ramp);
      break;
    }
    default:
      step_weights = pipeline.profile.weights_max(pipeline.dag);
      break;
  }

  const auto baseline =
      build_gantt(pipeline.timeline, pipeline.dag, pipeline.profile.weights_max(pipeline.dag));
  const auto optimized = build_gantt(pipeline.timeline, pipeline.dag, step_weights);
  write_text_file(out_dir + "/baseline_timeline.json", gantt_to_json_text(baseline));
  write_text_file(out_dir + "/optimized_timeline.json", gantt_to_json_text(optimized));
  if (svg) {
    write_text_file(out_dir + "/baseline.svg", render_gantt_svg(baseline, "baseline schedule"));
    write_text_file(out_dir + "/optimized.svg",
                    render_gantt_svg(optimized, "optimized schedule (step " + std::to_string(t) +
                                                    ")"));
  }
  note("timelines written (makespans " + std::to_string(baseline.makespan_ms) + " -> " +
       std::to_string(optimized.makespan_ms) + " ms)");

  if (!masks_out.empty() || !freq_csv.empty()) {
    Rng rng(config.seed);
    const auto history = run_freezing_masks(plan.ratios, config.phases,
                                            config.pipeline.num_microbatches,
                                            config.pipeline.total_stages(),
                                            config.params_per_stage, rng);
    if (!masks_out.empty()) write_text_file(masks_out, mask_history_to_json_text(history));
    if (!freq_csv.empty()) write_text_file(freq_csv, mask_frequency_csv(history));
  }

  if (!afr_csv.empty()) {
    // backward time per effective freeze ratio across the whole horizon
    Rng rng(config.seed + 1);
    const NoiseSpec noise{config.noise_sigma};
    std::ostringstream csv;
    csv << "step,stage,microbatch,afr,backward_ms\n";
    for (int when = 1; when <= config.phases.t_total; ++when) {
      for (int s = 1; s <= config.pipeline.total_stages(); ++s)
        for (int m = 1; m <= config.pipeline.num_microbatches; ++m) {
          const ActionId node = backward_action(m, s);
          double ratio = 0.0;
          switch (phase_of(when, config.phases)) {
            case Phase::MonitorLower: ratio = 1.0; break;
            case Phase::ProgressiveFreeze:
            case Phase::StableFreeze:
              ratio = actual_freeze_ratio(when, config.phases, plan.ratio_of(node));
              break;
            default: break;
          }
          csv << when << "," << s << "," << m << "," << ratio << ","
              << sample_execution(pipeline.profile, node, ratio, noise, rng) << "\n";
        }
    }
    write_text_file(afr_csv, csv.str());
  }
  return 0;
}

int cmd_gantt(const std::string& timeline_path, const std::string& out_path,
              const std::string& title) {
  const auto timeline = gantt_from_json_text(read_text_file(timeline_path));
  write_text_file(out_path, render_gantt_svg(timeline, title));
  return 0;
}

int cmd_sandbox_scaling(const std::string& objective_name, int dim, int samples,
                        const std::vector<double>& p_list, double eps, int trials,
                        std::uint64_t seed, double eta, int microbatches, int steps, double sigma,
                        double theta0_value, const std::string& out_dir) {
  const auto objective = objective_name == "logistic"
                             ? SyntheticObjective::logistic_toy(dim, samples, seed, 0.01, sigma)
                             : SyntheticObjective::isotropic_quadratic(dim, sigma);
  SgdHyper hyper;
  hyper.eta = eta;
  hyper.microbatches = microbatches;
  hyper.total_steps = steps;
  const Eigen::VectorXd theta0 = Eigen::VectorXd::Constant(dim, theta0_value);
  note("running scaling experiment over " + std::to_string(p_list.size()) + " policies");
  const auto table = scaling_experiment(objective, p_list, eps, trials, hyper, theta0, seed);
  write_text_file(out_dir + "/scaling.csv", scaling_table_to_csv(table));
  write_text_file(out_dir + "/scaling.json", scaling_table_to_json_text(table));
  return 0;
}

int cmd_sandbox_tta(const std::string& config_path, const std::string& plan_path,
                    const std::string& objective_name, int dim, int samples, double eps,
                    int trials, std::uint64_t seed, double eta, int steps, double sigma,
                    double theta0_value, const std::string& out_dir) {
  const RunConfig config = load_run_config(config_path);
  const auto plan = freeze_plan_from_json_text(read_text_file(plan_path));
  check_plan_matches(plan, config.pipeline);
  const auto objective = objective_name == "logistic"
                             ? SyntheticObjective::logistic_toy(dim, samples, seed, 0.01, sigma)
                             : SyntheticObjective::isotropic_quadratic(dim, sigma);
  SgdHyper hyper;
  hyper.eta = eta;
  hyper.microbatches = config.pipeline.num_microbatches;
  hyper.total_steps = steps;
  const Eigen::VectorXd theta0 = Eigen::VectorXd::Constant(dim, theta0_value);
  const auto report = tta_experiment(objective, plan, config.phases,
                                     config.pipeline.total_stages(), plan.makespan_base,
                                     plan.makespan_opt, eps, trials, hyper, theta0, seed);
  write_text_file(out_dir + "/tta.json", tta_report_to_json_text(report));
  note("tta measured " + std::to_string(report.measured_ratio) + " vs predicted " +
       std::to_string(report.predicted_ratio));
  return 0;
}

int cmd_report(const std::string& plan_path, const std::string& masks_path,
               const std::string& sandbox_path, std::optional<double> reference_gain,
               const std::string& out_dir) {
  const auto plan = freeze_plan_from_json_text(read_text_file(plan_path));
  MaskHistory history;
  if (!masks_path.empty())
    for (const auto& record : mask_records_from_json_text(read_text_file(masks_path)))
      history.add_record(record);
  TtaReport sandbox;
  const bool have_sandbox = !sandbox_path.empty();
  if (have_sandbox) sandbox = tta_report_from_json_text(read_text_file(sandbox_path));
  const auto report = build_report(plan, masks_path.empty() ? nullptr : &history,
                                   have_sandbox ? &sandbox : nullptr, reference_gain);
  write_text_file(out_dir + "/report.json", throughput_report_to_json_text(report));
  write_text_file(out_dir + "/report.txt", report_text(report));
  std::cout << report_text(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pipeline-parallel freeze-ratio scheduler and simulator"};
  app.require_subcommand(1);

  std::string config_path, plan_path, out_dir = ".", timeline_path, dag_dump, masks_out, freq_csv;
  std::string afr_csv;
  std::string masks_path, sandbox_path;
  std::string objective_name = "quadratic", gantt_title = "schedule";
  std::optional<std::uint64_t> seed_override;
  std::uint64_t sandbox_seed = 42;
  std::optional<int> sim_step;
  std::optional<double> reference_gain;
  bool svg = false;
  std::vector<double> p_list{1.0, 0.8, 0.5};
  double eps = 1e-3, eta = 0.1, sigma = 0.0, theta0_value = 0.1;
  int trials = 20, dim = 100, samples = 64, microbatches = 4, steps = 50000;

  auto* optimize = app.add_subcommand("optimize", "solve the freeze-ratio lp for a config");
  optimize->add_option("--config", config_path, "run config json")->required();
  optimize->add_option("--out", out_dir, "output directory");
  optimize->add_option("--seed", seed_override, "override the config seed");
  optimize->add_option("--dump-dag", dag_dump, "write the pipeline dag as json");

  auto* simulate = app.add_subcommand("simulate", "emit baseline and optimized timelines");
  simulate->add_option("--config", config_path, "run config json")->required();
  simulate->add_option("--plan", plan_path, "freeze plan json")->required();
  simulate->add_option("--out", out_dir, "output directory");
  simulate->add_option("--step", sim_step, "training step for the ramp (default: stable phase)");
  simulate->add_option("--seed", seed_override, "override the config seed");
  simulate->add_flag("--svg", svg, "also render svg timelines");
  bool json_flag = false;
  simulate->add_flag("--json", json_flag, "write json timelines (on by default)");
  simulate->add_option("--masks-out", masks_out, "write the per-step mask history json");
  simulate->add_option("--freq-csv", freq_csv, "write per-parameter freeze frequencies csv");
  simulate->add_option("--afr-csv", afr_csv, "write backward time vs effective freeze ratio csv");

  auto* gantt = app.add_subcommand("gantt", "render a timeline json as svg");
  gantt->add_option("--timeline", timeline_path, "timeline json from simulate")->required();
  gantt->add_option("--out", out_dir, "output svg path")->required();
  gantt->add_option("--title", gantt_title, "chart title");

  auto* sandbox = app.add_subcommand("sandbox", "masked-sgd scaling and tta experiments");
  sandbox->add_option("--objective", objective_name, "quadratic or logistic")
      ->check(CLI::IsMember({"quadratic", "logistic"}));
  sandbox->add_option("--dim", dim, "parameter dimension");
  sandbox->add_option("--samples", samples, "dataset size for the logistic objective");
  sandbox->add_option("--p", p_list, "update probabilities to sweep")->delimiter(',');
  sandbox->add_option("--eps", eps, "stationarity target");
  sandbox->add_option("--trials", trials, "seeded trials per cell");
  sandbox->add_option("--seed", sandbox_seed, "base seed");
  sandbox->add_option("--eta", eta, "stepsize");
  sandbox->add_option("--microbatches", microbatches, "microbatches per step");
  sandbox->add_option("--steps", steps, "horizon cap");
  sandbox->add_option("--sigma", sigma, "gradient noise stddev per coordinate");
  sandbox->add_option("--theta0", theta0_value, "initial value per coordinate");
  sandbox->add_option("--out", out_dir, "output directory");
  sandbox->add_option("--config", config_path, "run config json (tta mode)");
  sandbox->add_option("--plan", plan_path, "freeze plan json (tta mode)");

  auto* report = app.add_subcommand("report", "assemble a throughput report from artifacts");
  report->add_option("--plan", plan_path, "freeze plan json")->required();
  report->add_option("--masks", masks_path, "mask history json");
  report->add_option("--sandbox", sandbox_path, "tta report json");
  report->add_option("--reference-gain", reference_gain, "annotation percentage");
  report->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (optimize->parsed()) return cmd_optimize(config_path, out_dir, seed_override, dag_dump);
    if (simulate->parsed())
      return cmd_simulate(config_path, plan_path, out_dir, svg, sim_step, seed_override,
                          masks_out, freq_csv, afr_csv);
    if (gantt->parsed()) return cmd_gantt(timeline_path, out_dir, gantt_title);
    if (sandbox->parsed()) {
      if (!plan_path.empty() || !config_path.empty()) {
        if (plan_path.empty() || config_path.empty())
          throw config_error("tta mode needs both --config and --plan");
        return cmd_sandbox_tta(config_path, plan_path, objective_name, dim, samples, eps, trials,
                               sandbox_seed, eta, steps, sigma, theta0_value, out_dir);
      }
      return cmd_sandbox_scaling(objective_name, dim, samples, p_list, eps, trials, sandbox_seed,
                                 eta, microbatches, steps, sigma, theta0_value, out_dir);
    }
    if (report->parsed())
      return cmd_report(plan_path, masks_path, sandbox_path, reference_gain, out_dir);
  } catch (const config_error& e) {
    std::cerr << "pipefreeze-error: config: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "pipefreeze-error: domain: " << e.what() << "\n";
    return 2;
  } catch (const numerical_error& e) {
    std::cerr << "pipefreeze-error: numerical: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "pipefreeze-error: internal: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
