#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pipefreeze/dag.hpp"
#include "pipefreeze/timing.hpp"
#include "pipefreeze/types.hpp"

namespace pipefreeze {

enum class LambdaMode { Lexicographic, Explicit };

struct LpOptions {
  double tol{1e-7};
  LambdaMode lambda_mode{LambdaMode::Lexicographic};
  double lambda{1e-6};  // Explicit mode only, applied after normalization
  bool budget_over_all_stage_nodes{false};
  long max_iterations{400000};
};

// Freeze-ratio LP over a pipeline DAG:
//   minimize P_d      subject to
//   [1] P_j >= P_i + w_i            for every edge (i -> j)
//   [2] w_min_i <= w_i <= w_max_i   per node
//   [3] P_src = 0, w_src = 0
//   [4] sum_{i in B_s} delta_i (w_max_i - w_i) <= r_max |B_s|   per stage s
// with delta_i = 1/(w_max_i - w_min_i) for freezable nodes, else 0, and the
// secondary objective of maximizing sum delta_i w_i (least total freezing).
struct LpProblem {
  int node_count{0};
  int source{0};
  int destination{0};
  std::vector<std::pair<int, int>> precedence;  // dag edges
  std::vector<double> w_min;
  std::vector<double> w_max;
  std::vector<double> delta;
  struct StageBudget {
    int stage{0};
    std::vector<int> members;  // freezable backward nodes of the stage
    double capacity{0.0};      // r_max * |V_s|
  };
  std::vector<StageBudget> budgets;
  double r_max{0.0};
  std::vector<std::string> node_names;

  int num_variables() const { return 2 * node_count; }
};

LpProblem build_lp(const PipelineDag& dag, const TimingProfile& profile, double r_max,
                   const LpOptions& options = {});

struct LpSolution {
  std::vector<double> start;     // P_i, ms
  std::vector<double> duration;  // w_i, ms
  double makespan{0.0};          // P_d from the solver, ms
  long iterations{0};
  int passes{0};
};

// Throws numerical_error on solver failure. Always feasible by construction
// (w_i = w_max_i with longest-path start times is a feasible point).
LpSolution solve_lp(const LpProblem& problem, const LpOptions& options = {});
LpSolution solve_lp(const LpProblem& problem, double tol);

struct FreezePlan {
  std::map<ActionId, double> ratios;     // backward nodes; forwards implicitly 0
  std::map<ActionId, double> durations;  // all action nodes, ms
  double makespan_opt{0.0};
  double makespan_base{0.0};   // all nodes at w_max
  double makespan_floor{0.0};  // all nodes at w_min
  double r_max{0.0};
  std::map<int, double> stage_avg_ratio;  // mean r over freezable nodes per stage

  double ratio_of(const ActionId& node) const {
    auto it = ratios.find(node);
    return it == ratios.end() ? 0.0 : it->second;
  }
};

FreezePlan extract_freeze_plan(const PipelineDag& dag, const TimingProfile& profile,
                               const LpSolution& solution, double r_max, double tol = 1e-7);

std::vector<double> plan_weights(const PipelineDag& dag, const TimingProfile& profile,
                                 const FreezePlan& plan, double afr_scale = 1.0);

struct GridSearchResult {
  double best_makespan{0.0};
  double best_total_ratio{0.0};  // min sum of ratios among makespan-optimal points
  std::map<ActionId, double> best_ratios;
  long evaluated{0};
};

// Exhaustive oracle over freeze-ratio grids under the stage budgets. Only
// valid for small instances; throws config_error above `max_nodes` freezable
// nodes.
GridSearchResult grid_search_freeze(const PipelineDag& dag, const TimingProfile& profile,
                                    double r_max, double resolution, int max_nodes = 4);

struct VerificationReport {
  double makespan_recomputed{0.0};
  bool makespan_matches{false};
  bool budgets_ok{false};
  std::map<int, double> stage_avg;  // realized per-stage averages
  std::optional<double> grid_best_makespan;
  std::optional<double> grid_allowance;
  bool grid_ok{true};

  bool ok() const { return makespan_matches && budgets_ok && grid_ok; }
};

VerificationReport verify_solution(const PipelineDag& dag, const TimingProfile& profile,
                                   const FreezePlan& plan, double r_max, double tol = 1e-7,
                                   double grid_resolution = 0.05);

std::string dump_lp(const LpProblem& problem);

}  // namespace pipefreeze
