#include "pipefreeze/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pipefreeze/simplex.hpp"

namespace pipefreeze {

namespace {

// Longest path over an explicit edge list (self-contained so LpProblem can be
// solved without the originating dag).
double edge_list_makespan(int node_count, const std::vector<std::pair<int, int>>& edges,
                          const std::vector<double>& weights, int destination) {
  std::vector<int> indeg(node_count, 0);
  std::vector<std::vector<int>> out(node_count);
  for (const auto& [a, b] : edges) {
    out[a].push_back(b);
    ++indeg[b];
  }
  std::vector<int> queue;
  for (int v = 0; v < node_count; ++v)
    if (indeg[v] == 0) queue.push_back(v);
  std::vector<double> dist(node_count, 0.0);
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int v = queue[head];
    for (int w : out[v]) {
      dist[w] = std::max(dist[w], dist[v] + weights[v]);
      if (--indeg[w] == 0) queue.push_back(w);
    }
  }
  if (static_cast<int>(queue.size()) != node_count)
    throw config_error("lp: precedence graph has a cycle");
  return dist[destination];
}

}  // namespace

LpProblem build_lp(const PipelineDag& dag, const TimingProfile& profile, double r_max,
                   const LpOptions& options) {
  if (r_max < 0.0 || r_max > 1.0) throw std::domain_error("r_max must be in [0, 1]");

  LpProblem problem;
  problem.node_count = dag.node_count();
  problem.source = dag.source();
  problem.destination = dag.destination();
  problem.precedence = dag.edges();
  problem.r_max = r_max;
  problem.w_min.assign(problem.node_count, 0.0);
  problem.w_max.assign(problem.node_count, 0.0);
  problem.delta.assign(problem.node_count, 0.0);
  problem.node_names.resize(problem.node_count);

  std::map<int, std::vector<int>> freezable_by_stage;
  std::map<int, int> stage_node_totals;
  for (int v = 0; v < problem.node_count; ++v) {
    problem.node_names[v] = dag.node_name(v);
    if (!dag.is_action(v)) continue;
    const auto action = dag.action_at(v);
    const auto& b = profile.bounds(action);
    problem.w_min[v] = b.w_min;
    problem.w_max[v] = b.w_max;
    ++stage_node_totals[action.stage];
    if (b.w_max > b.w_min) {
      problem.delta[v] = 1.0 / (b.w_max - b.w_min);
      if (action.kind == ActionKind::Backward) freezable_by_stage[action.stage].push_back(v);
    }
  }

  for (auto& [stage, members] : freezable_by_stage) {
    std::sort(members.begin(), members.end());
    const double count = options.budget_over_all_stage_nodes
                             ? static_cast<double>(stage_node_totals[stage])
                             : static_cast<double>(members.size());
    problem.budgets.push_back({stage, members, r_max * count});
  }
  return problem;
}

namespace {

struct LoweredLp {
  SimplexProblem<double> simplex;
  int node_count;
  // variable layout: x[i] = P_i, x[node_count + i] = w_i
};

// Rows for constraints [1]-[4] on durations pre-scaled by `scale`.
LoweredLp lower(const LpProblem& problem, double scale, bool cap_makespan, double makespan_cap) {
  const int n = problem.node_count;
  const int vars = 2 * n;

  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  std::vector<RowSense> senses;
  auto add_row = [&](const Eigen::RowVectorXd& row, RowSense sense, double b) {
    rows.push_back(row);
    senses.push_back(sense);
    rhs.push_back(b);
  };

  for (const auto& [i, j] : problem.precedence) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(vars);
    row(j) = 1.0;
    row(i) = -1.0;
    row(n + i) += -1.0;
    add_row(row, RowSense::GreaterEq, 0.0);
  }

  for (int v = 0; v < n; ++v) {
    const double lo = problem.w_min[v] / scale;
    const double hi = problem.w_max[v] / scale;
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(vars);
    row(n + v) = 1.0;
    if (lo == hi) {
      add_row(row, hi == 0.0 ? RowSense::LessEq : RowSense::Eq, hi);
    } else {
      add_row(row, RowSense::LessEq, hi);
      if (lo > 0.0) add_row(row, RowSense::GreaterEq, lo);
    }
  }

  {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(vars);
    row(problem.source) = 1.0;
    add_row(row, RowSense::LessEq, 0.0);  // P_src = 0 with P >= 0 implicit
  }

  for (const auto& budget : problem.budgets) {
    // sum delta_i (w_max_i - w_i) <= cap  <=>  sum delta_i w_i >= sum delta_i w_max_i - cap
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(vars);
    double lhs_const = 0.0;
    for (int v : budget.members) {
      const double d = problem.delta[v] * scale;  // delta in normalized units
      row(n + v) = d;
      lhs_const += d * (problem.w_max[v] / scale);
    }
    add_row(row, RowSense::GreaterEq, lhs_const - budget.capacity);
  }

  if (cap_makespan) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(vars);
    row(problem.destination) = 1.0;
    add_row(row, RowSense::LessEq, makespan_cap);
  }

  LoweredLp lowered;
  lowered.node_count = n;
  lowered.simplex.objective = Eigen::VectorXd::Zero(vars);
  lowered.simplex.lhs.resize(static_cast<Eigen::Index>(rows.size()), vars);
  lowered.simplex.rhs.resize(static_cast<Eigen::Index>(rows.size()));
  lowered.simplex.senses = senses;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    lowered.simplex.lhs.row(static_cast<Eigen::Index>(i)) = rows[i];
    lowered.simplex.rhs(static_cast<Eigen::Index>(i)) = rhs[i];
  }
  return lowered;
}

SimplexResult<double> run_or_throw(const SimplexProblem<double>& simplex, const LpOptions& options,
                                   const char* pass_name) {
  auto result = solve_simplex<double>(simplex, 1e-11, options.max_iterations);
  if (result.status == SimplexStatus::Optimal) return result;
  std::ostringstream msg;
  msg << "lp solve failed in " << pass_name << ": ";
  switch (result.status) {
    case SimplexStatus::Infeasible: msg << "reported infeasible"; break;
    case SimplexStatus::Unbounded: msg << "reported unbounded"; break;
    case SimplexStatus::IterationLimit:
      msg << "iteration limit " << options.max_iterations << " exceeded after "
          << result.iterations << " pivots";
      break;
    default: msg << "unknown status"; break;
  }
  msg << " (" << simplex.num_rows() << " rows, " << simplex.num_vars() << " vars)";
  throw numerical_error(msg.str());
}

}  // namespace

LpSolution solve_lp(const LpProblem& problem, const LpOptions& options) {
  const int n = problem.node_count;
  std::vector<double> w_max_weights(problem.w_max);
  const double baseline =
      edge_list_makespan(n, problem.precedence, w_max_weights, problem.destination);
  const double scale = baseline > 0.0 ? baseline : 1.0;

  LpSolution solution;
  solution.start.assign(n, 0.0);
  solution.duration.assign(n, 0.0);

  auto lowered = lower(problem, scale, false, 0.0);
  Eigen::VectorXd minimize_makespan = Eigen::VectorXd::Zero(2 * n);
  minimize_makespan(problem.destination) = 1.0;

  Eigen::VectorXd x;
  if (options.lambda_mode == LambdaMode::Explicit) {
    lowered.simplex.objective = minimize_makespan;
    for (int v = 0; v < n; ++v)
      lowered.simplex.objective(n + v) -= options.lambda * problem.delta[v] * scale;
    auto result = run_or_throw(lowered.simplex, options, "explicit-lambda pass");
    solution.iterations = result.iterations;
    solution.passes = 1;
    x = result.x;
  } else {
    lowered.simplex.objective = minimize_makespan;
    auto first = run_or_throw(lowered.simplex, options, "makespan pass");
    const double optimum = first.x(problem.destination);

    // a sliver of the tolerance: enough headroom for pivot rounding, small
    // enough that the realized makespan still reads as the optimum
    auto capped = lower(problem, scale, true, optimum + options.tol * 1e-3);
    capped.simplex.objective = Eigen::VectorXd::Zero(2 * n);
    for (int v = 0; v < n; ++v)
      capped.simplex.objective(n + v) = -problem.delta[v] * scale;  // maximize sum delta_i w_i
    auto second = run_or_throw(capped.simplex, options, "tie-break pass");
    solution.iterations = first.iterations + second.iterations;
    solution.passes = 2;
    x = second.x;
  }

  for (int v = 0; v < n; ++v) {
    solution.start[v] = x(v) * scale;
    solution.duration[v] = x(n + v) * scale;
  }
  solution.makespan = solution.start[problem.destination];
  return solution;
}

LpSolution solve_lp(const LpProblem& problem, double tol) {
  LpOptions options;
  options.tol = tol;
  return solve_lp(problem, options);
}

FreezePlan extract_freeze_plan(const PipelineDag& dag, const TimingProfile& profile,
                               const LpSolution& solution, double r_max, double tol) {
  FreezePlan plan;
  plan.r_max = r_max;
  plan.makespan_base = longest_path_start_times(dag, profile.weights_max(dag)).makespan;
  plan.makespan_floor = longest_path_start_times(dag, profile.weights_min(dag)).makespan;

  const double slack = tol * std::max(1.0, plan.makespan_base);
  std::map<int, std::pair<double, int>> stage_acc;
  std::vector<double> weights(dag.node_count(), 0.0);
  for (int v = 0; v < dag.node_count(); ++v) {
    if (!dag.is_action(v)) continue;
    const auto action = dag.action_at(v);
    const auto& b = profile.bounds(action);
    double w = solution.duration[v];
    if (w < b.w_min - slack || w > b.w_max + slack)
      throw numerical_error("lp solution violates box constraints at " + to_string(action));
    w = std::clamp(w, b.w_min, b.w_max);
    plan.durations[action] = w;
    weights[v] = w;
    if (action.kind == ActionKind::Backward) {
      const double r = b.w_max > b.w_min ? (b.w_max - w) / (b.w_max - b.w_min) : 0.0;
      plan.ratios[action] = r;
      if (b.w_max > b.w_min) {
        auto& [sum, count] = stage_acc[action.stage];
        sum += r;
        ++count;
      }
    }
  }
  for (const auto& [stage, acc] : stage_acc)
    plan.stage_avg_ratio[stage] = acc.first / static_cast<double>(acc.second);
  plan.makespan_opt = longest_path_start_times(dag, weights).makespan;
  return plan;
}

std::vector<double> plan_weights(const PipelineDag& dag, const TimingProfile& profile,
                                 const FreezePlan& plan, double afr_scale) {
  std::vector<double> weights(dag.node_count(), 0.0);
  for (int v = 0; v < dag.node_count(); ++v) {
    if (!dag.is_action(v)) continue;
    const auto action = dag.action_at(v);
    const auto& b = profile.bounds(action);
    const double r = plan.ratio_of(action) * afr_scale;
    weights[v] = b.w_max - r * (b.w_max - b.w_min);
  }
  return weights;
}

GridSearchResult grid_search_freeze(const PipelineDag& dag, const TimingProfile& profile,
                                    double r_max, double resolution, int max_nodes) {
  std::vector<ActionId> freezable;
  for (int v = 0; v < dag.node_count(); ++v) {
    if (!dag.is_action(v)) continue;
    const auto action = dag.action_at(v);
    if (action.kind == ActionKind::Backward && profile.is_freezable(action))
      freezable.push_back(action);
  }
  if (static_cast<int>(freezable.size()) > max_nodes)
    throw config_error("grid search limited to " + std::to_string(max_nodes) +
                       " freezable nodes, instance has " + std::to_string(freezable.size()));

  const int levels = static_cast<int>(std::lround(1.0 / resolution)) + 1;
  std::map<int, double> stage_caps;
  std::map<int, std::vector<std::size_t>> stage_members;
  for (std::size_t k = 0; k < freezable.size(); ++k)
    stage_members[freezable[k].stage].push_back(k);
  for (const auto& [stage, members] : stage_members)
    stage_caps[stage] = r_max * static_cast<double>(members.size()) + 1e-9;

  GridSearchResult best;
  best.best_makespan = std::numeric_limits<double>::infinity();
  std::vector<int> ticks(freezable.size(), 0);
  std::vector<double> weights = profile.weights_max(dag);
  const double tie_tol = 1e-9;

  while (true) {
    bool feasible = true;
    for (const auto& [stage, members] : stage_members) {
      double sum = 0.0;
      for (auto k : members) sum += ticks[k] * resolution;
      if (sum > stage_caps[stage]) {
        feasible = false;
        break;
      }
    }
    if (feasible) {
      double total_ratio = 0.0;
      for (std::size_t k = 0; k < freezable.size(); ++k) {
        const auto& b = profile.bounds(freezable[k]);
        const double r = ticks[k] * resolution;
        weights[dag.index_of(freezable[k])] = b.w_max - r * (b.w_max - b.w_min);
        total_ratio += r;
      }
      const double makespan = longest_path_start_times(dag, weights).makespan;
      ++best.evaluated;
      const bool better = makespan < best.best_makespan - tie_tol;
      const bool tie = !better && makespan < best.best_makespan + tie_tol &&
                       total_ratio < best.best_total_ratio;
      if (better || tie) {
        best.best_makespan = better ? makespan : best.best_makespan;
        best.best_total_ratio = total_ratio;
        best.best_ratios.clear();
        for (std::size_t k = 0; k < freezable.size(); ++k)
          best.best_ratios[freezable[k]] = ticks[k] * resolution;
      }
    }
    // odometer increment
    std::size_t pos = 0;
    while (pos < ticks.size() && ++ticks[pos] == levels) ticks[pos++] = 0;
    if (pos == ticks.size()) break;
  }
  return best;
}

VerificationReport verify_solution(const PipelineDag& dag, const TimingProfile& profile,
                                   const FreezePlan& plan, double r_max, double tol,
                                   double grid_resolution) {
  VerificationReport report;
  const double scale = std::max(1.0, plan.makespan_base);

  std::vector<double> weights(dag.node_count(), 0.0);
  std::map<int, std::pair<double, int>> stage_acc;
  for (int v = 0; v < dag.node_count(); ++v) {
    if (!dag.is_action(v)) continue;
    const auto action = dag.action_at(v);
    const auto& b = profile.bounds(action);
    auto it = plan.durations.find(action);
    weights[v] = it != plan.durations.end() ? it->second : b.w_max;
    if (action.kind == ActionKind::Backward && profile.is_freezable(action)) {
      auto& [sum, count] = stage_acc[action.stage];
      sum += plan.ratio_of(action);
      ++count;
    }
  }
  report.makespan_recomputed = longest_path_start_times(dag, weights).makespan;
  report.makespan_matches = std::abs(report.makespan_recomputed - plan.makespan_opt) <= tol * scale;

  report.budgets_ok = true;
  for (const auto& [stage, acc] : stage_acc) {
    const double avg = acc.first / static_cast<double>(acc.second);
    report.stage_avg[stage] = avg;
    if (avg > r_max + 1e-7) report.budgets_ok = false;
  }

  int freezable_count = 0;
  for (const auto& [action, bounds] : profile.all())
    if (action.kind == ActionKind::Backward && bounds.w_max > bounds.w_min) ++freezable_count;
  if (freezable_count > 0 && freezable_count <= 4) {
    const auto grid = grid_search_freeze(dag, profile, r_max, grid_resolution);
    double range_sum = 0.0;
    for (const auto& [action, bounds] : profile.all())
      if (action.kind == ActionKind::Backward) range_sum += bounds.w_max - bounds.w_min;
    report.grid_best_makespan = grid.best_makespan;
    report.grid_allowance = grid_resolution * range_sum;
    report.grid_ok = plan.makespan_opt <= grid.best_makespan + tol * scale &&
                     grid.best_makespan <= plan.makespan_opt + *report.grid_allowance;
  }
  return report;
}

std::string dump_lp(const LpProblem& problem) {
  std::ostringstream out;
  out << "minimize P[" << problem.node_names[problem.destination]
      << "], tie-break max sum(delta_i * w_i)\n";
  out << "variables: " << problem.num_variables() << " (P_i, w_i per node)\n";
  out << "precedence (" << problem.precedence.size() << "):\n";
  for (const auto& [i, j] : problem.precedence)
    out << "  P[" << problem.node_names[j] << "] >= P[" << problem.node_names[i] << "] + w["
        << problem.node_names[i] << "]\n";
  out << "boxes:\n";
  for (int v = 0; v < problem.node_count; ++v)
    out << "  " << problem.w_min[v] << " <= w[" << problem.node_names[v]
        << "] <= " << problem.w_max[v] << "  (delta=" << problem.delta[v] << ")\n";
  out << "budgets (r_max=" << problem.r_max << "):\n";
  for (const auto& budget : problem.budgets) {
    out << "  stage " << budget.stage << ": sum delta_i*(w_max_i - w_i) <= " << budget.capacity
        << " over {";
    for (std::size_t k = 0; k < budget.members.size(); ++k)
      out << (k ? ", " : "") << problem.node_names[budget.members[k]];
    out << "}\n";
  }
  return out.str();
}

}  // namespace pipefreeze
