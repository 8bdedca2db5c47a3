#include "pipefreeze/dag.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

namespace pipefreeze {

PipelineDag::PipelineDag(int num_microbatches, int total_stages)
    : microbatches_(num_microbatches), stages_(total_stages) {
  if (num_microbatches < 1 || total_stages < 1)
    throw config_error("dag dimensions must be positive");
  out_.resize(node_count());
  in_.resize(node_count());
}

int PipelineDag::index_of(const ActionId& a) const {
  if (a.microbatch < 1 || a.microbatch > microbatches_ || a.stage < 1 || a.stage > stages_)
    throw std::domain_error("action " + to_string(a) + " outside dag dimensions");
  const int base = a.kind == ActionKind::Forward ? 0 : microbatches_ * stages_;
  return 1 + base + (a.stage - 1) * microbatches_ + (a.microbatch - 1);
}

ActionId PipelineDag::action_at(int node) const {
  if (!is_action(node)) throw std::domain_error("sentinel node has no action id");
  int k = node - 1;
  const int per_kind = microbatches_ * stages_;
  const ActionKind kind = k < per_kind ? ActionKind::Forward : ActionKind::Backward;
  k %= per_kind;
  return {kind, k % microbatches_ + 1, k / microbatches_ + 1};
}

std::string PipelineDag::node_name(int node) const {
  if (node == source()) return "src";
  if (node == destination()) return "dst";
  return to_string(action_at(node));
}

int PipelineDag::stage_of(int node) const { return is_action(node) ? action_at(node).stage : 0; }

bool PipelineDag::add_edge(int from, int to) {
  auto& row = out_[from];
  if (std::find(row.begin(), row.end(), to) != row.end()) return false;
  row.push_back(to);
  in_[to].push_back(from);
  edges_.emplace_back(from, to);
  return true;
}

std::optional<std::vector<int>> PipelineDag::topological_order() const {
  std::vector<int> indeg(node_count(), 0);
  for (int v = 0; v < node_count(); ++v)
    for (int w : out_[v]) ++indeg[w];
  std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
  for (int v = 0; v < node_count(); ++v)
    if (indeg[v] == 0) ready.push(v);
  std::vector<int> order;
  order.reserve(node_count());
  while (!ready.empty()) {
    const int v = ready.top();
    ready.pop();
    order.push_back(v);
    for (int w : out_[v])
      if (--indeg[w] == 0) ready.push(w);
  }
  if (static_cast<int>(order.size()) != node_count()) return std::nullopt;
  return order;
}

PipelineDag build_dag(const RankTimeline& timeline) {
  const auto& config = timeline.config;
  const int m_count = config.num_microbatches;
  const int stages = config.total_stages();
  PipelineDag dag(m_count, stages);

  // rule 1: batch boundary sentinels
  dag.add_edge(dag.source(), dag.index_of(forward_action(1, 1)));
  dag.add_edge(dag.index_of(backward_action(m_count, 1)), dag.destination());

  for (int s = 1; s <= stages; ++s) {
    for (int m = 1; m <= m_count; ++m) {
      // rule 2: intra-stage microbatch chains and forward-before-backward
      if (m < m_count) {
        dag.add_edge(dag.index_of(forward_action(m, s)), dag.index_of(forward_action(m + 1, s)));
        dag.add_edge(dag.index_of(backward_action(m, s)), dag.index_of(backward_action(m + 1, s)));
      }
      dag.add_edge(dag.index_of(forward_action(m, s)), dag.index_of(backward_action(m, s)));
      // rule 3: inter-stage propagation
      if (s < stages)
        dag.add_edge(dag.index_of(forward_action(m, s)), dag.index_of(forward_action(m, s + 1)));
      if (s > 1)
        dag.add_edge(dag.index_of(backward_action(m, s)), dag.index_of(backward_action(m, s - 1)));
    }
  }

  // rule 4: schedule-order chains from the rank lists
  for (const auto& list : timeline.rank_order)
    for (std::size_t i = 0; i + 1 < list.size(); ++i)
      dag.add_edge(dag.index_of(list[i]), dag.index_of(list[i + 1]));

  const auto report = validate_dag(dag);
  if (!report.acyclic) throw config_error("schedule-consistency error: pipeline dag has a cycle");
  if (!report.ok()) throw config_error("structural error: pipeline dag failed validation");
  return dag;
}

namespace {

std::vector<bool> reachable(const std::vector<std::vector<int>>& adj, int start) {
  std::vector<bool> seen(adj.size(), false);
  std::vector<int> stack{start};
  seen[start] = true;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : adj[v])
      if (!seen[w]) {
        seen[w] = true;
        stack.push_back(w);
      }
  }
  return seen;
}

}  // namespace

DagValidation validate_dag(const PipelineDag& dag) {
  DagValidation report;
  report.acyclic = dag.topological_order().has_value();
  report.source_degree_ok = dag.reverse_adjacency()[dag.source()].empty();
  report.destination_degree_ok = dag.adjacency()[dag.destination()].empty();
  const auto from_src = reachable(dag.adjacency(), dag.source());
  const auto to_dst = reachable(dag.reverse_adjacency(), dag.destination());
  for (int v = 0; v < dag.node_count(); ++v) {
    if (!from_src[v]) report.unreachable_from_source.push_back(dag.node_name(v));
    if (!to_dst[v]) report.cannot_reach_destination.push_back(dag.node_name(v));
  }
  return report;
}

StartTimes longest_path_start_times(const PipelineDag& dag, const std::vector<double>& weights) {
  if (static_cast<int>(weights.size()) != dag.node_count())
    throw std::domain_error("weights must cover every dag node");
  for (int v = 0; v < dag.node_count(); ++v)
    if (!(weights[v] >= 0.0)) throw std::domain_error("negative or missing weight at node " +
                                                      dag.node_name(v));
  if (weights[dag.source()] != 0.0 || weights[dag.destination()] != 0.0)
    throw std::domain_error("sentinel weights must be zero");

  const auto order = dag.topological_order();
  if (!order) throw config_error("schedule-consistency error: pipeline dag has a cycle");

  StartTimes result;
  result.start.assign(dag.node_count(), 0.0);
  for (int v : *order)
    for (int w : dag.adjacency()[v])
      result.start[w] = std::max(result.start[w], result.start[v] + weights[v]);
  result.makespan = result.start[dag.destination()];
  return result;
}

std::string dag_to_json_text(const PipelineDag& dag) {
  std::ostringstream out;
  out << "{\"nodes\":[";
  for (int v = 0; v < dag.node_count(); ++v)
    out << (v ? "," : "") << '"' << dag.node_name(v) << '"';
  out << "],\"edges\":[";
  auto edges = dag.edges();
  std::sort(edges.begin(), edges.end());
  for (std::size_t i = 0; i < edges.size(); ++i)
    out << (i ? "," : "") << "[\"" << dag.node_name(edges[i].first) << "\",\""
        << dag.node_name(edges[i].second) << "\"]";
  out << "]}";
  return out.str();
}

}  // namespace pipefreeze
