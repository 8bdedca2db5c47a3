#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pipefreeze/schedule.hpp"
#include "pipefreeze/types.hpp"

namespace pipefreeze {

// Pipeline execution DAG. Node 0 is the source sentinel, node count()-1 the
// destination sentinel; action nodes sit in between, indexed by the ActionId
// total order so layouts are reproducible.
class PipelineDag {
 public:
  PipelineDag(int num_microbatches, int total_stages);

  int node_count() const { return 2 * microbatches_ * stages_ + 2; }
  int source() const { return 0; }
  int destination() const { return node_count() - 1; }
  int microbatches() const { return microbatches_; }
  int stages() const { return stages_; }

  int index_of(const ActionId& a) const;
  bool is_action(int node) const { return node != source() && node != destination(); }
  ActionId action_at(int node) const;
  std::string node_name(int node) const;
  int stage_of(int node) const;  // 0 for sentinels

  // Deduplicating insert; returns false if the edge was already present.
  bool add_edge(int from, int to);
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::vector<std::vector<int>>& adjacency() const { return out_; }
  const std::vector<std::vector<int>>& reverse_adjacency() const { return in_; }

  // Topological order with deterministic tie-breaking on node index.
  // Empty optional when a cycle exists.
  std::optional<std::vector<int>> topological_order() const;

 private:
  int microbatches_;
  int stages_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> out_;
  std::vector<std::vector<int>> in_;
};

struct DagValidation {
  bool acyclic{false};
  bool source_degree_ok{false};
  bool destination_degree_ok{false};
  std::vector<std::string> unreachable_from_source;
  std::vector<std::string> cannot_reach_destination;

  bool ok() const {
    return acyclic && source_degree_ok && destination_degree_ok &&
           unreachable_from_source.empty() && cannot_reach_destination.empty();
  }
};

// Edge rules:
//   1. source -> f(1,1), b(M,1) -> destination
//   2. (a,m,s) -> (a,m+1,s) and f(m,s) -> b(m,s)
//   3. f(m,s) -> f(m,s+1) and b(m,s) -> b(m,s-1)
//   4. chain edges between consecutive actions of each rank list
// Duplicates collapse; throws config_error on a cyclic or disconnected result.
PipelineDag build_dag(const RankTimeline& timeline);

DagValidation validate_dag(const PipelineDag& dag);

struct StartTimes {
  std::vector<double> start;  // indexed by dag node
  double makespan{0.0};
};

// Longest-path start times over a topological order. `weights` is indexed by
// dag node; sentinel weights must be zero.
StartTimes longest_path_start_times(const PipelineDag& dag, const std::vector<double>& weights);

std::string dag_to_json_text(const PipelineDag& dag);

}  // namespace pipefreeze
