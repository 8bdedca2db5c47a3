#pragma once

#include <vector>

#include "pipefreeze/types.hpp"

namespace pipefreeze {

enum class ScheduleKind { GPipe, OneFOneB, InterleavedOneFOneB, ZBV };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

struct PipelineConfig {
  ScheduleKind schedule_kind{ScheduleKind::GPipe};
  int num_ranks{1};        // R
  int stages_per_rank{1};  // C: 1 for GPipe/1F1B, >=2 for Interleaved, exactly 2 for ZBV
  int num_microbatches{1}; // M

  int total_stages() const { return num_ranks * stages_per_rank; }
};

// Throws config_error if the (schedule_kind, R, C, M) combination is invalid.
void validate_config(const PipelineConfig& config);

// Virtual-stage placement. Stages are 1-based; ranks 0-based.
//   GPipe/1F1B:  rank = stage - 1
//   Interleaved: rank = (stage - 1) mod R
//   ZBV:         rank = stage - 1 for stage <= R, rank = 2R - stage otherwise
int stage_to_rank(const PipelineConfig& config, int stage);

// Per-rank ordered action lists. The rank lists are the single source of
// truth for same-rank ordering edges in the pipeline DAG.
struct RankTimeline {
  PipelineConfig config;
  std::vector<std::vector<ActionId>> rank_order;  // index = rank

  int rank_of(int stage) const { return stage_to_rank(config, stage); }
};

RankTimeline build_schedule(const PipelineConfig& config);

}  // namespace pipefreeze
