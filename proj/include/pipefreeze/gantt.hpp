#pragma once

#include <string>
#include <vector>

#include "pipefreeze/dag.hpp"
#include "pipefreeze/schedule.hpp"
#include "pipefreeze/types.hpp"

namespace pipefreeze {

struct GanttBlock {
  int rank{0};
  ActionKind kind{ActionKind::Forward};
  int microbatch{1};
  int stage{1};
  double start_ms{0.0};
  double end_ms{0.0};
};

struct GanttTimeline {
  std::vector<GanttBlock> blocks;
  double makespan_ms{0.0};
  int num_ranks{0};
};

// Lay the timeline out from longest-path start times; blocks on one rank
// never overlap because rank-chain edges order them.
GanttTimeline build_gantt(const RankTimeline& timeline, const PipelineDag& dag,
                          const std::vector<double>& weights);

std::string gantt_to_json_text(const GanttTimeline& timeline);
GanttTimeline gantt_from_json_text(const std::string& text);

// Self-contained SVG (inline styles, no fonts fetched, no timestamps): one
// lane per rank, forward and backward blocks color-coded.
std::string render_gantt_svg(const GanttTimeline& timeline, const std::string& title);

}  // namespace pipefreeze
