#include "pipefreeze/schedule.hpp"

#include <algorithm>
#include <deque>
#include <set>

namespace pipefreeze {

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::GPipe: return "gpipe";
    case ScheduleKind::OneFOneB: return "1f1b";
    case ScheduleKind::InterleavedOneFOneB: return "interleaved-1f1b";
    case ScheduleKind::ZBV: return "zbv";
  }
  return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "gpipe") return ScheduleKind::GPipe;
  if (name == "1f1b") return ScheduleKind::OneFOneB;
  if (name == "interleaved-1f1b" || name == "interleaved") return ScheduleKind::InterleavedOneFOneB;
  if (name == "zbv") return ScheduleKind::ZBV;
  throw config_error("unknown schedule kind: '" + name + "'");
}

void validate_config(const PipelineConfig& config) {
  if (config.num_ranks < 1) throw config_error("num_ranks must be positive");
  if (config.num_microbatches < 1) throw config_error("num_microbatches must be positive");
  if (config.stages_per_rank < 1) throw config_error("stages_per_rank must be positive");
  switch (config.schedule_kind) {
    case ScheduleKind::GPipe:
    case ScheduleKind::OneFOneB:
      if (config.stages_per_rank != 1)
        throw config_error(to_string(config.schedule_kind) + " requires stages_per_rank = 1");
      break;
    case ScheduleKind::InterleavedOneFOneB:
      if (config.stages_per_rank < 2)
        throw config_error("interleaved-1f1b requires stages_per_rank >= 2");
      break;
    case ScheduleKind::ZBV:
      if (config.stages_per_rank != 2)
        throw config_error("zbv requires stages_per_rank = 2 (V shape)");
      break;
  }
}

int stage_to_rank(const PipelineConfig& config, int stage) {
  const int total = config.total_stages();
  if (stage < 1 || stage > total)
    throw std::domain_error("stage " + std::to_string(stage) + " out of range [1, " +
                            std::to_string(total) + "]");
  const int r = config.num_ranks;
  switch (config.schedule_kind) {
    case ScheduleKind::GPipe:
    case ScheduleKind::OneFOneB:
      return stage - 1;
    case ScheduleKind::InterleavedOneFOneB:
      return (stage - 1) % r;
    case ScheduleKind::ZBV:
      return stage <= r ? stage - 1 : 2 * r - stage;
  }
  throw config_error("unsupported schedule kind");
}

namespace {

// Stages hosted by one rank in execution-chunk order.
std::vector<int> rank_stages(const PipelineConfig& config, int rank) {
  std::vector<int> stages;
  for (int s = 1; s <= config.total_stages(); ++s)
    if (stage_to_rank(config, s) == rank) stages.push_back(s);
  std::sort(stages.begin(), stages.end());
  return stages;
}

std::vector<std::vector<ActionId>> build_gpipe(const PipelineConfig& config) {
  const int m_count = config.num_microbatches;
  std::vector<std::vector<ActionId>> order(config.num_ranks);
  for (int rank = 0; rank < config.num_ranks; ++rank) {
    const int stage = rank + 1;
    for (int m = 1; m <= m_count; ++m) order[rank].push_back(forward_action(m, stage));
    for (int m = 1; m <= m_count; ++m) order[rank].push_back(backward_action(m, stage));
  }
  return order;
}

std::vector<std::vector<ActionId>> build_1f1b(const PipelineConfig& config) {
  const int m_count = config.num_microbatches;
  const int ranks = config.num_ranks;
  std::vector<std::vector<ActionId>> order(ranks);
  for (int rank = 0; rank < ranks; ++rank) {
    const int stage = rank + 1;
    const int warmup = std::min(ranks - rank, m_count);
    auto& list = order[rank];
    for (int m = 1; m <= warmup; ++m) list.push_back(forward_action(m, stage));
    int next_forward = warmup + 1;
    for (int m = 1; m <= m_count; ++m) {
      list.push_back(backward_action(m, stage));
      if (next_forward <= m_count) list.push_back(forward_action(next_forward++, stage));
    }
  }
  return order;
}

// Chunk-blocked interleaved order: within the forward stream all microbatches
// of chunk c precede chunk c+1; backwards drain in reverse chunk order. The
// last chunk runs plain 1F1B; earlier chunks fill the warm-up and cool-down.
std::vector<std::vector<ActionId>> build_interleaved(const PipelineConfig& config) {
  const int m_count = config.num_microbatches;
  const int ranks = config.num_ranks;
  const int chunks = config.stages_per_rank;
  std::vector<std::vector<ActionId>> order(ranks);
  for (int rank = 0; rank < ranks; ++rank) {
    const auto stages = rank_stages(config, rank);
    std::deque<ActionId> forwards;
    std::deque<ActionId> backwards;
    for (int c = 0; c < chunks; ++c)
      for (int m = 1; m <= m_count; ++m) forwards.push_back(forward_action(m, stages[c]));
    for (int c = chunks - 1; c >= 0; --c)
      for (int m = 1; m <= m_count; ++m) backwards.push_back(backward_action(m, stages[c]));

    const int warmup = (chunks - 1) * m_count + std::min(ranks - rank, m_count);
    auto& list = order[rank];
    for (int i = 0; i < warmup && !forwards.empty(); ++i) {
      list.push_back(forwards.front());
      forwards.pop_front();
    }
    while (!backwards.empty()) {
      list.push_back(backwards.front());
      backwards.pop_front();
      if (!forwards.empty()) {
        list.push_back(forwards.front());
        forwards.pop_front();
      }
    }
  }
  return order;
}

// ZBV order from a deterministic eager-backward list schedule: each round
// every rank runs the highest-priority ready action (backward over forward,
// then deeper stage, then lower microbatch). Readiness follows the
// intra/inter-stage dependency rules with combined backward nodes.
std::vector<std::vector<ActionId>> build_zbv(const PipelineConfig& config) {
  const int m_count = config.num_microbatches;
  const int ranks = config.num_ranks;
  const int total_stages = config.total_stages();

  auto done = std::set<ActionId>{};
  auto emitted = std::set<ActionId>{};
  std::vector<std::vector<ActionId>> order(ranks);

  auto ready = [&](const ActionId& a) {
    if (emitted.count(a)) return false;
    if (a.kind == ActionKind::Forward) {
      if (a.microbatch > 1 && !done.count(forward_action(a.microbatch - 1, a.stage))) return false;
      if (a.stage > 1 && !done.count(forward_action(a.microbatch, a.stage - 1))) return false;
    } else {
      if (!done.count(forward_action(a.microbatch, a.stage))) return false;
      if (a.microbatch > 1 && !done.count(backward_action(a.microbatch - 1, a.stage))) return false;
      if (a.stage < total_stages && !done.count(backward_action(a.microbatch, a.stage + 1)))
        return false;
    }
    return true;
  };

  const std::size_t total_actions = static_cast<std::size_t>(2 * m_count * total_stages);
  while (emitted.size() < total_actions) {
    std::vector<ActionId> this_round;
    for (int rank = 0; rank < ranks; ++rank) {
      const auto stages = rank_stages(config, rank);
      ActionId best{};
      bool found = false;
      for (ActionKind kind : {ActionKind::Backward, ActionKind::Forward}) {
        for (auto it = stages.rbegin(); it != stages.rend() && !found; ++it)
          for (int m = 1; m <= m_count && !found; ++m) {
            ActionId a{kind, m, *it};
            if (ready(a)) {
              best = a;
              found = true;
            }
          }
        if (found) break;
      }
      if (found) {
        order[rank].push_back(best);
        emitted.insert(best);
        this_round.push_back(best);
      }
    }
    if (this_round.empty())
      throw config_error("zbv schedule construction stalled (internal inconsistency)");
    for (const auto& a : this_round) done.insert(a);
  }
  return order;
}

}  // namespace

RankTimeline build_schedule(const PipelineConfig& config) {
  validate_config(config);
  RankTimeline timeline;
  timeline.config = config;
  switch (config.schedule_kind) {
    case ScheduleKind::GPipe:
      timeline.rank_order = build_gpipe(config);
      break;
    case ScheduleKind::OneFOneB:
      timeline.rank_order = build_1f1b(config);
      break;
    case ScheduleKind::InterleavedOneFOneB:
      timeline.rank_order = build_interleaved(config);
      break;
    case ScheduleKind::ZBV:
      timeline.rank_order = build_zbv(config);
      break;
  }
  return timeline;
}

}  // namespace pipefreeze
