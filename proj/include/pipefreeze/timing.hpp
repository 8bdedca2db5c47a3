#pragma once

#include <map>
#include <vector>

#include "pipefreeze/dag.hpp"
#include "pipefreeze/types.hpp"

namespace pipefreeze {

struct NodeBounds {
  double w_min{0.0};
  double w_max{0.0};
};

struct StageTiming {
  double forward_ms{0.0};
  double backward_act_ms{0.0};
  double backward_param_ms{0.0};
};

// Per-node execution-time bounds in milliseconds. Forward nodes always have
// w_min == w_max; backward nodes built from stage defaults get
// [backward_act_ms, backward_act_ms + backward_param_ms].
class TimingProfile {
 public:
  TimingProfile() = default;

  static TimingProfile from_stage_defaults(int num_microbatches, int total_stages,
                                           const StageTiming& uniform);
  static TimingProfile from_stage_defaults(int num_microbatches,
                                           const std::vector<StageTiming>& per_stage);

  void set_bounds(const ActionId& node, NodeBounds bounds);
  const NodeBounds& bounds(const ActionId& node) const;
  bool has(const ActionId& node) const { return bounds_.count(node) > 0; }
  bool is_freezable(const ActionId& node) const;

  const std::map<ActionId, NodeBounds>& all() const { return bounds_; }

  // Node-indexed weight vectors for longest-path evaluation.
  std::vector<double> weights_at_ratio(const PipelineDag& dag, double ratio) const;
  std::vector<double> weights_max(const PipelineDag& dag) const { return weights_at_ratio(dag, 0.0); }
  std::vector<double> weights_min(const PipelineDag& dag) const { return weights_at_ratio(dag, 1.0); }

 private:
  std::map<ActionId, NodeBounds> bounds_;
};

struct NoiseSpec {
  double sigma{0.0};  // lognormal multiplicative jitter; 0 means exact
};

// Duration of one execution of `node` with a fraction `ratio` of parameters
// frozen: w = w_max - ratio * (w_max - w_min), times lognormal noise.
double sample_execution(const TimingProfile& profile, const ActionId& node, double ratio,
                        const NoiseSpec& noise, Rng& rng);

// Inverse map from a duration back to the freeze ratio; 0 for unfreezable nodes.
double freeze_ratio_of(const TimingProfile& profile, const ActionId& node, double w);

enum class FreezeState { None, Full };

struct MonitorSample {
  int step{0};
  double sample_ms{0.0};
  FreezeState freeze_state{FreezeState::None};
};

class MonitorLog {
 public:
  void record(const ActionId& node, int step, double sample_ms, FreezeState state);
  const std::map<ActionId, std::vector<MonitorSample>>& entries() const { return entries_; }

 private:
  std::map<ActionId, std::vector<MonitorSample>> entries_;
};

// Collapse monitoring samples into [w_min, w_max] bounds: mean after
// discarding the first sample per bucket (kept when it is the only one),
// clamped so w_min <= w_max. Throws numerical_error when a required bucket
// is empty.
TimingProfile aggregate_monitoring(const MonitorLog& log);

}  // namespace pipefreeze
