#include "pipefreeze/timing.hpp"

#include <cmath>

namespace pipefreeze {

TimingProfile TimingProfile::from_stage_defaults(int num_microbatches, int total_stages,
                                                 const StageTiming& uniform) {
  return from_stage_defaults(num_microbatches,
                             std::vector<StageTiming>(static_cast<std::size_t>(total_stages), uniform));
}

TimingProfile TimingProfile::from_stage_defaults(int num_microbatches,
                                                 const std::vector<StageTiming>& per_stage) {
  TimingProfile profile;
  for (int s = 1; s <= static_cast<int>(per_stage.size()); ++s) {
    const auto& t = per_stage[s - 1];
    if (t.forward_ms < 0 || t.backward_act_ms < 0 || t.backward_param_ms < 0)
      throw config_error("stage timings must be nonnegative");
    for (int m = 1; m <= num_microbatches; ++m) {
      profile.set_bounds(forward_action(m, s), {t.forward_ms, t.forward_ms});
      profile.set_bounds(backward_action(m, s),
                         {t.backward_act_ms, t.backward_act_ms + t.backward_param_ms});
    }
  }
  return profile;
}

void TimingProfile::set_bounds(const ActionId& node, NodeBounds bounds) {
  if (!(0.0 <= bounds.w_min && bounds.w_min <= bounds.w_max))
    throw std::domain_error("bounds for " + to_string(node) + " must satisfy 0 <= w_min <= w_max");
  if (node.kind == ActionKind::Forward && bounds.w_min != bounds.w_max)
    throw std::domain_error("forward node " + to_string(node) + " must have w_min == w_max");
  bounds_[node] = bounds;
}

const NodeBounds& TimingProfile::bounds(const ActionId& node) const {
  auto it = bounds_.find(node);
  if (it == bounds_.end()) throw std::domain_error("no bounds for node " + to_string(node));
  return it->second;
}

bool TimingProfile::is_freezable(const ActionId& node) const {
  const auto& b = bounds(node);
  return b.w_max > b.w_min;
}

std::vector<double> TimingProfile::weights_at_ratio(const PipelineDag& dag, double ratio) const {
  std::vector<double> w(dag.node_count(), 0.0);
  for (int v = 0; v < dag.node_count(); ++v) {
    if (!dag.is_action(v)) continue;
    const auto& b = bounds(dag.action_at(v));
    w[v] = b.w_max - ratio * (b.w_max - b.w_min);
  }
  return w;
}

double sample_execution(const TimingProfile& profile, const ActionId& node, double ratio,
                        const NoiseSpec& noise, Rng& rng) {
  if (ratio < 0.0 || ratio > 1.0) throw std::domain_error("freeze ratio must be in [0, 1]");
  const auto& b = profile.bounds(node);
  const double w = b.w_max - ratio * (b.w_max - b.w_min);
  if (noise.sigma == 0.0) return w;
  return w * std::exp(noise.sigma * rng.gaussian());
}

double freeze_ratio_of(const TimingProfile& profile, const ActionId& node, double w) {
  const auto& b = profile.bounds(node);
  const double slack = 1e-9 * std::max(1.0, b.w_max);
  if (w < b.w_min - slack || w > b.w_max + slack)
    throw std::domain_error("duration " + std::to_string(w) + " outside bounds of " +
                            to_string(node));
  if (b.w_max <= b.w_min) return 0.0;
  const double r = 1.0 - (w - b.w_min) / (b.w_max - b.w_min);
  return std::min(1.0, std::max(0.0, r));
}

void MonitorLog::record(const ActionId& node, int step, double sample_ms, FreezeState state) {
  entries_[node].push_back({step, sample_ms, state});
}

namespace {

// Mean with warm-up discard: drop the first sample unless it is the only one.
double discarded_mean(const std::vector<double>& samples) {
  if (samples.size() == 1) return samples.front();
  double sum = 0.0;
  for (std::size_t i = 1; i < samples.size(); ++i) sum += samples[i];
  return sum / static_cast<double>(samples.size() - 1);
}

}  // namespace

TimingProfile aggregate_monitoring(const MonitorLog& log) {
  TimingProfile profile;
  for (const auto& [node, samples] : log.entries()) {
    std::vector<double> upper;
    std::vector<double> lower;
    for (const auto& s : samples)
      (s.freeze_state == FreezeState::None ? upper : lower).push_back(s.sample_ms);

    if (node.kind == ActionKind::Forward) {
      std::vector<double> all;
      all.reserve(samples.size());
      for (const auto& s : samples) all.push_back(s.sample_ms);
      if (all.empty())
        throw numerical_error("insufficient monitoring: no samples for " + to_string(node));
      const double w = discarded_mean(all);
      profile.set_bounds(node, {w, w});
      continue;
    }

    if (upper.empty())
      throw numerical_error("insufficient monitoring: no upper-bound samples for " +
                            to_string(node));
    if (lower.empty())
      throw numerical_error("insufficient monitoring: no lower-bound samples for " +
                            to_string(node));
    double w_max = discarded_mean(upper);
    double w_min = discarded_mean(lower);
    if (w_min > w_max) w_min = w_max;  // swap-free clamp under noise
    profile.set_bounds(node, {w_min, w_max});
  }
  return profile;
}

}  // namespace pipefreeze
