#include "pipefreeze/freezectl.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace pipefreeze {

void validate_phase_plan(const PhasePlan& plan) {
  if (!(0 < plan.t_warmup && plan.t_warmup < plan.t_monitor && plan.t_monitor <= plan.t_freeze &&
        plan.t_freeze <= plan.t_total))
    throw config_error("phase plan must satisfy 0 < T_w < T_m <= T_f <= T_total");
}

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::Warmup: return "warmup";
    case Phase::MonitorUpper: return "monitor-upper";
    case Phase::MonitorLower: return "monitor-lower";
    case Phase::Solve: return "solve";
    case Phase::ProgressiveFreeze: return "progressive-freeze";
    case Phase::StableFreeze: return "stable-freeze";
  }
  return "unknown";
}

Phase phase_of(int t, const PhasePlan& plan) {
  if (t < 1 || t > plan.t_total)
    throw std::domain_error("step " + std::to_string(t) + " outside [1, " +
                            std::to_string(plan.t_total) + "]");
  if (t <= plan.t_warmup) return Phase::Warmup;
  if (t == plan.t_monitor) return Phase::Solve;
  if (t <= plan.t_mid()) return Phase::MonitorUpper;
  if (t < plan.t_monitor) return Phase::MonitorLower;
  if (t <= plan.t_freeze) return Phase::ProgressiveFreeze;
  return Phase::StableFreeze;
}

double actual_freeze_ratio(int t, const PhasePlan& plan, double expected_ratio) {
  if (expected_ratio < 0.0 || expected_ratio > 1.0)
    throw std::domain_error("expected ratio must be in [0, 1]");
  if (plan.t_freeze == plan.t_monitor) return expected_ratio;
  const double ramp =
      static_cast<double>(t - plan.t_monitor) / static_cast<double>(plan.t_freeze - plan.t_monitor);
  return std::min(expected_ratio, expected_ratio * ramp);
}

double afr_at(int t, const PhasePlan& plan, double expected_ratio) {
  if (t <= plan.t_monitor) return 0.0;
  return actual_freeze_ratio(t, plan, expected_ratio);
}

int FreezeMask::popcount() const {
  int total = 0;
  for (auto w : words_) total += std::popcount(w);
  return total;
}

std::vector<int> FreezeMask::set_indices() const {
  std::vector<int> out;
  for (int i = 0; i < n_; ++i)
    if (test(i)) out.push_back(i);
  return out;
}

std::vector<int> FreezeMask::unset_indices() const {
  std::vector<int> out;
  for (int i = 0; i < n_; ++i)
    if (!test(i)) out.push_back(i);
  return out;
}

namespace {

// Partial Fisher-Yates draw of `k` distinct indices from `pool`.
std::vector<int> draw_without_replacement(std::vector<int> pool, int k, Rng& rng) {
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<int>(rng.index_below(pool.size() - static_cast<std::size_t>(i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

FreezeMask sample_mask(int n_params, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio > 1.0) throw std::domain_error("mask ratio must be in [0, 1]");
  if (n_params < 0) throw std::domain_error("n_params must be nonnegative");
  FreezeMask mask(n_params);
  const int k = static_cast<int>(std::floor(ratio * n_params));
  if (k == 0) return mask;
  std::vector<int> pool(n_params);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i : draw_without_replacement(std::move(pool), k, rng)) mask.set(i);
  return mask;
}

FreezeMask reconcile_mask(const FreezeMask& base, int target_count, Rng& rng) {
  if (target_count < 0 || target_count > base.size())
    throw std::domain_error("target_count must be in [0, n_params]");
  const int have = base.popcount();
  if (have == target_count) return base;
  FreezeMask mask = base;
  if (have < target_count) {
    for (int i : draw_without_replacement(base.unset_indices(), target_count - have, rng))
      mask.set(i);
  } else {
    for (int i : draw_without_replacement(base.set_indices(), have - target_count, rng))
      mask.reset(i);
  }
  return mask;
}

double autofreeze_score(double norm_prev, double norm_cur) {
  if (norm_prev <= 0.0) throw std::domain_error("previous gradient norm must be positive");
  return std::abs(norm_prev - norm_cur) / norm_prev;
}

int autofreeze_select(const std::vector<double>& scores, int frozen_prefix_len, double percentile) {
  const int layers = static_cast<int>(scores.size());
  if (frozen_prefix_len < 0 || frozen_prefix_len > layers)
    throw std::domain_error("frozen prefix out of range");
  if (layers == 0 || frozen_prefix_len == layers) return frozen_prefix_len;

  // nearest-rank percentile over all layer scores
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  const int rank = std::max(1, static_cast<int>(std::ceil(percentile / 100.0 * layers)));
  const double threshold = sorted[std::min(rank, layers) - 1];

  int prefix = frozen_prefix_len;
  while (prefix < layers && scores[prefix] < threshold) ++prefix;
  return prefix;
}

ApfState ApfState::zeros(Eigen::Index n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("apf alpha must lie in (0, 1)");
  ApfState state;
  state.ema = Eigen::VectorXd::Zero(n);
  state.ema_abs = Eigen::VectorXd::Zero(n);
  state.alpha = alpha;
  return state;
}

Eigen::VectorXd apf_update(ApfState& state, const Eigen::VectorXd& delta) {
  if (delta.size() != state.ema.size())
    throw std::domain_error("apf update dimension mismatch");
  state.ema = state.alpha * state.ema + (1.0 - state.alpha) * delta;
  state.ema_abs = state.alpha * state.ema_abs + (1.0 - state.alpha) * delta.cwiseAbs();
  Eigen::VectorXd scores(delta.size());
  for (Eigen::Index i = 0; i < delta.size(); ++i)
    scores(i) = state.ema_abs(i) == 0.0 ? 1.0 : std::abs(state.ema(i)) / state.ema_abs(i);
  return scores;
}

std::vector<int> apf_eligible(const Eigen::VectorXd& scores, double threshold) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (scores(i) < threshold) out.push_back(static_cast<int>(i));
  return out;
}

MonitorLog run_monitoring(const TimingProfile& truth, int num_microbatches, int total_stages,
                          const PhasePlan& phases, const NoiseSpec& noise, Rng& rng) {
  MonitorLog log;
  for (int t = phases.t_warmup + 1; t <= phases.t_monitor; ++t) {
    const Phase phase = phase_of(t, phases);
    if (phase != Phase::MonitorUpper && phase != Phase::MonitorLower) continue;
    const bool upper = phase == Phase::MonitorUpper;
    for (int s = 1; s <= total_stages; ++s)
      for (int m = 1; m <= num_microbatches; ++m)
        for (auto kind : {ActionKind::Forward, ActionKind::Backward}) {
          const ActionId node{kind, m, s};
          const double sample = sample_execution(truth, node, upper ? 0.0 : 1.0, noise, rng);
          const FreezeState state = kind == ActionKind::Forward || upper ? FreezeState::None
                                                                         : FreezeState::Full;
          log.record(node, t, sample, state);
        }
  }
  return log;
}

MaskHistory run_freezing_masks(const std::map<ActionId, double>& expected_ratios,
                               const PhasePlan& phases, int num_microbatches, int total_stages,
                               int params_per_stage, Rng& rng) {
  MaskHistory history;
  for (int t = 1; t <= phases.t_total; ++t) {
    const Phase phase = phase_of(t, phases);
    for (int s = 1; s <= total_stages; ++s)
      for (int m = 1; m <= num_microbatches; ++m) {
        const ActionId node = backward_action(m, s);
        double ratio = 0.0;
        switch (phase) {
          case Phase::MonitorLower: ratio = 1.0; break;
          case Phase::ProgressiveFreeze:
          case Phase::StableFreeze: {
            auto it = expected_ratios.find(node);
            ratio = it == expected_ratios.end()
                        ? 0.0
                        : actual_freeze_ratio(t, phases, it->second);
            break;
          }
          default: break;  // warm-up, upper monitoring and the solve step
        }
        history.add(t, node, sample_mask(params_per_stage, ratio, rng));
      }
  }
  return history;
}

void MaskHistory::add(int step, const ActionId& action, const FreezeMask& mask) {
  records_.push_back({step, action.stage, action, mask.popcount(), mask.size()});
  const auto stage_index = static_cast<std::size_t>(action.stage - 1);
  if (stage_counts_.size() <= stage_index) {
    stage_counts_.resize(stage_index + 1);
    stage_draws_.resize(stage_index + 1, 0);
  }
  auto& counts = stage_counts_[stage_index];
  if (counts.size() < static_cast<std::size_t>(mask.size())) counts.resize(mask.size(), 0);
  for (int i = 0; i < mask.size(); ++i)
    if (mask.test(i)) ++counts[i];
  ++stage_draws_[stage_index];
}

}  // namespace pipefreeze
