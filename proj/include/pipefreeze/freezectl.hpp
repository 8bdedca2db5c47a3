#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <vector>

#include "pipefreeze/timing.hpp"
#include "pipefreeze/types.hpp"

namespace pipefreeze {

// Step boundaries of the freezing controller. T_w/T_m/T_f are the last steps
// of warm-up, monitoring and the progressive ramp; the monitoring window is
// halved at T_mid between upper- and lower-bound passes.
struct PhasePlan {
  int t_warmup{0};
  int t_monitor{0};
  int t_freeze{0};
  int t_total{0};

  int t_mid() const { return t_warmup + (t_monitor - t_warmup + 1) / 2; }
};

void validate_phase_plan(const PhasePlan& plan);

enum class Phase { Warmup, MonitorUpper, MonitorLower, Solve, ProgressiveFreeze, StableFreeze };

std::string to_string(Phase phase);

Phase phase_of(int t, const PhasePlan& plan);

// Ramped freeze ratio for t > T_m: min{r, r * (t - T_m) / (T_f - T_m)};
// a zero-length ramp returns r immediately.
double actual_freeze_ratio(int t, const PhasePlan& plan, double expected_ratio);

// Convenience wrapper used by the batch simulator: 0 before the solve step.
double afr_at(int t, const PhasePlan& plan, double expected_ratio);

// Bitset over the parameter indices of one stage.
class FreezeMask {
 public:
  FreezeMask() = default;
  explicit FreezeMask(int n_params) : n_(n_params), words_((n_params + 63) / 64, 0) {}

  int size() const { return n_; }
  bool test(int i) const { return (words_[i >> 6] >> (i & 63)) & 1; }
  void set(int i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  void reset(int i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }
  int popcount() const;
  std::vector<int> set_indices() const;
  std::vector<int> unset_indices() const;

  friend bool operator==(const FreezeMask&, const FreezeMask&) = default;

 private:
  int n_{0};
  std::vector<std::uint64_t> words_;
};

// Exact-count sampling: popcount = floor(ratio * n_params), uniform over all
// subsets of that size.
FreezeMask sample_mask(int n_params, double ratio, Rng& rng);

// Hybrid reconciliation: grow with uniform additions from the complement or
// shrink with uniform removals from the set positions until the popcount
// matches target_count exactly.
FreezeMask reconcile_mask(const FreezeMask& base, int target_count, Rng& rng);

// Relative gradient-norm change used by the prefix-freezing baseline.
double autofreeze_score(double norm_prev, double norm_cur);

// Extends the frozen prefix while each newly added layer's score lies in the
// lower `percentile`-th percentile (nearest-rank) of all layer scores.
int autofreeze_select(const std::vector<double>& scores, int frozen_prefix_len, double percentile);

// Per-parameter EMA state for the effective-perturbation score.
struct ApfState {
  Eigen::VectorXd ema;      // E
  Eigen::VectorXd ema_abs;  // E_abs
  double alpha{0.9};

  static ApfState zeros(Eigen::Index n, double alpha = 0.9);
};

// E <- alpha E + (1-alpha) delta, E_abs likewise on |delta|;
// score_j = |E_j| / E_abs_j (1 when E_abs_j == 0).
Eigen::VectorXd apf_update(ApfState& state, const Eigen::VectorXd& delta);

std::vector<int> apf_eligible(const Eigen::VectorXd& scores, double threshold);

struct MaskRecord {
  int step{0};
  int stage{0};
  ActionId action;
  int popcount{0};
  int n_params{0};
};

class MaskHistory {
 public:
  void add(int step, const ActionId& action, const FreezeMask& mask);
  // record without bit detail (deserialized histories)
  void add_record(const MaskRecord& record) { records_.push_back(record); }
  const std::vector<MaskRecord>& records() const { return records_; }
  // index frequency accumulation for per-parameter exports, keyed by stage
  const std::vector<std::vector<long>>& stage_counts() const { return stage_counts_; }
  const std::vector<long>& stage_draws() const { return stage_draws_; }

 private:
  std::vector<MaskRecord> records_;
  std::vector<std::vector<long>> stage_counts_;
  std::vector<long> stage_draws_;
};

// Drive the two-part monitoring window over the truth profile: no freezing
// while measuring upper bounds, full freezing for lower bounds, one sample
// per action per step.
MonitorLog run_monitoring(const TimingProfile& truth, int num_microbatches, int total_stages,
                          const PhasePlan& phases, const NoiseSpec& noise, Rng& rng);

// Step the controller across the whole horizon, resampling each backward
// action's mask independently per step with the phase-appropriate ratio.
MaskHistory run_freezing_masks(const std::map<ActionId, double>& expected_ratios,
                               const PhasePlan& phases, int num_microbatches, int total_stages,
                               int params_per_stage, Rng& rng);

}  // namespace pipefreeze
