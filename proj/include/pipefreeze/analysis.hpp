#pragma once

#include <map>
#include <optional>
#include <string>

#include "pipefreeze/freezectl.hpp"
#include "pipefreeze/lp.hpp"
#include "pipefreeze/sandbox.hpp"

namespace pipefreeze {

// Per-step time-reduction factor: (1 - r_max) + r_max * pd_min / pd_max.
double kappa(double r_max, double pd_min, double pd_max);

struct TtaAssessment {
  double ratio{1.0};
  bool improves{false};  // kappa < p_eff
};

TtaAssessment tta_ratio(double kappa_value, double p_eff);

// Mean frozen fraction over all recorded (step, action) cells.
double average_freeze_ratio(const MaskHistory& history);

struct ThroughputReport {
  double makespan_base_ms{0.0};
  double makespan_opt_ms{0.0};
  double makespan_floor_ms{0.0};
  double reduction_pct{0.0};        // 100 * (1 - opt/base)
  double throughput_gain_pct{0.0};  // 100 * (base/opt - 1)
  double r_max{0.0};
  std::map<int, double> stage_avg_freeze_ratio;
  double kappa{1.0};
  std::optional<double> avg_freeze_ratio;   // from mask history when present
  std::optional<double> p_eff;              // from sandbox results when present
  std::optional<double> predicted_tta_ratio;
  std::optional<double> reference_gain_pct;  // user-supplied annotation, never computed
};

ThroughputReport build_report(const FreezePlan& plan, const MaskHistory* masks = nullptr,
                              const TtaReport* sandbox = nullptr,
                              std::optional<double> reference_gain_pct = std::nullopt);

// Plain-text summary table (one row per stage plus totals).
std::string report_text(const ThroughputReport& report);

}  // namespace pipefreeze
