#include "pipefreeze/analysis.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace pipefreeze {

double kappa(double r_max, double pd_min, double pd_max) {
  if (r_max < 0.0 || r_max > 1.0) throw std::domain_error("r_max must be in [0, 1]");
  if (!(0.0 < pd_min && pd_min <= pd_max))
    throw std::domain_error("makespan envelopes must satisfy 0 < pd_min <= pd_max");
  return (1.0 - r_max) + r_max * pd_min / pd_max;
}

TtaAssessment tta_ratio(double kappa_value, double p_eff) {
  if (!(p_eff > 0.0 && p_eff <= 1.0)) throw std::domain_error("p_eff must lie in (0, 1]");
  if (!(kappa_value > 0.0 && kappa_value <= 1.0))
    throw std::domain_error("kappa must lie in (0, 1]");
  return {kappa_value / p_eff, kappa_value < p_eff};
}

double average_freeze_ratio(const MaskHistory& history) {
  if (history.records().empty()) throw std::domain_error("mask history is empty");
  long frozen = 0, total = 0;
  for (const auto& record : history.records()) {
    frozen += record.popcount;
    total += record.n_params;
  }
  return total == 0 ? 0.0 : static_cast<double>(frozen) / static_cast<double>(total);
}

ThroughputReport build_report(const FreezePlan& plan, const MaskHistory* masks,
                              const TtaReport* sandbox,
                              std::optional<double> reference_gain_pct) {
  if (!(plan.makespan_floor <= plan.makespan_opt + 1e-9 &&
        plan.makespan_opt <= plan.makespan_base + 1e-9))
    throw std::domain_error("inconsistent plan makespans");

  if (masks != nullptr) {
    int plan_stages = 0;
    for (const auto& [node, r] : plan.ratios) plan_stages = std::max(plan_stages, node.stage);
    for (const auto& record : masks->records())
      if (record.stage > plan_stages)
        throw std::domain_error("mask history references stage " +
                                std::to_string(record.stage) + " beyond the plan");
  }

  ThroughputReport report;
  report.makespan_base_ms = plan.makespan_base;
  report.makespan_opt_ms = plan.makespan_opt;
  report.makespan_floor_ms = plan.makespan_floor;
  report.reduction_pct = 100.0 * (1.0 - plan.makespan_opt / plan.makespan_base);
  report.throughput_gain_pct = 100.0 * (plan.makespan_base / plan.makespan_opt - 1.0);
  report.r_max = plan.r_max;
  report.stage_avg_freeze_ratio = plan.stage_avg_ratio;
  report.kappa = kappa(plan.r_max, plan.makespan_floor, plan.makespan_base);
  report.reference_gain_pct = reference_gain_pct;

  if (masks != nullptr) report.avg_freeze_ratio = average_freeze_ratio(*masks);
  if (sandbox != nullptr) {
    report.p_eff = sandbox->p_eff_hat;
    report.predicted_tta_ratio = tta_ratio(report.kappa, sandbox->p_eff_hat).ratio;
  } else if (report.avg_freeze_ratio && *report.avg_freeze_ratio < 1.0) {
    // proxy: uniform random selection makes 1 - avg freeze ratio the mean
    // update probability
    report.p_eff = 1.0 - *report.avg_freeze_ratio;
    report.predicted_tta_ratio = tta_ratio(report.kappa, *report.p_eff).ratio;
  }
  return report;
}

std::string report_text(const ThroughputReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);

  double avg = report.avg_freeze_ratio.value_or(0.0);
  if (!report.avg_freeze_ratio && !report.stage_avg_freeze_ratio.empty()) {
    for (const auto& [stage, ratio] : report.stage_avg_freeze_ratio) avg += ratio;
    avg /= static_cast<double>(report.stage_avg_freeze_ratio.size());
  }
  out << "avg frz. ratio | throughput delta\n";
  out << "---------------+-----------------\n";
  out << std::setw(14) << avg << " | " << std::setw(15)
      << ("+" + std::to_string(report.throughput_gain_pct) + " %") << "\n\n";

  out << "stage | avg frz. ratio\n";
  out << "------+---------------\n";
  for (const auto& [stage, ratio] : report.stage_avg_freeze_ratio)
    out << std::setw(5) << stage << " | " << std::setw(13) << ratio << "\n";
  out << "\n";
  out << "makespan base/opt/floor (ms): " << report.makespan_base_ms << " / "
      << report.makespan_opt_ms << " / " << report.makespan_floor_ms << "\n";
  out << "batch-time reduction:         " << report.reduction_pct << " %\n";
  out << "throughput gain:              " << report.throughput_gain_pct << " %\n";
  out << "kappa (per-step time ratio):  " << report.kappa << "\n";
  if (report.avg_freeze_ratio)
    out << "avg freeze ratio (measured):  " << *report.avg_freeze_ratio << "\n";
  if (report.p_eff) out << "p_eff:                        " << *report.p_eff << "\n";
  if (report.predicted_tta_ratio)
    out << "predicted tta ratio:          " << *report.predicted_tta_ratio << "\n";
  if (report.reference_gain_pct)
    out << "reference gain annotation:    " << *report.reference_gain_pct << " %\n";
  return out.str();
}

}  // namespace pipefreeze
