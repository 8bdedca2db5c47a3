#pragma once

#include <optional>
#include <string>

#include "pipefreeze/analysis.hpp"
#include "pipefreeze/freezectl.hpp"
#include "pipefreeze/lp.hpp"
#include "pipefreeze/sandbox.hpp"
#include "pipefreeze/schedule.hpp"
#include "pipefreeze/timing.hpp"

namespace pipefreeze {

struct RunConfig {
  PipelineConfig pipeline;
  int params_per_stage{10000};
  TimingProfile timing;
  PhasePlan phases;
  double r_max{0.0};
  LpOptions lp;
  std::uint64_t seed{0};
  double noise_sigma{0.0};
  std::optional<double> reference_gain_pct;
};

// Parses the versioned JSON config; `file` timing references resolve relative
// to the config's directory. Throws config_error naming the offending key.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir = ".");

std::string timing_profile_to_json_text(const TimingProfile& profile);
TimingProfile timing_profile_from_json_text(const std::string& text, int num_microbatches,
                                            int total_stages);

std::string freeze_plan_to_json_text(const FreezePlan& plan);
FreezePlan freeze_plan_from_json_text(const std::string& text);

struct ThroughputReport;
std::string throughput_report_to_json_text(const ThroughputReport& report);
ThroughputReport throughput_report_from_json_text(const std::string& text);

std::string mask_history_to_json_text(const MaskHistory& history);
std::vector<MaskRecord> mask_records_from_json_text(const std::string& text);
std::string mask_frequency_csv(const MaskHistory& history);

std::string scaling_table_to_csv(const struct ScalingTable& table);
std::string scaling_table_to_json_text(const struct ScalingTable& table);
std::string tta_report_to_json_text(const struct TtaReport& report);
TtaReport tta_report_from_json_text(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace pipefreeze
