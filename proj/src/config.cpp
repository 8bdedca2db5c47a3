#include "pipefreeze/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pipefreeze {

namespace {

using nlohmann::json;

const json& require(const json& doc, const char* key, const std::string& context) {
  if (!doc.is_object() || !doc.contains(key))
    throw config_error("missing key '" + context + key + "'");
  return doc.at(key);
}

double number_at(const json& doc, const char* key, const std::string& context) {
  const auto& value = require(doc, key, context);
  if (!value.is_number()) throw config_error("key '" + context + key + "' must be a number");
  return value.get<double>();
}

int int_at(const json& doc, const char* key, const std::string& context) {
  const auto& value = require(doc, key, context);
  if (!value.is_number_integer())
    throw config_error("key '" + context + key + "' must be an integer");
  return value.get<int>();
}

StageTiming stage_timing_from(const json& doc, const std::string& context) {
  StageTiming timing;
  timing.forward_ms = number_at(doc, "forward_ms", context);
  timing.backward_act_ms = number_at(doc, "backward_act_ms", context);
  timing.backward_param_ms = number_at(doc, "backward_param_ms", context);
  return timing;
}

TimingProfile timing_from_json(const json& doc, int num_microbatches, int total_stages,
                               const std::string& base_dir);

TimingProfile timing_from_file(const std::string& path, int num_microbatches, int total_stages,
                               const std::string& base_dir) {
  const auto resolved = std::filesystem::path(base_dir) / path;
  if (!std::filesystem::exists(resolved))
    throw config_error("timing.file '" + resolved.string() + "' does not exist");
  json doc;
  try {
    doc = json::parse(read_text_file(resolved.string()));
  } catch (const json::parse_error& e) {
    throw config_error("timing file '" + resolved.string() + "': " + e.what());
  }
  return timing_from_json(doc, num_microbatches, total_stages, base_dir);
}

TimingProfile timing_from_json(const json& doc, int num_microbatches, int total_stages,
                               const std::string& base_dir) {
  if (doc.contains("file"))
    return timing_from_file(doc.at("file").get<std::string>(), num_microbatches, total_stages,
                            base_dir);
  if (doc.contains("per_stage")) {
    const auto& per_stage = doc.at("per_stage");
    if (per_stage.is_array()) {
      if (static_cast<int>(per_stage.size()) != total_stages)
        throw config_error("timing.per_stage array must have one entry per stage (" +
                           std::to_string(total_stages) + ")");
      std::vector<StageTiming> stages;
      for (std::size_t i = 0; i < per_stage.size(); ++i)
        stages.push_back(stage_timing_from(per_stage[i],
                                           "timing.per_stage[" + std::to_string(i) + "]."));
      return TimingProfile::from_stage_defaults(num_microbatches, stages);
    }
    return TimingProfile::from_stage_defaults(num_microbatches, total_stages,
                                              stage_timing_from(per_stage, "timing.per_stage."));
  }
  if (doc.contains("per_node")) {
    TimingProfile profile;
    const auto& nodes = doc.at("per_node");
    if (!nodes.is_array()) throw config_error("key 'timing.per_node' must be an array");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const std::string context = "timing.per_node[" + std::to_string(i) + "].";
      const auto& entry = nodes[i];
      const auto kind_text = require(entry, "kind", context).get<std::string>();
      if (kind_text != "f" && kind_text != "b")
        throw config_error("key '" + context + "kind' must be \"f\" or \"b\"");
      ActionId node{kind_text == "f" ? ActionKind::Forward : ActionKind::Backward,
                    int_at(entry, "m", context), int_at(entry, "s", context)};
      profile.set_bounds(node, {number_at(entry, "w_min", context),
                                number_at(entry, "w_max", context)});
    }
    for (int s = 1; s <= total_stages; ++s)
      for (int m = 1; m <= num_microbatches; ++m)
        for (auto kind : {ActionKind::Forward, ActionKind::Backward})
          if (!profile.has({kind, m, s}))
            throw config_error("timing.per_node misses node " + to_string(ActionId{kind, m, s}));
    return profile;
  }
  throw config_error("timing must provide 'per_stage', 'per_node', or 'file'");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("config is not valid json: ") + e.what());
  }
  if (int_at(doc, "version", "") != 1) throw config_error("key 'version' must be 1");

  RunConfig config;
  const auto& pipeline = require(doc, "pipeline", "");
  config.pipeline.schedule_kind =
      schedule_kind_from_string(require(pipeline, "schedule", "pipeline.").get<std::string>());
  config.pipeline.num_ranks = int_at(pipeline, "num_ranks", "pipeline.");
  config.pipeline.stages_per_rank = int_at(pipeline, "stages_per_rank", "pipeline.");
  config.pipeline.num_microbatches = int_at(pipeline, "num_microbatches", "pipeline.");
  if (pipeline.contains("params_per_stage"))
    config.params_per_stage = int_at(pipeline, "params_per_stage", "pipeline.");
  validate_config(config.pipeline);

  config.timing = timing_from_json(require(doc, "timing", ""), config.pipeline.num_microbatches,
                                   config.pipeline.total_stages(), base_dir);

  const auto& phases = require(doc, "phases", "");
  config.phases.t_warmup = int_at(phases, "t_warmup", "phases.");
  config.phases.t_monitor = int_at(phases, "t_monitor", "phases.");
  config.phases.t_freeze = int_at(phases, "t_freeze", "phases.");
  config.phases.t_total = int_at(phases, "t_total", "phases.");
  validate_phase_plan(config.phases);

  config.r_max = number_at(doc, "r_max", "");
  if (config.r_max < 0.0 || config.r_max > 1.0)
    throw config_error("key 'r_max' must lie in [0, 1]");

  if (doc.contains("lambda_mode")) {
    const auto mode = doc.at("lambda_mode").get<std::string>();
    if (mode == "lexicographic") config.lp.lambda_mode = LambdaMode::Lexicographic;
    else if (mode == "explicit") config.lp.lambda_mode = LambdaMode::Explicit;
    else throw config_error("key 'lambda_mode' must be \"lexicographic\" or \"explicit\"");
  }
  if (doc.contains("lambda")) config.lp.lambda = number_at(doc, "lambda", "");
  if (doc.contains("budget_over_all_stage_nodes"))
    config.lp.budget_over_all_stage_nodes = doc.at("budget_over_all_stage_nodes").get<bool>();
  if (doc.contains("seed")) config.seed = doc.at("seed").get<std::uint64_t>();
  if (doc.contains("noise_sigma")) {
    config.noise_sigma = number_at(doc, "noise_sigma", "");
    if (config.noise_sigma < 0.0) throw config_error("key 'noise_sigma' must be nonnegative");
  }
  if (doc.contains("reference_gain_pct") && !doc.at("reference_gain_pct").is_null())
    config.reference_gain_pct = number_at(doc, "reference_gain_pct", "");
  return config;
}

RunConfig load_run_config(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw config_error("config file '" + path + "' does not exist");
  const auto base = std::filesystem::path(path).parent_path();
  return parse_run_config(read_text_file(path), base.empty() ? "." : base.string());
}

std::string timing_profile_to_json_text(const TimingProfile& profile) {
  json nodes = json::array();
  for (const auto& [node, bounds] : profile.all())
    nodes.push_back({{"kind", node.kind == ActionKind::Forward ? "f" : "b"},
                     {"m", node.microbatch},
                     {"s", node.stage},
                     {"w_min", bounds.w_min},
                     {"w_max", bounds.w_max}});
  return json{{"per_node", nodes}}.dump(2) + "\n";
}

TimingProfile timing_profile_from_json_text(const std::string& text, int num_microbatches,
                                            int total_stages) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("timing profile is not valid json: ") + e.what());
  }
  return timing_from_json(doc, num_microbatches, total_stages, ".");
}

std::string freeze_plan_to_json_text(const FreezePlan& plan) {
  json ratios = json::array();
  for (const auto& [node, r] : plan.ratios)
    ratios.push_back({{"m", node.microbatch}, {"s", node.stage}, {"r", r}});
  json doc{{"makespan_opt", plan.makespan_opt},
           {"makespan_base", plan.makespan_base},
           {"makespan_floor", plan.makespan_floor},
           {"r_max", plan.r_max},
           {"ratios", ratios}};
  return doc.dump(2) + "\n";
}

FreezePlan freeze_plan_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("plan is not valid json: ") + e.what());
  }
  FreezePlan plan;
  plan.makespan_opt = number_at(doc, "makespan_opt", "");
  plan.makespan_base = number_at(doc, "makespan_base", "");
  plan.makespan_floor = number_at(doc, "makespan_floor", "");
  if (doc.contains("r_max")) plan.r_max = number_at(doc, "r_max", "");
  std::map<int, std::pair<double, int>> stage_acc;
  for (const auto& entry : require(doc, "ratios", "")) {
    const ActionId node = backward_action(int_at(entry, "m", "ratios[]."),
                                          int_at(entry, "s", "ratios[]."));
    const double r = number_at(entry, "r", "ratios[].");
    plan.ratios[node] = r;
    auto& [sum, count] = stage_acc[node.stage];
    sum += r;
    ++count;
  }
  for (const auto& [stage, acc] : stage_acc)
    plan.stage_avg_ratio[stage] = acc.first / acc.second;
  return plan;
}

namespace {

json optional_number(const std::optional<double>& value) {
  return value ? json(*value) : json(nullptr);
}

std::optional<double> optional_from(const json& doc, const char* key) {
  if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
  return doc.at(key).get<double>();
}

}  // namespace

std::string throughput_report_to_json_text(const ThroughputReport& report) {
  json stages = json::object();
  for (const auto& [stage, ratio] : report.stage_avg_freeze_ratio)
    stages[std::to_string(stage)] = ratio;
  json doc{{"makespan_base_ms", report.makespan_base_ms},
           {"makespan_opt_ms", report.makespan_opt_ms},
           {"makespan_floor_ms", report.makespan_floor_ms},
           {"reduction_pct", report.reduction_pct},
           {"throughput_gain_pct", report.throughput_gain_pct},
           {"r_max", report.r_max},
           {"kappa", report.kappa},
           {"stage_avg_freeze_ratio", stages},
           {"avg_freeze_ratio", optional_number(report.avg_freeze_ratio)},
           {"p_eff", optional_number(report.p_eff)},
           {"predicted_tta_ratio", optional_number(report.predicted_tta_ratio)},
           {"reference_gain_pct", optional_number(report.reference_gain_pct)}};
  return doc.dump(2) + "\n";
}

ThroughputReport throughput_report_from_json_text(const std::string& text) {
  const auto doc = json::parse(text);
  ThroughputReport report;
  report.makespan_base_ms = doc.at("makespan_base_ms").get<double>();
  report.makespan_opt_ms = doc.at("makespan_opt_ms").get<double>();
  report.makespan_floor_ms = doc.at("makespan_floor_ms").get<double>();
  report.reduction_pct = doc.at("reduction_pct").get<double>();
  report.throughput_gain_pct = doc.at("throughput_gain_pct").get<double>();
  report.r_max = doc.at("r_max").get<double>();
  report.kappa = doc.at("kappa").get<double>();
  for (const auto& [key, value] : doc.at("stage_avg_freeze_ratio").items())
    report.stage_avg_freeze_ratio[std::stoi(key)] = value.get<double>();
  report.avg_freeze_ratio = optional_from(doc, "avg_freeze_ratio");
  report.p_eff = optional_from(doc, "p_eff");
  report.predicted_tta_ratio = optional_from(doc, "predicted_tta_ratio");
  report.reference_gain_pct = optional_from(doc, "reference_gain_pct");
  return report;
}

std::string mask_history_to_json_text(const MaskHistory& history) {
  json rows = json::array();
  for (const auto& record : history.records())
    rows.push_back({{"step", record.step},
                    {"stage", record.stage},
                    {"action", to_string(record.action)},
                    {"popcount", record.popcount},
                    {"n_params", record.n_params}});
  return json{{"rows", rows}}.dump(2) + "\n";
}

std::vector<MaskRecord> mask_records_from_json_text(const std::string& text) {
  const auto doc = json::parse(text);
  std::vector<MaskRecord> records;
  for (const auto& entry : doc.at("rows")) {
    MaskRecord record;
    record.step = entry.at("step").get<int>();
    record.stage = entry.at("stage").get<int>();
    record.popcount = entry.at("popcount").get<int>();
    record.n_params = entry.at("n_params").get<int>();
    const auto name = entry.at("action").get<std::string>();
    const auto comma = name.find(',');
    record.action = {name[0] == 'f' ? ActionKind::Forward : ActionKind::Backward,
                     std::stoi(name.substr(2, comma - 2)),
                     std::stoi(name.substr(comma + 1, name.size() - comma - 2))};
    records.push_back(record);
  }
  return records;
}

std::string mask_frequency_csv(const MaskHistory& history) {
  std::ostringstream out;
  out << "stage,param_index,freeze_frequency\n";
  for (std::size_t s = 0; s < history.stage_counts().size(); ++s) {
    const long draws = history.stage_draws()[s];
    if (draws == 0) continue;
    const auto& counts = history.stage_counts()[s];
    for (std::size_t j = 0; j < counts.size(); ++j)
      out << (s + 1) << "," << j << ","
          << static_cast<double>(counts[j]) / static_cast<double>(draws) << "\n";
  }
  return out.str();
}

std::string scaling_table_to_csv(const ScalingTable& table) {
  std::ostringstream out;
  out << "p,trials,mean_T_eps,ratio,p_eff_hat\n";
  for (const auto& row : table.rows)
    out << row.p << "," << row.trials_used << "," << row.mean_t_eps << ","
        << row.ratio_vs_baseline << "," << row.p_eff_hat << "\n";
  return out.str();
}

std::string scaling_table_to_json_text(const ScalingTable& table) {
  json rows = json::array();
  for (const auto& row : table.rows)
    rows.push_back({{"p", row.p},
                    {"trials", row.trials_used},
                    {"not_reached", row.not_reached},
                    {"mean_T_eps", row.mean_t_eps},
                    {"ratio", row.ratio_vs_baseline},
                    {"p_eff_hat", row.p_eff_hat}});
  return json{{"eps", table.eps}, {"baseline_mean_T_eps", table.baseline_mean_t}, {"rows", rows}}
             .dump(2) +
         "\n";
}

std::string tta_report_to_json_text(const TtaReport& report) {
  json doc{{"kappa", report.kappa},
           {"p_eff_hat", report.p_eff_hat},
           {"mean_T_ours", report.mean_t_ours},
           {"mean_T_base", report.mean_t_base},
           {"measured_ratio", report.measured_ratio},
           {"predicted_ratio", report.predicted_ratio},
           {"trials_used", report.trials_used},
           {"not_reached", report.not_reached}};
  return doc.dump(2) + "\n";
}

TtaReport tta_report_from_json_text(const std::string& text) {
  const auto doc = json::parse(text);
  TtaReport report;
  report.kappa = doc.at("kappa").get<double>();
  report.p_eff_hat = doc.at("p_eff_hat").get<double>();
  report.mean_t_ours = doc.at("mean_T_ours").get<double>();
  report.mean_t_base = doc.at("mean_T_base").get<double>();
  report.measured_ratio = doc.at("measured_ratio").get<double>();
  report.predicted_ratio = doc.at("predicted_ratio").get<double>();
  report.trials_used = doc.at("trials_used").get<int>();
  report.not_reached = doc.at("not_reached").get<int>();
  return report;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot read file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write file '" + path + "'");
  out << content;
}

}  // namespace pipefreeze
