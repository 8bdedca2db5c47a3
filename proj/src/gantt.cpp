#include "pipefreeze/gantt.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace pipefreeze {

GanttTimeline build_gantt(const RankTimeline& timeline, const PipelineDag& dag,
                          const std::vector<double>& weights) {
  const auto start_times = longest_path_start_times(dag, weights);
  GanttTimeline result;
  result.num_ranks = static_cast<int>(timeline.rank_order.size());
  result.makespan_ms = start_times.makespan;
  for (int rank = 0; rank < result.num_ranks; ++rank) {
    for (const auto& action : timeline.rank_order[rank]) {
      const int v = dag.index_of(action);
      GanttBlock block;
      block.rank = rank;
      block.kind = action.kind;
      block.microbatch = action.microbatch;
      block.stage = action.stage;
      block.start_ms = start_times.start[v];
      block.end_ms = block.start_ms + weights[v];
      result.blocks.push_back(block);
    }
  }
  return result;
}

std::string gantt_to_json_text(const GanttTimeline& timeline) {
  nlohmann::json doc;
  doc["makespan_ms"] = timeline.makespan_ms;
  doc["num_ranks"] = timeline.num_ranks;
  doc["blocks"] = nlohmann::json::array();
  for (const auto& block : timeline.blocks) {
    doc["blocks"].push_back({{"rank", block.rank},
                             {"kind", block.kind == ActionKind::Forward ? "f" : "b"},
                             {"microbatch", block.microbatch},
                             {"stage", block.stage},
                             {"start_ms", block.start_ms},
                             {"end_ms", block.end_ms}});
  }
  return doc.dump(2) + "\n";
}

GanttTimeline gantt_from_json_text(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  GanttTimeline timeline;
  timeline.makespan_ms = doc.at("makespan_ms").get<double>();
  timeline.num_ranks = doc.at("num_ranks").get<int>();
  for (const auto& entry : doc.at("blocks")) {
    GanttBlock block;
    block.rank = entry.at("rank").get<int>();
    block.kind = entry.at("kind").get<std::string>() == "f" ? ActionKind::Forward
                                                            : ActionKind::Backward;
    block.microbatch = entry.at("microbatch").get<int>();
    block.stage = entry.at("stage").get<int>();
    block.start_ms = entry.at("start_ms").get<double>();
    block.end_ms = entry.at("end_ms").get<double>();
    timeline.blocks.push_back(block);
  }
  return timeline;
}

namespace {

std::string format_ms(double value) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << value;
  return out.str();
}

}  // namespace

std::string render_gantt_svg(const GanttTimeline& timeline, const std::string& title) {
  const double lane_height = 34.0;
  const double lane_gap = 6.0;
  const double left_margin = 64.0;
  const double top_margin = 42.0;
  const double chart_width = 960.0;
  const double axis_height = 30.0;
  const double scale = timeline.makespan_ms > 0.0 ? chart_width / timeline.makespan_ms : 1.0;
  const double height =
      top_margin + timeline.num_ranks * (lane_height + lane_gap) + axis_height;
  const double width = left_margin + chart_width + 24.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
      << "\" fill=\"#ffffff\"/>\n";
  svg << "<text x=\"" << left_margin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\""
      << " fill=\"#222222\">" << title << " (makespan " << format_ms(timeline.makespan_ms)
      << " ms)</text>\n";

  for (int rank = 0; rank < timeline.num_ranks; ++rank) {
    const double y = top_margin + rank * (lane_height + lane_gap);
    svg << "<rect x=\"" << left_margin << "\" y=\"" << y << "\" width=\"" << chart_width
        << "\" height=\"" << lane_height << "\" fill=\"#f3f3f3\"/>\n";
    svg << "<text x=\"8\" y=\"" << y + lane_height * 0.65
        << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222222\">rank " << rank
        << "</text>\n";
  }

  for (const auto& block : timeline.blocks) {
    const double x = left_margin + block.start_ms * scale;
    const double w = std::max(1.0, (block.end_ms - block.start_ms) * scale);
    const double y = top_margin + block.rank * (lane_height + lane_gap) + 2.0;
    const char* fill = block.kind == ActionKind::Forward ? "#4e79a7" : "#59a14f";
    svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\""
        << lane_height - 4.0 << "\" fill=\"" << fill
        << "\" stroke=\"#ffffff\" stroke-width=\"0.75\">";
    svg << "<title>" << (block.kind == ActionKind::Forward ? "f" : "b") << "(m="
        << block.microbatch << ", s=" << block.stage << ") [" << format_ms(block.start_ms) << ", "
        << format_ms(block.end_ms) << "] ms</title></rect>\n";
    if (w >= 18.0)
      svg << "<text x=\"" << x + w / 2 << "\" y=\"" << y + (lane_height - 4.0) * 0.68
          << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#ffffff\""
          << " text-anchor=\"middle\">" << block.microbatch << "</text>\n";
  }

  // time axis with ~8 round ticks
  const double axis_y = top_margin + timeline.num_ranks * (lane_height + lane_gap) + 4.0;
  svg << "<line x1=\"" << left_margin << "\" y1=\"" << axis_y << "\" x2=\""
      << left_margin + chart_width << "\" y2=\"" << axis_y
      << "\" stroke=\"#888888\" stroke-width=\"1\"/>\n";
  if (timeline.makespan_ms > 0.0) {
    const double raw_step = timeline.makespan_ms / 8.0;
    const double magnitude = std::pow(10.0, std::floor(std::log10(raw_step)));
    double tick = magnitude;
    for (double factor : {1.0, 2.0, 5.0, 10.0})
      if (magnitude * factor >= raw_step) {
        tick = magnitude * factor;
        break;
      }
    for (double t = 0.0; t <= timeline.makespan_ms + 1e-9; t += tick) {
      const double x = left_margin + t * scale;
      svg << "<line x1=\"" << x << "\" y1=\"" << axis_y << "\" x2=\"" << x << "\" y2=\""
          << axis_y + 5.0 << "\" stroke=\"#888888\" stroke-width=\"1\"/>\n";
      svg << "<text x=\"" << x << "\" y=\"" << axis_y + 18.0
          << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#444444\""
          << " text-anchor=\"middle\">" << format_ms(t) << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace pipefreeze
