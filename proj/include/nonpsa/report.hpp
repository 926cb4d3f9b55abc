#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "nonpsa/evaluation.hpp"
#include "nonpsa/segmentation.hpp"

namespace nonpsa {

/// One JSON object (no trailing newline) per assessed sample.
std::string result_json_line(const AssessmentResult& result, bool provenance);

/// Reads back the sample_id and final_score of `result_json_line` output.
std::vector<ScoredSample> parse_scores_jsonl(std::string_view text);
std::vector<ScoredSample> load_scores_jsonl(const std::filesystem::path& path);

/// Free-form key/value context written at the top of every report
/// (seed, split, configuration). Ordered for byte-stable output.
using ReportHeader = std::map<std::string, std::string>;

std::string config_summary(const InferenceConfig& config);
ReportHeader config_header(const InferenceConfig& config);

std::string report_json(const EvalReport& report, const ReportHeader& header);
std::string roc_csv(const EvalReport& report);
std::string histogram_csv(std::span<const HistogramBin> bins);
/// Self-contained SVG bar chart of the two class histograms.
std::string histogram_svg(std::span<const HistogramBin> bins);
std::string threshold_sweep_csv(std::span<const double> scores, std::span<const Label> labels,
                                std::span<const double> thresholds);

std::string ablation_csv(std::span<const AblationRow> rows, const ReportHeader& header);
std::string selection_csv(const SegmentCountSelection& selection);

/// Writes report.json, roc.csv, histogram.csv, histogram.svg and
/// thresholds.csv into `dir` (created if needed).
void write_report_dir(const std::filesystem::path& dir, const EvalReport& report,
                      std::span<const double> scores, std::span<const Label> labels,
                      const ReportHeader& header);

void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace nonpsa
