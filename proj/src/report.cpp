#include "nonpsa/report.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "nonpsa/error.hpp"

namespace nonpsa {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string("undefined"); }

ordered_json optional_json(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json hits_json(const std::vector<SearchHit>& hits) {
  ordered_json arr = ordered_json::array();
  for (const auto& h : hits) {
    arr.push_back({{"id", h.sample_id}, {"sq_l2", h.squared_l2_distance}, {"label", to_int(h.label)}});
  }
  return arr;
}

}  // namespace

std::string result_json_line(const AssessmentResult& result, bool provenance) {
  ordered_json obj;
  obj["sample_id"] = result.sample_id;
  ordered_json layers = ordered_json::array();
  for (const auto& ls : result.layer_scores) {
    layers.push_back({{"layer", ls.layer}, {"score", ls.score}, {"ones", ls.ones}, {"total", ls.total}});
  }
  obj["layer_scores"] = layers;
  obj["final_score"] = result.final_score;
  obj["decision"] = to_int(result.decision);
  if (provenance) {
    ordered_json prov = ordered_json::array();
    for (const auto& p : result.provenance) {
      prov.push_back({{"layer", p.layer},
                      {"seg", hits_json(p.segment)},
                      {"utt", hits_json(p.utterance)},
                      {"utt_rev", hits_json(p.utterance_reversed)}});
    }
    obj["provenance"] = prov;
  }
  return obj.dump();
}

std::vector<ScoredSample> parse_scores_jsonl(std::string_view text) {
  std::vector<ScoredSample> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = json::parse(line);
      out.push_back({obj.at("sample_id").get<std::string>(), obj.at("final_score").get<double>()});
    } catch (const json::exception& e) {
      fail(ErrorCode::MalformedRecord, "scores line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ScoredSample> load_scores_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open scores file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scores_jsonl(ss.str());
}

std::string config_summary(const InferenceConfig& config) {
  std::ostringstream os;
  os << "layers=";
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    os << (i ? ":" : "") << config.layers[i];
  }
  os << " n=";
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    os << (i ? ":" : "") << config.n_for(config.layers[i]);
  }
  os << " k=" << config.k << " refinement=" << to_string(config.refinement)
     << " paths=" << to_string(config.paths) << " combine=" << to_string(config.combine)
     << " exclude_self=" << (config.exclude_self ? "true" : "false");
  return os.str();
}

ReportHeader config_header(const InferenceConfig& config) {
  return {{"config", config_summary(config)},
          {"seed", std::to_string(config.seed)},
          {"threshold", fmt(config.threshold)},
          {"std_convention", "population"},
          {"distance", "squared_l2"}};
}

std::string report_json(const EvalReport& report, const ReportHeader& header) {
  ordered_json obj;
  ordered_json head = ordered_json::object();
  for (const auto& [k, v] : header) head[k] = v;
  obj["header"] = head;
  obj["roc_auc"] = report.roc_auc;
  obj["sensitivity"] = optional_json(report.sensitivity);
  obj["specificity"] = optional_json(report.specificity);
  obj["threshold"] = report.threshold;
  obj["n_pos"] = report.n_pos;
  obj["n_neg"] = report.n_neg;
  obj["confusion"] = {{"tp", report.counts.tp}, {"fp", report.counts.fp},
                      {"tn", report.counts.tn}, {"fn", report.counts.fn}};
  const auto stats = [](const ClassStats& s) {
    return ordered_json{{"count", s.count}, {"mean", s.mean}, {"std", s.std}};
  };
  obj["score_stats"] = {{"symptomatic", stats(report.score_stats.symptomatic)},
                        {"asymptomatic", stats(report.score_stats.asymptomatic)}};
  return obj.dump(2) + "\n";
}

std::string roc_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "fpr,tpr\n";
  for (const auto& p : report.roc_points) os << fmt(p.fpr) << ',' << fmt(p.tpr) << '\n';
  return os.str();
}

std::string histogram_csv(std::span<const HistogramBin> bins) {
  std::ostringstream os;
  os << "bin_lower,bin_upper,asymptomatic,symptomatic\n";
  for (const auto& b : bins) {
    os << fmt(b.lower) << ',' << fmt(b.upper) << ',' << b.asymptomatic << ',' << b.symptomatic << '\n';
  }
  return os.str();
}

std::string histogram_svg(std::span<const HistogramBin> bins) {
  constexpr double width = 640;
  constexpr double height = 320;
  constexpr double margin = 40;
  std::size_t peak = 1;
  for (const auto& b : bins) peak = std::max({peak, b.asymptomatic, b.symptomatic});
  const double plot_w = width - 2 * margin;
  const double plot_h = height - 2 * margin;
  const double bin_w = bins.empty() ? plot_w : plot_w / static_cast<double>(bins.size());

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const double x = margin + bin_w * static_cast<double>(i);
    const double h_neg = plot_h * static_cast<double>(bins[i].asymptomatic) / static_cast<double>(peak);
    const double h_pos = plot_h * static_cast<double>(bins[i].symptomatic) / static_cast<double>(peak);
    os << "<rect x=\"" << x << "\" y=\"" << margin + plot_h - h_neg << "\" width=\"" << bin_w / 2
       << "\" height=\"" << h_neg << "\" fill=\"#4c72b0\"/>\n";
    os << "<rect x=\"" << x + bin_w / 2 << "\" y=\"" << margin + plot_h - h_pos << "\" width=\"" << bin_w / 2
       << "\" height=\"" << h_pos << "\" fill=\"#dd8452\"/>\n";
  }
  os << "<line x1=\"" << margin << "\" y1=\"" << margin + plot_h << "\" x2=\"" << margin + plot_w
     << "\" y2=\"" << margin + plot_h << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << margin << "\" y=\"" << height - 10 << "\" font-size=\"12\">0</text>\n";
  os << "<text x=\"" << margin + plot_w - 8 << "\" y=\"" << height - 10 << "\" font-size=\"12\">1</text>\n";
  os << "<text x=\"" << margin << "\" y=\"20\" font-size=\"12\" fill=\"#4c72b0\">asymptomatic</text>\n";
  os << "<text x=\"" << margin + 110 << "\" y=\"20\" font-size=\"12\" fill=\"#dd8452\">symptomatic</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string threshold_sweep_csv(std::span<const double> scores, std::span<const Label> labels,
                                std::span<const double> thresholds) {
  std::ostringstream os;
  os << "threshold,sensitivity,specificity\n";
  for (double t : thresholds) {
    const auto c = confusion_at(scores, labels, t);
    os << fmt(t) << ',' << fmt(c.sensitivity) << ',' << fmt(c.specificity) << '\n';
  }
  return os.str();
}

std::string ablation_csv(std::span<const AblationRow> rows, const ReportHeader& header) {
  std::ostringstream os;
  for (const auto& [k, v] : header) os << "# " << k << ": " << v << '\n';
  os << "axis,value,roc_auc,sensitivity,specificity,n_pos,n_neg,failed_samples,config\n";
  for (const auto& r : rows) {
    os << r.axis << ',' << r.value << ',' << fmt(r.report.roc_auc) << ',' << fmt(r.report.sensitivity) << ','
       << fmt(r.report.specificity) << ',' << r.report.n_pos << ',' << r.report.n_neg << ','
       << r.failed_samples << ",\"" << config_summary(r.config) << "\"\n";
  }
  return os.str();
}

std::string selection_csv(const SegmentCountSelection& selection) {
  std::ostringstream os;
  os << "candidate_n,mean_silhouette,sequences_skipped\n";
  for (const auto& c : selection.candidates) {
    os << c.n << ',' << (c.sequences_used ? fmt(c.mean_silhouette) : std::string("undefined")) << ','
       << c.sequences_skipped << '\n';
  }
  return os.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorCode::IoFailure, "failed writing '" + path.string() + "'");
}

void write_report_dir(const std::filesystem::path& dir, const EvalReport& report,
                      std::span<const double> scores, std::span<const Label> labels,
                      const ReportHeader& header) {
  std::filesystem::create_directories(dir);
  const auto bins = score_histogram(scores, labels);
  write_text_file(dir / "report.json", report_json(report, header));
  write_text_file(dir / "roc.csv", roc_csv(report));
  write_text_file(dir / "histogram.csv", histogram_csv(bins));
  write_text_file(dir / "histogram.svg", histogram_svg(bins));
  std::vector<double> thresholds;
  for (int i = 1; i < 20; ++i) thresholds.push_back(i / 20.0);
  write_text_file(dir / "thresholds.csv", threshold_sweep_csv(scores, labels, thresholds));
}

}  // namespace nonpsa
