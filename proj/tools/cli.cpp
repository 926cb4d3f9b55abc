#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nonpsa/datastore.hpp"
#include "nonpsa/error.hpp"
#include "nonpsa/evaluation.hpp"
#include "nonpsa/inference.hpp"
#include "nonpsa/ingest.hpp"
#include "nonpsa/parallel.hpp"
#include "nonpsa/report.hpp"
#include "nonpsa/segmentation.hpp"

namespace nonpsa::cli {

namespace {

namespace fs = std::filesystem;

constexpr const char* kVersion = "1.0.0";

// Raised for malformed flag values; maps to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename F>
auto from_flags(F&& parse) {
  try {
    return parse();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

template <typename Int>
std::vector<Int> parse_int_list(std::string_view text, std::string_view what) {
  std::vector<Int> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const auto item = text.substr(start, end - start);
    Int v{};
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size()) {
      fail(ErrorCode::InvalidArgument, "bad " + std::string(what) + " entry '" + std::string(item) + "'");
    }
    out.push_back(v);
    start = end + 1;
  }
  if (out.empty()) fail(ErrorCode::InvalidArgument, "empty " + std::string(what) + " list");
  return out;
}

/// "a-b" range or comma list.
std::vector<std::size_t> parse_candidates(std::string_view text) {
  if (const auto dash = text.find('-'); dash != std::string_view::npos) {
    const auto lo = parse_int_list<std::size_t>(text.substr(0, dash), "candidate");
    const auto hi = parse_int_list<std::size_t>(text.substr(dash + 1), "candidate");
    if (lo.size() != 1 || hi.size() != 1 || lo[0] > hi[0]) {
      fail(ErrorCode::InvalidArgument, "bad candidate range '" + std::string(text) + "'");
    }
    std::vector<std::size_t> out;
    for (auto n = lo[0]; n <= hi[0]; ++n) out.push_back(n);
    return out;
  }
  return parse_int_list<std::size_t>(text, "candidate");
}

fs::path snapshot_path(const fs::path& dir, LayerChannel lc) {
  return dir / ("layer" + std::to_string(lc.layer) + "_" + std::string(to_string(lc.channel)) + ".npds");
}

std::vector<fs::path> list_snapshots(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::IoFailure, "datastore directory '" + dir.string() + "' not found");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".npds") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

DatastoreSet load_store_set(const fs::path& dir) {
  DatastoreSet set;
  for (const auto& p : list_snapshots(dir)) set.put(load_snapshot(p));
  return set;
}

std::string stats_line(const Datastore& ds, const std::string& name) {
  std::size_t ones = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) ones += ds.label_at(i) == Label::Symptomatic;
  std::ostringstream os;
  os << name << ": layer=" << ds.layer() << " channel=" << to_string(ds.channel()) << " N=" << ds.size()
     << " D=" << ds.dim() << " symptomatic=" << ones << " asymptomatic=" << ds.size() - ones;
  return os.str();
}

const SampleRecord& find_record(const std::vector<SampleRecord>& records, const std::string& id) {
  const auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.sample_id == id; });
  if (it == records.end()) fail(ErrorCode::MissingField, "sample '" + id + "' not in manifest");
  return *it;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "' for writing");
  return out;
}

// Inference flags shared by assess / evaluate / ablate. Preset first, then
// any explicitly given flag overrides it.
struct InferenceFlags {
  std::string preset = "covid19";
  std::string layers;
  std::string n;
  std::size_t k = 5;
  std::string refinement;
  std::string paths = "all";
  double threshold = 0.5;
  bool exclude_self = false;
  std::string combine = "pooled";
  std::uint64_t seed = 17;
  std::size_t max_iterations = 300;
  CLI::Option* k_opt = nullptr;
  CLI::Option* threshold_opt = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--preset", preset, "Default configuration: covid19 or coswara")
        ->check(CLI::IsMember({"covid19", "coswara"}))
        ->capture_default_str();
    app->add_option("--layers", layers, "Comma-separated layer indices (default 3,4,5)");
    app->add_option("--n", n, "Segment count per layer, or one value for all layers");
    k_opt = app->add_option("--k", k, "Neighbours per segment query")->check(CLI::PositiveNumber);
    app->add_option("--refinement", refinement, "none|age|sex (preset decides by default)")
        ->check(CLI::IsMember({"none", "raw", "age", "sex"}));
    app->add_option("--paths", paths, "all, or a comma list of seg,utt,utt-rev")->capture_default_str();
    threshold_opt = app->add_option("--threshold", threshold, "Decision threshold (strict >)")
                        ->capture_default_str();
    app->add_flag("--exclude-self", exclude_self, "Ignore the query sample's own datastore entries");
    app->add_option("--combine", combine, "pooled|mean")
        ->check(CLI::IsMember({"pooled", "mean"}))
        ->capture_default_str();
    app->add_option("--seed", seed, "Root seed for segmentation")->capture_default_str();
    app->add_option("--max-iterations", max_iterations, "k-means iteration cap")->capture_default_str();
  }

  [[nodiscard]] InferenceConfig resolve() const {
    auto cfg = preset == "coswara" ? InferenceConfig::coswara() : InferenceConfig::covid19();
    if (!layers.empty()) cfg.layers = parse_int_list<std::uint32_t>(layers, "layer");
    if (!n.empty()) {
      const auto counts = parse_int_list<std::size_t>(n, "segment count");
      if (counts.size() != 1 && counts.size() != cfg.layers.size()) {
        fail(ErrorCode::InvalidArgument, "--n needs one value or one per layer");
      }
      cfg.n_per_layer.clear();
      for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        cfg.n_per_layer[cfg.layers[i]] = counts.size() == 1 ? counts[0] : counts[i];
      }
    }
    cfg.k = k;
    if (!refinement.empty()) cfg.refinement = parse_refinement(refinement);
    cfg.paths = parse_paths(paths);
    cfg.threshold = threshold;
    cfg.exclude_self = exclude_self;
    cfg.combine = parse_combine(combine);
    cfg.seed = seed;
    cfg.kmeans.max_iterations = max_iterations;
    cfg.validate();
    return cfg;
  }
};

struct Options {
  fs::path manifest;
  fs::path store_dir = "stores";
  std::string split;
  std::string layer_list = "3,4,5";
  std::string channel = "both";
  std::string id;
  std::size_t jobs = 1;
  fs::path out;
  fs::path report_dir;
  fs::path scores;
  bool provenance = false;
  bool strict = false;
  std::string candidates;
  std::string axes = "paths,refinement,layers";
  std::uint64_t seed = 17;
  std::uint32_t layer = 3;
  InferenceFlags inference;
};

Split split_or(const std::string& text, Split fallback) { return text.empty() ? fallback : parse_split(text); }

std::vector<SampleRecord> records_for(const Options& o, Split fallback) {
  return filter_split(load_manifest(o.manifest), split_or(o.split, fallback));
}

void report_errors(const std::vector<SampleError>& errors, std::ostream& err) {
  for (const auto& e : errors) {
    err << "nonpsa: sample error [" << to_string(e.code) << "] " << e.sample_id << ": " << e.message << '\n';
  }
}

int cmd_build(const Options& o, std::ostream& out) {
  const auto records = records_for(o, Split::Train);
  std::vector<Channel> channels;
  if (o.channel == "both" || o.channel == "original") channels.push_back(Channel::Original);
  if (o.channel == "both" || o.channel == "reversed") channels.push_back(Channel::Reversed);
  fs::create_directories(o.store_dir);
  const auto layers = from_flags([&] { return parse_int_list<std::uint32_t>(o.layer_list, "layer"); });
  for (const auto layer : layers) {
    for (const auto channel : channels) {
      const LayerChannel lc{layer, channel};
      std::vector<std::pair<SampleRecord, FeatureSequence>> samples(records.size());
      parallel_for(records.size(), o.jobs, [&](std::size_t i) {
        samples[i] = {records[i], load_features(records[i], lc)};
      });
      const auto ds = Datastore::build(layer, channel, samples);
      const auto path = snapshot_path(o.store_dir, lc);
      save_snapshot(ds, path);
      out << stats_line(ds, path.string()) << '\n';
    }
  }
  return kExitOk;
}

int cmd_add(const Options& o, std::ostream& out) {
  const auto records = load_manifest(o.manifest);
  const auto& record = find_record(records, o.id);
  // Validate every store before touching any file.
  std::vector<std::pair<fs::path, Datastore>> updated;
  for (const auto& path : list_snapshots(o.store_dir)) {
    auto ds = load_snapshot(path);
    ds.add(record, load_features(record, ds.layer_channel()));
    updated.emplace_back(path, std::move(ds));
  }
  for (const auto& [path, ds] : updated) {
    save_snapshot(ds, path);
    out << stats_line(ds, path.string()) << '\n';
  }
  return kExitOk;
}

int cmd_remove(const Options& o, std::ostream& out) {
  std::vector<std::pair<fs::path, Datastore>> updated;
  for (const auto& path : list_snapshots(o.store_dir)) {
    auto ds = load_snapshot(path);
    if (ds.remove(o.id)) updated.emplace_back(path, std::move(ds));
  }
  for (const auto& [path, ds] : updated) save_snapshot(ds, path);
  out << "removed " << o.id << " from " << updated.size() << " datastore(s)\n";
  return kExitOk;
}

int cmd_stats(const Options& o, std::ostream& out) {
  for (const auto& path : list_snapshots(o.store_dir)) out << stats_line(load_snapshot(path), path.string()) << '\n';
  return kExitOk;
}

int cmd_select_n(const Options& o, std::ostream& out, std::ostream& err) {
  const auto records = records_for(o, Split::Train);
  const Channel channel = o.channel == "reversed" ? Channel::Reversed : Channel::Original;
  std::vector<FeatureSequence> sequences(records.size());
  parallel_for(records.size(), o.jobs, [&](std::size_t i) {
    sequences[i] = load_features(records[i], {o.layer, channel});
  });
  const auto candidates = o.candidates.empty() ? default_candidates(sequences)
                                               : from_flags([&] { return parse_candidates(o.candidates); });
  const auto selection = select_n(sequences, candidates, o.seed, o.jobs);
  const auto csv = selection_csv(selection);
  if (o.out.empty()) {
    out << csv;
  } else {
    auto f = open_output(o.out);
    f << csv;
  }
  err << "selected_n=" << selection.selected_n << " layer=" << o.layer << " seed=" << o.seed << '\n';
  return kExitOk;
}

int cmd_assess(const Options& o, std::ostream& out, std::ostream& err) {
  const auto cfg = from_flags([&] { return o.inference.resolve(); });
  const auto records = records_for(o, Split::Test);
  const auto stores = load_store_set(o.store_dir);
  const auto batch = assess_batch(records, stores, cfg, o.jobs);
  std::ostringstream lines;
  for (const auto& r : batch.results) lines << result_json_line(r, o.provenance) << '\n';
  if (o.out.empty()) {
    out << lines.str();
  } else {
    auto f = open_output(o.out);
    f << lines.str();
  }
  report_errors(batch.errors, err);
  return (o.strict && !batch.errors.empty()) ? kExitDataError : kExitOk;
}

void write_evaluation(const fs::path& dir, const EvalReport& report, std::span<const double> scores,
                      std::span<const Label> labels, const ReportHeader& header, std::ostream& out) {
  write_report_dir(dir, report, scores, labels, header);
  out << "roc_auc=" << report.roc_auc << " sensitivity="
      << (report.sensitivity ? std::to_string(*report.sensitivity) : "undefined")
      << " specificity=" << (report.specificity ? std::to_string(*report.specificity) : "undefined")
      << " n_pos=" << report.n_pos << " n_neg=" << report.n_neg << '\n';
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
  const auto cfg = from_flags([&] { return o.inference.resolve(); });
  const auto records = records_for(o, Split::Test);
  const auto stores = load_store_set(o.store_dir);
  const auto batch = assess_batch(records, stores, cfg, o.jobs);
  report_errors(batch.errors, err);
  if (o.strict && !batch.errors.empty()) return kExitDataError;

  fs::create_directories(o.report_dir);
  {
    auto f = open_output(o.report_dir / "scores.jsonl");
    for (const auto& r : batch.results) f << result_json_line(r, false) << '\n';
  }
  const auto report = evaluate(std::span<const AssessmentResult>(batch.results), records, cfg.threshold);
  auto header = config_header(cfg);
  header["split"] = std::string(to_string(split_or(o.split, Split::Test)));
  header["failed_samples"] = std::to_string(batch.errors.size());
  std::vector<double> scores;
  std::vector<Label> labels;
  for (const auto& r : batch.results) {
    scores.push_back(r.final_score);
    labels.push_back(find_record(records, r.sample_id).label);
  }
  write_evaluation(o.report_dir, report, scores, labels, header, out);
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const auto cfg = from_flags([&] { return o.inference.resolve(); });
  const auto records = records_for(o, Split::Test);
  const auto stores = load_store_set(o.store_dir);
  const auto axes = from_flags([&] { return parse_axes(o.axes); });
  const auto rows = ablation_run(records, stores, cfg, axes, o.jobs);
  auto header = config_header(cfg);
  header["split"] = std::string(to_string(split_or(o.split, Split::Test)));
  const auto csv = ablation_csv(rows, header);
  if (o.report_dir.empty()) {
    out << csv;
  } else {
    fs::create_directories(o.report_dir);
    write_text_file(o.report_dir / "ablation.csv", csv);
    out << "wrote " << (o.report_dir / "ablation.csv").string() << " (" << rows.size() << " rows)\n";
  }
  return kExitOk;
}

int cmd_report(const Options& o, std::ostream& out) {
  const auto scored = load_scores_jsonl(o.scores);
  const auto records = load_manifest(o.manifest);
  const double threshold = o.inference.threshold;
  const auto report = evaluate(std::span<const ScoredSample>(scored), records, threshold);
  std::vector<double> scores;
  std::vector<Label> labels;
  for (const auto& s : scored) {
    scores.push_back(s.score);
    labels.push_back(find_record(records, s.sample_id).label);
  }
  ReportHeader header{{"scores", o.scores.generic_string()},
                      {"std_convention", "population"},
                      {"threshold", std::to_string(threshold)}};
  write_evaluation(o.report_dir, report, scores, labels, header, out);
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Non-parametric speech-based symptom assessment: retrieval datastores, scoring and evaluation",
               "nonpsa"};
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.set_version_flag("--version", std::string("nonpsa ") + kVersion + " (feature file v" +
                                        std::to_string(kFeatureFileVersion) + ", snapshot v" +
                                        std::to_string(kSnapshotVersion) + ")");
  app.require_subcommand(1);

  Options o;
  auto manifest = [&](CLI::App* sub, bool required = true) {
    auto* opt = sub->add_option("--manifest", o.manifest, "JSON-lines sample manifest");
    if (required) opt->required();
  };
  auto store_dir = [&](CLI::App* sub) {
    sub->add_option("--store-dir", o.store_dir, "Directory of datastore snapshots")->capture_default_str();
  };
  auto jobs = [&](CLI::App* sub) {
    sub->add_option("--jobs", o.jobs, "Worker threads (0 = all cores); output does not depend on it")
        ->capture_default_str();
  };
  auto split = [&](CLI::App* sub, const char* fallback) {
    sub->add_option("--split", o.split, std::string("train|validation|test (default ") + fallback + ")")
        ->check(CLI::IsMember({"train", "validation", "test"}));
  };

  auto* build = app.add_subcommand("build", "Build datastore snapshots from a manifest split");
  manifest(build);
  store_dir(build);
  split(build, "train");
  build->add_option("--layer,--layers", o.layer_list, "Layer index or comma list")->capture_default_str();
  build->add_option("--channel", o.channel, "original|reversed|both")
      ->check(CLI::IsMember({"original", "reversed", "both"}))
      ->capture_default_str();
  jobs(build);

  auto* add = app.add_subcommand("add", "Add one manifest sample to every snapshot");
  manifest(add);
  store_dir(add);
  add->add_option("--id", o.id, "sample_id to add")->required();

  auto* remove = app.add_subcommand("remove", "Remove one sample from every snapshot");
  store_dir(remove);
  remove->add_option("--id", o.id, "sample_id to remove")->required();

  auto* stats = app.add_subcommand("stats", "Describe the snapshots in a datastore directory");
  store_dir(stats);

  auto* select = app.add_subcommand("select-n", "Silhouette-based choice of the segment count");
  manifest(select);
  split(select, "train");
  select->add_option("--layer", o.layer, "Layer index")->capture_default_str();
  select->add_option("--channel", o.channel, "original|reversed (default original)")
      ->check(CLI::IsMember({"original", "reversed"}));
  select->add_option("--candidates", o.candidates, "Range a-b or comma list (default 2..min(100, T_min))");
  select->add_option("--seed", o.seed, "Root seed")->capture_default_str();
  select->add_option("--out", o.out, "CSV output path (default stdout)");
  jobs(select);

  auto* assess_cmd = app.add_subcommand("assess", "Score samples; JSON lines to stdout or --out");
  manifest(assess_cmd);
  store_dir(assess_cmd);
  split(assess_cmd, "test");
  assess_cmd->add_flag("--provenance", o.provenance, "Include retrieved neighbour ids and distances");
  assess_cmd->add_option("--out", o.out, "Output path (default stdout)");
  assess_cmd->add_flag("--strict", o.strict, "Exit 1 if any sample fails");
  o.inference.attach(assess_cmd);
  jobs(assess_cmd);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Assess a split and write metric reports");
  manifest(evaluate_cmd);
  store_dir(evaluate_cmd);
  split(evaluate_cmd, "test");
  evaluate_cmd->add_option("--report-dir", o.report_dir, "Output directory")->required();
  evaluate_cmd->add_flag("--strict", o.strict, "Exit 1 if any sample fails");
  o.inference.attach(evaluate_cmd);
  jobs(evaluate_cmd);

  auto* ablate = app.add_subcommand("ablate", "Sweep retrieval paths, refinement and layers");
  manifest(ablate);
  store_dir(ablate);
  split(ablate, "test");
  ablate->add_option("--axes", o.axes, "Comma list of paths,refinement,layers")->capture_default_str();
  ablate->add_option("--report-dir", o.report_dir, "Write ablation.csv here (default stdout)");
  o.inference.attach(ablate);
  jobs(ablate);

  auto* report = app.add_subcommand("report", "Metric reports from a saved scores JSON-lines file");
  manifest(report);
  report->add_option("--scores", o.scores, "Output of assess")->required();
  report->add_option("--threshold", o.inference.threshold, "Decision threshold")->capture_default_str();
  report->add_option("--report-dir", o.report_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    // --help / --version
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*build) return cmd_build(o, out);
    if (*add) return cmd_add(o, out);
    if (*remove) return cmd_remove(o, out);
    if (*stats) return cmd_stats(o, out);
    if (*select) return cmd_select_n(o, out, err);
    if (*assess_cmd) return cmd_assess(o, out, err);
    if (*evaluate_cmd) return cmd_evaluate(o, out, err);
    if (*ablate) return cmd_ablate(o, out);
    if (*report) return cmd_report(o, out);
  } catch (const UsageError& e) {
    err << "nonpsa: usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "nonpsa: error [" << to_string(e.code()) << "] " << e.what() << '\n';
    return kExitDataError;
  } catch (const std::exception& e) {
    err << "nonpsa: error [Internal] " << e.what() << '\n';
    return kExitDataError;
  }
  return kExitUsage;
}

}  // namespace nonpsa::cli
