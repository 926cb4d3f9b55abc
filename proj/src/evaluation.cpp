#include "nonpsa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "nonpsa/error.hpp"

namespace nonpsa {

namespace {

void check_inputs(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    fail(ErrorCode::InvalidArgument, "scores and labels differ in length");
  }
  for (double s : scores) {
    if (std::isnan(s)) fail(ErrorCode::InvalidArgument, "NaN score");
  }
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const Label> labels) {
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::Symptomatic));
  return {pos, labels.size() - pos};
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  return order;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  check_inputs(scores, labels);
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0 || n_neg == 0) {
    fail(ErrorCode::SingleClass, "ROC AUC needs both classes (positives=" + std::to_string(n_pos) +
                                     ", negatives=" + std::to_string(n_neg) + ")");
  }
  // Walk tie groups in ascending score order. Each positive in a group beats
  // every negative below it and half-ties each negative inside it.
  const auto order = order_by_score(scores);
  std::uint64_t twice_u = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0;
    std::uint64_t neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == Label::Symptomatic ? pos : neg) += 1;
      ++j;
    }
    twice_u += 2 * pos * neg_below + pos * neg;
    neg_below += neg;
    i = j;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const Label> labels) {
  check_inputs(scores, labels);
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0 || n_neg == 0) fail(ErrorCode::SingleClass, "ROC curve needs both classes");
  auto order = order_by_score(scores);
  std::reverse(order.begin(), order.end());
  std::vector<RocPoint> points{{0.0, 0.0}};
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == Label::Symptomatic ? tp : fp) += 1;
      ++j;
    }
    points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                      static_cast<double>(tp) / static_cast<double>(n_pos)});
    i = j;
  }
  return points;
}

double trapezoid_area(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

Confusion confusion_at(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  check_inputs(scores, labels);
  if (scores.empty()) fail(ErrorCode::InvalidArgument, "no scores to threshold");
  if (!(threshold > 0.0 && threshold < 1.0)) fail(ErrorCode::InvalidArgument, "threshold must lie in (0, 1)");
  Confusion out;
  auto& c = out.counts;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] > threshold;
    if (labels[i] == Label::Symptomatic) {
      (predicted ? c.tp : c.fn) += 1;
    } else {
      (predicted ? c.fp : c.tn) += 1;
    }
  }
  if (c.tp + c.fn > 0) out.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.tn + c.fp > 0) out.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return out;
}

ScoreDistribution score_distribution(std::span<const double> scores, std::span<const Label> labels) {
  check_inputs(scores, labels);
  // Welford running moments per class.
  struct Running {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    void push(double x) {
      ++n;
      const double delta = x - mean;
      mean += delta / static_cast<double>(n);
      m2 += delta * (x - mean);
    }
    [[nodiscard]] ClassStats stats() const {
      return {n, mean, std::sqrt(std::max(0.0, m2 / static_cast<double>(n)))};
    }
  };
  Running pos;
  Running neg;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (labels[i] == Label::Symptomatic ? pos : neg).push(scores[i]);
  }
  if (pos.n == 0 || neg.n == 0) {
    fail(ErrorCode::EmptyClass, "score distribution needs both classes (symptomatic=" +
                                    std::to_string(pos.n) + ", asymptomatic=" + std::to_string(neg.n) + ")");
  }
  return {pos.stats(), neg.stats()};
}

std::vector<HistogramBin> score_histogram(std::span<const double> scores, std::span<const Label> labels,
                                          std::size_t bins) {
  check_inputs(scores, labels);
  if (bins == 0) fail(ErrorCode::InvalidArgument, "histogram needs at least one bin");
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lower = static_cast<double>(b) / static_cast<double>(bins);
    out[b].upper = static_cast<double>(b + 1) / static_cast<double>(bins);
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double clamped = std::clamp(scores[i], 0.0, 1.0);
    auto b = static_cast<std::size_t>(clamped * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    (labels[i] == Label::Symptomatic ? out[b].symptomatic : out[b].asymptomatic) += 1;
  }
  return out;
}

EvalReport evaluate(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  EvalReport r;
  r.roc_auc = roc_auc(scores, labels);
  const auto confusion = confusion_at(scores, labels, threshold);
  r.sensitivity = confusion.sensitivity;
  r.specificity = confusion.specificity;
  r.counts = confusion.counts;
  r.threshold = threshold;
  std::tie(r.n_pos, r.n_neg) = class_counts(labels);
  r.score_stats = score_distribution(scores, labels);
  r.roc_points = roc_curve(scores, labels);
  return r;
}

namespace {

template <typename Item, typename Score>
EvalReport evaluate_joined(std::span<const Item> items, std::span<const SampleRecord> truth,
                           double threshold, Score&& score_of) {
  std::unordered_map<std::string_view, Label> label_of;
  for (const auto& r : truth) label_of.emplace(r.sample_id, r.label);
  std::vector<double> scores;
  std::vector<Label> labels;
  for (const auto& item : items) {
    const auto it = label_of.find(item.sample_id);
    if (it == label_of.end()) {
      fail(ErrorCode::MissingField, "no ground-truth label for sample '" + item.sample_id + "'");
    }
    scores.push_back(score_of(item));
    labels.push_back(it->second);
  }
  return evaluate(scores, labels, threshold);
}

}  // namespace

EvalReport evaluate(std::span<const AssessmentResult> results, std::span<const SampleRecord> truth,
                    double threshold) {
  return evaluate_joined(results, truth, threshold, [](const AssessmentResult& r) { return r.final_score; });
}

EvalReport evaluate(std::span<const ScoredSample> results, std::span<const SampleRecord> truth,
                    double threshold) {
  return evaluate_joined(results, truth, threshold, [](const ScoredSample& r) { return r.score; });
}

std::string_view to_string(AblationAxis axis) noexcept {
  switch (axis) {
    case AblationAxis::Paths: return "paths";
    case AblationAxis::Refinement: return "refinement";
    case AblationAxis::Layers: return "layers";
  }
  return "paths";
}

std::vector<AblationAxis> parse_axes(std::string_view text) {
  std::vector<AblationAxis> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const auto item = text.substr(start, end - start);
    if (item == "paths") {
      out.push_back(AblationAxis::Paths);
    } else if (item == "refinement") {
      out.push_back(AblationAxis::Refinement);
    } else if (item == "layers") {
      out.push_back(AblationAxis::Layers);
    } else if (!item.empty()) {
      fail(ErrorCode::UnknownEnumValue, "unknown ablation axis '" + std::string(item) + "'");
    }
    start = end + 1;
  }
  return out;
}

std::vector<AblationRow> ablation_run(std::span<const SampleRecord> records, const DatastoreSet& stores,
                                      const InferenceConfig& base, std::span<const AblationAxis> axes,
                                      std::size_t jobs, const FeatureLoader& loader) {
  std::vector<AblationRow> rows;
  rows.push_back({"base", "base", base, {}, 0});
  for (const auto axis : axes) {
    switch (axis) {
      case AblationAxis::Paths:
        for (const auto& [name, paths] :
             {std::pair{"seg-only", RetrievalPaths{true, false, false}},
              std::pair{"utt-only", RetrievalPaths{false, true, false}},
              std::pair{"utt-rev-only", RetrievalPaths{false, false, true}},
              std::pair{"all", RetrievalPaths{true, true, true}}}) {
          auto cfg = base;
          cfg.paths = paths;
          rows.push_back({"paths", name, cfg, {}, 0});
        }
        break;
      case AblationAxis::Refinement:
        for (const auto& [name, mode] : {std::pair{"raw", Refinement::None}, std::pair{"age", Refinement::Age},
                                         std::pair{"sex", Refinement::Sex}}) {
          auto cfg = base;
          cfg.refinement = mode;
          rows.push_back({"refinement", name, cfg, {}, 0});
        }
        break;
      case AblationAxis::Layers:
        for (const auto layer : base.layers) {
          auto cfg = base;
          cfg.layers = {layer};
          rows.push_back({"layers", std::to_string(layer), cfg, {}, 0});
        }
        break;
    }
  }
  for (auto& row : rows) {
    const auto batch = assess_batch(records, stores, row.config, jobs, loader);
    row.failed_samples = batch.errors.size();
    row.report = evaluate(std::span<const AssessmentResult>(batch.results), records, row.config.threshold);
  }
  return rows;
}

}  // namespace nonpsa
