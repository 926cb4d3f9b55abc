#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nonpsa/inference.hpp"

namespace nonpsa {

/// Mann-Whitney AUC: (concordant + ties / 2) / (n_pos * n_neg), computed
/// from exact integer pair counts. Throws SingleClass if a class is absent.
double roc_auc(std::span<const double> scores, std::span<const Label> labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;

  bool operator==(const RocPoint&) const = default;
};

/// One point per distinct score (descending), from (0,0) to (1,1).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const Label> labels);
double trapezoid_area(std::span<const RocPoint> points);

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

struct Confusion {
  ConfusionCounts counts;
  /// Undefined (nullopt) when the class has no members.
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

/// Predicts symptomatic when score > threshold (strict).
Confusion confusion_at(std::span<const double> scores, std::span<const Label> labels, double threshold);

struct ClassStats {
  std::size_t count = 0;
  double mean = 0.0;
  /// Population standard deviation.
  double std = 0.0;
};

struct ScoreDistribution {
  ClassStats symptomatic;
  ClassStats asymptomatic;
};

/// Throws EmptyClass if either class has no scores.
ScoreDistribution score_distribution(std::span<const double> scores, std::span<const Label> labels);

struct HistogramBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t asymptomatic = 0;
  std::size_t symptomatic = 0;
};

/// Equal-width bins over [0, 1]; a score of exactly 1 lands in the last bin.
std::vector<HistogramBin> score_histogram(std::span<const double> scores, std::span<const Label> labels,
                                          std::size_t bins = 20);

struct EvalReport {
  double roc_auc = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  double threshold = 0.5;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  ConfusionCounts counts;
  ScoreDistribution score_stats;
  std::vector<RocPoint> roc_points;
};

EvalReport evaluate(std::span<const double> scores, std::span<const Label> labels, double threshold);

/// Joins results to ground truth by sample id.
EvalReport evaluate(std::span<const AssessmentResult> results, std::span<const SampleRecord> truth,
                    double threshold);

struct ScoredSample {
  std::string sample_id;
  double score = 0.0;
};
EvalReport evaluate(std::span<const ScoredSample> results, std::span<const SampleRecord> truth,
                    double threshold);

enum class AblationAxis : std::uint8_t { Paths, Refinement, Layers };

std::string_view to_string(AblationAxis axis) noexcept;
/// Comma-separated list of "paths", "refinement", "layers"; empty is allowed.
std::vector<AblationAxis> parse_axes(std::string_view text);

struct AblationRow {
  std::string axis;
  std::string value;
  InferenceConfig config;
  EvalReport report;
  std::size_t failed_samples = 0;
};

/// The base configuration first, then one row per value of each axis with
/// everything else held at the base:
///   paths:      seg-only, utt-only, utt-rev-only, all
///   refinement: raw, age, sex
///   layers:     each base layer on its own
std::vector<AblationRow> ablation_run(std::span<const SampleRecord> records, const DatastoreSet& stores,
                                      const InferenceConfig& base, std::span<const AblationAxis> axes,
                                      std::size_t jobs = 1, const FeatureLoader& loader = load_features);

}  // namespace nonpsa
