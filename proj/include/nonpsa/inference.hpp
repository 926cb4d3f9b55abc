#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nonpsa/datastore.hpp"
#include "nonpsa/error.hpp"
#include "nonpsa/ingest.hpp"
#include "nonpsa/segmentation.hpp"

namespace nonpsa {

/// Post-retrieval metadata filter applied to utterance-level neighbours.
enum class Refinement : std::uint8_t { None, Age, Sex };

/// How the enabled retrieval paths become one layer score.
enum class Combine : std::uint8_t {
  /// ones / total over every retrieved label.
  Pooled,
  /// Unweighted mean of per-path proportions (non-empty paths only).
  MeanOfPaths,
};

std::string_view to_string(Refinement r) noexcept;
std::string_view to_string(Combine c) noexcept;
Refinement parse_refinement(std::string_view text);
Combine parse_combine(std::string_view text);

struct RetrievalPaths {
  bool segment = true;
  bool utterance = true;
  bool utterance_reversed = true;

  [[nodiscard]] bool any() const noexcept { return segment || utterance || utterance_reversed; }
  bool operator==(const RetrievalPaths&) const = default;
};

/// "seg", "utt", "utt-rev" joined by commas, or "all".
std::string to_string(const RetrievalPaths& p);
RetrievalPaths parse_paths(std::string_view text);

struct InferenceConfig {
  std::vector<std::uint32_t> layers{3, 4, 5};
  std::map<std::uint32_t, std::size_t> n_per_layer{{3, 2}, {4, 73}, {5, 73}};
  std::size_t k = 5;
  Refinement refinement = Refinement::Age;
  RetrievalPaths paths;
  double threshold = 0.5;
  /// Retrieve as if the query sample were absent from every store.
  bool exclude_self = false;
  Combine combine = Combine::Pooled;
  std::uint64_t seed = 17;
  KMeansOptions kmeans;

  /// Layers 3/4/5 with n = 2/73/73, k = 5, age refinement.
  static InferenceConfig covid19();
  /// Layers 3/4/5 with n = 2 throughout, k = 5, no refinement.
  static InferenceConfig coswara();

  void validate() const;
  [[nodiscard]] std::size_t n_for(std::uint32_t layer) const;
  /// Every (layer, channel) the enabled paths read.
  [[nodiscard]] std::vector<LayerChannel> required_features() const;
};

/// All datastores available to inference, keyed by (layer, channel).
class DatastoreSet {
 public:
  void put(std::shared_ptr<const Datastore> ds);
  void put(Datastore ds) { put(std::make_shared<const Datastore>(std::move(ds))); }
  [[nodiscard]] bool contains(LayerChannel lc) const { return stores_.contains(lc); }
  /// Throws EmptyDatastore if no store is registered for `lc`.
  [[nodiscard]] const Datastore& at(LayerChannel lc) const;
  [[nodiscard]] std::vector<LayerChannel> keys() const;

 private:
  std::map<LayerChannel, std::shared_ptr<const Datastore>> stores_;
};

struct QueryMetadata {
  AgeGroup age_group = AgeGroup::Unknown;
  Sex sex = Sex::Unknown;
};

/// Exact-match predicate for the refinement mode; Unknown only matches Unknown.
MetadataPredicate refinement_predicate(Refinement mode, QueryMetadata query);

/// search_filtered, but behaving as though `exclude_id` were not stored.
FilteredSearch retrieve(const Datastore& ds, std::span<const float> query, std::size_t k,
                        const MetadataPredicate& predicate, std::string_view exclude_id = {});

std::vector<Label> labels_of(std::span<const SearchHit> hits);

/// n segment means, top-k each, no metadata filter: n*k neighbours.
std::vector<SearchHit> segment_level_hits(const FeatureSequence& seq, const Datastore& ds,
                                          std::size_t n, std::size_t k, std::uint64_t seed,
                                          std::string_view exclude_id = {},
                                          const KMeansOptions& options = {});
std::vector<Label> segment_level_labels(const FeatureSequence& seq, const Datastore& ds,
                                        std::size_t n, std::size_t k, std::uint64_t seed);

/// Whole-utterance mean, top-(n*k), then the refinement filter.
FilteredSearch utterance_level_hits(const FeatureSequence& seq, const Datastore& ds,
                                    std::size_t n, std::size_t k, Refinement refinement,
                                    QueryMetadata query_meta, std::string_view exclude_id = {});

/// Original and (optionally) reversed utterance-level labels after filtering.
std::pair<std::vector<Label>, std::vector<Label>> utterance_level_labels(
    const FeatureSequence& seq_orig, const FeatureSequence* seq_rev, const Datastore& ds_orig,
    const Datastore* ds_rev, std::size_t n, std::size_t k, Refinement refinement,
    QueryMetadata query_meta);

struct LayerScore {
  std::uint32_t layer = 0;
  std::vector<Label> labels_seg;
  std::vector<Label> labels_utt;
  std::vector<Label> labels_utt_rev;
  std::size_t ones = 0;
  std::size_t total = 0;
  double score = 0.0;
};

struct LayerProvenance {
  std::uint32_t layer = 0;
  std::vector<SearchHit> segment;
  std::vector<SearchHit> utterance;
  std::vector<SearchHit> utterance_reversed;
};

struct AssessmentResult {
  std::string sample_id;
  std::vector<LayerScore> layer_scores;
  double final_score = 0.0;
  Label decision = Label::Asymptomatic;
  std::vector<LayerProvenance> provenance;
};

/// Feature sequences of one sample keyed by (layer, channel).
using SampleFeatures = std::map<LayerChannel, FeatureSequence>;

/// ones / total for one layer under the chosen combination rule.
/// Throws NoLabelsRetrieved when every enabled path came back empty.
double combine_labels(const LayerScore& layer, const RetrievalPaths& paths, Combine combine);

AssessmentResult assess(const SampleRecord& record, const SampleFeatures& features,
                        const DatastoreSet& stores, const InferenceConfig& config);

using FeatureLoader = std::function<FeatureSequence(const SampleRecord&, LayerChannel)>;

struct SampleError {
  std::size_t index = 0;
  std::string sample_id;
  ErrorCode code = ErrorCode::InvalidArgument;
  std::string message;
};

struct BatchAssessment {
  /// Successful results in input order.
  std::vector<AssessmentResult> results;
  /// Failed samples in input order; never fatal to the batch.
  std::vector<SampleError> errors;
};

/// Loads each sample's features with `loader` (default: from its feature
/// files) and assesses it. Per-sample failures are collected.
BatchAssessment assess_batch(std::span<const SampleRecord> records, const DatastoreSet& stores,
                             const InferenceConfig& config, std::size_t jobs = 1,
                             const FeatureLoader& loader = load_features);

}  // namespace nonpsa
