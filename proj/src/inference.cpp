#include "nonpsa/inference.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <sstream>

#include "nonpsa/error.hpp"
#include "nonpsa/parallel.hpp"

namespace nonpsa {

std::string_view to_string(Refinement r) noexcept {
  switch (r) {
    case Refinement::None: return "none";
    case Refinement::Age: return "age";
    case Refinement::Sex: return "sex";
  }
  return "none";
}

std::string_view to_string(Combine c) noexcept {
  return c == Combine::Pooled ? "pooled" : "mean";
}

Refinement parse_refinement(std::string_view text) {
  if (text == "none" || text == "raw") return Refinement::None;
  if (text == "age") return Refinement::Age;
  if (text == "sex") return Refinement::Sex;
  fail(ErrorCode::UnknownEnumValue, "unknown refinement '" + std::string(text) + "'");
}

Combine parse_combine(std::string_view text) {
  if (text == "pooled") return Combine::Pooled;
  if (text == "mean") return Combine::MeanOfPaths;
  fail(ErrorCode::UnknownEnumValue, "unknown combine mode '" + std::string(text) + "'");
}

std::string to_string(const RetrievalPaths& p) {
  if (p.segment && p.utterance && p.utterance_reversed) return "all";
  std::string out;
  auto append = [&](std::string_view s) {
    if (!out.empty()) out += ',';
    out += s;
  };
  if (p.segment) append("seg");
  if (p.utterance) append("utt");
  if (p.utterance_reversed) append("utt-rev");
  return out;
}

RetrievalPaths parse_paths(std::string_view text) {
  if (text == "all") return {};
  RetrievalPaths p{false, false, false};
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const auto item = text.substr(start, end - start);
    if (item == "seg") {
      p.segment = true;
    } else if (item == "utt") {
      p.utterance = true;
    } else if (item == "utt-rev") {
      p.utterance_reversed = true;
    } else {
      fail(ErrorCode::UnknownEnumValue, "unknown retrieval path '" + std::string(item) + "'");
    }
    start = end + 1;
  }
  return p;
}

InferenceConfig InferenceConfig::covid19() { return InferenceConfig{}; }

InferenceConfig InferenceConfig::coswara() {
  InferenceConfig c;
  c.n_per_layer = {{3, 2}, {4, 2}, {5, 2}};
  c.refinement = Refinement::None;
  return c;
}

void InferenceConfig::validate() const {
  if (layers.empty()) fail(ErrorCode::InvalidArgument, "at least one layer is required");
  if (std::set<std::uint32_t>(layers.begin(), layers.end()).size() != layers.size()) {
    fail(ErrorCode::InvalidArgument, "layers must be distinct");
  }
  if (k == 0) fail(ErrorCode::InvalidArgument, "k must be positive");
  if (!paths.any()) fail(ErrorCode::InvalidArgument, "at least one retrieval path must be enabled");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    fail(ErrorCode::InvalidArgument, "threshold must lie in (0, 1)");
  }
  for (auto layer : layers) {
    if (n_for(layer) == 0) {
      fail(ErrorCode::InvalidArgument, "segment count for layer " + std::to_string(layer) + " must be >= 1");
    }
  }
}

std::size_t InferenceConfig::n_for(std::uint32_t layer) const {
  const auto it = n_per_layer.find(layer);
  if (it == n_per_layer.end()) {
    fail(ErrorCode::InvalidArgument, "no segment count configured for layer " + std::to_string(layer));
  }
  return it->second;
}

std::vector<LayerChannel> InferenceConfig::required_features() const {
  std::vector<LayerChannel> out;
  for (auto layer : layers) {
    if (paths.segment || paths.utterance) out.push_back({layer, Channel::Original});
    if (paths.utterance_reversed) out.push_back({layer, Channel::Reversed});
  }
  return out;
}

void DatastoreSet::put(std::shared_ptr<const Datastore> ds) {
  const auto lc = ds->layer_channel();
  stores_[lc] = std::move(ds);
}

const Datastore& DatastoreSet::at(LayerChannel lc) const {
  const auto it = stores_.find(lc);
  if (it == stores_.end()) {
    fail(ErrorCode::EmptyDatastore, "no datastore loaded for " + feature_key(lc));
  }
  return *it->second;
}

std::vector<LayerChannel> DatastoreSet::keys() const {
  std::vector<LayerChannel> out;
  for (const auto& [lc, ds] : stores_) out.push_back(lc);
  return out;
}

MetadataPredicate refinement_predicate(Refinement mode, QueryMetadata query) {
  switch (mode) {
    case Refinement::None: return {};
    case Refinement::Age:
      return [age = query.age_group](const SearchHit& h) { return h.age_group == age; };
    case Refinement::Sex:
      return [sex = query.sex](const SearchHit& h) { return h.sex == sex; };
  }
  return {};
}

FilteredSearch retrieve(const Datastore& ds, std::span<const float> query, std::size_t k,
                        const MetadataPredicate& predicate, std::string_view exclude_id) {
  std::vector<SearchHit> hits;
  if (!exclude_id.empty() && ds.contains(exclude_id)) {
    hits = ds.search(query, k + 1);
    std::erase_if(hits, [&](const SearchHit& h) { return h.sample_id == exclude_id; });
    if (hits.size() > k) hits.resize(k);
  } else {
    hits = ds.search(query, k);
  }
  FilteredSearch out;
  out.prefilter_count = hits.size();
  for (auto& h : hits) {
    if (!predicate || predicate(h)) out.hits.push_back(std::move(h));
  }
  return out;
}

std::vector<Label> labels_of(std::span<const SearchHit> hits) {
  std::vector<Label> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(h.label);
  return out;
}

namespace {

void require_usable(const Datastore& ds, const FeatureSequence& seq) {
  if (ds.empty()) fail(ErrorCode::EmptyDatastore, "datastore " + feature_key(ds.layer_channel()) + " is empty");
  if (ds.layer_channel() != seq.layer_channel()) {
    fail(ErrorCode::LayerChannelMismatch, "query features " + feature_key(seq.layer_channel()) +
                                              " do not match datastore " + feature_key(ds.layer_channel()));
  }
}

}  // namespace

std::vector<SearchHit> segment_level_hits(const FeatureSequence& seq, const Datastore& ds,
                                          std::size_t n, std::size_t k, std::uint64_t seed,
                                          std::string_view exclude_id, const KMeansOptions& options) {
  require_usable(ds, seq);
  if (seq.channel != Channel::Original) {
    fail(ErrorCode::LayerChannelMismatch, "segment-level retrieval uses the original channel only");
  }
  const auto segments = segment_features(seq, n, seed, options);
  std::vector<SearchHit> hits;
  hits.reserve(n * k);
  for (const auto& mean : segments.means) {
    auto found = retrieve(ds, mean.view(), k, {}, exclude_id);
    std::move(found.hits.begin(), found.hits.end(), std::back_inserter(hits));
  }
  return hits;
}

std::vector<Label> segment_level_labels(const FeatureSequence& seq, const Datastore& ds,
                                        std::size_t n, std::size_t k, std::uint64_t seed) {
  return labels_of(segment_level_hits(seq, ds, n, k, seed));
}

FilteredSearch utterance_level_hits(const FeatureSequence& seq, const Datastore& ds,
                                    std::size_t n, std::size_t k, Refinement refinement,
                                    QueryMetadata query_meta, std::string_view exclude_id) {
  require_usable(ds, seq);
  const auto pooled = temporal_mean(seq);
  return retrieve(ds, pooled.view(), n * k, refinement_predicate(refinement, query_meta), exclude_id);
}

std::pair<std::vector<Label>, std::vector<Label>> utterance_level_labels(
    const FeatureSequence& seq_orig, const FeatureSequence* seq_rev, const Datastore& ds_orig,
    const Datastore* ds_rev, std::size_t n, std::size_t k, Refinement refinement,
    QueryMetadata query_meta) {
  auto orig = utterance_level_hits(seq_orig, ds_orig, n, k, refinement, query_meta);
  std::vector<Label> rev;
  if (seq_rev != nullptr && ds_rev != nullptr) {
    rev = labels_of(utterance_level_hits(*seq_rev, *ds_rev, n, k, refinement, query_meta).hits);
  }
  return {labels_of(orig.hits), std::move(rev)};
}

double combine_labels(const LayerScore& layer, const RetrievalPaths& paths, Combine combine) {
  if (layer.total == 0) {
    fail(ErrorCode::NoLabelsRetrieved,
         "no labels retrieved for layer " + std::to_string(layer.layer) + " after filtering");
  }
  if (combine == Combine::Pooled) {
    return static_cast<double>(layer.ones) / static_cast<double>(layer.total);
  }
  double sum = 0.0;
  std::size_t used = 0;
  auto add = [&](bool enabled, const std::vector<Label>& labels) {
    if (!enabled || labels.empty()) return;
    const auto ones = std::count(labels.begin(), labels.end(), Label::Symptomatic);
    sum += static_cast<double>(ones) / static_cast<double>(labels.size());
    ++used;
  };
  add(paths.segment, layer.labels_seg);
  add(paths.utterance, layer.labels_utt);
  add(paths.utterance_reversed, layer.labels_utt_rev);
  return sum / static_cast<double>(used);
}

AssessmentResult assess(const SampleRecord& record, const SampleFeatures& features,
                        const DatastoreSet& stores, const InferenceConfig& config) {
  config.validate();
  const auto feature = [&](LayerChannel lc) -> const FeatureSequence& {
    const auto it = features.find(lc);
    if (it == features.end()) {
      fail(ErrorCode::MissingFeature, "sample '" + record.sample_id + "' lacks features for " + feature_key(lc));
    }
    return it->second;
  };
  for (const auto& lc : config.required_features()) (void)feature(lc);

  const std::string_view exclude = config.exclude_self ? std::string_view(record.sample_id) : std::string_view{};
  const QueryMetadata meta{record.age_group, record.sex};

  AssessmentResult result;
  result.sample_id = record.sample_id;
  double score_sum = 0.0;
  for (const auto layer : config.layers) {
    const std::size_t n = config.n_for(layer);
    const LayerChannel orig{layer, Channel::Original};
    const LayerChannel rev{layer, Channel::Reversed};

    LayerProvenance prov;
    prov.layer = layer;
    if (config.paths.segment) {
      const auto& seq = feature(orig);
      prov.segment = segment_level_hits(seq, stores.at(orig), n, config.k,
                                        sequence_seed(config.seed, seq), exclude, config.kmeans);
    }
    if (config.paths.utterance) {
      prov.utterance = utterance_level_hits(feature(orig), stores.at(orig), n, config.k,
                                            config.refinement, meta, exclude).hits;
    }
    if (config.paths.utterance_reversed) {
      prov.utterance_reversed = utterance_level_hits(feature(rev), stores.at(rev), n, config.k,
                                                     config.refinement, meta, exclude).hits;
    }

    LayerScore ls;
    ls.layer = layer;
    ls.labels_seg = labels_of(prov.segment);
    ls.labels_utt = labels_of(prov.utterance);
    ls.labels_utt_rev = labels_of(prov.utterance_reversed);
    for (const auto* labels : {&ls.labels_seg, &ls.labels_utt, &ls.labels_utt_rev}) {
      ls.total += labels->size();
      ls.ones += static_cast<std::size_t>(std::count(labels->begin(), labels->end(), Label::Symptomatic));
    }
    ls.score = combine_labels(ls, config.paths, config.combine);
    score_sum += ls.score;
    result.layer_scores.push_back(std::move(ls));
    result.provenance.push_back(std::move(prov));
  }
  result.final_score = score_sum / static_cast<double>(config.layers.size());
  result.decision = result.final_score > config.threshold ? Label::Symptomatic : Label::Asymptomatic;
  return result;
}

BatchAssessment assess_batch(std::span<const SampleRecord> records, const DatastoreSet& stores,
                             const InferenceConfig& config, std::size_t jobs,
                             const FeatureLoader& loader) {
  config.validate();
  const auto required = config.required_features();
  std::vector<std::optional<AssessmentResult>> slots(records.size());
  std::vector<std::optional<SampleError>> failures(records.size());
  parallel_for(records.size(), jobs, [&](std::size_t i) {
    const auto& record = records[i];
    try {
      SampleFeatures features;
      for (const auto& lc : required) features.emplace(lc, loader(record, lc));
      slots[i] = assess(record, features, stores, config);
    } catch (const Error& e) {
      failures[i] = SampleError{i, record.sample_id, e.code(), e.what()};
    }
  });
  BatchAssessment out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (slots[i]) out.results.push_back(std::move(*slots[i]));
    if (failures[i]) out.errors.push_back(std::move(*failures[i]));
  }
  return out;
}

}  // namespace nonpsa
