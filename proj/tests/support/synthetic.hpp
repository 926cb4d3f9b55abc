#pragma once

// Synthetic corpora for tests: Gaussian frame sequences with labels and
// metadata, held in memory and served through a FeatureLoader.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "nonpsa/datastore.hpp"
#include "nonpsa/inference.hpp"
#include "nonpsa/ingest.hpp"

namespace synth {

inline nonpsa::FrameMatrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                                         double scale = 1.0) {
  std::normal_distribution<float> normal(0.0f, static_cast<float>(scale));
  nonpsa::FrameMatrix m(rows, cols);
  for (auto& v : m.data()) v = normal(rng);
  return m;
}

inline nonpsa::FeatureSequence random_sequence(std::mt19937_64& rng, std::size_t t, std::size_t d,
                                               std::string id = "seq", std::uint32_t layer = 3) {
  return {std::move(id), layer, nonpsa::Channel::Original, random_matrix(rng, t, d)};
}

/// Frames drawn around `centers.size()` well-separated blob centres; returns
/// the sequence and the blob index of every frame.
inline std::pair<nonpsa::FrameMatrix, std::vector<std::uint32_t>> blob_frames(
    std::mt19937_64& rng, const std::vector<std::vector<float>>& centers, std::size_t per_blob,
    double spread = 0.1) {
  const std::size_t d = centers.front().size();
  std::normal_distribution<float> normal(0.0f, static_cast<float>(spread));
  std::vector<std::pair<std::size_t, std::uint32_t>> order;
  for (std::uint32_t b = 0; b < centers.size(); ++b) {
    for (std::size_t i = 0; i < per_blob; ++i) order.emplace_back(order.size(), b);
  }
  std::shuffle(order.begin(), order.end(), rng);
  nonpsa::FrameMatrix m(order.size(), d);
  std::vector<std::uint32_t> blob(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    blob[i] = order[i].second;
    for (std::size_t j = 0; j < d; ++j) m(i, j) = centers[blob[i]][j] + normal(rng);
  }
  return {std::move(m), std::move(blob)};
}

struct CorpusSpec {
  std::size_t dim = 32;
  std::size_t n_train = 400;
  std::size_t n_test = 100;
  std::vector<std::uint32_t> layers{3, 4, 5};
  std::size_t frames = 24;
  /// Distance between the two class means, in units of the per-dim sigma.
  double separation = 5.0;
  double frame_sigma = 1.0;
  std::uint64_t seed = 17;
};

/// Two Gaussian classes. Each sample has a latent vector drawn around its
/// class mean; each (layer, channel) sequence is that vector plus a
/// layer offset plus independent frame noise.
class Corpus {
 public:
  explicit Corpus(const CorpusSpec& spec) : spec_(spec) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> direction(spec.dim);
    double norm = 0.0;
    for (auto& v : direction) {
      v = normal(rng);
      norm += v * v;
    }
    for (auto& v : direction) v *= spec.separation / std::sqrt(norm);

    std::map<std::uint32_t, std::vector<double>> layer_offset;
    for (auto layer : spec.layers) {
      auto& off = layer_offset[layer];
      for (std::size_t j = 0; j < spec.dim; ++j) off.push_back(2.0 * normal(rng));
    }

    std::uniform_int_distribution<int> age(0, 3);
    std::uniform_int_distribution<int> sex(0, 2);
    const std::size_t total = spec.n_train + spec.n_test;
    for (std::size_t i = 0; i < total; ++i) {
      nonpsa::SampleRecord r;
      const bool train = i < spec.n_train;
      r.sample_id = (train ? "train-" : "test-") + std::to_string(train ? i : i - spec.n_train);
      r.label = (i % 2 == 1) ? nonpsa::Label::Symptomatic : nonpsa::Label::Asymptomatic;
      r.age_group = static_cast<nonpsa::AgeGroup>(age(rng));
      r.sex = static_cast<nonpsa::Sex>(sex(rng));
      r.split = train ? nonpsa::Split::Train : nonpsa::Split::Test;

      std::vector<double> latent(spec.dim);
      for (std::size_t j = 0; j < spec.dim; ++j) {
        latent[j] = normal(rng) + (r.label == nonpsa::Label::Symptomatic ? direction[j] : 0.0);
      }
      auto& feats = features_[r.sample_id];
      for (auto layer : spec.layers) {
        for (auto channel : {nonpsa::Channel::Original, nonpsa::Channel::Reversed}) {
          nonpsa::FeatureSequence seq{r.sample_id, layer, channel, nonpsa::FrameMatrix(spec.frames, spec.dim)};
          for (std::size_t t = 0; t < spec.frames; ++t) {
            for (std::size_t j = 0; j < spec.dim; ++j) {
              seq.frames(t, j) = static_cast<float>(latent[j] + layer_offset[layer][j] +
                                                    spec.frame_sigma * normal(rng));
            }
          }
          r.feature_paths[{layer, channel}] = "mem://" + r.sample_id;
          feats.emplace(nonpsa::LayerChannel{layer, channel}, std::move(seq));
        }
      }
      records_.push_back(std::move(r));
    }
  }

  [[nodiscard]] const std::vector<nonpsa::SampleRecord>& records() const { return records_; }

  [[nodiscard]] std::vector<nonpsa::SampleRecord> split(nonpsa::Split s) const {
    return nonpsa::filter_split(records_, s);
  }

  [[nodiscard]] const nonpsa::SampleFeatures& features(const std::string& id) const { return features_.at(id); }

  [[nodiscard]] const nonpsa::FeatureSequence& sequence(const std::string& id, nonpsa::LayerChannel lc) const {
    return features_.at(id).at(lc);
  }

  [[nodiscard]] nonpsa::FeatureLoader loader() const {
    return [this](const nonpsa::SampleRecord& r, nonpsa::LayerChannel lc) { return sequence(r.sample_id, lc); };
  }

  /// Reassigns labels by one seeded shuffle across every record.
  void permute_labels(std::uint64_t seed) {
    std::vector<nonpsa::Label> labels;
    for (const auto& r : records_) labels.push_back(r.label);
    std::mt19937_64 rng(seed);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < records_.size(); ++i) records_[i].label = labels[i];
  }

  /// One datastore per (layer, channel) from the given records (default: train split).
  [[nodiscard]] nonpsa::DatastoreSet build_stores() const { return build_stores(split(nonpsa::Split::Train)); }

  [[nodiscard]] nonpsa::DatastoreSet build_stores(const std::vector<nonpsa::SampleRecord>& from) const {
    nonpsa::DatastoreSet set;
    for (auto layer : spec_.layers) {
      for (auto channel : {nonpsa::Channel::Original, nonpsa::Channel::Reversed}) {
        std::vector<std::pair<nonpsa::SampleRecord, nonpsa::FeatureSequence>> samples;
        for (const auto& r : from) samples.emplace_back(r, sequence(r.sample_id, {layer, channel}));
        set.put(nonpsa::Datastore::build(layer, channel, samples));
      }
    }
    return set;
  }

  [[nodiscard]] const CorpusSpec& spec() const { return spec_; }

 private:
  CorpusSpec spec_;
  std::vector<nonpsa::SampleRecord> records_;
  std::map<std::string, nonpsa::SampleFeatures> features_;
};

}  // namespace synth
