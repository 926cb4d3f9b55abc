#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nonpsa/ingest.hpp"
#include "nonpsa/types.hpp"

namespace nonpsa {

inline constexpr std::uint32_t kSnapshotVersion = 1;

/// A single D-dimensional key produced by temporal mean pooling.
struct PooledVector {
  std::vector<float> values;

  [[nodiscard]] std::size_t dim() const noexcept { return values.size(); }
  [[nodiscard]] std::span<const float> view() const noexcept { return values; }

  bool operator==(const PooledVector&) const = default;
};

/// Column-wise mean over all frames, accumulated in double.
PooledVector temporal_mean(const FeatureSequence& seq);

/// Column-wise mean over the given rows; accumulation order is the order of
/// `rows`, so passing 0..T-1 reproduces temporal_mean bit-for-bit.
PooledVector mean_of_rows(const FrameMatrix& frames, std::span<const std::size_t> rows);

/// Squared Euclidean distance accumulated left to right in double.
double squared_l2(std::span<const float> a, std::span<const float> b) noexcept;

struct DatastoreEntry {
  std::string sample_id;
  PooledVector key;
  Label label = Label::Asymptomatic;
  AgeGroup age_group = AgeGroup::Unknown;
  Sex sex = Sex::Unknown;

  bool operator==(const DatastoreEntry&) const = default;
};

/// A retrieved neighbour. Distances are squared L2; ranking is identical to
/// plain L2 because the square root is monotone.
struct SearchHit {
  std::string sample_id;
  double squared_l2_distance = 0.0;
  Label label = Label::Asymptomatic;
  AgeGroup age_group = AgeGroup::Unknown;
  Sex sex = Sex::Unknown;
  /// Insertion rank; breaks distance ties (earlier insert wins).
  std::uint64_t rank = 0;

  bool operator==(const SearchHit&) const = default;
};

using MetadataPredicate = std::function<bool(const SearchHit&)>;

struct FilteredSearch {
  std::vector<SearchHit> hits;
  /// Number of hits before the predicate was applied: min(k, size).
  std::size_t prefilter_count = 0;
};

/// Exact flat L2 index over pooled keys for one (layer, channel).
///
/// Keys are stored contiguously. Entries keep insertion order; removal
/// erases in place and never renumbers the ranks of surviving entries.
/// Const member functions are safe to call concurrently; mutation needs
/// exclusive access (see SharedDatastore for the snapshot-swapping wrapper).
class Datastore {
 public:
  Datastore(std::uint32_t layer, Channel channel) : layer_(layer), channel_(channel) {}

  /// One entry per sample, key = temporal_mean(sequence), input order kept.
  static Datastore build(std::uint32_t layer, Channel channel,
                         std::span<const std::pair<SampleRecord, FeatureSequence>> samples);

  void add(const SampleRecord& record, const FeatureSequence& seq);
  void add_entry(DatastoreEntry entry);
  bool remove(std::string_view sample_id);

  [[nodiscard]] bool contains(std::string_view sample_id) const;

  /// Exactly min(k, size()) hits ordered by (distance, rank). `jobs` splits
  /// the scan; the result is identical for every value.
  [[nodiscard]] std::vector<SearchHit> search(std::span<const float> query, std::size_t k,
                                              std::size_t jobs = 1) const;

  /// search() followed by dropping hits that fail `predicate`.
  [[nodiscard]] FilteredSearch search_filtered(std::span<const float> query, std::size_t k,
                                               const MetadataPredicate& predicate,
                                               std::size_t jobs = 1) const;

  [[nodiscard]] std::uint32_t layer() const noexcept { return layer_; }
  [[nodiscard]] Channel channel() const noexcept { return channel_; }
  [[nodiscard]] LayerChannel layer_channel() const noexcept { return {layer_, channel_}; }
  [[nodiscard]] std::size_t size() const noexcept { return ids_.size(); }
  [[nodiscard]] bool empty() const noexcept { return ids_.empty(); }
  /// 0 until the first entry fixes it.
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::uint64_t next_rank() const noexcept { return next_rank_; }

  [[nodiscard]] DatastoreEntry entry(std::size_t index) const;
  [[nodiscard]] const std::string& id_at(std::size_t index) const { return ids_[index]; }
  [[nodiscard]] std::span<const float> key_at(std::size_t index) const {
    return {keys_.data() + index * dim_, dim_};
  }
  [[nodiscard]] std::uint64_t rank_at(std::size_t index) const { return values_[index].rank; }
  [[nodiscard]] Label label_at(std::size_t index) const { return values_[index].label; }

 private:
  struct Value {
    Label label;
    AgeGroup age_group;
    Sex sex;
    std::uint64_t rank;
  };

  [[nodiscard]] SearchHit make_hit(std::size_t index, double distance) const;
  void check_query(std::span<const float> query) const;

  std::uint32_t layer_;
  Channel channel_;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> keys_;
  std::vector<Value> values_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t next_rank_ = 0;
};

std::vector<std::byte> encode_snapshot(const Datastore& ds);
Datastore decode_snapshot(std::span<const std::byte> bytes);

/// Atomic: written to a temporary sibling then renamed into place.
void save_snapshot(const Datastore& ds, const std::filesystem::path& path);
Datastore load_snapshot(const std::filesystem::path& path);

/// Copy-on-write holder: readers take an immutable snapshot, writers build a
/// modified copy and publish it in one pointer swap.
class SharedDatastore {
 public:
  explicit SharedDatastore(Datastore initial)
      : current_(std::make_shared<const Datastore>(std::move(initial))) {}

  [[nodiscard]] std::shared_ptr<const Datastore> snapshot() const {
    std::lock_guard lock(ptr_mutex_);
    return current_;
  }

  void add(const SampleRecord& record, const FeatureSequence& seq) {
    update([&](Datastore& ds) { ds.add(record, seq); });
  }

  bool remove(std::string_view sample_id) {
    bool removed = false;
    update([&](Datastore& ds) { removed = ds.remove(sample_id); });
    return removed;
  }

  template <typename Mutation>
  void update(Mutation&& mutate) {
    std::lock_guard writer(writer_mutex_);
    auto next = std::make_shared<Datastore>(*snapshot());
    mutate(*next);
    std::lock_guard lock(ptr_mutex_);
    current_ = std::move(next);
  }

 private:
  mutable std::mutex ptr_mutex_;
  std::mutex writer_mutex_;
  std::shared_ptr<const Datastore> current_;
};

}  // namespace nonpsa
