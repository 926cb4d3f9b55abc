#include "nonpsa/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "nonpsa/error.hpp"
#include "nonpsa/parallel.hpp"

namespace nonpsa {

namespace {

constexpr std::string_view kSnapshotMagic = "NPDS";

struct Candidate {
  double distance;
  std::uint64_t rank;
  std::size_t index;
};

constexpr bool closer(const Candidate& a, const Candidate& b) noexcept {
  return a.distance < b.distance || (a.distance == b.distance && a.rank < b.rank);
}

// Partial sums only grow, so once one exceeds `bound` the full distance does
// too and the entry cannot enter the current top-k.
double squared_l2_bounded(const float* a, const float* b, std::size_t dim, double bound) noexcept {
  double acc = 0.0;
  std::size_t j = 0;
  for (; j + 8 <= dim; j += 8) {
    for (std::size_t u = 0; u < 8; ++u) {
      const double d = static_cast<double>(a[j + u]) - static_cast<double>(b[j + u]);
      acc += d * d;
    }
    if (acc > bound) return acc;
  }
  for (; j < dim; ++j) {
    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    acc += d * d;
  }
  return acc;
}

// Bounded max-heap keeping the k closest candidates seen so far.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k); }

  [[nodiscard]] double bound() const noexcept {
    return heap_.size() < k_ ? std::numeric_limits<double>::infinity() : heap_.front().distance;
  }

  void offer(const Candidate& c) {
    if (heap_.size() < k_) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end(), closer);
    } else if (closer(c, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), closer);
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end(), closer);
    }
  }

  std::vector<Candidate> take() && { return std::move(heap_); }

 private:
  std::size_t k_;
  std::vector<Candidate> heap_;
};

}  // namespace

double squared_l2(std::span<const float> a, std::span<const float> b) noexcept {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    acc += d * d;
  }
  return acc;
}

PooledVector mean_of_rows(const FrameMatrix& frames, std::span<const std::size_t> rows) {
  const std::size_t dim = frames.cols();
  std::vector<double> acc(dim, 0.0);
  for (const auto r : rows) {
    const auto row = frames.row(r);
    for (std::size_t j = 0; j < dim; ++j) acc[j] += row[j];
  }
  PooledVector out;
  out.values.resize(dim);
  const double count = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < dim; ++j) out.values[j] = static_cast<float>(acc[j] / count);
  return out;
}

PooledVector temporal_mean(const FeatureSequence& seq) {
  validate(seq);
  std::vector<std::size_t> all(seq.num_frames());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return mean_of_rows(seq.frames, all);
}

Datastore Datastore::build(std::uint32_t layer, Channel channel,
                           std::span<const std::pair<SampleRecord, FeatureSequence>> samples) {
  Datastore ds(layer, channel);
  ds.ids_.reserve(samples.size());
  ds.values_.reserve(samples.size());
  if (!samples.empty()) ds.keys_.reserve(samples.size() * samples.front().second.dim());
  for (const auto& [record, seq] : samples) ds.add(record, seq);
  return ds;
}

void Datastore::add(const SampleRecord& record, const FeatureSequence& seq) {
  if (seq.layer_channel() != layer_channel()) {
    fail(ErrorCode::LayerChannelMismatch,
         "sample '" + record.sample_id + "' has features for " + feature_key(seq.layer_channel()) +
             " but the datastore holds " + feature_key(layer_channel()));
  }
  add_entry(DatastoreEntry{record.sample_id, temporal_mean(seq), record.label, record.age_group,
                           record.sex});
}

void Datastore::add_entry(DatastoreEntry entry) {
  if (entry.key.dim() == 0) {
    fail(ErrorCode::InvalidArgument, "entry '" + entry.sample_id + "' has an empty key");
  }
  if (dim_ != 0 && entry.key.dim() != dim_) {
    fail(ErrorCode::DimensionMismatch, "entry '" + entry.sample_id + "' has D=" +
                                           std::to_string(entry.key.dim()) + ", datastore has D=" +
                                           std::to_string(dim_));
  }
  for (float v : entry.key.values) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFiniteValue, "entry '" + entry.sample_id + "' has a non-finite key");
  }
  if (index_.contains(entry.sample_id)) {
    fail(ErrorCode::DuplicateId, "sample '" + entry.sample_id + "' is already in the datastore");
  }
  dim_ = entry.key.dim();
  index_.emplace(entry.sample_id, ids_.size());
  ids_.push_back(std::move(entry.sample_id));
  keys_.insert(keys_.end(), entry.key.values.begin(), entry.key.values.end());
  values_.push_back(Value{entry.label, entry.age_group, entry.sex, next_rank_++});
}

bool Datastore::remove(std::string_view sample_id) {
  const auto it = index_.find(std::string(sample_id));
  if (it == index_.end()) return false;
  const std::size_t pos = it->second;
  index_.erase(it);
  ids_.erase(ids_.begin() + static_cast<std::ptrdiff_t>(pos));
  values_.erase(values_.begin() + static_cast<std::ptrdiff_t>(pos));
  const auto key_begin = keys_.begin() + static_cast<std::ptrdiff_t>(pos * dim_);
  keys_.erase(key_begin, key_begin + static_cast<std::ptrdiff_t>(dim_));
  for (auto& [id, idx] : index_) {
    if (idx > pos) --idx;
  }
  return true;
}

bool Datastore::contains(std::string_view sample_id) const {
  return index_.contains(std::string(sample_id));
}

DatastoreEntry Datastore::entry(std::size_t index) const {
  const auto key = key_at(index);
  const auto& v = values_[index];
  return DatastoreEntry{ids_[index], PooledVector{{key.begin(), key.end()}}, v.label, v.age_group, v.sex};
}

SearchHit Datastore::make_hit(std::size_t index, double distance) const {
  const auto& v = values_[index];
  return SearchHit{ids_[index], distance, v.label, v.age_group, v.sex, v.rank};
}

void Datastore::check_query(std::span<const float> query) const {
  if (dim_ != 0 && query.size() != dim_) {
    fail(ErrorCode::DimensionMismatch, "query has D=" + std::to_string(query.size()) +
                                           ", datastore " + feature_key(layer_channel()) +
                                           " has D=" + std::to_string(dim_));
  }
}

std::vector<SearchHit> Datastore::search(std::span<const float> query, std::size_t k,
                                         std::size_t jobs) const {
  if (k == 0) fail(ErrorCode::InvalidArgument, "k must be positive");
  check_query(query);
  const std::size_t n = size();
  if (n == 0) return {};
  k = std::min(k, n);

  // Each chunk keeps its own top-k; (distance, rank) is a strict total order,
  // so merging the chunk winners gives the same answer for any chunking.
  const std::size_t chunks = std::min(resolve_jobs(jobs), n);
  std::vector<std::vector<Candidate>> partial(chunks);
  parallel_for(chunks, chunks, [&](std::size_t c) {
    const std::size_t begin = n * c / chunks;
    const std::size_t end = n * (c + 1) / chunks;
    TopK top(k);
    for (std::size_t i = begin; i < end; ++i) {
      const double bound = top.bound();
      const double d = squared_l2_bounded(query.data(), keys_.data() + i * dim_, dim_, bound);
      if (d <= bound) top.offer(Candidate{d, values_[i].rank, i});
    }
    partial[c] = std::move(top).take();
  });

  std::vector<Candidate> merged;
  merged.reserve(chunks * k);
  for (auto& p : partial) merged.insert(merged.end(), p.begin(), p.end());
  std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(k), merged.end(), closer);

  std::vector<SearchHit> hits;
  hits.reserve(k);
  for (std::size_t i = 0; i < k; ++i) hits.push_back(make_hit(merged[i].index, merged[i].distance));
  return hits;
}

FilteredSearch Datastore::search_filtered(std::span<const float> query, std::size_t k,
                                          const MetadataPredicate& predicate, std::size_t jobs) const {
  FilteredSearch out;
  auto hits = search(query, k, jobs);
  out.prefilter_count = hits.size();
  for (auto& h : hits) {
    if (!predicate || predicate(h)) out.hits.push_back(std::move(h));
  }
  return out;
}

std::vector<std::byte> encode_snapshot(const Datastore& ds) {
  detail::ByteWriter w;
  w.put_bytes(kSnapshotMagic);
  w.put_u32(kSnapshotVersion);
  w.put_u32(ds.layer());
  w.put_u8(static_cast<std::uint8_t>(ds.channel()));
  w.put_u64(ds.size());
  w.put_u32(static_cast<std::uint32_t>(ds.dim()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& id = ds.id_at(i);
    const auto e = ds.entry(i);
    w.put_u16(static_cast<std::uint16_t>(id.size()));
    w.put_bytes(id);
    w.put_u8(static_cast<std::uint8_t>(e.label));
    w.put_u8(static_cast<std::uint8_t>(e.age_group));
    w.put_u8(static_cast<std::uint8_t>(e.sex));
    for (float v : e.key.values) w.put_f32(v);
  }
  return std::move(w.bytes());
}

Datastore decode_snapshot(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes);
  if (r.remaining() < kSnapshotMagic.size() || r.str(kSnapshotMagic.size(), "magic") != kSnapshotMagic) {
    fail(ErrorCode::BadMagic, "expected magic 'NPDS' at byte offset 0");
  }
  const auto version = r.u32("version");
  if (version != kSnapshotVersion) {
    fail(ErrorCode::UnsupportedVersion, "unsupported snapshot version " + std::to_string(version) +
                                            " at byte offset 4");
  }
  const auto layer = r.u32("layer");
  const auto channel_offset = r.offset();
  const auto channel_byte = r.u8("channel");
  if (channel_byte > 1) {
    fail(ErrorCode::UnknownEnumValue, "channel byte " + std::to_string(channel_byte) +
                                          " at byte offset " + std::to_string(channel_offset));
  }
  Datastore ds(layer, static_cast<Channel>(channel_byte));
  const auto count = r.u64("N");
  const auto dim = r.u32("D");
  if (count > 0 && dim == 0) fail(ErrorCode::InvalidArgument, "snapshot has entries but D=0");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto record_offset = r.offset();
    DatastoreEntry e;
    const auto id_len = r.u16("id length");
    e.sample_id = r.str(id_len, "sample id");
    try {
      e.label = label_from_byte(r.u8("label"));
      e.age_group = age_group_from_byte(r.u8("age"));
      e.sex = sex_from_byte(r.u8("sex"));
    } catch (const Error& err) {
      if (err.code() == ErrorCode::TruncatedFile) throw;
      fail(err.code(), std::string(err.what()) + " in record at byte offset " + std::to_string(record_offset));
    }
    r.need(static_cast<std::size_t>(dim) * 4, "key");
    e.key.values.resize(dim);
    for (auto& v : e.key.values) {
      const auto offset = r.offset();
      v = r.f32("key");
      if (!std::isfinite(v)) {
        fail(ErrorCode::NonFiniteValue, "non-finite key value at byte offset " + std::to_string(offset));
      }
    }
    ds.add_entry(std::move(e));
  }
  if (r.remaining() != 0) {
    fail(ErrorCode::TrailingData, std::to_string(r.remaining()) + " unexpected bytes at byte offset " +
                                      std::to_string(r.offset()));
  }
  return ds;
}

void save_snapshot(const Datastore& ds, const std::filesystem::path& path) {
  detail::write_file_atomic(path, encode_snapshot(ds));
}

Datastore load_snapshot(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  try {
    return decode_snapshot(bytes);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace nonpsa
