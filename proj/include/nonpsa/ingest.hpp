#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nonpsa/matrix.hpp"
#include "nonpsa/types.hpp"

namespace nonpsa {

inline constexpr std::uint32_t kFeatureFileVersion = 1;
/// magic(4) + version(4) + layer(4) + channel(1) + reserved(3) + T(4) + D(4)
inline constexpr std::size_t kFeatureHeaderBytes = 24;

/// Frame-level features of one (sample, layer, channel): T rows by D columns.
struct FeatureSequence {
  std::string sample_id;
  std::uint32_t layer = 0;
  Channel channel = Channel::Original;
  FrameMatrix frames;

  [[nodiscard]] std::size_t num_frames() const noexcept { return frames.rows(); }
  [[nodiscard]] std::size_t dim() const noexcept { return frames.cols(); }
  [[nodiscard]] LayerChannel layer_channel() const noexcept { return {layer, channel}; }

  bool operator==(const FeatureSequence&) const = default;
};

struct SampleRecord {
  std::string sample_id;
  Label label = Label::Asymptomatic;
  AgeGroup age_group = AgeGroup::Unknown;
  Sex sex = Sex::Unknown;
  Split split = Split::Train;
  /// Absolute (or manifest-relative, before resolution) feature file paths.
  std::map<LayerChannel, std::filesystem::path> feature_paths;

  bool operator==(const SampleRecord&) const = default;
};

/// Throws Error(InvalidArgument) for T == 0 or D == 0 and
/// Error(NonFiniteValue) for NaN/Inf entries.
void validate(const FeatureSequence& seq);

/// Parses the NPSA binary layout. The returned sequence has an empty
/// sample_id; the caller owns the identity of the file.
FeatureSequence read_feature_file(const std::filesystem::path& path);
FeatureSequence decode_feature_bytes(std::span<const std::byte> bytes);

void write_feature_file(const FeatureSequence& seq, const std::filesystem::path& path);
std::vector<std::byte> encode_feature_bytes(const FeatureSequence& seq);

/// Loads one JSON object per line. Relative feature paths are resolved
/// against the manifest's directory. Blank lines are ignored.
std::vector<SampleRecord> load_manifest(const std::filesystem::path& path);
std::vector<SampleRecord> parse_manifest(std::string_view text,
                                         const std::filesystem::path& base_dir = {});

/// Writes records back out; paths are written relative to base_dir when possible.
std::string format_manifest_line(const SampleRecord& record,
                                 const std::filesystem::path& base_dir = {});
void write_manifest(const std::vector<SampleRecord>& records,
                    const std::filesystem::path& path);

/// Checks every (layer, channel) in `required` has a feature path.
void require_features(const SampleRecord& record, std::span<const LayerChannel> required);

/// Reads the record's file for `lc` and stamps the record's identity on it.
FeatureSequence load_features(const SampleRecord& record, LayerChannel lc);

std::vector<SampleRecord> filter_split(const std::vector<SampleRecord>& records, Split split);

}  // namespace nonpsa
