#include "nonpsa/ingest.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "binary_io.hpp"
#include "nonpsa/error.hpp"

namespace nonpsa {

namespace {

constexpr std::string_view kMagic = "NPSA";

using nlohmann::json;

[[noreturn]] void record_error(ErrorCode code, std::size_t line, const std::string& msg) {
  fail(code, "manifest line " + std::to_string(line) + ": " + msg);
}

const json& required(const json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    record_error(ErrorCode::MissingField, line, std::string("missing field '") + key + "'");
  }
  return *it;
}

std::string as_string(const json& v, const char* key, std::size_t line) {
  if (!v.is_string()) {
    record_error(ErrorCode::MalformedRecord, line, std::string("field '") + key + "' must be a string");
  }
  return v.get<std::string>();
}

// Enum parse errors get the line number attached without losing their code.
template <typename F>
auto with_line(std::size_t line, F&& parse) {
  try {
    return parse();
  } catch (const Error& e) {
    record_error(e.code(), line, e.what());
  }
}

SampleRecord parse_record(const json& obj, const std::filesystem::path& base_dir, std::size_t line) {
  if (!obj.is_object()) record_error(ErrorCode::MalformedRecord, line, "not a JSON object");

  SampleRecord rec;
  rec.sample_id = as_string(required(obj, "sample_id", line), "sample_id", line);
  if (rec.sample_id.empty()) record_error(ErrorCode::MalformedRecord, line, "empty sample_id");
  if (rec.sample_id.size() > 0xFFFF) record_error(ErrorCode::MalformedRecord, line, "sample_id too long");

  const auto& label = required(obj, "label", line);
  if (!label.is_number_integer()) {
    record_error(ErrorCode::UnknownEnumValue, line, "label must be 0 or 1");
  }
  rec.label = with_line(line, [&] { return parse_label(label.get<int>()); });

  if (const auto it = obj.find("age_group"); it != obj.end() && !it->is_null()) {
    const auto text = as_string(*it, "age_group", line);
    rec.age_group = with_line(line, [&] { return parse_age_group(text); });
  }
  if (const auto it = obj.find("sex"); it != obj.end() && !it->is_null()) {
    const auto text = as_string(*it, "sex", line);
    rec.sex = with_line(line, [&] { return parse_sex(text); });
  }

  const auto split = as_string(required(obj, "split", line), "split", line);
  rec.split = with_line(line, [&] { return parse_split(split); });

  const auto& features = required(obj, "features", line);
  if (!features.is_object()) record_error(ErrorCode::MalformedRecord, line, "features must be an object");
  for (const auto& [key, value] : features.items()) {
    const auto lc = with_line(line, [&] { return parse_feature_key(key); });
    std::filesystem::path p = as_string(value, "features", line);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    rec.feature_paths.emplace(lc, p.lexically_normal());
  }
  return rec;
}

}  // namespace

void validate(const FeatureSequence& seq) {
  if (seq.frames.rows() == 0 || seq.frames.cols() == 0) {
    fail(ErrorCode::InvalidArgument, "feature sequence '" + seq.sample_id + "' has T=" +
                                         std::to_string(seq.frames.rows()) +
                                         ", D=" + std::to_string(seq.frames.cols()) +
                                         "; both must be >= 1");
  }
  const auto values = seq.frames.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail(ErrorCode::NonFiniteValue, "non-finite value in '" + seq.sample_id + "' at element " +
                                          std::to_string(i));
    }
  }
}

std::vector<std::byte> encode_feature_bytes(const FeatureSequence& seq) {
  validate(seq);
  detail::ByteWriter w;
  w.reserve(kFeatureHeaderBytes + seq.frames.data().size() * 4);
  w.put_bytes(kMagic);
  w.put_u32(kFeatureFileVersion);
  w.put_u32(seq.layer);
  w.put_u8(static_cast<std::uint8_t>(seq.channel));
  w.put_u8(0);
  w.put_u8(0);
  w.put_u8(0);
  w.put_u32(static_cast<std::uint32_t>(seq.frames.rows()));
  w.put_u32(static_cast<std::uint32_t>(seq.frames.cols()));
  for (float v : seq.frames.data()) w.put_f32(v);
  return std::move(w.bytes());
}

FeatureSequence decode_feature_bytes(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes);
  if (r.remaining() < kMagic.size() || r.str(kMagic.size(), "magic") != kMagic) {
    fail(ErrorCode::BadMagic, "expected magic 'NPSA' at byte offset 0");
  }
  const auto version_offset = r.offset();
  const auto version = r.u32("version");
  if (version != kFeatureFileVersion) {
    fail(ErrorCode::UnsupportedVersion, "unsupported feature file version " + std::to_string(version) +
                                            " at byte offset " + std::to_string(version_offset));
  }
  FeatureSequence seq;
  seq.layer = r.u32("layer");
  const auto channel_offset = r.offset();
  const auto channel = r.u8("channel");
  if (channel > 1) {
    fail(ErrorCode::UnknownEnumValue, "channel byte " + std::to_string(channel) +
                                          " at byte offset " + std::to_string(channel_offset));
  }
  seq.channel = static_cast<Channel>(channel);
  r.str(3, "reserved");
  const auto dims_offset = r.offset();
  const std::uint64_t t = r.u32("T");
  const std::uint64_t d = r.u32("D");
  if (t == 0 || d == 0) {
    fail(ErrorCode::InvalidArgument, "zero-sized header (T=" + std::to_string(t) + ", D=" +
                                         std::to_string(d) + ") at byte offset " +
                                         std::to_string(dims_offset));
  }
  const std::uint64_t count = t * d;
  r.need(count * 4, "payload");
  std::vector<float> values(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto offset = r.offset();
    const float v = r.f32("payload");
    if (!std::isfinite(v)) {
      fail(ErrorCode::NonFiniteValue, "non-finite value at byte offset " + std::to_string(offset));
    }
    values[i] = v;
  }
  if (r.remaining() != 0) {
    fail(ErrorCode::TrailingData, std::to_string(r.remaining()) + " unexpected bytes at byte offset " +
                                      std::to_string(r.offset()));
  }
  seq.frames = FrameMatrix(t, d, std::move(values));
  return seq;
}

FeatureSequence read_feature_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  try {
    return decode_feature_bytes(bytes);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

void write_feature_file(const FeatureSequence& seq, const std::filesystem::path& path) {
  const auto bytes = encode_feature_bytes(seq);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoFailure, "failed writing '" + path.string() + "'");
}

std::vector<SampleRecord> parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
  std::vector<SampleRecord> records;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      record_error(ErrorCode::MalformedRecord, line_no, e.what());
    }
    auto rec = parse_record(obj, base_dir, line_no);
    if (!seen.insert(rec.sample_id).second) {
      record_error(ErrorCode::DuplicateId, line_no, "duplicate sample_id '" + rec.sample_id + "'");
    }
    records.push_back(std::move(rec));
    if (end == text.size()) break;
  }
  return records;
}

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open manifest '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

std::string format_manifest_line(const SampleRecord& record, const std::filesystem::path& base_dir) {
  json features = json::object();
  for (const auto& [lc, p] : record.feature_paths) {
    auto out = p;
    if (!base_dir.empty()) {
      const auto rel = p.lexically_relative(base_dir);
      if (!rel.empty() && *rel.begin() != "..") out = rel;
    }
    features[feature_key(lc)] = out.generic_string();
  }
  json obj = {
      {"sample_id", record.sample_id},
      {"label", to_int(record.label)},
      {"age_group", to_string(record.age_group)},
      {"sex", to_string(record.sex)},
      {"split", to_string(record.split)},
      {"features", features},
  };
  return obj.dump();
}

void write_manifest(const std::vector<SampleRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "' for writing");
  for (const auto& r : records) out << format_manifest_line(r, path.parent_path()) << '\n';
  if (!out) fail(ErrorCode::IoFailure, "failed writing '" + path.string() + "'");
}

void require_features(const SampleRecord& record, std::span<const LayerChannel> required_pairs) {
  for (const auto& lc : required_pairs) {
    if (!record.feature_paths.contains(lc)) {
      fail(ErrorCode::MissingFeature,
           "sample '" + record.sample_id + "' has no feature path for " + feature_key(lc));
    }
  }
}

FeatureSequence load_features(const SampleRecord& record, LayerChannel lc) {
  const auto it = record.feature_paths.find(lc);
  if (it == record.feature_paths.end()) {
    fail(ErrorCode::MissingFeature,
         "sample '" + record.sample_id + "' has no feature path for " + feature_key(lc));
  }
  auto seq = read_feature_file(it->second);
  if (seq.layer_channel() != lc) {
    fail(ErrorCode::LayerChannelMismatch,
         it->second.string() + ": header says " + feature_key(seq.layer_channel()) +
             " but manifest maps it to " + feature_key(lc));
  }
  seq.sample_id = record.sample_id;
  return seq;
}

std::vector<SampleRecord> filter_split(const std::vector<SampleRecord>& records, Split split) {
  std::vector<SampleRecord> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

}  // namespace nonpsa
