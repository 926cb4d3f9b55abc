#include <doctest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "nonpsa/error.hpp"
#include "nonpsa/ingest.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace nonpsa;
using testing_support::TempDir;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an nonpsa::Error");
  return ErrorCode::InvalidArgument;
}

bool bit_identical(const FrameMatrix& a, const FrameMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0;
}

void write_raw(const std::filesystem::path& p, const std::vector<std::byte>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE("ingest") {
  TEST_CASE("single zero frame reads back as one zero frame") {
    TempDir dir;
    FeatureSequence seq{"a", 3, Channel::Original, FrameMatrix(1, 3)};
    write_feature_file(seq, dir / "a.npsa");
    const auto back = read_feature_file(dir / "a.npsa");
    CHECK(back.num_frames() == 1);
    CHECK(back.dim() == 3);
    for (float v : back.frames.data()) CHECK(v == 0.0f);
    CHECK(back.layer == 3);
    CHECK(back.channel == Channel::Original);
  }

  TEST_CASE("2x2 sequence is header plus 16 payload bytes") {
    FeatureSequence seq{"a", 4, Channel::Reversed, FrameMatrix(2, 2, {1.0f, 0.0f, 0.0f, 1.0f})};
    const auto bytes = encode_feature_bytes(seq);
    CHECK(bytes.size() == kFeatureHeaderBytes + 16);
    CHECK(std::memcmp(bytes.data(), "NPSA", 4) == 0);
    // version 1, little-endian
    CHECK(std::to_integer<int>(bytes[4]) == 1);
    CHECK(std::to_integer<int>(bytes[5]) == 0);
    // layer 4
    CHECK(std::to_integer<int>(bytes[8]) == 4);
    // channel byte then three reserved zeros
    CHECK(std::to_integer<int>(bytes[12]) == 1);
    CHECK(std::to_integer<int>(bytes[13]) == 0);
    CHECK(std::to_integer<int>(bytes[15]) == 0);
    // T then D
    CHECK(std::to_integer<int>(bytes[16]) == 2);
    CHECK(std::to_integer<int>(bytes[20]) == 2);
    // 1.0f = 0x3f800000 little-endian
    CHECK(std::to_integer<int>(bytes[24]) == 0x00);
    CHECK(std::to_integer<int>(bytes[27]) == 0x3f);
  }

  TEST_CASE("write then read is bit-identical on random sequences") {
    TempDir dir;
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> t_dist(1, 50);
    std::uniform_int_distribution<std::size_t> d_dist(1, 64);
    for (int i = 0; i < 100; ++i) {
      FeatureSequence seq{"", static_cast<std::uint32_t>(i), i % 2 ? Channel::Reversed : Channel::Original,
                          synth::random_matrix(rng, t_dist(rng), d_dist(rng), 100.0)};
      const auto path = dir / ("f" + std::to_string(i) + ".npsa");
      write_feature_file(seq, path);
      const auto back = read_feature_file(path);
      REQUIRE(bit_identical(back.frames, seq.frames));
      CHECK(back.layer == seq.layer);
      CHECK(back.channel == seq.channel);
    }
  }

  TEST_CASE("rejections carry structured codes") {
    TempDir dir;
    FeatureSequence seq{"a", 3, Channel::Original, FrameMatrix(2, 3, {1, 2, 3, 4, 5, 6})};
    const auto good = encode_feature_bytes(seq);

    SUBCASE("NaN payload") {
      auto bytes = good;
      const auto nan = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN());
      for (int b = 0; b < 4; ++b) bytes[kFeatureHeaderBytes + 8 + b] = std::byte((nan >> (8 * b)) & 0xFF);
      write_raw(dir / "nan.npsa", bytes);
      try {
        read_feature_file(dir / "nan.npsa");
        FAIL("expected NonFiniteValue");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteValue);
        CHECK(std::string(e.what()).find("offset 32") != std::string::npos);
      }
    }
    SUBCASE("bad magic") {
      auto bytes = good;
      bytes[0] = std::byte{'X'};
      CHECK(code_of([&] { decode_feature_bytes(bytes); }) == ErrorCode::BadMagic);
      CHECK(code_of([&] { decode_feature_bytes({}); }) == ErrorCode::BadMagic);
    }
    SUBCASE("unsupported version") {
      auto bytes = good;
      bytes[4] = std::byte{2};
      CHECK(code_of([&] { decode_feature_bytes(bytes); }) == ErrorCode::UnsupportedVersion);
    }
    SUBCASE("truncated payload and header") {
      auto bytes = good;
      bytes.pop_back();
      CHECK(code_of([&] { decode_feature_bytes(bytes); }) == ErrorCode::TruncatedFile);
      bytes.resize(10);
      CHECK(code_of([&] { decode_feature_bytes(bytes); }) == ErrorCode::TruncatedFile);
    }
    SUBCASE("trailing bytes") {
      auto bytes = good;
      bytes.push_back(std::byte{0});
      CHECK(code_of([&] { decode_feature_bytes(bytes); }) == ErrorCode::TrailingData);
    }
    SUBCASE("missing file") {
      CHECK(code_of([&] { read_feature_file(dir / "nope.npsa"); }) == ErrorCode::IoFailure);
    }
  }

  TEST_CASE("degenerate sequences are refused on write") {
    FeatureSequence empty{"a", 3, Channel::Original, FrameMatrix(0, 4)};
    CHECK(code_of([&] { encode_feature_bytes(empty); }) == ErrorCode::InvalidArgument);
    FeatureSequence inf{"a", 3, Channel::Original, FrameMatrix(1, 1, {std::numeric_limits<float>::infinity()})};
    CHECK(code_of([&] { encode_feature_bytes(inf); }) == ErrorCode::NonFiniteValue);
  }

  TEST_CASE("manifest parsing") {
    SUBCASE("empty text gives no records") {
      CHECK(parse_manifest("").empty());
      CHECK(parse_manifest("\n\n").empty());
    }
    SUBCASE("missing age and sex become Unknown") {
      const auto recs = parse_manifest(
          R"({"sample_id":"s1","label":1,"split":"train","features":{"3/original":"a.npsa"}})", "/data");
      REQUIRE(recs.size() == 1);
      CHECK(recs[0].age_group == AgeGroup::Unknown);
      CHECK(recs[0].sex == Sex::Unknown);
      CHECK(recs[0].label == Label::Symptomatic);
      CHECK(recs[0].feature_paths.at({3, Channel::Original}) == std::filesystem::path("/data/a.npsa"));
    }
    SUBCASE("records keep manifest order") {
      const auto recs = parse_manifest(
          R"({"sample_id":"b","label":0,"split":"test","age_group":"ge60","sex":"female","features":{}})"
          "\n"
          R"({"sample_id":"a","label":1,"split":"validation","age_group":"40to59","sex":"male","features":{}})");
      REQUIRE(recs.size() == 2);
      CHECK(recs[0].sample_id == "b");
      CHECK(recs[0].age_group == AgeGroup::Ge60);
      CHECK(recs[0].split == Split::Test);
      CHECK(recs[1].sample_id == "a");
      CHECK(recs[1].sex == Sex::Male);
    }
    SUBCASE("duplicate ids") {
      const char* text = R"({"sample_id":"x","label":0,"split":"train","features":{}})"
                         "\n"
                         R"({"sample_id":"x","label":1,"split":"train","features":{}})";
      CHECK(code_of([&] { parse_manifest(text); }) == ErrorCode::DuplicateId);
    }
    SUBCASE("missing required field") {
      CHECK(code_of([&] { parse_manifest(R"({"sample_id":"x","label":0,"features":{}})"); }) ==
            ErrorCode::MissingField);
      CHECK(code_of([&] { parse_manifest(R"({"label":0,"split":"train","features":{}})"); }) ==
            ErrorCode::MissingField);
    }
    SUBCASE("unknown enum values") {
      CHECK(code_of([&] {
              parse_manifest(R"({"sample_id":"x","label":0,"split":"train","sex":"other","features":{}})");
            }) == ErrorCode::UnknownEnumValue);
      CHECK(code_of([&] { parse_manifest(R"({"sample_id":"x","label":2,"split":"train","features":{}})"); }) ==
            ErrorCode::UnknownEnumValue);
      CHECK(code_of([&] {
              parse_manifest(R"({"sample_id":"x","label":0,"split":"train","features":{"3/sideways":"a"}})");
            }) == ErrorCode::UnknownEnumValue);
    }
    SUBCASE("malformed JSON") {
      CHECK(code_of([&] { parse_manifest("{not json"); }) == ErrorCode::MalformedRecord);
    }
  }

  TEST_CASE("manifest write/load round trip and feature loading") {
    TempDir dir;
    std::mt19937_64 rng(3);
    SampleRecord rec;
    rec.sample_id = "spk-1";
    rec.label = Label::Symptomatic;
    rec.age_group = AgeGroup::Le39;
    rec.sex = Sex::Female;
    rec.split = Split::Validation;
    FeatureSequence seq{"", 5, Channel::Reversed, synth::random_matrix(rng, 4, 6)};
    std::filesystem::create_directories(dir / "feats");
    write_feature_file(seq, dir / "feats/spk-1_5r.npsa");
    rec.feature_paths[{5, Channel::Reversed}] = dir / "feats/spk-1_5r.npsa";
    // Deliberately wrong: header says reversed, manifest says original.
    rec.feature_paths[{5, Channel::Original}] = dir / "feats/spk-1_5r.npsa";
    write_manifest({rec}, dir / "m.jsonl");

    const auto loaded = load_manifest(dir / "m.jsonl");
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0] == rec);

    const auto back = load_features(loaded[0], {5, Channel::Reversed});
    CHECK(back.sample_id == "spk-1");
    CHECK(bit_identical(back.frames, seq.frames));
    CHECK(code_of([&] { load_features(loaded[0], {5, Channel::Original}); }) == ErrorCode::LayerChannelMismatch);
    CHECK(code_of([&] { load_features(loaded[0], {3, Channel::Original}); }) == ErrorCode::MissingFeature);

    const std::vector<LayerChannel> needed{{5, Channel::Reversed}, {4, Channel::Original}};
    CHECK(code_of([&] { require_features(loaded[0], needed); }) == ErrorCode::MissingFeature);
  }
}
