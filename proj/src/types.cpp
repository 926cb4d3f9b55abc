#include "nonpsa/types.hpp"

#include <charconv>

#include "nonpsa/error.hpp"

namespace nonpsa {

namespace {

[[noreturn]] void unknown(std::string_view what, std::string_view text) {
  fail(ErrorCode::UnknownEnumValue,
       "unknown " + std::string(what) + " value '" + std::string(text) + "'");
}

}  // namespace

std::string_view to_string(Channel c) noexcept {
  return c == Channel::Original ? "original" : "reversed";
}

std::string_view to_string(AgeGroup a) noexcept {
  switch (a) {
    case AgeGroup::Le39: return "le39";
    case AgeGroup::F40to59: return "40to59";
    case AgeGroup::Ge60: return "ge60";
    case AgeGroup::Unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(Sex s) noexcept {
  switch (s) {
    case Sex::Male: return "male";
    case Sex::Female: return "female";
    case Sex::Unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

Channel parse_channel(std::string_view text) {
  if (text == "original") return Channel::Original;
  if (text == "reversed") return Channel::Reversed;
  unknown("channel", text);
}

AgeGroup parse_age_group(std::string_view text) {
  if (text == "le39") return AgeGroup::Le39;
  if (text == "40to59") return AgeGroup::F40to59;
  if (text == "ge60") return AgeGroup::Ge60;
  if (text == "unknown") return AgeGroup::Unknown;
  unknown("age_group", text);
}

Sex parse_sex(std::string_view text) {
  if (text == "male") return Sex::Male;
  if (text == "female") return Sex::Female;
  if (text == "unknown") return Sex::Unknown;
  unknown("sex", text);
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "validation") return Split::Validation;
  if (text == "test") return Split::Test;
  unknown("split", text);
}

Label parse_label(int value) {
  if (value == 0) return Label::Asymptomatic;
  if (value == 1) return Label::Symptomatic;
  unknown("label", std::to_string(value));
}

Channel channel_from_byte(std::uint8_t b) {
  if (b > 1) unknown("channel byte", std::to_string(b));
  return static_cast<Channel>(b);
}

AgeGroup age_group_from_byte(std::uint8_t b) {
  if (b > 3) unknown("age byte", std::to_string(b));
  return static_cast<AgeGroup>(b);
}

Sex sex_from_byte(std::uint8_t b) {
  if (b > 2) unknown("sex byte", std::to_string(b));
  return static_cast<Sex>(b);
}

Label label_from_byte(std::uint8_t b) { return parse_label(b); }

std::string feature_key(LayerChannel lc) {
  return std::to_string(lc.layer) + "/" + std::string(to_string(lc.channel));
}

LayerChannel parse_feature_key(std::string_view key) {
  const auto slash = key.find('/');
  if (slash == std::string_view::npos || slash == 0) {
    fail(ErrorCode::MalformedRecord, "feature key '" + std::string(key) +
                                         "' is not <layer>/<channel>");
  }
  std::uint32_t layer = 0;
  const auto head = key.substr(0, slash);
  const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), layer);
  if (ec != std::errc{} || ptr != head.data() + head.size()) {
    fail(ErrorCode::MalformedRecord, "feature key '" + std::string(key) +
                                         "' has a non-integer layer");
  }
  return {layer, parse_channel(key.substr(slash + 1))};
}

}  // namespace nonpsa
