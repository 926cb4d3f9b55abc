#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace nonpsa {

enum class Channel : std::uint8_t { Original = 0, Reversed = 1 };

/// Age buckets; ages are bucketed upstream so raw ages never reach the store.
enum class AgeGroup : std::uint8_t { Le39 = 0, F40to59 = 1, Ge60 = 2, Unknown = 3 };

enum class Sex : std::uint8_t { Male = 0, Female = 1, Unknown = 2 };

enum class Split : std::uint8_t { Train = 0, Validation = 1, Test = 2 };

/// 0 = asymptomatic, 1 = symptomatic (positive class).
enum class Label : std::uint8_t { Asymptomatic = 0, Symptomatic = 1 };

struct LayerChannel {
  std::uint32_t layer = 0;
  Channel channel = Channel::Original;

  auto operator<=>(const LayerChannel&) const = default;
};

std::string_view to_string(Channel c) noexcept;
std::string_view to_string(AgeGroup a) noexcept;
std::string_view to_string(Sex s) noexcept;
std::string_view to_string(Split s) noexcept;

// Parsers accept exactly the lowercase manifest spellings and throw
// Error(UnknownEnumValue) otherwise.
Channel parse_channel(std::string_view text);
AgeGroup parse_age_group(std::string_view text);
Sex parse_sex(std::string_view text);
Split parse_split(std::string_view text);
Label parse_label(int value);

// Raw-byte decoders used by the binary formats.
Channel channel_from_byte(std::uint8_t b);
AgeGroup age_group_from_byte(std::uint8_t b);
Sex sex_from_byte(std::uint8_t b);
Label label_from_byte(std::uint8_t b);

/// "<layer>/<original|reversed>", the manifest `features` key.
std::string feature_key(LayerChannel lc);
LayerChannel parse_feature_key(std::string_view key);

inline int to_int(Label l) noexcept { return static_cast<int>(l); }

}  // namespace nonpsa
