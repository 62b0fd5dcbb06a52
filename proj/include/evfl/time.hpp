// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace evfl {

/// UTC instant with one-second resolution.
struct Timestamp {
  std::int64_t seconds = 0;  // since 1970-01-01T00:00:00Z

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;

  Timestamp plus_seconds(std::int64_t s) const { return {seconds + s}; }
};

inline std::int64_t seconds_between(Timestamp from, Timestamp to) {
  return to.seconds - from.seconds;
}

/// Parses `YYYY-MM-DDTHH:MM:SS` followed by `Z` or a `+HH:MM`/`-HH:MM`
/// offset; the result is normalized to UTC. Fractional seconds are
/// truncated. Returns nullopt on any syntax or range error.
std::optional<Timestamp> parse_iso8601(std::string_view text);

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_iso8601(Timestamp t);

/// Broken-down UTC calendar fields.
struct CivilTime {
  int year = 1970;
  unsigned month = 1;        // 1..12
  unsigned day = 1;          // 1..31
  unsigned hour = 0;         // 0..23
  unsigned minute = 0;
  unsigned second = 0;
  unsigned weekday = 3;      // Monday = 0 .. Sunday = 6
  unsigned day_of_year = 0;  // 0-based
};

CivilTime to_civil(Timestamp t);
Timestamp from_civil(int year, unsigned month, unsigned day, unsigned hour = 0,
                     unsigned minute = 0, unsigned second = 0);

}  // namespace evfl
