// SPDX-License-Identifier: Apache-2.0
#include "evfl/time.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

namespace evfl {
namespace {

using namespace std::chrono;

bool read_uint(std::string_view s, std::size_t pos, std::size_t width,
               unsigned& out) {
  if (pos + width > s.size()) return false;
  const char* first = s.data() + pos;
  const char* last = first + width;
  for (const char* c = first; c != last; ++c) {
    if (*c < '0' || *c > '9') return false;
  }
  return std::from_chars(first, last, out).ptr == last;
}

bool expect(std::string_view s, std::size_t pos, char c) {
  return pos < s.size() && s[pos] == c;
}

}  // namespace

std::optional<Timestamp> parse_iso8601(std::string_view text) {
  unsigned y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  if (!read_uint(text, 0, 4, y) || !expect(text, 4, '-') ||
      !read_uint(text, 5, 2, mo) || !expect(text, 7, '-') ||
      !read_uint(text, 8, 2, d) ||
      !(expect(text, 10, 'T') || expect(text, 10, ' ')) ||
      !read_uint(text, 11, 2, h) || !expect(text, 13, ':') ||
      !read_uint(text, 14, 2, mi) || !expect(text, 16, ':') ||
      !read_uint(text, 17, 2, se)) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  if (expect(text, pos, '.')) {
    ++pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
  }
  std::int64_t offset = 0;
  if (expect(text, pos, 'Z')) {
    ++pos;
  } else if (expect(text, pos, '+') || expect(text, pos, '-')) {
    const int sign = text[pos] == '+' ? 1 : -1;
    unsigned oh = 0, om = 0;
    if (!read_uint(text, pos + 1, 2, oh) || !expect(text, pos + 3, ':') ||
        !read_uint(text, pos + 4, 2, om) || oh > 23 || om > 59) {
      return std::nullopt;
    }
    offset = sign * static_cast<std::int64_t>(oh * 3600 + om * 60);
    pos += 6;
  }  // no designator: already UTC
  if (pos != text.size()) return std::nullopt;

  const year_month_day ymd{year{static_cast<int>(y)}, month{mo}, day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || se > 60) return std::nullopt;
  const auto days_since = sys_days{ymd}.time_since_epoch().count();
  const std::int64_t local =
      static_cast<std::int64_t>(days_since) * 86400 + h * 3600 + mi * 60 + se;
  return Timestamp{local - offset};
}

std::string format_iso8601(Timestamp t) {
  const CivilTime c = to_civil(t);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02u:%02u:%02uZ", c.year,
                c.month, c.day, c.hour, c.minute, c.second);
  return buf;
}

CivilTime to_civil(Timestamp t) {
  const sys_seconds tp{seconds{t.seconds}};
  const sys_days dp = floor<days>(tp);
  const year_month_day ymd{dp};
  const hh_mm_ss hms{tp - dp};
  const sys_days jan1{ymd.year() / January / 1};

  CivilTime c;
  c.year = static_cast<int>(ymd.year());
  c.month = static_cast<unsigned>(ymd.month());
  c.day = static_cast<unsigned>(ymd.day());
  c.hour = static_cast<unsigned>(hms.hours().count());
  c.minute = static_cast<unsigned>(hms.minutes().count());
  c.second = static_cast<unsigned>(hms.seconds().count());
  c.weekday = weekday{dp}.iso_encoding() - 1;
  c.day_of_year = static_cast<unsigned>((dp - jan1).count());
  return c;
}

Timestamp from_civil(int y, unsigned mo, unsigned d, unsigned h, unsigned mi,
                     unsigned se) {
  const sys_days dp{year{y} / month{mo} / day{d}};
  return Timestamp{static_cast<std::int64_t>(dp.time_since_epoch().count()) *
                       86400 +
                   h * 3600 + mi * 60 + se};
}

}  // namespace evfl
