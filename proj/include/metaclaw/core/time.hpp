#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>

#include "metaclaw/core/error.hpp"

namespace metaclaw {

using Timestamp = std::chrono::sys_seconds;

namespace detail {

inline bool all_digits(std::string_view s) {
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return !s.empty();
}

inline int to_int(std::string_view s) {
  int v = 0;
  for (char c : s) v = v * 10 + (c - '0');
  return v;
}

}  // namespace detail

/// Formats as `YYYY-MM-DDTHH:MM:SS` followed by `Z` (offset 0) or `+HH:MM`.
inline std::string format_rfc3339(Timestamp t, int offset_minutes = 0) {
  using namespace std::chrono;
  const auto local = t + minutes{offset_minutes};
  const auto day = floor<days>(local);
  const year_month_day ymd{day};
  const hh_mm_ss hms{local - day};
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  std::string out(buf);
  if (offset_minutes == 0) return out + "Z";
  const int mag = offset_minutes < 0 ? -offset_minutes : offset_minutes;
  std::snprintf(buf, sizeof(buf), "%c%02d:%02d", offset_minutes < 0 ? '-' : '+', mag / 60, mag % 60);
  return out + buf;
}

/// Parses RFC 3339 date-times (`Z` or numeric offset, optional fractional
/// seconds which are truncated).
inline Timestamp parse_rfc3339(std::string_view s) {
  using namespace std::chrono;
  auto fail = [&] { return Error(Errc::parse_error, "bad RFC 3339 timestamp '" + std::string(s) + "'"); };
  if (s.size() < 20 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != 't') || s[13] != ':' ||
      s[16] != ':')
    throw fail();
  const auto y = s.substr(0, 4), mo = s.substr(5, 2), d = s.substr(8, 2);
  const auto h = s.substr(11, 2), mi = s.substr(14, 2), se = s.substr(17, 2);
  for (auto part : {y, mo, d, h, mi, se})
    if (!detail::all_digits(part)) throw fail();
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
  }
  int offset = 0;
  const auto tz = s.substr(pos);
  if (tz == "Z" || tz == "z") {
    offset = 0;
  } else if (tz.size() == 6 && (tz[0] == '+' || tz[0] == '-') && tz[3] == ':' &&
             detail::all_digits(tz.substr(1, 2)) && detail::all_digits(tz.substr(4, 2))) {
    offset = detail::to_int(tz.substr(1, 2)) * 60 + detail::to_int(tz.substr(4, 2));
    if (tz[0] == '-') offset = -offset;
  } else {
    throw fail();
  }
  const year_month_day ymd{year{detail::to_int(y)}, month{static_cast<unsigned>(detail::to_int(mo))},
                           day{static_cast<unsigned>(detail::to_int(d))}};
  if (!ymd.ok() || detail::to_int(h) > 23 || detail::to_int(mi) > 59 || detail::to_int(se) > 60) throw fail();
  const auto t = sys_days{ymd} + hours{detail::to_int(h)} + minutes{detail::to_int(mi)} +
                 seconds{detail::to_int(se)};
  return t - minutes{offset};
}

/// `YYYYMMDD` of the UTC calendar day containing `t` shifted by the offset.
inline std::string compact_date(Timestamp t, int offset_minutes = 0) {
  const auto s = format_rfc3339(t, offset_minutes);
  return s.substr(0, 4) + s.substr(5, 2) + s.substr(8, 2);
}

/// Minutes since local midnight.
inline int minute_of_day(Timestamp t, int offset_minutes = 0) {
  using namespace std::chrono;
  const auto local = t + minutes{offset_minutes};
  return static_cast<int>(duration_cast<minutes>(local - floor<days>(local)).count());
}

}  // namespace metaclaw
