#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>

#include "glytwin/error.hpp"

namespace glytwin {

using Timestamp = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

inline constexpr Seconds from_minutes(double m) {
  return Seconds(static_cast<long long>(m * 60.0 + (m >= 0 ? 0.5 : -0.5)));
}

inline double to_minutes(Seconds d) { return static_cast<double>(d.count()) / 60.0; }

// ISO-8601 UTC, second resolution: "2024-01-31T07:05:00Z".
inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

// Accepts "YYYY-MM-DDTHH:MM[:SS][Z]" and the space-separated variant.
inline Timestamp parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  const std::string str(text);
  const int n = std::sscanf(str.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &s);
  if (n < 6 || (sep != 'T' && sep != ' ')) {
    throw Error(ErrorCode::InvalidArgument, "malformed timestamp '" + str + "'");
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) {
    throw Error(ErrorCode::InvalidArgument, "timestamp out of range '" + str + "'");
  }
  return sys_days{ymd} + hours{h} + std::chrono::minutes{mi} + seconds{s};
}

}  // namespace glytwin
