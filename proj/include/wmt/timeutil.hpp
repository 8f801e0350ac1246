#pragma once

// UTC calendar helpers. All timestamps in the project are stored as hours
// since the Unix epoch (u64); conversions use the proleptic Gregorian
// calendar with the standard days-from-civil algorithm.

#include <cstdint>
#include <cstdio>
#include <string>

#include "wmt/error.hpp"

namespace wmt {

struct CivilDateTime {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
  int hour = 0;   // 0..23
};

inline bool is_leap_year(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

inline int days_in_month(int y, int m) {
  static constexpr int kDays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return (m == 2 && is_leap_year(y)) ? 29 : kDays[m - 1];
}

inline int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);            // [0, 399]
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;                   // [0, 365]
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;        // [0, 146096]
  return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

inline void civil_from_days(int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t yy = static_cast<int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  y = static_cast<int>(yy + (m <= 2));
}

inline uint64_t epoch_hour(int year, int month, int day, int hour = 0) {
  return static_cast<uint64_t>(days_from_civil(year, month, day) * 24 + hour);
}

inline CivilDateTime civil_of(uint64_t epoch_hr) {
  CivilDateTime c;
  const int64_t days = static_cast<int64_t>(epoch_hr / 24);
  c.hour = static_cast<int>(epoch_hr % 24);
  civil_from_days(days, c.year, c.month, c.day);
  return c;
}

inline int year_of(uint64_t epoch_hr) { return civil_of(epoch_hr).year; }
inline int hour_of_day(uint64_t epoch_hr) { return static_cast<int>(epoch_hr % 24); }
inline int64_t day_of(uint64_t epoch_hr) { return static_cast<int64_t>(epoch_hr / 24); }

inline std::string format_iso8601(uint64_t epoch_hr) {
  const CivilDateTime c = civil_of(epoch_hr);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:00:00Z", c.year, c.month, c.day, c.hour);
  return std::string(buf);
}

// Strict ISO-8601 UTC timestamp on a whole hour: YYYY-MM-DDTHH:MM:SSZ.
inline uint64_t parse_iso8601_hour(const std::string& s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  char t = 0, z = 0;
  if (s.size() != 20 ||
      std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%c", &y, &mo, &d, &t, &h, &mi, &se, &z) != 8 ||
      (t != 'T' && t != ' ') || z != 'Z') {
    throw DataError("unparsable timestamp: '" + s + "' (expected YYYY-MM-DDTHH:MM:SSZ)");
  }
  if (mo < 1 || mo > 12 || d < 1 || h < 0 || h > 23 || d > days_in_month(y, mo)) {
    throw DataError("timestamp out of range: '" + s + "'");
  }
  if (mi != 0 || se != 0) {
    throw DataError("timestamp not on a whole hour: '" + s + "'");
  }
  return epoch_hour(y, mo, d, h);
}

}  // namespace wmt
