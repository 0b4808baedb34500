#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace firstdrive {

// Timezone-naive local wall-clock time. "Midnight" is local 00:00.
using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;

// Accepts "YYYY-MM-DDTHH:MM[:SS]" (a space may replace the 'T'). Throws DataError.
Timestamp parse_timestamp(std::string_view text);
Date parse_date(std::string_view text);

std::string format_timestamp(Timestamp t);
std::string format_date(Date d);

inline Date date_of(Timestamp t) { return std::chrono::floor<std::chrono::days>(t); }

inline Timestamp midnight_of(Date d) { return Timestamp{d}; }

// Fractional hours elapsed since the local midnight of t's date.
inline double hours_since_midnight(Timestamp t) {
  return std::chrono::duration<double, std::ratio<3600>>(t - midnight_of(date_of(t))).count();
}

inline double seconds_between(Timestamp a, Timestamp b) {
  return std::chrono::duration<double>(b - a).count();
}

}  // namespace firstdrive
