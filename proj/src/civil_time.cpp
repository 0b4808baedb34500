#include "firstdrive/civil_time.hpp"

#include <charconv>
#include <cstdio>

#include "firstdrive/errors.hpp"

namespace firstdrive {
namespace {

int read_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole) {
  int value = 0;
  if (pos + len > text.size()) throw DataError("truncated timestamp '" + std::string(whole) + "'");
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, value);
  if (ec != std::errc{} || ptr != text.data() + pos + len) {
    throw DataError("malformed timestamp '" + std::string(whole) + "'");
  }
  return value;
}

void expect(std::string_view text, std::size_t pos, std::string_view allowed, std::string_view whole) {
  if (pos >= text.size() || allowed.find(text[pos]) == std::string_view::npos) {
    throw DataError("malformed timestamp '" + std::string(whole) + "'");
  }
}

}  // namespace

Date parse_date(std::string_view text) {
  using namespace std::chrono;
  expect(text, 4, "-", text);
  expect(text, 7, "-", text);
  const year_month_day ymd{year{read_int(text, 0, 4, text)},
                           month{static_cast<unsigned>(read_int(text, 5, 2, text))},
                           day{static_cast<unsigned>(read_int(text, 8, 2, text))}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
  return sys_days{ymd};
}

Timestamp parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  const Date d = parse_date(text.substr(0, 10));
  if (text.size() == 10) return Timestamp{d};
  expect(text, 10, "T ", text);
  const int hh = read_int(text, 11, 2, text);
  expect(text, 13, ":", text);
  const int mm = read_int(text, 14, 2, text);
  int ss = 0;
  if (text.size() > 16) {
    expect(text, 16, ":", text);
    ss = read_int(text, 17, 2, text);
    if (text.size() != 19) throw DataError("trailing characters in timestamp '" + std::string(text) + "'");
  }
  if (hh > 23 || mm > 59 || ss > 59) throw DataError("time of day out of range in '" + std::string(text) + "'");
  return Timestamp{d} + hours{hh} + minutes{mm} + seconds{ss};
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string format_timestamp(Timestamp t) {
  const Date d = date_of(t);
  const std::chrono::hh_mm_ss hms{t - Timestamp{d}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "T%02d:%02d:%02d", static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()));
  return format_date(d) + buf;
}

}  // namespace firstdrive
