#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace diffrecon {

/// Unix time in seconds, UTC. All timestamps in the library use this type.
using UnixTime = std::int64_t;

struct CivilDate {
  int year;
  int month;  // 1..12
  int day;    // 1..31
};

CivilDate civil_from_unix(UnixTime t);
UnixTime unix_from_civil(int year, int month, int day, int hour = 0, int minute = 0, int second = 0);

/// Day of week with Monday = 0 .. Sunday = 6.
int weekday_monday0(UnixTime t);

/// Parses "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM:SS" (optional trailing 'Z').
std::optional<UnixTime> parse_iso8601(const std::string& s);
std::string format_iso8601(UnixTime t);

}  // namespace diffrecon
