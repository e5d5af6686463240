#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace aq {

/// UTC instant with one-second resolution. All timestamps in the system are UTC.
using Instant = std::chrono::sys_seconds;

/// Source of "now". Replay runs inject a virtual clock so output is wall-clock independent.
using Clock = std::function<Instant()>;

Instant wall_clock_now();
Clock wall_clock();

Instant floor_hour(Instant t);
bool is_hour_aligned(Instant t);
int hour_of_day(Instant t);

/// "2024-03-01T10:00:00Z"
std::string format_rfc3339(Instant t);

/// Accepts "Z" or a numeric "+hh:mm" offset and ignores fractional seconds.
std::optional<Instant> parse_rfc3339(std::string_view text);

}  // namespace aq
