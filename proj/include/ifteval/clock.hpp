#pragma once

#include <optional>
#include <string>

namespace ifteval {

// UTC timestamp like 2024-05-01T12:30:00Z. When a fixed time is set, every
// caller sees that value instead; offline pipeline runs pin the clock so
// emitted artifacts are byte-stable across reruns.
std::string now_iso8601();

void set_fixed_time(std::optional<std::string> iso8601);

}  // namespace ifteval
