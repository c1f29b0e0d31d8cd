#include "ifteval/clock.hpp"

#include <ctime>
#include <mutex>

namespace ifteval {

namespace {
std::mutex g_mutex;
std::optional<std::string> g_fixed_time;
}  // namespace

std::string now_iso8601() {
  {
    std::lock_guard<std::mutex> lock(g_mutex);
    if (g_fixed_time) return *g_fixed_time;
  }
  std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

void set_fixed_time(std::optional<std::string> iso8601) {
  std::lock_guard<std::mutex> lock(g_mutex);
  g_fixed_time = std::move(iso8601);
}

}  // namespace ifteval
