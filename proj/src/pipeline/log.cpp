#include "zrigf/log.hpp"

#include <atomic>
#include <cstdio>
#include <iostream>

namespace zrigf {

namespace {
std::atomic<LogLevel> g_level{LogLevel::kInfo};
}

void set_log_level(LogLevel level) { g_level.store(level); }
LogLevel log_level() { return g_level.load(); }

void log_event(const std::string& event, const std::vector<std::pair<std::string, std::string>>& fields) {
  if (log_level() == LogLevel::kQuiet) return;
  std::string line = "[zrigf] " + event;
  for (const auto& [k, v] : fields) line += " " + k + "=" + v;
  std::cerr << line << "\n";
}

std::string log_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return buf;
}

}  // namespace zrigf
