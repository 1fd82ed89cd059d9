#pragma once

#include <string>
#include <utility>
#include <vector>

namespace zrigf {

enum class LogLevel { kQuiet, kInfo };

void set_log_level(LogLevel level);
LogLevel log_level();

// One line on stderr: "[zrigf] event key=value key=value".
void log_event(const std::string& event, const std::vector<std::pair<std::string, std::string>>& fields = {});
std::string log_number(double value);

}  // namespace zrigf
