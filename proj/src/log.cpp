#include "cgnn/log.hpp"

#include <cstdlib>
#include <iostream>

namespace cgnn {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("CGNN_LOG");
    if (!env) return LogLevel::Info;
    const std::string v(env);
    if (v == "error" || v == "0") return LogLevel::Error;
    if (v == "warn" || v == "1") return LogLevel::Warn;
    if (v == "info" || v == "2") return LogLevel::Info;
    if (v == "debug" || v == "3") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

void log_message(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  const char* tag = "info";
  switch (level) {
    case LogLevel::Error: tag = "error"; break;
    case LogLevel::Warn: tag = "warn"; break;
    case LogLevel::Info: tag = "info"; break;
    case LogLevel::Debug: tag = "debug"; break;
  }
  std::cerr << "[" << tag << "] " << message << "\n";
}

}  // namespace cgnn
