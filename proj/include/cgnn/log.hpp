#pragma once

#include <string>

namespace cgnn {

enum class LogLevel : int { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Verbosity comes from the CGNN_LOG environment variable (error, warn,
// info, debug, or 0..3); default info. Messages go to stderr.
LogLevel log_level();
void log_message(LogLevel level, const std::string& message);

inline void log_error(const std::string& m) { log_message(LogLevel::Error, m); }
inline void log_warn(const std::string& m) { log_message(LogLevel::Warn, m); }
inline void log_info(const std::string& m) { log_message(LogLevel::Info, m); }
inline void log_debug(const std::string& m) { log_message(LogLevel::Debug, m); }

}  // namespace cgnn
