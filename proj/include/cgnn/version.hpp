#pragma once

namespace cgnn {

inline constexpr const char* kVersionString = "0.1.0";

#ifdef CGNN_GIT_SHA
inline constexpr const char* kBuildId = CGNN_GIT_SHA;
#else
inline constexpr const char* kBuildId = "unknown";
#endif

}  // namespace cgnn
