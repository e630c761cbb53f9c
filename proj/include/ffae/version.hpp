#pragma once

#include <cstdint>

namespace ffae {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
inline constexpr std::uint32_t kCsvFormatVersion = 1;

inline const char* build_id() {
#ifdef FFAE_BUILD_ID
  return FFAE_BUILD_ID;
#else
  return "unknown";
#endif
}

}  // namespace ffae
