#pragma once

namespace entroscope {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kSchemaVersion = "1";

}  // namespace entroscope
