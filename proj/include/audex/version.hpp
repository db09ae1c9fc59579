#pragma once

namespace audex {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kReportFormatVersion = 1;

}  // namespace audex
