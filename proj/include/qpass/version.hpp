#pragma once

namespace qpass {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qpass
