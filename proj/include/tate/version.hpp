#pragma once

namespace tate {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tate
