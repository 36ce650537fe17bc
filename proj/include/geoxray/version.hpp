#pragma once

namespace geoxray {
inline constexpr const char* kVersion = "0.1.0";
}
