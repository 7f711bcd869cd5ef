#pragma once

namespace bwm {
inline constexpr const char* kVersion = "0.1.0";
}
