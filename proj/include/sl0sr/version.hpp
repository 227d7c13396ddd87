#pragma once

namespace sl0sr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sl0sr
