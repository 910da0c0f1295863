#pragma once

namespace madview {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace madview
