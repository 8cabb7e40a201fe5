#pragma once

namespace tubeprune {

inline constexpr const char* kVersion = "tubeprune 0.1.0";

}  // namespace tubeprune
