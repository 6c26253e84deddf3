#pragma once

namespace dataloops {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dataloops
