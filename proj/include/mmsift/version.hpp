#pragma once

namespace mmsift {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mmsift
