#pragma once

namespace eq {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace eq
