#pragma once

namespace reformkit {

inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace reformkit
