#pragma once

namespace crossflux {

inline constexpr const char* kVersion = "0.1.0";

}
