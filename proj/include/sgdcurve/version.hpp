#pragma once

namespace sgdcurve {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sgdcurve
