#pragma once

#include <cstdio>
#include <string>

namespace sface {

/// Renders a double with 17 significant digits (round-trip exact),
/// locale-independent. All CSV output goes through this so reruns
/// diff cleanly byte for byte.
inline std::string g17(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

}  // namespace sface
