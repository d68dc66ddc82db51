#pragma once

#include <cstdio>
#include <string>

namespace gridcert::detail {

/// CSV number formatting: 12 significant digits, '.' decimal separator.
inline std::string fmt12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace gridcert::detail
