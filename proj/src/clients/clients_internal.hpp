#pragma once

#include <cstdio>
#include <string>

#include "megacurate/common.hpp"

namespace megacurate::detail {

inline std::string hex16(u64 v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace megacurate::detail
