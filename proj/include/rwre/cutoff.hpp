#pragma once

#include <algorithm>

#include "rwre/point.hpp"

namespace rwre {

/// eta_0 as a function of |x|: 0 on [0, 7/3], 1 on [8/3, inf), quintic
/// smoothstep in between (C^2, so discrete differences of eta_R are
/// O(1/R) and O(1/R^2)).
inline double eta0_profile(double s) {
    constexpr double lo = 7.0 / 3.0, hi = 8.0 / 3.0;
    if (s <= lo) return 0.0;
    if (s >= hi) return 1.0;
    const double t = (s - lo) / (hi - lo);
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

/// eta_R(x) = eta_0(x / (R v 1)).
inline double eta_R(const Point& x, double R) { return eta0_profile(norm(x) / std::max(R, 1.0)); }

}  // namespace rwre
