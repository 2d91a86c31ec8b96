#pragma once

#include <vector>

namespace oracle {

// Midpoint Riemann sum of a piecewise-linear curve over [0, A] with n slices.
inline double riemann_area(const std::vector<double>& xs, const std::vector<double>& ys, double A, long n) {
    const double h = A / n;
    double s = 0.0;
    std::size_t seg = 1;
    for (long i = 0; i < n; ++i) {
        const double x = (i + 0.5) * h;
        while (seg + 1 < xs.size() && xs[seg] < x) ++seg;
        const double t = (x - xs[seg - 1]) / (xs[seg] - xs[seg - 1]);
        s += (ys[seg - 1] + t * (ys[seg] - ys[seg - 1])) * h;
    }
    return s;
}

}  // namespace oracle
