#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "hotspot/error.hpp"
#include "hotspot/geogrid.hpp"

namespace hotspot {

struct WeightedPoint {
    double x = 0.0;
    double y = 0.0;
    double weight = 1.0;
};

// Gaussian kernel density sum w / (2 pi h^2) exp(-d^2 / 2h^2), evaluated at
// the centre of every in-city cell (ordered as grid.masked_cells()).
inline std::vector<double> kde_surface(const std::vector<WeightedPoint>& points, double bandwidth,
                                       const GridSpec& grid) {
    if (!(bandwidth > 0) || !std::isfinite(bandwidth)) throw UsageError("KDE bandwidth must be positive");
    std::vector<double> out(grid.masked_cells().size(), 0.0);
    const double norm = 1.0 / (2.0 * std::numbers::pi * bandwidth * bandwidth);
    const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    // Contributions beyond 8 bandwidths are below 1e-14 of the peak.
    const double cutoff2 = 64.0 * bandwidth * bandwidth;
    for (std::size_t k = 0; k < out.size(); ++k) {
        const Point c = grid.center(grid.cell(grid.masked_cells()[k]));
        double s = 0.0;
        for (const auto& p : points) {
            if (p.weight == 0.0) continue;
            const double dx = c.x - p.x, dy = c.y - p.y, d2 = dx * dx + dy * dy;
            if (d2 <= cutoff2) s += p.weight * std::exp(-d2 * inv2h2);
        }
        out[k] = s * norm;
    }
    return out;
}

}  // namespace hotspot
