#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hotspot/error.hpp"
#include "hotspot/geogrid.hpp"
#include "hotspot/ingest.hpp"
#include "hotspot/rng.hpp"

namespace hotspot {

struct ScanOptions {
    int max_side = 6;        // cells per box side
    int max_duration = 8;    // weeks, ending at the week before as-of
    int baseline_weeks = 52; // weeks before the longest scanned interval
    double shrinkage = 1.0;  // pseudo-weeks of the city-wide mean added to each cell baseline
    int top_k = 5;
};

// Axis-aligned space-time box: rows [row0, row1], cols [col0, col1], the
// `duration` weeks ending at as_of - 1.
struct SpaceTimeCluster {
    int row0 = 0, col0 = 0, row1 = 0, col1 = 0;
    int duration = 0;
    double observed = 0.0;
    double expected = 0.0;
    double score = 0.0;
    std::vector<int> cells;  // in-city linear indices

    double intensity() const { return expected > 0 ? observed / expected : 0.0; }
    int size() const { return static_cast<int>(cells.size()); }
    bool overlaps(const SpaceTimeCluster& o) const {
        return row0 <= o.row1 && o.row0 <= row1 && col0 <= o.col1 && o.col0 <= col1;
    }
    bool covers(CellId c) const { return c.row >= row0 && c.row <= row1 && c.col >= col0 && c.col <= col1; }
};

// Expectation-based Poisson log-likelihood ratio; zero unless C > B.
inline double poisson_scan_score(double c, double b) {
    if (!(c > b) || b <= 0) return 0.0;
    return c * std::log(c / b) + b - c;
}

// Observed counts by lookback (obs[d][cell] = count in week as_of - 1 - d) and
// per-cell weekly expectations, both over the full grid.
struct ScanInput {
    std::vector<std::vector<double>> observed;
    std::vector<double> expected;
};

inline ScanInput scan_input(const PanelTensor& panel, const GridSpec& grid, const std::string& variable, int as_of,
                            const ScanOptions& opt) {
    if (opt.max_side < 1 || opt.max_duration < 1 || opt.baseline_weeks < 1 || opt.top_k < 1 || opt.shrinkage < 0)
        throw UsageError("scan options must be positive");
    const int earliest = panel.first_week() + opt.max_duration + opt.baseline_weeks;
    if (as_of < earliest) throw InsufficientHistoryError(as_of, earliest);
    if (as_of > panel.end_week()) throw DataError("scan week is past the panel end");
    const int v = panel.variable_index(variable);
    ScanInput in;
    in.observed.assign(opt.max_duration, std::vector<double>(grid.size(), 0.0));
    in.expected.assign(grid.size(), 0.0);
    const int base_end = as_of - opt.max_duration;
    double city = 0.0;
    for (int cell : grid.masked_cells()) {
        for (int d = 0; d < opt.max_duration; ++d) in.observed[d][cell] = panel.at(v, cell, as_of - 1 - d);
        double s = 0.0;
        for (int w = base_end - opt.baseline_weeks; w < base_end; ++w) s += panel.at(v, cell, w);
        in.expected[cell] = s;
        city += s;
    }
    const double city_mean =
        std::max(city / (static_cast<double>(opt.baseline_weeks) * std::max(1, grid.n_masked())), 1e-6);
    for (int cell : grid.masked_cells())
        in.expected[cell] = (in.expected[cell] + opt.shrinkage * city_mean) / (opt.baseline_weeks + opt.shrinkage);
    return in;
}

// Top-K spatially disjoint boxes by score, greedily from the best.
inline std::vector<SpaceTimeCluster> scan_boxes(const ScanInput& in, const GridSpec& grid, const ScanOptions& opt) {
    const int R = grid.n_rows(), C = grid.n_cols();
    const int stride = C + 1;
    auto prefix = [&](const std::vector<double>& v) {
        std::vector<double> p(static_cast<std::size_t>(R + 1) * stride, 0.0);
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c)
                p[(r + 1) * stride + c + 1] =
                    (grid.in_mask(r * C + c) ? v[r * C + c] : 0.0) + p[r * stride + c + 1] + p[(r + 1) * stride + c] -
                    p[r * stride + c];
        return p;
    };
    std::vector<double> inmask(grid.size(), 1.0);
    const auto mask_p = prefix(inmask);
    const auto exp_p = prefix(in.expected);
    std::vector<std::vector<double>> obs_p;
    std::vector<double> cum(grid.size(), 0.0);
    for (const auto& week : in.observed) {
        for (int i = 0; i < grid.size(); ++i) cum[i] += week[i];
        obs_p.push_back(prefix(cum));
    }
    auto box = [&](const std::vector<double>& p, int r0, int c0, int r1, int c1) {
        return p[(r1 + 1) * stride + c1 + 1] - p[r0 * stride + c1 + 1] - p[(r1 + 1) * stride + c0] + p[r0 * stride + c0];
    };

    std::vector<SpaceTimeCluster> candidates;
    for (int r0 = 0; r0 < R; ++r0)
        for (int c0 = 0; c0 < C; ++c0)
            for (int r1 = r0; r1 < std::min(R, r0 + opt.max_side); ++r1)
                for (int c1 = c0; c1 < std::min(C, c0 + opt.max_side); ++c1) {
                    if (box(mask_p, r0, c0, r1, c1) == 0) continue;
                    const double e = box(exp_p, r0, c0, r1, c1);
                    for (int d = 1; d <= static_cast<int>(obs_p.size()); ++d) {
                        const double o = box(obs_p[d - 1], r0, c0, r1, c1);
                        const double s = poisson_scan_score(o, e * d);
                        if (s > 0) candidates.push_back({r0, c0, r1, c1, d, o, e * d, s, {}});
                    }
                }

    std::vector<SpaceTimeCluster> chosen;
    std::vector<char> used(candidates.size(), 0);
    while (static_cast<int>(chosen.size()) < opt.top_k) {
        std::ptrdiff_t best = -1;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (used[i]) continue;
            if (best >= 0 && candidates[i].score <= candidates[best].score) continue;
            bool clash = false;
            for (const auto& c : chosen)
                if (c.overlaps(candidates[i])) {
                    clash = true;
                    break;
                }
            if (clash) {
                used[i] = 1;
                continue;
            }
            best = static_cast<std::ptrdiff_t>(i);
        }
        if (best < 0) break;
        used[best] = 1;
        auto c = candidates[best];
        for (int r = c.row0; r <= c.row1; ++r)
            for (int col = c.col0; col <= c.col1; ++col)
                if (grid.in_mask(r * C + col)) c.cells.push_back(r * C + col);
        chosen.push_back(std::move(c));
    }
    return chosen;
}

inline std::vector<SpaceTimeCluster> scan_clusters(const PanelTensor& panel, const GridSpec& grid,
                                                   const std::string& variable, int as_of,
                                                   const ScanOptions& opt = {}) {
    return scan_boxes(scan_input(panel, grid, variable, as_of, opt), grid, opt);
}

struct ScanSignificance {
    double observed_score = 0.0;
    std::vector<double> null_scores;  // top score per replicate
    double p_value = 1.0;             // (1 + #null >= observed) / (R + 1)
};

// Monte Carlo null: scanned weeks redrawn as Poisson(expected) per cell.
inline ScanSignificance scan_monte_carlo(const PanelTensor& panel, const GridSpec& grid, const std::string& variable,
                                         int as_of, int replicates, std::uint64_t seed, const ScanOptions& opt = {}) {
    if (replicates < 1) throw UsageError("Monte Carlo scan needs at least one replicate");
    const auto in = scan_input(panel, grid, variable, as_of, opt);
    ScanOptions one = opt;
    one.top_k = 1;
    ScanSignificance sig;
    const auto top = scan_boxes(in, grid, one);
    sig.observed_score = top.empty() ? 0.0 : top[0].score;
    int at_least = 0;
    for (int r = 0; r < replicates; ++r) {
        auto rng = make_engine(seed, streams::replication, static_cast<std::uint64_t>(r));
        ScanInput null = in;
        for (auto& week : null.observed)
            for (int cell : grid.masked_cells()) week[cell] = poisson(rng, in.expected[cell]);
        const auto t = scan_boxes(null, grid, one);
        const double s = t.empty() ? 0.0 : t[0].score;
        sig.null_scores.push_back(s);
        if (s >= sig.observed_score) ++at_least;
    }
    sig.p_value = (1.0 + at_least) / (replicates + 1.0);
    return sig;
}

}  // namespace hotspot
