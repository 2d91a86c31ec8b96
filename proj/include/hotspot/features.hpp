#pragma once

#include <algorithm>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "hotspot/error.hpp"
#include "hotspot/geogrid.hpp"
#include "hotspot/ingest.hpp"

namespace hotspot {

struct FeatureKey {
    std::string variable;
    int lag = 1;
    bool neighborhood = false;

    std::string name() const {
        return variable + "@lag" + std::to_string(lag) + (neighborhood ? "/nh" : "");
    }
    bool operator==(const FeatureKey&) const = default;
};

struct RowKey {
    int cell = 0;  // linear grid index
    int week = 0;
    bool operator==(const RowKey&) const = default;
};

// Dense row-major feature matrix; one row per (cell, week).
struct FeatureMatrix {
    std::vector<FeatureKey> columns;
    std::vector<RowKey> rows;
    std::vector<double> values;

    std::size_t n_rows() const noexcept { return rows.size(); }
    std::size_t n_cols() const noexcept { return columns.size(); }
    double operator()(std::size_t r, std::size_t c) const { return values[r * columns.size() + c]; }
    double& operator()(std::size_t r, std::size_t c) { return values[r * columns.size() + c]; }

    void append(const FeatureMatrix& other) {
        if (rows.empty() && columns.empty()) {
            *this = other;
            return;
        }
        if (other.columns != columns) throw UsageError("cannot append feature matrices with different columns");
        rows.insert(rows.end(), other.rows.begin(), other.rows.end());
        values.insert(values.end(), other.values.begin(), other.values.end());
    }

    // Column-wise concatenation of matrices with identical rows.
    static FeatureMatrix hstack(const FeatureMatrix& a, const FeatureMatrix& b) {
        if (a.rows != b.rows) throw UsageError("cannot hstack feature matrices with different rows");
        FeatureMatrix out;
        out.rows = a.rows;
        out.columns = a.columns;
        out.columns.insert(out.columns.end(), b.columns.begin(), b.columns.end());
        out.values.reserve(out.rows.size() * out.columns.size());
        for (std::size_t r = 0; r < a.rows.size(); ++r) {
            for (std::size_t c = 0; c < a.n_cols(); ++c) out.values.push_back(a(r, c));
            for (std::size_t c = 0; c < b.n_cols(); ++c) out.values.push_back(b(r, c));
        }
        return out;
    }
};

struct TargetVector {
    std::vector<RowKey> rows;
    std::vector<double> values;
};

inline std::vector<int> default_lags() { return {1, 2, 3, 4, 8, 12, 26, 52}; }

inline std::vector<int> consecutive_lags(int n) {
    std::vector<int> lags(n);
    std::iota(lags.begin(), lags.end(), 1);
    return lags;
}

namespace detail {

inline int check_history(const PanelTensor& panel, const std::vector<int>& lags, int as_of) {
    if (lags.empty()) throw UsageError("at least one lag is required");
    const int max_lag = *std::max_element(lags.begin(), lags.end());
    if (*std::min_element(lags.begin(), lags.end()) < 1) throw UsageError("lags must be >= 1");
    const int earliest = panel.first_week() + max_lag;
    if (as_of < earliest) throw InsufficientHistoryError(as_of, earliest);
    if (as_of > panel.end_week()) throw DataError("as-of week " + std::to_string(as_of) + " is past the panel end");
    return max_lag;
}

template <class CellValue>
FeatureMatrix build_lagged(const PanelTensor& panel, const GridSpec& grid, const std::vector<std::string>& variables,
                           const std::vector<int>& lags, int as_of, bool neighborhood, CellValue&& value) {
    check_history(panel, lags, as_of);
    FeatureMatrix m;
    std::vector<int> var_idx;
    for (const auto& v : variables) {
        var_idx.push_back(panel.variable_index(v));
        for (int lag : lags) m.columns.push_back({v, lag, neighborhood});
    }
    m.rows.reserve(grid.masked_cells().size());
    m.values.reserve(grid.masked_cells().size() * m.columns.size());
    for (int cell : grid.masked_cells()) {
        m.rows.push_back({cell, as_of});
        for (int v : var_idx)
            for (int lag : lags) m.values.push_back(value(v, cell, as_of - lag));
    }
    return m;
}

}  // namespace detail

// Entry (cell, variable, lag) = counts[variable][cell][as_of - lag], one row per in-city cell.
inline FeatureMatrix lag_stack(const PanelTensor& panel, const GridSpec& grid,
                               const std::vector<std::string>& variables, const std::vector<int>& lags, int as_of) {
    return detail::build_lagged(panel, grid, variables, lags, as_of, false,
                                [&](int v, int cell, int w) { return static_cast<double>(panel.at(v, cell, w)); });
}

// Entry = lagged count summed over the in-city queen's-case neighbours of the cell.
inline FeatureMatrix neighborhood_stack(const PanelTensor& panel, const GridSpec& grid,
                                        const std::vector<std::string>& variables, const std::vector<int>& lags,
                                        int as_of) {
    const auto table = neighbor_table(grid);
    return detail::build_lagged(panel, grid, variables, lags, as_of, true, [&](int v, int cell, int w) {
        double s = 0.0;
        for (int n : table[cell]) s += panel.at(v, n, w);
        return s;
    });
}

// Raw count of `variable` at as_of for every in-city cell.
inline TargetVector count_target(const PanelTensor& panel, const GridSpec& grid, const std::string& variable,
                                 int as_of) {
    if (!panel.has_week(as_of)) throw DataError("target week " + std::to_string(as_of) + " is outside the panel");
    const int v = panel.variable_index(variable);
    TargetVector t;
    for (int cell : grid.masked_cells()) {
        t.rows.push_back({cell, as_of});
        t.values.push_back(panel.at(v, cell, as_of));
    }
    return t;
}

// max(0, count at as_of - mean of the `baseline` weeks strictly before as_of).
inline TargetVector diff_target(const PanelTensor& panel, const GridSpec& grid, const std::string& variable,
                                int as_of, int baseline = 52) {
    if (baseline < 1) throw UsageError("baseline window must be >= 1 week");
    const int earliest = panel.first_week() + baseline;
    if (as_of < earliest) throw InsufficientHistoryError(as_of, earliest);
    if (!panel.has_week(as_of)) throw DataError("target week " + std::to_string(as_of) + " is outside the panel");
    const int v = panel.variable_index(variable);
    TargetVector t;
    for (int cell : grid.masked_cells()) {
        long long sum = 0;
        for (int w = as_of - baseline; w < as_of; ++w) sum += panel.at(v, cell, w);
        const double mean = static_cast<double>(sum) / baseline;
        t.rows.push_back({cell, as_of});
        t.values.push_back(std::max(0.0, panel.at(v, cell, as_of) - mean));
    }
    return t;
}

inline void write_csv(std::ostream& out, const FeatureMatrix& m) {
    out << "cell,week";
    for (const auto& c : m.columns) out << ',' << c.name();
    out << '\n';
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
        out << m.rows[r].cell << ',' << m.rows[r].week;
        for (std::size_t c = 0; c < m.n_cols(); ++c) out << ',' << m(r, c);
        out << '\n';
    }
}

}  // namespace hotspot
