#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdlib>
#include <istream>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "hotspot/csv.hpp"
#include "hotspot/error.hpp"

namespace hotspot {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct CellId {
    int row = 0;
    int col = 0;
    auto operator<=>(const CellId&) const = default;
};

inline std::string to_string(CellId c) {
    return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
}

// ---------------------------------------------------------------------------
// GridSpec: square cells over planar coordinates in feet. A cell is inside the
// city exactly when it carries a zone id > 0.
// ---------------------------------------------------------------------------
class GridSpec {
public:
    GridSpec(double origin_x, double origin_y, double cell_size, int n_rows, int n_cols,
             std::vector<int> zone_of)
        : origin_x_(origin_x), origin_y_(origin_y), cell_size_(cell_size), n_rows_(n_rows),
          n_cols_(n_cols), zone_of_(std::move(zone_of)) {
        if (!(cell_size_ > 0.0) || !std::isfinite(cell_size_))
            throw UsageError("cell_size must be positive");
        if (n_rows_ < 1 || n_cols_ < 1) throw UsageError("grid needs at least one cell");
        if (zone_of_.size() != static_cast<std::size_t>(n_rows_) * n_cols_)
            throw UsageError("zone raster size does not match grid dimensions");
        for (int i = 0; i < size(); ++i) {
            if (zone_of_[i] < 0) throw UsageError("zone ids must be nonnegative");
            if (zone_of_[i] > 0) {
                masked_.push_back(i);
                n_zones_ = std::max(n_zones_, zone_of_[i]);
            }
        }
        position_.assign(size(), -1);
        for (std::size_t k = 0; k < masked_.size(); ++k) position_[masked_[k]] = static_cast<int>(k);
    }

    // Every cell in the city, zone 1.
    static GridSpec uniform(int n_rows, int n_cols, double cell_size = 500.0) {
        return GridSpec(0.0, 0.0, cell_size, n_rows, n_cols,
                        std::vector<int>(static_cast<std::size_t>(n_rows) * n_cols, 1));
    }

    double origin_x() const noexcept { return origin_x_; }
    double origin_y() const noexcept { return origin_y_; }
    double cell_size() const noexcept { return cell_size_; }
    double cell_area() const noexcept { return cell_size_ * cell_size_; }
    int n_rows() const noexcept { return n_rows_; }
    int n_cols() const noexcept { return n_cols_; }
    int size() const noexcept { return n_rows_ * n_cols_; }
    int n_zones() const noexcept { return n_zones_; }

    bool contains(CellId c) const noexcept {
        return c.row >= 0 && c.row < n_rows_ && c.col >= 0 && c.col < n_cols_;
    }
    int index(CellId c) const noexcept { return c.row * n_cols_ + c.col; }
    CellId cell(int index) const noexcept { return {index / n_cols_, index % n_cols_}; }

    bool in_mask(int index) const noexcept { return zone_of_[index] > 0; }
    bool in_mask(CellId c) const noexcept { return contains(c) && in_mask(index(c)); }
    int zone(int index) const noexcept { return zone_of_[index]; }
    const std::vector<int>& zones() const noexcept { return zone_of_; }

    // Linear indices of in-city cells, ascending.
    const std::vector<int>& masked_cells() const noexcept { return masked_; }
    int n_masked() const noexcept { return static_cast<int>(masked_.size()); }
    // Position of a cell within masked_cells(), or -1.
    int masked_position(int index) const noexcept { return position_[index]; }

    std::vector<CellId> zone_cells(int zone_id) const {
        std::vector<CellId> out;
        for (int i : masked_)
            if (zone_of_[i] == zone_id) out.push_back(cell(i));
        return out;
    }

    Point center(CellId c) const noexcept {
        return {origin_x_ + (c.col + 0.5) * cell_size_, origin_y_ + (c.row + 0.5) * cell_size_};
    }

private:
    double origin_x_;
    double origin_y_;
    double cell_size_;
    int n_rows_;
    int n_cols_;
    std::vector<int> zone_of_;
    std::vector<int> masked_;
    std::vector<int> position_;
    int n_zones_ = 0;
};

inline CellId cell_of(Point p, const GridSpec& grid) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw OutOfMaskError(p.x, p.y);
    const double r = std::floor((p.y - grid.origin_y()) / grid.cell_size());
    const double c = std::floor((p.x - grid.origin_x()) / grid.cell_size());
    if (r < 0 || c < 0 || r >= grid.n_rows() || c >= grid.n_cols()) throw OutOfMaskError(p.x, p.y);
    const CellId id{static_cast<int>(r), static_cast<int>(c)};
    if (!grid.in_mask(id)) throw OutOfMaskError(p.x, p.y);
    return id;
}

// Queen's-case neighbours, in row-major order.
inline std::vector<CellId> neighbors(CellId c, const GridSpec& grid, bool mask_aware = true) {
    std::vector<CellId> out;
    out.reserve(8);
    for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const CellId n{c.row + dr, c.col + dc};
            if (!grid.contains(n)) continue;
            if (mask_aware && !grid.in_mask(n)) continue;
            out.push_back(n);
        }
    }
    return out;
}

// Mask-aware neighbour lists by linear index; empty for cells outside the city.
inline std::vector<std::vector<int>> neighbor_table(const GridSpec& grid) {
    std::vector<std::vector<int>> table(grid.size());
    for (int i : grid.masked_cells())
        for (CellId n : neighbors(grid.cell(i), grid)) table[i].push_back(grid.index(n));
    return table;
}

inline bool queen_adjacent(CellId a, CellId b) noexcept {
    return a != b && std::abs(a.row - b.row) <= 1 && std::abs(a.col - b.col) <= 1;
}

// Reads a zone raster with header `row,col,zone_id`. Unlisted cells are outside the city.
inline std::vector<int> read_zone_raster(std::istream& in, int n_rows, int n_cols) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("zone raster is empty");
    const auto header = csv::split(line);
    if (header.size() < 3 || header[0] != "row" || header[1] != "col" || header[2] != "zone_id")
        throw DataError("zone raster header must be row,col,zone_id");
    std::vector<int> zones(static_cast<std::size_t>(n_rows) * n_cols, 0);
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const auto f = csv::split(line);
        const auto r = f.size() >= 3 ? csv::to_int(f[0]) : std::nullopt;
        const auto c = f.size() >= 3 ? csv::to_int(f[1]) : std::nullopt;
        const auto z = f.size() >= 3 ? csv::to_int(f[2]) : std::nullopt;
        if (!r || !c || !z || *r < 0 || *r >= n_rows || *c < 0 || *c >= n_cols || *z < 0)
            throw DataError("zone raster line " + std::to_string(line_no) + " is malformed");
        zones[static_cast<std::size_t>(*r) * n_cols + *c] = static_cast<int>(*z);
    }
    return zones;
}

// ---------------------------------------------------------------------------
// Zone partitioning for the crossover design
// ---------------------------------------------------------------------------
enum class Half : int { A = 0, B = 1 };

inline Half other(Half h) noexcept { return h == Half::A ? Half::B : Half::A; }
inline char to_char(Half h) noexcept { return h == Half::A ? 'A' : 'B'; }

struct ZonePartition {
    int zone = 0;
    std::vector<CellId> cells;  // sorted row-major
    std::vector<Half> half;     // aligned with cells
    double imbalance = 0.0;       // |crimeA - crimeB| / zone total
    double area_imbalance = 0.0;  // |nA - nB| / n
    bool within_tolerance = false;

    Half half_of(CellId c) const {
        auto it = std::lower_bound(cells.begin(), cells.end(), c);
        if (it == cells.end() || *it != c) throw DataError("cell " + to_string(c) + " is not in zone");
        return half[static_cast<std::size_t>(it - cells.begin())];
    }
    std::vector<CellId> cells_in(Half h) const {
        std::vector<CellId> out;
        for (std::size_t i = 0; i < cells.size(); ++i)
            if (half[i] == h) out.push_back(cells[i]);
        return out;
    }
};

namespace detail {

// Connected components of the subset `member` (indices into cells) under queen adjacency.
inline std::vector<std::vector<std::size_t>> components(const std::vector<CellId>& cells,
                                                        const std::vector<char>& member) {
    std::map<CellId, std::size_t> where;
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (member[i]) where[cells[i]] = i;
    std::vector<char> seen(cells.size(), 0);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t s = 0; s < cells.size(); ++s) {
        if (!member[s] || seen[s]) continue;
        std::vector<std::size_t> comp;
        std::queue<std::size_t> q;
        q.push(s);
        seen[s] = 1;
        while (!q.empty()) {
            const auto i = q.front();
            q.pop();
            comp.push_back(i);
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    auto it = where.find({cells[i].row + dr, cells[i].col + dc});
                    if (it != where.end() && !seen[it->second]) {
                        seen[it->second] = 1;
                        q.push(it->second);
                    }
                }
        }
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
    }
    return out;
}

inline bool connected(const std::vector<CellId>& cells, const std::vector<char>& member) {
    const auto comps = components(cells, member);
    return comps.size() == 1;
}

struct SplitScore {
    int area_violation = 0;
    double crime = 0.0;
};

}  // namespace detail

// Splits a zone into two queen-connected halves A/B. Straight row and column cuts
// across the bounding box are scored by (area excess over tolerance, crime
// imbalance); the best one is refined by boundary moves and swaps that never
// worsen either term.
inline ZonePartition partition_zone(std::vector<CellId> cells, const std::vector<double>& weights,
                                    double tolerance = 0.05, int zone_id = 0) {
    if (cells.size() != weights.size()) throw UsageError("weights must align with zone cells");
    for (double w : weights)
        if (!(w >= 0.0)) throw UsageError("cell weights must be nonnegative");
    // sort cells together with their weights
    std::vector<std::size_t> order(cells.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return cells[a] < cells[b]; });
    std::vector<CellId> sorted;
    std::vector<double> w;
    for (auto i : order) {
        if (!sorted.empty() && sorted.back() == cells[i]) throw UsageError("duplicate zone cell");
        sorted.push_back(cells[i]);
        w.push_back(weights[i]);
    }
    cells = std::move(sorted);
    const std::size_t n = cells.size();
    if (n < 2) throw DataError("zone " + std::to_string(zone_id) + " has a single cell and cannot be partitioned");

    const std::vector<char> all(n, 1);
    if (const auto comps = detail::components(cells, all); comps.size() > 1) {
        std::string msg = "zone " + std::to_string(zone_id) + " is disconnected; components:";
        for (const auto& comp : comps) {
            msg += " {";
            for (std::size_t k = 0; k < comp.size(); ++k) msg += (k ? " " : "") + to_string(cells[comp[k]]);
            msg += "}";
        }
        throw DataError(msg);
    }

    double total = 0.0;
    for (double x : w) total += x;
    const int allowed = std::max(static_cast<int>(n % 2), static_cast<int>(std::floor(tolerance * n)));

    auto score = [&](const std::vector<char>& in_a) {
        int na = 0;
        double ca = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (in_a[i]) {
                ++na;
                ca += w[i];
            }
        const int diff = std::abs(na - static_cast<int>(n - na));
        detail::SplitScore s;
        s.area_violation = std::max(0, diff - allowed);
        s.crime = total > 0.0 ? std::abs(2.0 * ca - total) / total : 0.0;
        return s;
    };
    auto valid = [&](const std::vector<char>& in_a) {
        std::vector<char> in_b(n);
        bool any_a = false, any_b = false;
        for (std::size_t i = 0; i < n; ++i) {
            in_b[i] = !in_a[i];
            any_a |= static_cast<bool>(in_a[i]);
            any_b |= static_cast<bool>(in_b[i]);
        }
        return any_a && any_b && detail::connected(cells, in_a) && detail::connected(cells, in_b);
    };
    constexpr double eps = 1e-12;
    auto better = [](const detail::SplitScore& a, const detail::SplitScore& b) {
        if (a.area_violation != b.area_violation) return a.area_violation < b.area_violation;
        return a.crime < b.crime - eps;
    };

    int rmin = cells.front().row, rmax = cells.back().row, cmin = cells.front().col, cmax = cells.front().col;
    for (const auto& c : cells) {
        cmin = std::min(cmin, c.col);
        cmax = std::max(cmax, c.col);
    }
    std::vector<char> best;
    detail::SplitScore best_score;
    auto consider = [&](std::vector<char> cand) {
        if (!valid(cand)) return;
        const auto s = score(cand);
        if (best.empty() || better(s, best_score)) {
            best = std::move(cand);
            best_score = s;
        }
    };
    for (int r = rmin + 1; r <= rmax; ++r) {
        std::vector<char> cand(n);
        for (std::size_t i = 0; i < n; ++i) cand[i] = cells[i].row < r;
        consider(std::move(cand));
    }
    for (int c = cmin + 1; c <= cmax; ++c) {
        std::vector<char> cand(n);
        for (std::size_t i = 0; i < n; ++i) cand[i] = cells[i].col < c;
        consider(std::move(cand));
    }
    if (best.empty()) {
        // No straight cut keeps both halves connected: grow A breadth-first from the first cell.
        std::vector<char> cand(n, 0);
        std::vector<std::size_t> bfs;
        std::map<CellId, std::size_t> where;
        for (std::size_t i = 0; i < n; ++i) where[cells[i]] = i;
        std::vector<char> seen(n, 0);
        std::queue<std::size_t> q;
        q.push(0);
        seen[0] = 1;
        while (!q.empty()) {
            auto i = q.front();
            q.pop();
            bfs.push_back(i);
            for (CellId nb : {CellId{cells[i].row - 1, cells[i].col - 1}, CellId{cells[i].row - 1, cells[i].col},
                              CellId{cells[i].row - 1, cells[i].col + 1}, CellId{cells[i].row, cells[i].col - 1},
                              CellId{cells[i].row, cells[i].col + 1}, CellId{cells[i].row + 1, cells[i].col - 1},
                              CellId{cells[i].row + 1, cells[i].col}, CellId{cells[i].row + 1, cells[i].col + 1}}) {
                auto it = where.find(nb);
                if (it != where.end() && !seen[it->second]) {
                    seen[it->second] = 1;
                    q.push(it->second);
                }
            }
        }
        for (std::size_t k = 0; k < n / 2; ++k) cand[bfs[k]] = 1;
        if (!valid(cand)) throw DataError("zone " + std::to_string(zone_id) + " admits no connected split");
        best = std::move(cand);
        best_score = score(best);
    }

    // Greedy refinement: best single move or swap along the A/B boundary.
    auto on_boundary = [&](std::size_t i, const std::vector<char>& in_a) {
        for (std::size_t j = 0; j < n; ++j)
            if (in_a[j] != in_a[i] && queen_adjacent(cells[i], cells[j])) return true;
        return false;
    };
    auto no_worse_and_better = [&](const detail::SplitScore& s, const detail::SplitScore& cur) {
        if (s.area_violation > cur.area_violation || s.crime > cur.crime + eps) return false;
        return s.area_violation < cur.area_violation || s.crime < cur.crime - eps;
    };
    for (std::size_t iter = 0; iter < n * n; ++iter) {
        std::vector<std::size_t> boundary;
        for (std::size_t i = 0; i < n; ++i)
            if (on_boundary(i, best)) boundary.push_back(i);
        std::vector<char> step;
        detail::SplitScore step_score = best_score;
        auto try_candidate = [&](std::vector<char>& cand) {
            const auto s = score(cand);
            if (!no_worse_and_better(s, best_score)) return;
            if (!step.empty() && !better(s, step_score)) return;
            if (!valid(cand)) return;
            step = cand;
            step_score = s;
        };
        for (auto i : boundary) {
            auto cand = best;
            cand[i] = !cand[i];
            try_candidate(cand);
        }
        for (auto i : boundary) {
            if (!best[i]) continue;
            for (auto j : boundary) {
                if (best[j]) continue;
                auto cand = best;
                cand[i] = 0;
                cand[j] = 1;
                try_candidate(cand);
            }
        }
        if (step.empty()) break;
        best = std::move(step);
        best_score = step_score;
    }

    ZonePartition out;
    out.zone = zone_id;
    out.cells = cells;
    out.half.resize(n);
    int na = 0;
    for (std::size_t i = 0; i < n; ++i) {
        out.half[i] = best[i] ? Half::A : Half::B;
        na += best[i] ? 1 : 0;
    }
    out.imbalance = best_score.crime;
    out.area_imbalance = std::abs(2.0 * na - static_cast<double>(n)) / static_cast<double>(n);
    out.within_tolerance = best_score.area_violation == 0 && out.imbalance <= tolerance + eps;
    return out;
}

// Partitions every zone of the grid using per-cell weights indexed by linear cell index.
inline std::vector<ZonePartition> partition_city(const GridSpec& grid, const std::vector<double>& weights,
                                                 double tolerance = 0.05) {
    if (weights.size() != static_cast<std::size_t>(grid.size()))
        throw UsageError("weights must cover every grid cell");
    std::vector<ZonePartition> out;
    for (int z = 1; z <= grid.n_zones(); ++z) {
        auto cells = grid.zone_cells(z);
        if (cells.empty()) continue;
        std::vector<double> wz;
        for (auto c : cells) wz.push_back(weights[grid.index(c)]);
        out.push_back(partition_zone(std::move(cells), wz, tolerance, z));
    }
    return out;
}

}  // namespace hotspot
