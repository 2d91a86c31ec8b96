#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "hotspot/csv.hpp"
#include "hotspot/error.hpp"
#include "hotspot/geogrid.hpp"
#include "hotspot/ingest.hpp"
#include "hotspot/models/zoo.hpp"
#include "hotspot/parallel.hpp"
#include "json.hpp"

namespace hotspot {

struct BacktestConfig {
    int evaluation_start = 0;     // first forecast week
    int evaluation_weeks = 156;
    int calibration_weeks = 104;  // immediately before evaluation_start
    int refit_every = 1;          // weeks between refits
    double top_fraction = 0.01;
    double max_area = 0.01;       // tradeoff-curve extent and pAUC limit
    unsigned threads = 1;

    void validate(const PanelTensor& panel) const {
        if (evaluation_weeks < 1) throw UsageError("evaluation span must be at least one week");
        if (calibration_weeks < 0) throw UsageError("calibration span must be nonnegative");
        if (refit_every < 1) throw UsageError("refit cadence must be at least one week");
        if (!(top_fraction > 0 && top_fraction <= 1)) throw UsageError("top fraction must be in (0, 1]");
        if (!(max_area > 0 && max_area <= 1)) throw UsageError("maximum area must be in (0, 1]");
        if (evaluation_start - calibration_weeks < panel.first_week())
            throw InsufficientHistoryError(evaluation_start, panel.first_week() + calibration_weeks);
        if (evaluation_start + evaluation_weeks > panel.end_week())
            throw DataError("evaluation span runs past the panel end");
    }
};

using ScoreSeries = std::vector<ScoreGrid>;

namespace backtest_detail {

template <class E>
[[noreturn]] void rethrow_at_week(const E& e, int week) {
    const std::string msg = std::string(e.what()) + " (forecast week " + std::to_string(week) + ")";
    switch (e.exit_code()) {
        case ExitCode::usage:
            throw UsageError(msg);
        case ExitCode::numeric:
            throw NumericError(msg);
        default:
            throw DataError(msg);
    }
}

}  // namespace backtest_detail

// One-week-ahead forecasts over [first_week, first_week + weeks); the model is
// refitted every `refit_every` weeks on the window ending just before the refit week.
inline ScoreSeries rolling_forecasts(const ModelSpec& spec, const PanelTensor& panel, const GridSpec& grid,
                                     int first_week, int weeks, int refit_every, unsigned threads) {
    if (weeks < 1 || refit_every < 1) throw UsageError("forecast span and refit cadence must be positive");
    ScoreSeries series(weeks);
    const int blocks = (weeks + refit_every - 1) / refit_every;
    parallel_for(static_cast<std::size_t>(blocks), threads, [&](std::size_t b) {
        const int w0 = first_week + static_cast<int>(b) * refit_every;
        int w = w0;
        try {
            const auto model = fit(spec, panel, grid, w0);
            for (; w < std::min(first_week + weeks, w0 + refit_every); ++w)
                series[w - first_week] = score(model, panel, grid, w);
        } catch (const Error& e) {
            backtest_detail::rethrow_at_week(e, w);
        }
    });
    return series;
}

inline ScoreSeries rolling_backtest(const ModelSpec& spec, const PanelTensor& panel, const GridSpec& grid,
                                    const BacktestConfig& cfg) {
    cfg.validate(panel);
    return rolling_forecasts(spec, panel, grid, cfg.evaluation_start, cfg.evaluation_weeks, cfg.refit_every,
                             cfg.threads);
}

struct TradeoffCurve {
    std::vector<double> area;     // fraction of in-city cells
    std::vector<double> capture;  // fraction of crime captured
};

namespace backtest_detail {

inline std::vector<double> actuals(const PanelTensor& panel, const GridSpec& grid, int v, int week) {
    if (!panel.has_week(week)) throw DataError("actual counts missing for week " + std::to_string(week));
    std::vector<double> a;
    a.reserve(grid.masked_cells().size());
    for (int cell : grid.masked_cells()) a.push_back(panel.at(v, cell, week));
    return a;
}

inline int area_steps(int n, double max_area) {
    return std::min(n, static_cast<int>(std::ceil(max_area * n - 1e-9)));
}

// Captured crime at k = 0..K cells, ties pooled at their mean.
inline std::vector<double> pooled_capture(const std::vector<double>& scores, const std::vector<double>& actual, int K) {
    const int n = static_cast<int>(scores.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    std::vector<double> cum(K + 1, 0.0);
    double before = 0.0;
    int taken = 0;
    for (int g = 0; g < n && taken < K;) {
        int h = g;
        double group = 0.0;
        while (h < n && scores[order[h]] == scores[order[g]]) group += actual[order[h++]];
        const double per_cell = group / (h - g);
        for (int k = g + 1; k <= std::min(h, K); ++k) cum[k] = before + per_cell * (k - g);
        before += group;
        taken = h;
        g = h;
    }
    return cum;
}

}  // namespace backtest_detail

// Mean over weeks (with nonzero crime) of the weekly capture curve on the area grid k/N.
inline TradeoffCurve tradeoff_curve(const ScoreSeries& series, const PanelTensor& panel, const GridSpec& grid,
                                    const std::string& variable, double max_area = 0.01) {
    if (series.empty()) throw DataError("score series is empty");
    const int v = panel.variable_index(variable);
    const int n = grid.n_masked();
    const int K = backtest_detail::area_steps(n, max_area);
    TradeoffCurve c;
    for (int k = 0; k <= K; ++k) c.area.push_back(static_cast<double>(k) / n);
    c.capture.assign(K + 1, 0.0);
    int used = 0;
    for (const auto& s : series) {
        if (s.scores.size() != static_cast<std::size_t>(n)) throw DataError("score grid does not cover the city mask");
        const auto a = backtest_detail::actuals(panel, grid, v, s.week);
        const double total = std::accumulate(a.begin(), a.end(), 0.0);
        if (total == 0) continue;
        const auto cum = backtest_detail::pooled_capture(s.scores, a, K);
        for (int k = 0; k <= K; ++k) c.capture[k] += cum[k] / total;
        ++used;
    }
    if (used == 0) throw DataError("no crime in the evaluation span; tradeoff curve undefined");
    for (auto& x : c.capture) x /= used;
    return c;
}

// Trapezoidal integral of capture over area in [0, A].
inline double pauc(const TradeoffCurve& c, double A = 0.01) {
    if (c.area.size() < 2 || c.area.size() != c.capture.size()) throw DataError("tradeoff curve needs two points");
    if (!(A > 0)) throw UsageError("pAUC limit must be positive");
    if (A > c.area.back() + 1e-12) throw DataError("pAUC limit exceeds the tradeoff curve domain");
    double s = 0.0;
    for (std::size_t i = 1; i < c.area.size() && c.area[i - 1] < A; ++i) {
        const double x0 = c.area[i - 1], y0 = c.capture[i - 1];
        double x1 = c.area[i], y1 = c.capture[i];
        if (x1 > A) {
            y1 = y0 + (y1 - y0) * (A - x0) / (x1 - x0);
            x1 = A;
        }
        s += 0.5 * (y0 + y1) * (x1 - x0);
    }
    return s;
}

using Selections = std::vector<std::vector<int>>;  // per week, linear cell indices

inline int top_count(int n, double fraction) {
    return std::clamp(static_cast<int>(std::lround(fraction * n)), 1, n);
}

// Top max(1, round(f * N)) cells per week by score; ties go to the lower cell index.
inline Selections top_selections(const ScoreSeries& series, double fraction) {
    Selections out;
    for (const auto& s : series) {
        const int n = static_cast<int>(s.scores.size());
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        const int k = top_count(n, fraction);
        std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
            return s.scores[a] != s.scores[b] ? s.scores[a] > s.scores[b] : s.cells[a] < s.cells[b];
        });
        std::vector<int> week;
        for (int i = 0; i < k; ++i) week.push_back(s.cells[order[i]]);
        out.push_back(std::move(week));
    }
    return out;
}

inline std::map<int, int> selection_counts(const Selections& sel) {
    std::map<int, int> n;
    for (const auto& week : sel)
        for (int c : week) ++n[c];
    return n;
}

// Shannon entropy (bits) of a histogram; zero entries are ignored.
inline double entropy_bits(const std::vector<double>& counts) {
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    if (!(total > 0)) throw DataError("entropy of an empty selection history is undefined");
    double h = 0.0;
    for (double c : counts)
        if (c > 0) h -= (c / total) * std::log2(c / total);
    return h;
}

inline double selection_entropy(const Selections& sel) {
    std::vector<double> counts;
    for (const auto& [cell, n] : selection_counts(sel)) counts.push_back(n);
    if (counts.empty()) throw DataError("selection series is empty");
    return entropy_bits(counts);
}

inline constexpr std::array<double, 4> persistence_thresholds{0.25, 0.5, 0.75, 1.0};

// Share of all selections held by cells selected in more than t * W weeks;
// the last column (t = 1) counts cells selected in every week.
inline std::array<double, 4> persistence_table(const Selections& sel) {
    if (sel.empty()) throw DataError("selection series is empty");
    const double W = static_cast<double>(sel.size());
    const auto counts = selection_counts(sel);
    double total = 0.0;
    for (const auto& [cell, n] : counts) total += n;
    std::array<double, 4> out{};
    if (total == 0) return out;
    for (std::size_t k = 0; k < persistence_thresholds.size(); ++k) {
        const double t = persistence_thresholds[k];
        double held = 0.0;
        for (const auto& [cell, n] : counts)
            if (t < 1.0 ? n > t * W : n >= W) held += n;
        out[k] = held / total;
    }
    return out;
}

struct Footprint {
    std::vector<int> cells;  // ascending linear indices
    double fraction = 0.0;   // of in-city cells
};

inline Footprint footprint(const Selections& sel, int n_masked) {
    if (n_masked < 1) throw UsageError("city has no cells");
    std::set<int> s;
    for (const auto& week : sel) s.insert(week.begin(), week.end());
    return {{s.begin(), s.end()}, static_cast<double>(s.size()) / n_masked};
}

// Mixed program: at k cells, ceil(k * mix) come from the chronic ranking and
// the rest from the temporary ranking, skipping cells already chosen. Ranks
// break ties by lower cell index.
inline TradeoffCurve composite_curve(const ScoreSeries& chronic, const ScoreSeries& temporary,
                                     const PanelTensor& panel, const GridSpec& grid, const std::string& variable,
                                     double max_area = 0.01, double mix = 0.5) {
    if (chronic.size() != temporary.size()) throw DataError("chronic and temporary series differ in length");
    if (!(mix >= 0 && mix <= 1)) throw UsageError("composite mix must be in [0, 1]");
    const int v = panel.variable_index(variable);
    const int n = grid.n_masked();
    const int K = backtest_detail::area_steps(n, max_area);
    TradeoffCurve c;
    for (int k = 0; k <= K; ++k) c.area.push_back(static_cast<double>(k) / n);
    c.capture.assign(K + 1, 0.0);
    int used = 0;
    auto ranking = [](const ScoreGrid& s) {
        std::vector<int> order(s.scores.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s.scores[a] > s.scores[b]; });
        return order;
    };
    for (std::size_t i = 0; i < chronic.size(); ++i) {
        if (chronic[i].week != temporary[i].week) throw DataError("chronic and temporary series cover different weeks");
        const auto a = backtest_detail::actuals(panel, grid, v, chronic[i].week);
        const double total = std::accumulate(a.begin(), a.end(), 0.0);
        if (total == 0) continue;
        const auto rc = ranking(chronic[i]), rt = ranking(temporary[i]);
        for (int k = 1; k <= K; ++k) {
            const int kc = std::min(k, static_cast<int>(std::ceil(k * mix - 1e-12)));
            std::vector<char> chosen(n, 0);
            double got = 0.0;
            for (int j = 0; j < kc; ++j) {
                chosen[rc[j]] = 1;
                got += a[rc[j]];
            }
            int need = k - kc;
            for (int j = 0; j < n && need > 0; ++j)
                if (!chosen[rt[j]]) {
                    chosen[rt[j]] = 1;
                    got += a[rt[j]];
                    --need;
                }
            c.capture[k] += got / total;
        }
        ++used;
    }
    if (used == 0) throw DataError("no crime in the evaluation span; tradeoff curve undefined");
    for (auto& x : c.capture) x /= used;
    return c;
}

struct ModelMetrics {
    std::string model;
    TradeoffCurve curve;
    double pauc = 0.0;
    double entropy = 0.0;
    std::array<double, 4> persistence{};
    double footprint = 0.0;
};

inline ModelMetrics evaluate(const std::string& name, const ScoreSeries& series, const PanelTensor& panel,
                             const GridSpec& grid, const std::string& variable, const BacktestConfig& cfg) {
    ModelMetrics m;
    m.model = name;
    m.curve = tradeoff_curve(series, panel, grid, variable, cfg.max_area);
    m.pauc = pauc(m.curve, std::min(cfg.max_area, m.curve.area.back()));
    const auto sel = top_selections(series, cfg.top_fraction);
    m.entropy = selection_entropy(sel);
    m.persistence = persistence_table(sel);
    m.footprint = footprint(sel, grid.n_masked()).fraction;
    return m;
}

// Picks the candidate with the highest pAUC over the calibration weeks before
// cfg.evaluation_start. Candidates typically differ in one hyperparameter.
inline std::size_t calibrate(const std::vector<ModelSpec>& candidates, const PanelTensor& panel, const GridSpec& grid,
                             const BacktestConfig& cfg, std::vector<double>* scores = nullptr) {
    if (candidates.empty()) throw UsageError("calibration needs at least one candidate");
    if (cfg.calibration_weeks < 1) throw UsageError("calibration span is empty");
    const int first = cfg.evaluation_start - cfg.calibration_weeks;
    std::vector<double> p(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto s = rolling_forecasts(candidates[i], panel, grid, first, cfg.calibration_weeks, cfg.refit_every,
                                         cfg.threads);
        const auto c = tradeoff_curve(s, panel, grid, candidates[i].target, cfg.max_area);
        p[i] = pauc(c, std::min(cfg.max_area, c.area.back()));
    }
    if (scores) *scores = p;
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

inline void write_curve_csv(std::ostream& out, const TradeoffCurve& c) {
    out << "area,capture\n";
    for (std::size_t i = 0; i < c.area.size(); ++i) out << csv::format(c.area[i]) << ',' << csv::format(c.capture[i]) << '\n';
}

inline void write_metrics_csv(std::ostream& out, const std::vector<ModelMetrics>& rows) {
    out << "model,pauc,pauc_over_area,entropy_bits,persist_25,persist_50,persist_75,persist_100,footprint\n";
    for (const auto& m : rows) {
        out << m.model << ',' << csv::format(m.pauc) << ',' << csv::format(m.pauc / m.curve.area.back()) << ','
            << csv::format(m.entropy);
        for (double p : m.persistence) out << ',' << csv::format(p);
        out << ',' << csv::format(m.footprint) << '\n';
    }
}

inline nlohmann::json to_json(const ModelMetrics& m) {
    return {{"model", m.model},
            {"pauc", m.pauc},
            {"pauc_over_area", m.pauc / m.curve.area.back()},
            {"entropy_bits", m.entropy},
            {"persistence", {{"gt25", m.persistence[0]}, {"gt50", m.persistence[1]}, {"gt75", m.persistence[2]},
                             {"all_weeks", m.persistence[3]}}},
            {"footprint", m.footprint}};
}

inline void write_selections_csv(std::ostream& out, const ScoreSeries& series, const Selections& sel,
                                 const GridSpec& grid) {
    out << "week,rank,cell,row,col\n";
    for (std::size_t i = 0; i < sel.size(); ++i)
        for (std::size_t r = 0; r < sel[i].size(); ++r) {
            const CellId c = grid.cell(sel[i][r]);
            out << series[i].week << ',' << r + 1 << ',' << sel[i][r] << ',' << c.row << ',' << c.col << '\n';
        }
}

}  // namespace hotspot
