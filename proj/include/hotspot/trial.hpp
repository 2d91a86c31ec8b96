#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "hotspot/csv.hpp"
#include "hotspot/error.hpp"
#include "hotspot/geogrid.hpp"
#include "hotspot/ingest.hpp"
#include "hotspot/models/zoo.hpp"
#include "hotspot/rng.hpp"

namespace hotspot {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------
struct TrialConfig {
    int weeks = 52;
    int first_week = 0;        // absolute index of trial week 0
    int history_weeks = 104;   // simulated pre-trial weeks that feed the selection scores
    int chronic_per_zone = 3;  // per half, so each zone has this many treated and control chronic hot spots
    int temporary_per_zone = 3;
    double treatment_patrols = 12.9;  // mean patrols per treated hot spot per week
    double control_patrols = 1.9;     // mean patrols per control hot spot per week
    double background_patrols = 0.1;  // mean patrols per other cell per week
    double foot_share = 0.5;          // share of patrols on foot
    double shared_fraction = 0.0;     // common Poisson component correlating foot and car counts
    double car_weight = 1.0 / 3.0;    // dose = foot + car_weight * car
    int adjacency_radius = 1;         // queen rings excluded around hot spots of the other arm
    bool zero_variance = false;       // log patrol means exactly instead of drawing
    std::string outcome = "P1V";      // variable that drives hot-spot scores
    int chronic_window = 52;
    std::optional<ModelSpec> temporary_model;  // proxy score when empty
    int model_refit_every = 4;
    std::uint64_t seed = 1;

    void validate() const {
        if (weeks < 2) throw UsageError("trial needs at least 2 weeks");
        if (chronic_per_zone < 0 || temporary_per_zone < 0) throw UsageError("hot-spot counts must be >= 0");
        if (history_weeks < 1) throw UsageError("trial needs at least one history week");
        if (!(treatment_patrols >= 0) || !(control_patrols >= 0) || !(background_patrols >= 0))
            throw UsageError("patrol means must be >= 0");
        if (!(foot_share >= 0 && foot_share <= 1)) throw UsageError("foot share must lie in [0, 1]");
        if (!(shared_fraction >= 0 && shared_fraction <= 1)) throw UsageError("shared fraction must lie in [0, 1]");
        if (!(car_weight >= 0)) throw UsageError("car weight must be >= 0");
        if (adjacency_radius < 0) throw UsageError("adjacency radius must be >= 0");
        if (chronic_window < 1) throw UsageError("chronic window must be >= 1");
        if (model_refit_every < 1) throw UsageError("model refit cadence must be >= 1");
        if (temporary_model) temporary_model->validate();
    }
};

inline void to_json(nlohmann::json& j, const TrialConfig& c) {
    j = {{"weeks", c.weeks},
         {"first_week", c.first_week},
         {"history_weeks", c.history_weeks},
         {"chronic_per_zone", c.chronic_per_zone},
         {"temporary_per_zone", c.temporary_per_zone},
         {"treatment_patrols", c.treatment_patrols},
         {"control_patrols", c.control_patrols},
         {"background_patrols", c.background_patrols},
         {"foot_share", c.foot_share},
         {"shared_fraction", c.shared_fraction},
         {"car_weight", c.car_weight},
         {"adjacency_radius", c.adjacency_radius},
         {"zero_variance", c.zero_variance},
         {"outcome", c.outcome},
         {"chronic_window", c.chronic_window},
         {"model_refit_every", c.model_refit_every},
         {"seed", c.seed}};
    if (c.temporary_model) j["temporary_model"] = *c.temporary_model;
}

inline void from_json(const nlohmann::json& j, TrialConfig& c) {
    try {
        c.weeks = j.value("weeks", c.weeks);
        c.first_week = j.value("first_week", c.first_week);
        c.history_weeks = j.value("history_weeks", c.history_weeks);
        c.chronic_per_zone = j.value("chronic_per_zone", c.chronic_per_zone);
        c.temporary_per_zone = j.value("temporary_per_zone", c.temporary_per_zone);
        c.treatment_patrols = j.value("treatment_patrols", c.treatment_patrols);
        c.control_patrols = j.value("control_patrols", c.control_patrols);
        c.background_patrols = j.value("background_patrols", c.background_patrols);
        c.foot_share = j.value("foot_share", c.foot_share);
        c.shared_fraction = j.value("shared_fraction", c.shared_fraction);
        c.car_weight = j.value("car_weight", c.car_weight);
        c.adjacency_radius = j.value("adjacency_radius", c.adjacency_radius);
        c.zero_variance = j.value("zero_variance", c.zero_variance);
        c.outcome = j.value("outcome", c.outcome);
        c.chronic_window = j.value("chronic_window", c.chronic_window);
        c.model_refit_every = j.value("model_refit_every", c.model_refit_every);
        c.seed = j.value("seed", c.seed);
        if (j.contains("temporary_model")) c.temporary_model = j.at("temporary_model").get<ModelSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("invalid trial config: ") + e.what());
    }
}

// Synthetic city. Rates are expected counts per cell-week.
struct WorldConfig {
    double p1v_rate = 0.03;         // median ordinary-cell P1V rate
    double p1p_rate = 0.15;         // median ordinary-cell P1P rate
    double heterogeneity = 0.5;     // log-normal spread of cell baselines
    double hot_share = 0.04;        // share of cells with persistently elevated baselines
    double hot_multiplier = 12.0;
    double seasonal_amplitude = 0.1;  // s_w = 1 + amplitude * sin(2 pi w / 52)
    double flare_probability = 0.003; // per cell-week chance of a new flare-up
    double flare_size = 15.0;         // flare-up jump, in multiples of the cell's variable median rate
    double flare_decay = 0.75;        // weekly survival of flare-up intensity
    double excitation = 0.05;         // intensity added per event last week
    double tau = 0.0;                 // reduction in expected count per unit dose
    bool multiplicative = false;      // rate * exp(-tau * dose) instead of rate - tau * dose

    void validate() const {
        for (double v : {p1v_rate, p1p_rate, heterogeneity, hot_share, hot_multiplier, flare_probability, flare_size,
                         excitation, tau})
            if (!(v >= 0) || !std::isfinite(v)) throw UsageError("world parameters must be finite and >= 0");
        if (hot_share > 1 || flare_probability > 1) throw UsageError("world shares must lie in [0, 1]");
        if (!(seasonal_amplitude >= 0 && seasonal_amplitude < 1)) throw UsageError("seasonal amplitude must lie in [0, 1)");
        if (!(flare_decay >= 0 && flare_decay < 1)) throw UsageError("flare decay must lie in [0, 1)");
    }
};

inline void to_json(nlohmann::json& j, const WorldConfig& w) {
    j = {{"p1v_rate", w.p1v_rate},
         {"p1p_rate", w.p1p_rate},
         {"heterogeneity", w.heterogeneity},
         {"hot_share", w.hot_share},
         {"hot_multiplier", w.hot_multiplier},
         {"seasonal_amplitude", w.seasonal_amplitude},
         {"flare_probability", w.flare_probability},
         {"flare_size", w.flare_size},
         {"flare_decay", w.flare_decay},
         {"excitation", w.excitation},
         {"tau", w.tau},
         {"multiplicative", w.multiplicative}};
}

inline void from_json(const nlohmann::json& j, WorldConfig& w) {
    try {
        w.p1v_rate = j.value("p1v_rate", w.p1v_rate);
        w.p1p_rate = j.value("p1p_rate", w.p1p_rate);
        w.heterogeneity = j.value("heterogeneity", w.heterogeneity);
        w.hot_share = j.value("hot_share", w.hot_share);
        w.hot_multiplier = j.value("hot_multiplier", w.hot_multiplier);
        w.seasonal_amplitude = j.value("seasonal_amplitude", w.seasonal_amplitude);
        w.flare_probability = j.value("flare_probability", w.flare_probability);
        w.flare_size = j.value("flare_size", w.flare_size);
        w.flare_decay = j.value("flare_decay", w.flare_decay);
        w.excitation = j.value("excitation", w.excitation);
        w.tau = j.value("tau", w.tau);
        w.multiplicative = j.value("multiplicative", w.multiplicative);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("invalid world config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Assignment schedule
// ---------------------------------------------------------------------------
struct AssignmentSchedule {
    int first_week = 0;
    int weeks = 0;
    std::vector<int> zones;                // zone ids, ascending
    std::vector<std::vector<Half>> halves;  // treated half per zone per trial week

    int end_week() const noexcept { return first_week + weeks; }
    bool has_week(int w) const noexcept { return w >= first_week && w < end_week(); }

    Half treated_half(int zone, int week) const {
        auto it = std::lower_bound(zones.begin(), zones.end(), zone);
        if (it == zones.end() || *it != zone) throw DataError("schedule has no zone " + std::to_string(zone));
        if (!has_week(week)) throw DataError("schedule has no week " + std::to_string(week));
        return halves[static_cast<std::size_t>(it - zones.begin())][static_cast<std::size_t>(week - first_week)];
    }
    bool treated(int zone, Half h, int week) const { return treated_half(zone, week) == h; }

    bool operator==(const AssignmentSchedule&) const = default;
};

// Week-0 half drawn per zone from the seed; strict alternation afterwards.
inline AssignmentSchedule make_schedule(const std::vector<ZonePartition>& partitions, int first_week, int weeks,
                                        std::uint64_t seed) {
    if (weeks < 1) throw UsageError("schedule needs at least one week");
    AssignmentSchedule s;
    s.first_week = first_week;
    s.weeks = weeks;
    for (const auto& p : partitions) s.zones.push_back(p.zone);
    std::sort(s.zones.begin(), s.zones.end());
    if (std::adjacent_find(s.zones.begin(), s.zones.end()) != s.zones.end())
        throw UsageError("duplicate zone partition");
    for (int z : s.zones) {
        auto rng = make_engine(seed, streams::schedule, static_cast<std::uint64_t>(z));
        Half h = std::bernoulli_distribution(0.5)(rng) ? Half::B : Half::A;
        std::vector<Half> seq(static_cast<std::size_t>(weeks));
        for (auto& x : seq) {
            x = h;
            h = other(h);
        }
        s.halves.push_back(std::move(seq));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Hot-spot selection
// ---------------------------------------------------------------------------
enum class HotspotType { chronic, temporary };
enum class Arm { treatment, control };

inline std::string to_string(HotspotType t) { return t == HotspotType::chronic ? "chronic" : "temporary"; }
inline std::string to_string(Arm a) { return a == Arm::treatment ? "treatment" : "control"; }

struct HotspotSelection {
    int week = 0;
    int zone = 0;
    int cell = 0;  // linear grid index
    HotspotType type = HotspotType::chronic;
    Arm arm = Arm::treatment;

    bool operator==(const HotspotSelection&) const = default;
};

using SelectionSeries = std::vector<HotspotSelection>;

namespace detail {

inline std::vector<double> full_scores(const ScoreGrid& g, const GridSpec& grid) {
    if (g.cells.size() != g.scores.size()) throw DataError("score grid cells and scores differ in length");
    std::vector<double> out(static_cast<std::size_t>(grid.size()), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < g.cells.size(); ++i) {
        if (g.cells[i] < 0 || g.cells[i] >= grid.size()) throw DataError("score grid cell outside the grid");
        out[static_cast<std::size_t>(g.cells[i])] = g.scores[i];
    }
    return out;
}

// Top-k cells by score among candidates not yet taken; ties go to the lower index.
inline std::vector<int> top_cells(const std::vector<int>& candidates, const std::vector<double>& score, int k,
                                  const std::vector<char>& taken) {
    std::vector<int> pool;
    for (int c : candidates)
        if (!taken[static_cast<std::size_t>(c)]) pool.push_back(c);
    std::stable_sort(pool.begin(), pool.end(), [&](int a, int b) {
        const double sa = score[static_cast<std::size_t>(a)], sb = score[static_cast<std::size_t>(b)];
        return sa != sb ? sa > sb : a < b;
    });
    pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(k)));
    return pool;
}

}  // namespace detail

// One week's hot spots. Both halves of every zone get chronic then temporary
// picks; the treated half's picks are the treatment arm and the other half's
// are withheld as the control arm.
inline std::vector<HotspotSelection> select_hotspots(const ScoreGrid& chronic, const ScoreGrid& temporary,
                                                     const GridSpec& grid,
                                                     const std::vector<ZonePartition>& partitions,
                                                     const AssignmentSchedule& schedule, int week,
                                                     const TrialConfig& cfg) {
    const auto cs = detail::full_scores(chronic, grid);
    const auto ts = detail::full_scores(temporary, grid);
    std::vector<char> taken(static_cast<std::size_t>(grid.size()), 0);
    std::vector<HotspotSelection> out;
    std::vector<const ZonePartition*> ordered;
    for (const auto& p : partitions) ordered.push_back(&p);
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->zone < b->zone; });
    for (const auto* p : ordered) {
        const Half th = schedule.treated_half(p->zone, week);
        for (Half h : {th, other(th)}) {
            std::vector<int> cells;
            for (CellId c : p->cells_in(h)) cells.push_back(grid.index(c));
            if (static_cast<int>(cells.size()) < cfg.chronic_per_zone + cfg.temporary_per_zone)
                throw DataError("zone " + std::to_string(p->zone) + " half " + std::string(1, to_char(h)) + " has " +
                                std::to_string(cells.size()) + " cells, fewer than the hot spots requested");
            const Arm arm = h == th ? Arm::treatment : Arm::control;
            for (int c : detail::top_cells(cells, cs, cfg.chronic_per_zone, taken)) {
                taken[static_cast<std::size_t>(c)] = 1;
                out.push_back({week, p->zone, c, HotspotType::chronic, arm});
            }
            for (int c : detail::top_cells(cells, ts, cfg.temporary_per_zone, taken)) {
                taken[static_cast<std::size_t>(c)] = 1;
                out.push_back({week, p->zone, c, HotspotType::temporary, arm});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Patrol log
// ---------------------------------------------------------------------------
class PatrolLog {
public:
    PatrolLog() = default;
    PatrolLog(int first_week, int weeks, int n_cells, double car_weight = 1.0 / 3.0)
        : first_week_(first_week), weeks_(weeks), n_cells_(n_cells), car_weight_(car_weight),
          foot_(static_cast<std::size_t>(weeks) * n_cells, 0.0), car_(foot_.size(), 0.0) {
        if (weeks < 1 || n_cells < 1) throw UsageError("patrol log needs weeks and cells");
    }

    int first_week() const noexcept { return first_week_; }
    int weeks() const noexcept { return weeks_; }
    int end_week() const noexcept { return first_week_ + weeks_; }
    int n_cells() const noexcept { return n_cells_; }
    double car_weight() const noexcept { return car_weight_; }

    double foot(int cell, int week) const { return foot_[offset(cell, week)]; }
    double car(int cell, int week) const { return car_[offset(cell, week)]; }
    double& foot(int cell, int week) { return foot_[offset(cell, week)]; }
    double& car(int cell, int week) { return car_[offset(cell, week)]; }
    // Combined dose is always recomputed from its components.
    double dose(int cell, int week) const { return foot(cell, week) + car_weight_ * car(cell, week); }

    bool operator==(const PatrolLog&) const = default;

private:
    std::size_t offset(int cell, int week) const {
        if (cell < 0 || cell >= n_cells_ || week < first_week_ || week >= end_week())
            throw DataError("patrol log has no entry for cell " + std::to_string(cell) + " week " +
                            std::to_string(week));
        return static_cast<std::size_t>(week - first_week_) * n_cells_ + cell;
    }
    int first_week_ = 0, weeks_ = 0, n_cells_ = 0;
    double car_weight_ = 1.0 / 3.0;
    std::vector<double> foot_, car_;
};

// Draws one week of patrols. Counts are independent of realized crime.
inline void draw_patrols(PatrolLog& log, const std::vector<HotspotSelection>& week_selections, const GridSpec& grid,
                         int week, const TrialConfig& cfg, std::uint64_t seed) {
    std::vector<double> mean(static_cast<std::size_t>(grid.size()), 0.0);
    for (int c : grid.masked_cells()) mean[static_cast<std::size_t>(c)] = cfg.background_patrols;
    for (const auto& s : week_selections) {
        if (s.week != week) throw DataError("selection week does not match the patrol week");
        mean[static_cast<std::size_t>(s.cell)] = s.arm == Arm::treatment ? cfg.treatment_patrols : cfg.control_patrols;
    }
    auto rng = make_engine(seed, streams::patrols, static_cast<std::uint64_t>(week));
    for (int c : grid.masked_cells()) {
        const double m = mean[static_cast<std::size_t>(c)];
        const double mf = m * cfg.foot_share, mc = m - mf;
        if (cfg.zero_variance) {
            log.foot(c, week) = mf;
            log.car(c, week) = mc;
            continue;
        }
        const double ms = cfg.shared_fraction * std::min(mf, mc);
        const int shared = poisson(rng, ms);
        log.foot(c, week) = poisson(rng, mf - ms) + shared;
        log.car(c, week) = poisson(rng, mc - ms) + shared;
    }
}

inline PatrolLog simulate_patrols(const SelectionSeries& selections, const GridSpec& grid, int first_week, int weeks,
                                  const TrialConfig& cfg, std::uint64_t seed) {
    PatrolLog log(first_week, weeks, grid.size(), cfg.car_weight);
    std::map<int, std::vector<HotspotSelection>> by_week;
    for (const auto& s : selections) by_week[s.week].push_back(s);
    for (int w = first_week; w < first_week + weeks; ++w) draw_patrols(log, by_week[w], grid, w, cfg, seed);
    return log;
}

// ---------------------------------------------------------------------------
// Crime generator
// ---------------------------------------------------------------------------
inline const std::vector<std::string>& simulated_variables() {
    static const std::vector<std::string> v{"P1V", "P1P"};
    return v;
}

// Per-cell baselines plus flare-up state, advanced one week at a time.
class CrimeWorld {
public:
    CrimeWorld(const GridSpec& grid, const WorldConfig& cfg, std::uint64_t seed)
        : grid_(&grid), cfg_(cfg), seed_(seed) {
        cfg_.validate();
        const std::size_t n = static_cast<std::size_t>(grid.size());
        auto rng = make_engine(seed, streams::world);
        std::normal_distribution<double> z(0.0, 1.0);
        std::bernoulli_distribution hot(cfg.hot_share);
        const double medians[2] = {cfg.p1v_rate, cfg.p1p_rate};
        for (int v = 0; v < 2; ++v) baseline_[v].assign(n, 0.0), flare_[v].assign(n, 0.0);
        for (int c : grid.masked_cells()) {
            const double shared = std::exp(cfg.heterogeneity * z(rng));
            const double mult = hot(rng) ? cfg.hot_multiplier : 1.0;
            for (int v = 0; v < 2; ++v) baseline_[v][static_cast<std::size_t>(c)] = medians[v] * shared * mult;
        }
    }

    const std::vector<double>& baseline(int v) const { return baseline_[v]; }
    const std::vector<double>& flare(int v) const { return flare_[v]; }
    const WorldConfig& config() const noexcept { return cfg_; }

    double season(int week) const {
        constexpr double two_pi = 6.283185307179586;
        return 1.0 + cfg_.seasonal_amplitude * std::sin(two_pi * week / 52.0);
    }

    // Expected count before drawing, given the current flare state.
    double rate(int v, int cell, int week, double dose) const {
        const double base = baseline_[v][static_cast<std::size_t>(cell)] * season(week) +
                            flare_[v][static_cast<std::size_t>(cell)];
        if (cfg_.multiplicative) return base * std::exp(-cfg_.tau * dose);
        return std::max(0.0, base - cfg_.tau * dose);
    }

    // Draws week `week` into the panel (variables ordered as simulated_variables)
    // and updates the flare state. `dose` is indexed by linear cell, or empty for none.
    void step(int week, const std::vector<double>& dose, PanelTensor& panel) {
        if (!dose.empty() && dose.size() != static_cast<std::size_t>(grid_->size()))
            throw DataError("dose vector must cover every grid cell");
        auto rng = make_engine(seed_, streams::crime, static_cast<std::uint64_t>(week));
        std::bernoulli_distribution flare_start(cfg_.flare_probability);
        const double medians[2] = {cfg_.p1v_rate, cfg_.p1p_rate};
        for (int c : grid_->masked_cells()) {
            const double d = dose.empty() ? 0.0 : dose[static_cast<std::size_t>(c)];
            const bool starts = flare_start(rng);
            for (int v = 0; v < 2; ++v) {
                const int n = poisson(rng, rate(v, c, week, d));
                panel.at(v, c, week) = n;
                auto& f = flare_[v][static_cast<std::size_t>(c)];
                f = cfg_.flare_decay * f + cfg_.excitation * n + (starts ? cfg_.flare_size * medians[v] : 0.0);
            }
        }
    }

private:
    const GridSpec* grid_;
    WorldConfig cfg_;
    std::uint64_t seed_;
    std::vector<double> baseline_[2];
    std::vector<double> flare_[2];
};

// ---------------------------------------------------------------------------
// Selection scores
// ---------------------------------------------------------------------------

// Moving-sum chronic score over the last `window` weeks before `week`.
inline ScoreGrid chronic_scores(const PanelTensor& panel, const GridSpec& grid, int var, int week, int window) {
    ScoreGrid g{week, grid.masked_cells(), {}};
    const int lo = std::max(panel.first_week(), week - window);
    for (int c : g.cells) {
        double s = 0;
        for (int w = lo; w < week; ++w) s += panel.at(var, c, w);
        g.scores.push_back(s);
    }
    return g;
}

// Recent excess over the long-run level: sum of lags 1-4 minus (4/52) of lags 1-52.
inline ScoreGrid recent_excess_scores(const PanelTensor& panel, const GridSpec& grid, int var, int week) {
    ScoreGrid g{week, grid.masked_cells(), {}};
    for (int c : g.cells) {
        double recent = 0, year = 0;
        for (int l = 1; l <= 52; ++l) {
            const int w = week - l;
            if (w < panel.first_week()) break;
            const double n = panel.at(var, c, w);
            year += n;
            if (l <= 4) recent += n;
        }
        g.scores.push_back(recent - 4.0 / 52.0 * year);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Full trial
// ---------------------------------------------------------------------------
struct TrialRun {
    PanelTensor panel;  // history and trial weeks, variables P1V and P1P
    std::vector<ZonePartition> partitions;
    AssignmentSchedule schedule;
    SelectionSeries selections;
    PatrolLog patrols;
};

// Simulates the history with no patrols, partitions zones on historic outcome
// counts unless partitions are supplied, then runs the trial week by week:
// scores from earlier weeks, selection, patrols, crime.
inline TrialRun simulate_trial(const GridSpec& grid, const WorldConfig& world_cfg, const TrialConfig& cfg,
                               std::vector<ZonePartition> partitions = {}) {
    cfg.validate();
    const int start = cfg.first_week - cfg.history_weeks;
    TrialRun run{PanelTensor(simulated_variables(), start, cfg.history_weeks + cfg.weeks, grid.size()), {}, {}, {}, {}};
    const int var = run.panel.variable_index(cfg.outcome);
    CrimeWorld world(grid, world_cfg, cfg.seed);
    for (int w = start; w < cfg.first_week; ++w) world.step(w, {}, run.panel);

    if (partitions.empty()) {
        std::vector<double> weight(static_cast<std::size_t>(grid.size()), 0.0);
        for (int c : grid.masked_cells())
            for (int w = start; w < cfg.first_week; ++w) weight[static_cast<std::size_t>(c)] += run.panel.at(var, c, w);
        partitions = partition_city(grid, weight);
    }
    run.partitions = std::move(partitions);
    run.schedule = make_schedule(run.partitions, cfg.first_week, cfg.weeks, cfg.seed);
    run.patrols = PatrolLog(cfg.first_week, cfg.weeks, grid.size(), cfg.car_weight);

    std::optional<FittedModel> model;
    std::vector<double> dose(static_cast<std::size_t>(grid.size()));
    for (int w = cfg.first_week; w < cfg.first_week + cfg.weeks; ++w) {
        const auto chronic = chronic_scores(run.panel, grid, var, w, cfg.chronic_window);
        ScoreGrid temporary;
        if (cfg.temporary_model) {
            if (!model || (w - cfg.first_week) % cfg.model_refit_every == 0)
                model = fit(*cfg.temporary_model, run.panel, grid, w);
            temporary = score(*model, run.panel, grid, w);
        } else {
            temporary = recent_excess_scores(run.panel, grid, var, w);
        }
        auto week_sel = select_hotspots(chronic, temporary, grid, run.partitions, run.schedule, w, cfg);
        draw_patrols(run.patrols, week_sel, grid, w, cfg, cfg.seed);
        for (int c = 0; c < grid.size(); ++c) dose[static_cast<std::size_t>(c)] = run.patrols.dose(c, w);
        world.step(w, dose, run.panel);
        run.selections.insert(run.selections.end(), week_sel.begin(), week_sel.end());
    }
    return run;
}

// Independent per-replication seed.
inline std::uint64_t replication_seed(std::uint64_t master, int replication) {
    return derive_seed(master, streams::replication, static_cast<std::uint64_t>(replication));
}

// ---------------------------------------------------------------------------
// Structural checks
// ---------------------------------------------------------------------------

// Returns one message per violated invariant; empty when the run is consistent.
inline std::vector<std::string> trial_violations(const TrialRun& run, const GridSpec& grid) {
    std::vector<std::string> out;
    const auto& s = run.schedule;
    for (std::size_t z = 0; z < s.zones.size(); ++z)
        for (int k = 1; k < s.weeks; ++k)
            if (s.halves[z][static_cast<std::size_t>(k)] == s.halves[z][static_cast<std::size_t>(k - 1)])
                out.push_back("zone " + std::to_string(s.zones[z]) + " does not alternate at week " +
                              std::to_string(s.first_week + k));
    std::map<int, std::vector<int>> treated_by_week;
    std::map<std::pair<int, int>, int> seen;
    for (const auto& h : run.selections) {
        const auto& part = *std::find_if(run.partitions.begin(), run.partitions.end(),
                                         [&](const ZonePartition& p) { return p.zone == h.zone; });
        const bool in_treated = part.half_of(grid.cell(h.cell)) == s.treated_half(h.zone, h.week);
        if (in_treated != (h.arm == Arm::treatment))
            out.push_back("cell " + std::to_string(h.cell) + " week " + std::to_string(h.week) +
                          " arm disagrees with the schedule");
        if (grid.zone(h.cell) != h.zone) out.push_back("cell " + std::to_string(h.cell) + " is not in its zone");
        if (++seen[{h.week, h.cell}] > 1)
            out.push_back("cell " + std::to_string(h.cell) + " selected twice in week " + std::to_string(h.week));
        if (h.arm == Arm::treatment) treated_by_week[h.week].push_back(h.cell);
    }
    for (auto& [w, cells] : treated_by_week) {
        auto next = treated_by_week.find(w + 1);
        if (next == treated_by_week.end()) continue;
        std::vector<int> a = cells, b = next->second;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        std::vector<int> both;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
        for (int c : both)
            out.push_back("cell " + std::to_string(c) + " treated in consecutive weeks " + std::to_string(w) + " and " +
                          std::to_string(w + 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

// Offense mix used to split aggregate counts into categories.
struct OffenseMix {
    std::vector<std::string> categories;
    std::vector<double> weights;
};

inline OffenseMix default_p1v_mix() {
    return {{"homicide", "rape", "robbery", "aggravated_assault"}, {37, 56, 686, 682}};
}
inline OffenseMix default_p1p_mix() { return {{"burglary", "larceny", "vehicle_theft"}, {1230, 6394, 772}}; }

// Expands panel counts for weeks [first, first + weeks) into individual
// events: uniform position inside the cell, uniform second inside the week.
inline std::vector<EventRecord> materialize_events(const PanelTensor& panel, const GridSpec& grid, int first, int weeks,
                                                   std::uint64_t seed, double victim_share = 0.6) {
    const int v1 = panel.variable_index("P1V"), v2 = panel.variable_index("P1P");
    const OffenseMix mixes[2] = {default_p1v_mix(), default_p1p_mix()};
    std::vector<EventRecord> out;
    for (int w = first; w < first + weeks; ++w) {
        if (!panel.has_week(w)) throw DataError("panel has no week " + std::to_string(w));
        auto rng = make_engine(seed, streams::crime, 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(w));
        std::uniform_real_distribution<double> u(0.001, 0.999);
        std::uniform_int_distribution<std::int64_t> sec(0, seconds_per_week - 1);
        std::bernoulli_distribution group(victim_share);
        std::discrete_distribution<int> pick[2] = {
            std::discrete_distribution<int>(mixes[0].weights.begin(), mixes[0].weights.end()),
            std::discrete_distribution<int>(mixes[1].weights.begin(), mixes[1].weights.end())};
        for (int c : grid.masked_cells()) {
            const CellId id = grid.cell(c);
            for (int k = 0; k < 2; ++k) {
                const int n = panel.at(k == 0 ? v1 : v2, c, w);
                for (int i = 0; i < n; ++i) {
                    EventRecord e;
                    e.timestamp = week_start(w) + sec(rng);
                    e.x = grid.origin_x() + (id.col + u(rng)) * grid.cell_size();
                    e.y = grid.origin_y() + (id.row + u(rng)) * grid.cell_size();
                    e.source = Source::offense;
                    e.category = mixes[k].categories[static_cast<std::size_t>(pick[k](rng))];
                    if (k == 0) e.victim_group = group(rng) ? "group_a" : "group_b";
                    out.push_back(std::move(e));
                }
            }
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const EventRecord& a, const EventRecord& b) { return a.timestamp < b.timestamp; });
    return out;
}

// ---------------------------------------------------------------------------
// Artifact files
// ---------------------------------------------------------------------------
inline void write_schedule_csv(std::ostream& out, const AssignmentSchedule& s) {
    out << "zone,week,treated_half\n";
    for (std::size_t z = 0; z < s.zones.size(); ++z)
        for (int k = 0; k < s.weeks; ++k)
            out << s.zones[z] << ',' << s.first_week + k << ',' << to_char(s.halves[z][static_cast<std::size_t>(k)])
                << '\n';
}

inline void write_selections_csv(std::ostream& out, const SelectionSeries& sel) {
    out << "week,zone,cell,type,arm\n";
    for (const auto& h : sel)
        out << h.week << ',' << h.zone << ',' << h.cell << ',' << to_string(h.type) << ',' << to_string(h.arm) << '\n';
}

// Sparse: cell-weeks with no patrols are omitted.
inline void write_patrols_csv(std::ostream& out, const PatrolLog& log) {
    out << "week,cell,foot,car\n";
    for (int w = log.first_week(); w < log.end_week(); ++w)
        for (int c = 0; c < log.n_cells(); ++c)
            if (log.foot(c, w) != 0 || log.car(c, w) != 0)
                out << w << ',' << c << ',' << csv::format(log.foot(c, w)) << ',' << csv::format(log.car(c, w)) << '\n';
}

inline void write_partitions_csv(std::ostream& out, const std::vector<ZonePartition>& parts, const GridSpec& grid) {
    out << "zone,cell,half\n";
    for (const auto& p : parts)
        for (std::size_t i = 0; i < p.cells.size(); ++i)
            out << p.zone << ',' << grid.index(p.cells[i]) << ',' << to_char(p.half[i]) << '\n';
}

namespace detail {

// Reads data lines of a CSV whose header must equal `header`.
template <class Row>
void read_csv_rows(std::istream& in, const std::string& header, const std::string& what, Row&& row) {
    std::string line;
    if (!std::getline(in, line) || csv::trim(line) != header)
        throw DataError(what + " header must be " + header);
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        const auto f = csv::split(line);
        try {
            row(f);
        } catch (const DataError& e) {
            throw DataError(what + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

inline long long field_int(const std::vector<std::string>& f, std::size_t i) {
    if (i >= f.size()) throw DataError("missing field");
    auto v = csv::to_int(f[i]);
    if (!v) throw DataError("field '" + f[i] + "' is not an integer");
    return *v;
}

inline double field_double(const std::vector<std::string>& f, std::size_t i) {
    if (i >= f.size()) throw DataError("missing field");
    auto v = csv::to_double(f[i]);
    if (!v) throw DataError("field '" + f[i] + "' is not a number");
    return *v;
}

inline Half field_half(const std::vector<std::string>& f, std::size_t i) {
    if (i >= f.size() || (f[i] != "A" && f[i] != "B")) throw DataError("half must be A or B");
    return f[i] == "A" ? Half::A : Half::B;
}

}  // namespace detail

inline AssignmentSchedule read_schedule_csv(std::istream& in) {
    std::map<int, std::map<int, Half>> rows;
    detail::read_csv_rows(in, "zone,week,treated_half", "schedule", [&](const auto& f) {
        const int z = static_cast<int>(detail::field_int(f, 0)), w = static_cast<int>(detail::field_int(f, 1));
        if (!rows[z].emplace(w, detail::field_half(f, 2)).second) throw DataError("duplicate zone-week");
    });
    if (rows.empty()) throw DataError("schedule is empty");
    AssignmentSchedule s;
    s.first_week = rows.begin()->second.begin()->first;
    s.weeks = static_cast<int>(rows.begin()->second.size());
    for (auto& [z, weeks] : rows) {
        if (static_cast<int>(weeks.size()) != s.weeks || weeks.begin()->first != s.first_week ||
            weeks.rbegin()->first != s.first_week + s.weeks - 1)
            throw DataError("schedule zone " + std::to_string(z) + " does not cover the common week range");
        s.zones.push_back(z);
        std::vector<Half> seq;
        for (auto& [w, h] : weeks) seq.push_back(h);
        s.halves.push_back(std::move(seq));
    }
    return s;
}

inline SelectionSeries read_selections_csv(std::istream& in) {
    SelectionSeries out;
    detail::read_csv_rows(in, "week,zone,cell,type,arm", "selections", [&](const auto& f) {
        HotspotSelection h;
        h.week = static_cast<int>(detail::field_int(f, 0));
        h.zone = static_cast<int>(detail::field_int(f, 1));
        h.cell = static_cast<int>(detail::field_int(f, 2));
        if (f.size() < 5) throw DataError("missing field");
        if (f[3] != "chronic" && f[3] != "temporary") throw DataError("type must be chronic or temporary");
        if (f[4] != "treatment" && f[4] != "control") throw DataError("arm must be treatment or control");
        h.type = f[3] == "chronic" ? HotspotType::chronic : HotspotType::temporary;
        h.arm = f[4] == "treatment" ? Arm::treatment : Arm::control;
        out.push_back(h);
    });
    return out;
}

inline PatrolLog read_patrols_csv(std::istream& in, int first_week, int weeks, int n_cells,
                                  double car_weight = 1.0 / 3.0) {
    PatrolLog log(first_week, weeks, n_cells, car_weight);
    detail::read_csv_rows(in, "week,cell,foot,car", "patrols", [&](const auto& f) {
        const int w = static_cast<int>(detail::field_int(f, 0)), c = static_cast<int>(detail::field_int(f, 1));
        const double foot = detail::field_double(f, 2), car = detail::field_double(f, 3);
        if (!(foot >= 0) || !(car >= 0)) throw DataError("patrol counts must be >= 0");
        log.foot(c, w) = foot;
        log.car(c, w) = car;
    });
    return log;
}

inline std::vector<ZonePartition> read_partitions_csv(std::istream& in, const GridSpec& grid) {
    std::map<int, std::vector<std::pair<CellId, Half>>> rows;
    detail::read_csv_rows(in, "zone,cell,half", "partitions", [&](const auto& f) {
        const int z = static_cast<int>(detail::field_int(f, 0)), c = static_cast<int>(detail::field_int(f, 1));
        if (c < 0 || c >= grid.size() || grid.zone(c) != z) throw DataError("cell is not in the named zone");
        rows[z].emplace_back(grid.cell(c), detail::field_half(f, 2));
    });
    std::vector<ZonePartition> out;
    for (auto& [z, cells] : rows) {
        std::sort(cells.begin(), cells.end(), [](auto& a, auto& b) { return a.first < b.first; });
        ZonePartition p;
        p.zone = z;
        for (auto& [c, h] : cells) {
            p.cells.push_back(c);
            p.half.push_back(h);
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace hotspot
