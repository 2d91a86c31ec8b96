#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hotspot/backtest.hpp"
#include "hotspot/econ.hpp"
#include "hotspot/error.hpp"
#include "hotspot/geogrid.hpp"
#include "hotspot/inference.hpp"
#include "hotspot/ingest.hpp"
#include "hotspot/models/zoo.hpp"
#include "hotspot/parallel.hpp"
#include "hotspot/rng.hpp"
#include "hotspot/trial.hpp"

#ifndef HOTSPOT_VERSION
#define HOTSPOT_VERSION "0.0.0"
#endif

namespace hotspot::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* version = HOTSPOT_VERSION;

inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_text(const fs::path& p, const std::function<void(std::ostream&)>& body) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    body(out);
    if (!out) throw DataError("write failed for " + p.string());
}

inline void write_json(const fs::path& p, const json& j) {
    write_text(p, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

inline json read_json(const fs::path& p) {
    try {
        return json::parse(read_text(p));
    } catch (const json::exception& e) {
        throw DataError(p.string() + " is not valid JSON: " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

// Declarative run description. Relative paths resolve against the config file's directory.
struct RunConfig {
    json raw = json::object();
    fs::path base = ".";
    std::uint64_t seed = 1;
    unsigned threads = 1;
    fs::path out;

    fs::path resolve(const std::string& p) const {
        const fs::path q(p);
        return q.is_absolute() ? q : base / q;
    }
    json section(const char* key) const { return raw.contains(key) ? raw.at(key) : json::object(); }
    std::optional<fs::path> path(const char* key) const {
        if (!raw.contains(key) || raw.at(key).is_null()) return std::nullopt;
        if (!raw.at(key).is_string()) throw UsageError(std::string("config key '") + key + "' must be a path string");
        return resolve(raw.at(key).get<std::string>());
    }
    // Hash of the config text plus the effective seed; recorded in every manifest.
    std::string hash() const { return hex(fnv1a(raw.dump() + "#seed=" + std::to_string(seed))); }
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> out;
};

inline RunConfig load_config(const fs::path& file, const Overrides& o = {}) {
    if (!fs::exists(file)) throw UsageError("config file " + file.string() + " does not exist");
    RunConfig c;
    try {
        c.raw = json::parse(read_text(file));
    } catch (const json::exception& e) {
        throw UsageError("config is not valid JSON: " + std::string(e.what()));
    }
    if (!c.raw.is_object()) throw UsageError("config must be a JSON object");
    c.base = file.has_parent_path() ? file.parent_path() : fs::path(".");
    try {
        c.seed = o.seed ? *o.seed : c.raw.value("seed", std::uint64_t{1});
        c.threads = o.threads ? *o.threads : c.raw.value("threads", 1u);
        if (o.out) c.out = *o.out;
        else if (c.raw.contains("out")) c.out = c.resolve(c.raw.at("out").get<std::string>());
    } catch (const json::exception& e) {
        throw UsageError("invalid config: " + std::string(e.what()));
    }
    if (c.threads < 1) throw UsageError("--threads must be at least 1");
    if (c.out.empty()) throw UsageError("no output directory; pass --out or set \"out\" in the config");
    return c;
}

// Manifest with per-file content hashes. No timestamps, so identical runs give identical manifests.
inline void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                           const std::vector<std::string>& files, const json& extra = json::object()) {
    json outputs = json::object();
    for (const auto& f : files) outputs[f] = hex(fnv1a(read_text(dir / f)));
    json m{{"command", command},
           {"version", version},
           {"config_hash", cfg.hash()},
           {"seed", cfg.seed},
           {"outputs", outputs}};
    for (auto& [k, v] : extra.items()) m[k] = v;
    write_json(dir / "manifest.json", m);
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

// Grid from {"origin_x", "origin_y", "cell_size", "rows", "cols"} plus either a
// "zones" raster file or "zone_blocks": [block_rows, block_cols] tiling.
inline GridSpec grid_from_json(const json& j, const std::function<fs::path(const std::string&)>& resolve) {
    try {
        const int rows = j.at("rows").get<int>(), cols = j.at("cols").get<int>();
        if (rows < 1 || cols < 1) throw UsageError("grid rows and cols must be positive");
        std::vector<int> zones(static_cast<std::size_t>(rows) * cols, 1);
        if (j.contains("zones")) {
            const auto p = resolve(j.at("zones").get<std::string>());
            std::ifstream in(p);
            if (!in) throw DataError("cannot read zone raster " + p.string());
            zones = read_zone_raster(in, rows, cols);
        } else if (j.contains("zone_blocks")) {
            const auto b = j.at("zone_blocks").get<std::vector<int>>();
            if (b.size() != 2 || b[0] < 1 || b[1] < 1 || b[0] > rows || b[1] > cols)
                throw UsageError("zone_blocks must be [block_rows, block_cols] within the grid");
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    zones[static_cast<std::size_t>(r) * cols + c] = (r * b[0] / rows) * b[1] + c * b[1] / cols + 1;
        }
        return GridSpec(j.value("origin_x", 0.0), j.value("origin_y", 0.0), j.value("cell_size", 500.0), rows, cols,
                        std::move(zones));
    } catch (const json::exception& e) {
        throw UsageError("invalid grid: " + std::string(e.what()));
    }
}

// Writes grid.json and zones.csv so that a directory is self-describing.
inline void write_grid(const fs::path& dir, const GridSpec& g) {
    write_json(dir / "grid.json", {{"origin_x", g.origin_x()},
                                   {"origin_y", g.origin_y()},
                                   {"cell_size", g.cell_size()},
                                   {"rows", g.n_rows()},
                                   {"cols", g.n_cols()},
                                   {"zones", "zones.csv"}});
    write_text(dir / "zones.csv", [&](std::ostream& o) {
        o << "row,col,zone_id\n";
        for (int i : g.masked_cells()) {
            const auto c = g.cell(i);
            o << c.row << ',' << c.col << ',' << g.zone(i) << '\n';
        }
    });
}

inline GridSpec read_grid(const fs::path& dir) {
    return grid_from_json(read_json(dir / "grid.json"), [&](const std::string& p) { return dir / p; });
}

inline GridSpec config_grid(const RunConfig& cfg) {
    if (!cfg.raw.contains("grid")) throw UsageError("config has no \"grid\" section");
    return grid_from_json(cfg.raw.at("grid"), [&](const std::string& p) { return cfg.resolve(p); });
}

inline IndicatorDictionary config_dictionary(const RunConfig& cfg) {
    const auto p = cfg.path("dictionary");
    if (!p) return IndicatorDictionary::standard();
    if (!fs::exists(*p)) throw DataError("dictionary file " + p->string() + " does not exist");
    try {
        return read_json(*p).get<IndicatorDictionary>();
    } catch (const json::exception& e) {
        throw UsageError("invalid dictionary: " + std::string(e.what()));
    }
}

inline void require_files(const fs::path& dir, const std::vector<std::string>& names, const std::string& command) {
    for (const auto& n : names)
        if (!fs::exists(dir / n)) throw PrerequisiteError((dir / n).string(), command);
}

struct PanelDir {
    GridSpec grid;
    PanelTensor panel;
};

// Loads an ingest output directory named by the "panel" config key.
inline PanelDir load_panel_dir(const RunConfig& cfg) {
    const auto dir = cfg.path("panel");
    if (!dir) throw PrerequisiteError("panel directory (config key \"panel\")", "hotspot ingest");
    require_files(*dir, {"panel_meta.json", "panel_counts.csv", "grid.json", "zones.csv"}, "hotspot ingest");
    std::ifstream meta(*dir / "panel_meta.json"), counts(*dir / "panel_counts.csv");
    auto grid = read_grid(*dir);
    auto panel = read_panel(meta, counts);
    if (panel.n_cells() != grid.size()) throw DataError("panel and grid disagree on the number of cells");
    return {std::move(grid), std::move(panel)};
}

inline ModelSpec seeded(ModelSpec s, std::uint64_t master, std::uint64_t index) {
    s.seed = derive_seed(master, streams::model, index);
    s.mlp.seed = s.cnn.seed = s.gp.seed = s.seed;
    return s;
}

inline ModelSpec model_from_json(const json& j) {
    try {
        return j.get<ModelSpec>();
    } catch (const json::exception& e) {
        throw UsageError("invalid model spec: " + std::string(e.what()));
    }
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------
inline json cmd_ingest(const RunConfig& cfg) {
    const auto grid = config_grid(cfg);
    const auto dict = config_dictionary(cfg);
    if (!cfg.raw.contains("events")) throw UsageError("config has no \"events\" entry");
    std::vector<std::string> files;
    const auto& ev = cfg.raw.at("events");
    if (ev.is_string()) files.push_back(ev.get<std::string>());
    else if (ev.is_array()) files = ev.get<std::vector<std::string>>();
    else throw UsageError("\"events\" must be a path or a list of paths");

    std::vector<EventRecord> events;
    std::vector<Rejection> rejections;
    std::size_t rows = 0;
    for (const auto& f : files) {
        const auto p = cfg.resolve(f);
        std::ifstream in(p);
        if (!in) throw DataError("cannot read event file " + p.string());
        auto parsed = parse_events(in, dict);
        rows += parsed.rows;
        for (auto& r : parsed.rejections) r.reason = p.filename().string() + ": " + r.reason;
        events.insert(events.end(), parsed.events.begin(), parsed.events.end());
        rejections.insert(rejections.end(), parsed.rejections.begin(), parsed.rejections.end());
    }

    WeekRange weeks;
    if (cfg.raw.contains("weeks")) {
        const auto& w = cfg.raw.at("weeks");
        weeks = {w.at("first").get<int>(), w.at("count").get<int>()};
    } else {
        if (events.empty()) throw DataError("no valid events and no \"weeks\" range given");
        int lo = week_of(events.front().timestamp), hi = lo;
        for (const auto& e : events) {
            lo = std::min(lo, week_of(e.timestamp));
            hi = std::max(hi, week_of(e.timestamp));
        }
        weeks = {lo, hi - lo + 1};
    }
    auto build = build_panel(events, grid, dict, weeks);
    const auto panel = with_standard_aggregates(build.panel, dict);

    const auto& out = cfg.out;
    write_text(out / "panel_meta.json", [&](std::ostream& meta) {
        std::ostringstream sink;
        write_panel(meta, sink, panel);
    });
    write_text(out / "panel_counts.csv", [&](std::ostream& counts) {
        std::ostringstream sink;
        write_panel(sink, counts, panel);
    });
    write_text(out / "rejections.jsonl", [&](std::ostream& o) { write_rejections_jsonl(o, rejections); });
    write_grid(out, grid);
    json report{{"rows", rows},
                {"parsed", events.size()},
                {"rejected", rejections.size()},
                {"retained", build.retained},
                {"out_of_mask", build.out_of_mask},
                {"out_of_range", build.out_of_range},
                {"excluded_domestic", build.excluded_domestic},
                {"excluded_category", build.excluded_category},
                {"first_week", panel.first_week()},
                {"n_weeks", panel.n_weeks()},
                {"variables", panel.variables()}};
    write_json(out / "ingest_report.json", report);
    write_manifest(out, "ingest", cfg,
                   {"panel_meta.json", "panel_counts.csv", "rejections.jsonl", "grid.json", "zones.csv",
                    "ingest_report.json"});
    return report;
}

// ---------------------------------------------------------------------------
// backtest
// ---------------------------------------------------------------------------
inline BacktestConfig backtest_config(const json& j, unsigned threads) {
    BacktestConfig b;
    try {
        b.evaluation_start = j.value("evaluation_start", b.evaluation_start);
        b.evaluation_weeks = j.value("evaluation_weeks", b.evaluation_weeks);
        b.calibration_weeks = j.value("calibration_weeks", b.calibration_weeks);
        b.refit_every = j.value("refit_every", b.refit_every);
        b.top_fraction = j.value("top_fraction", b.top_fraction);
        b.max_area = j.value("max_area", b.max_area);
    } catch (const json::exception& e) {
        throw UsageError("invalid backtest config: " + std::string(e.what()));
    }
    b.threads = threads;
    return b;
}

struct LabeledModel {
    std::string label;
    ModelSpec spec;
};

// Configured model list, or one default spec of every kind.
inline std::vector<LabeledModel> config_models(const RunConfig& cfg) {
    std::vector<LabeledModel> out;
    if (cfg.raw.contains("models")) {
        for (const auto& j : cfg.raw.at("models")) {
            auto spec = model_from_json(j);
            out.push_back({j.value("label", spec.name()), spec});
        }
    } else {
        for (auto& [kind, name] : model_kind_names) out.push_back({std::string(name), ModelSpec::of(kind)});
    }
    if (out.empty()) throw UsageError("model list is empty");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!seen.insert(out[i].label).second) throw UsageError("duplicate model label '" + out[i].label + "'");
        out[i].spec = seeded(out[i].spec, cfg.seed, i);
    }
    return out;
}

inline json cmd_backtest(const RunConfig& cfg, std::ostream& log = std::cerr) {
    auto [grid, panel] = load_panel_dir(cfg);
    const json section = cfg.section("backtest");
    auto bt = backtest_config(section, cfg.threads);
    bt.validate(panel);
    const auto models = config_models(cfg);

    std::vector<ModelMetrics> rows;
    std::map<std::string, ScoreSeries> series;
    std::vector<std::string> files{"metrics.csv", "metrics.json"};
    for (const auto& m : models) {
        log << "backtest: " << m.label << '\n';
        auto s = rolling_backtest(m.spec, panel, grid, bt);
        auto metrics = evaluate(m.label, s, panel, grid, m.spec.target, bt);
        metrics.model = m.label;
        write_text(cfg.out / "curves" / (m.label + ".csv"), [&](std::ostream& o) { write_curve_csv(o, metrics.curve); });
        write_text(cfg.out / "selections" / (m.label + ".csv"), [&](std::ostream& o) {
            write_selections_csv(o, s, top_selections(s, bt.top_fraction), grid);
        });
        files.push_back("curves/" + m.label + ".csv");
        files.push_back("selections/" + m.label + ".csv");
        rows.push_back(std::move(metrics));
        series[m.label] = std::move(s);
    }
    write_text(cfg.out / "metrics.csv", [&](std::ostream& o) { write_metrics_csv(o, rows); });

    json result{{"models", json::array()}};
    for (const auto& m : rows) result["models"].push_back(to_json(m));
    const json comp = section.value("composite", json{{"chronic", "MAVG"}, {"temporary", "MLP-DIFF"}});
    const auto chronic = comp.value("chronic", std::string("MAVG")),
               temporary = comp.value("temporary", std::string("MLP-DIFF"));
    if (series.count(chronic) && series.count(temporary)) {
        std::string target;
        for (const auto& m : models)
            if (m.label == chronic) target = m.spec.target;
        const auto curve = composite_curve(series[chronic], series[temporary], panel, grid, target, bt.max_area,
                                           comp.value("mix", 0.5));
        write_text(cfg.out / "composite_curve.csv", [&](std::ostream& o) { write_curve_csv(o, curve); });
        files.push_back("composite_curve.csv");
        result["composite"] = {{"chronic", chronic},
                               {"temporary", temporary},
                               {"pauc", pauc(curve, std::min(bt.max_area, curve.area.back()))}};
    }
    write_json(cfg.out / "metrics.json", result);
    write_manifest(cfg.out, "backtest", cfg, files);
    return result;
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------
struct WeeklyHotspot {
    int week = 0;
    int zone = 0;
    HotspotType type = HotspotType::chronic;
    int rank = 0;  // within zone and type
    int cell = 0;
    double score = 0.0;
};

// Per zone: top chronic cells first, then top temporary cells not already chosen.
inline std::vector<WeeklyHotspot> weekly_hotspots(const ScoreGrid& chronic, const ScoreGrid& temporary,
                                                  const GridSpec& grid, int week, int k_chronic, int k_temporary) {
    const auto sc = detail::full_scores(chronic, grid), st = detail::full_scores(temporary, grid);
    std::vector<WeeklyHotspot> out;
    for (int z = 1; z <= grid.n_zones(); ++z) {
        std::vector<int> cells;
        for (auto c : grid.zone_cells(z)) cells.push_back(grid.index(c));
        if (cells.empty()) continue;
        std::vector<char> taken(static_cast<std::size_t>(grid.size()), 0);
        int rank = 0;
        for (int c : detail::top_cells(cells, sc, k_chronic, taken)) {
            taken[static_cast<std::size_t>(c)] = 1;
            out.push_back({week, z, HotspotType::chronic, ++rank, c, sc[static_cast<std::size_t>(c)]});
        }
        rank = 0;
        for (int c : detail::top_cells(cells, st, k_temporary, taken))
            out.push_back({week, z, HotspotType::temporary, ++rank, c, st[static_cast<std::size_t>(c)]});
    }
    return out;
}

inline std::vector<WeeklyHotspot> cmd_select(const RunConfig& cfg, std::optional<int> week_override = {}) {
    auto [grid, panel] = load_panel_dir(cfg);
    const json s = cfg.section("select");
    std::optional<int> week = week_override;
    if (!week && s.contains("week")) week = s.at("week").get<int>();
    if (!week) week = panel.end_week();  // forecast the week after the data
    const auto chronic_spec = seeded(s.contains("chronic") ? model_from_json(s.at("chronic")) : ModelSpec::of(ModelKind::mavg),
                                     cfg.seed, 0);
    const auto temporary_spec = seeded(
        s.contains("temporary") ? model_from_json(s.at("temporary")) : ModelSpec::of(ModelKind::mlp_diff), cfg.seed, 1);
    const int kc = s.value("chronic_per_zone", 3), kt = s.value("temporary_per_zone", 3);
    if (kc < 0 || kt < 0) throw UsageError("hot-spot counts must be >= 0");
    const auto chronic = score(fit(chronic_spec, panel, grid, *week), panel, grid, *week);
    const auto temporary = score(fit(temporary_spec, panel, grid, *week), panel, grid, *week);
    const auto list = weekly_hotspots(chronic, temporary, grid, *week, kc, kt);
    write_text(cfg.out / "hotspots.csv", [&](std::ostream& o) {
        o << "week,week_start,zone,type,rank,cell,row,col,center_x,center_y,score\n";
        for (const auto& h : list) {
            const auto c = grid.cell(h.cell);
            const auto p = grid.center(c);
            o << h.week << ',' << format_timestamp(week_start(h.week)).substr(0, 10) << ',' << h.zone << ','
              << to_string(h.type) << ',' << h.rank << ',' << h.cell << ',' << c.row << ',' << c.col << ','
              << csv::format(p.x) << ',' << csv::format(p.y) << ',' << csv::format(h.score) << '\n';
        }
    });
    write_manifest(cfg.out, "select", cfg, {"hotspots.csv"}, {{"week", *week}});
    return list;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------
inline const std::vector<std::string>& bundle_files() {
    static const std::vector<std::string> f{"grid.json",      "zones.csv",       "trial.json",
                                            "schedule.csv",   "selections.csv",  "patrols.csv",
                                            "partitions.csv", "events.csv",      "panel_meta.json",
                                            "panel_counts.csv"};
    return f;
}

inline std::string replication_dir(int r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "replication_%03d", r);
    return buf;
}

// Writes one replication's artifact bundle.
inline void write_bundle(const fs::path& dir, const GridSpec& grid, const TrialRun& run, const TrialConfig& trial,
                         const WorldConfig& world, int replication) {
    write_grid(dir, grid);
    write_json(dir / "trial.json", {{"trial", trial}, {"world", world}, {"replication", replication}});
    write_text(dir / "schedule.csv", [&](std::ostream& o) { write_schedule_csv(o, run.schedule); });
    write_text(dir / "selections.csv", [&](std::ostream& o) { write_selections_csv(o, run.selections); });
    write_text(dir / "patrols.csv", [&](std::ostream& o) { write_patrols_csv(o, run.patrols); });
    write_text(dir / "partitions.csv", [&](std::ostream& o) { write_partitions_csv(o, run.partitions, grid); });
    const auto events =
        materialize_events(run.panel, grid, run.panel.first_week(), run.panel.n_weeks(), trial.seed);
    write_text(dir / "events.csv", [&](std::ostream& o) { write_events_csv(o, events); });
    write_text(dir / "panel_meta.json", [&](std::ostream& meta) {
        std::ostringstream sink;
        write_panel(meta, sink, run.panel);
    });
    write_text(dir / "panel_counts.csv", [&](std::ostream& counts) {
        std::ostringstream sink;
        write_panel(sink, counts, run.panel);
    });
}

inline json cmd_simulate(const RunConfig& cfg, std::optional<int> replications_override = {}) {
    const auto grid = config_grid(cfg);
    TrialConfig trial;
    WorldConfig world;
    try {
        if (cfg.raw.contains("trial")) trial = cfg.raw.at("trial").get<TrialConfig>();
        if (cfg.raw.contains("world")) world = cfg.raw.at("world").get<WorldConfig>();
    } catch (const json::exception& e) {
        throw UsageError("invalid trial or world config: " + std::string(e.what()));
    }
    world.validate();
    const int reps = replications_override ? *replications_override : cfg.raw.value("replications", 1);
    if (reps < 1) throw UsageError("replications must be at least 1");

    std::vector<std::vector<std::string>> violations(static_cast<std::size_t>(reps));
    parallel_for(static_cast<std::size_t>(reps), cfg.threads, [&](std::size_t r) {
        TrialConfig t = trial;
        t.seed = replication_seed(cfg.seed, static_cast<int>(r));
        const auto run = simulate_trial(grid, world, t);
        violations[r] = trial_violations(run, grid);
        const auto dir = cfg.out / replication_dir(static_cast<int>(r));
        write_bundle(dir, grid, run, t, world, static_cast<int>(r));
        write_manifest(dir, "simulate", cfg, bundle_files(),
                       {{"replication", r}, {"replication_seed", t.seed}});
    });
    json summary{{"replications", reps}, {"bundles", json::array()}};
    std::vector<std::string> files;
    for (int r = 0; r < reps; ++r) {
        const auto& v = violations[static_cast<std::size_t>(r)];
        summary["bundles"].push_back({{"dir", replication_dir(r)}, {"violations", v}});
        files.push_back(replication_dir(r) + "/manifest.json");
        if (!v.empty()) throw DataError("replication " + std::to_string(r) + " violates the design: " + v.front());
    }
    write_json(cfg.out / "simulate_summary.json", summary);
    files.push_back("simulate_summary.json");
    write_manifest(cfg.out, "simulate", cfg, files);
    return summary;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------
struct Bundle {
    GridSpec grid;
    TrialConfig trial;
    PanelTensor panel;  // rebuilt from events.csv through ingest
    std::vector<EventRecord> events;
    std::vector<ZonePartition> partitions;
    AssignmentSchedule schedule;
    SelectionSeries selections;
    PatrolLog patrols;
};

// Reads a simulate bundle; the panel is replayed from the event file.
inline Bundle read_bundle(const fs::path& dir, const IndicatorDictionary& dict) {
    if (!fs::is_directory(dir)) throw PrerequisiteError("trial bundle " + dir.string(), "hotspot simulate");
    require_files(dir,
                  {"grid.json", "zones.csv", "trial.json", "schedule.csv", "selections.csv", "patrols.csv",
                   "partitions.csv", "events.csv"},
                  "hotspot simulate");
    auto grid = read_grid(dir);
    TrialConfig trial;
    try {
        trial = read_json(dir / "trial.json").at("trial").get<TrialConfig>();
    } catch (const json::exception& e) {
        throw DataError("trial.json is malformed: " + std::string(e.what()));
    }
    std::ifstream ev(dir / "events.csv");
    auto parsed = parse_events(ev, dict);
    if (!parsed.rejections.empty())
        throw DataError("events.csv line " + std::to_string(parsed.rejections.front().line) + ": " +
                        parsed.rejections.front().reason);
    const WeekRange weeks{trial.first_week - trial.history_weeks, trial.history_weeks + trial.weeks};
    auto panel = with_standard_aggregates(build_panel(parsed.events, grid, dict, weeks).panel, dict);
    std::ifstream sch(dir / "schedule.csv"), sel(dir / "selections.csv"), pat(dir / "patrols.csv"),
        par(dir / "partitions.csv");
    auto schedule = read_schedule_csv(sch);
    auto selections = read_selections_csv(sel);
    auto patrols = read_patrols_csv(pat, schedule.first_week, schedule.weeks, grid.size(), trial.car_weight);
    auto partitions = read_partitions_csv(par, grid);
    return {std::move(grid),      std::move(trial),      std::move(panel),   std::move(parsed.events),
            std::move(partitions), std::move(schedule), std::move(selections), std::move(patrols)};
}

struct InferenceOptions {
    std::string outcome;
    int radius = 1;
    SeType se = SeType::hc1;
    FeMethod fe = FeMethod::dummies;
    double level = 0.95;
};

inline InferenceOptions inference_options(const json& j, const TrialConfig& trial) {
    InferenceOptions o;
    o.outcome = trial.outcome;
    o.radius = trial.adjacency_radius;
    try {
        o.outcome = j.value("outcome", o.outcome);
        o.radius = j.value("adjacency_radius", o.radius);
        o.level = j.value("level", o.level);
        const auto se = j.value("se", std::string("hc1"));
        if (se == "hc1") o.se = SeType::hc1;
        else if (se == "classical") o.se = SeType::classical;
        else throw UsageError("se must be \"hc1\" or \"classical\"");
        const auto fe = j.value("fixed_effects", std::string("dummies"));
        if (fe == "dummies") o.fe = FeMethod::dummies;
        else if (fe == "within") o.fe = FeMethod::within;
        else throw UsageError("fixed_effects must be \"dummies\" or \"within\"");
    } catch (const json::exception& e) {
        throw UsageError("invalid inference options: " + std::string(e.what()));
    }
    if (!(o.level > 0 && o.level < 1)) throw UsageError("confidence level must lie in (0, 1)");
    return o;
}

inline std::vector<std::string> outcome_categories(const std::string& outcome, const IndicatorDictionary& dict) {
    if (outcome == "P1V") return dict.p1v;
    if (outcome == "P1P") return dict.p1p;
    return {outcome};
}

// Outcome events by category inside hot-spot cell-weeks of the sample.
inline std::map<std::string, double> hotspot_offense_mix(const Bundle& b, const RegressionSample& s,
                                                         const IndicatorDictionary& dict) {
    std::set<std::pair<int, int>> hot;
    for (const auto& r : s.rows)
        if (r.hotspot) hot.insert({r.cell, r.week});
    const auto cats = outcome_categories(s.outcome, dict);
    std::map<std::string, double> mix;
    for (const auto& e : b.events) {
        if (std::find(cats.begin(), cats.end(), e.category) == cats.end()) continue;
        if (e.domestic && dict.is_p1v(e.category)) continue;
        CellId c;
        try {
            c = cell_of({e.x, e.y}, b.grid);
        } catch (const OutOfMaskError&) {
            continue;
        }
        if (hot.count({b.grid.index(c), week_of(e.timestamp)})) mix[e.category] += 1;
    }
    return mix;
}

struct Analysis {
    RegressionSample sample;
    std::vector<RegressionResult> regressions;
    std::vector<DiffRow> diffs;
    json summary;
};

// Full analysis of an in-memory bundle; cmd_analyze writes it to disk.
inline Analysis analyze_bundle(const Bundle& b, const InferenceOptions& o, const IndicatorDictionary& dict) {
    Analysis a;
    a.sample = build_sample(b.panel, b.grid, b.partitions, b.schedule, b.selections, b.patrols, o.outcome, o.radius);
    for (int variant = 1; variant <= 4; ++variant)
        for (auto mode : {DoseMode::dose, DoseMode::indicator}) {
            if (variant == 4 && mode == DoseMode::indicator) continue;
            OlsOptions opt;
            opt.variant = variant;
            opt.mode = mode;
            opt.se = o.se;
            opt.fe = o.fe;
            opt.level = o.level;
            a.regressions.push_back(ols_fit(a.sample, opt));
        }
    a.diffs = diff_table(a.sample);
    const auto& all = a.diffs.front();
    json corr;
    try {
        corr = to_json(dose_outcome_correlation(a.sample));
    } catch (const DataError& e) {
        corr = {{"error", e.what()}};
    }
    json victims = json::object();
    for (auto& [g, v] : victim_group_counts(b.events, a.sample, b.grid, dict))
        victims[g] = {{"control", v.control}, {"treatment", v.treatment}};
    a.summary = {{"outcome", o.outcome},
                 {"rows", a.sample.rows.size()},
                 {"dropped", a.sample.dropped},
                 {"first_week", a.sample.first_week},
                 {"weeks", a.sample.weeks},
                 {"hotspot_control_sum", all.control_sum},
                 {"hotspot_treatment_sum", all.treatment_sum},
                 {"prevented", -all.count_difference},
                 {"percent_change", format_percent(all)},
                 {"observed_mix", hotspot_offense_mix(b, a.sample, dict)},
                 {"correlation", corr},
                 {"victim_groups", victims}};
    return a;
}

inline json cmd_analyze(const RunConfig& cfg, std::optional<std::string> bundle_override = {}) {
    fs::path dir;
    if (bundle_override) dir = *bundle_override;
    else if (auto p = cfg.path("bundle")) dir = *p;
    else throw PrerequisiteError("trial bundle (config key \"bundle\" or --bundle)", "hotspot simulate");
    const auto dict = config_dictionary(cfg);
    const auto bundle = read_bundle(dir, dict);
    const auto opts = inference_options(cfg.section("inference"), bundle.trial);
    const auto a = analyze_bundle(bundle, opts, dict);

    json regs = json::array();
    for (const auto& r : a.regressions) regs.push_back(to_json(r));
    write_json(cfg.out / "regressions.json", regs);
    write_text(cfg.out / "diff_table.csv", [&](std::ostream& o) { write_diff_csv(o, a.diffs); });
    write_json(cfg.out / "analysis.json", a.summary);
    write_manifest(cfg.out, "analyze", cfg, {"regressions.json", "diff_table.csv", "analysis.json"});
    return a.summary;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------
inline json cmd_report(const RunConfig& cfg, std::optional<std::string> analysis_override = {}) {
    fs::path file;
    if (analysis_override) file = *analysis_override;
    else if (auto p = cfg.path("analysis")) file = *p;
    else throw PrerequisiteError("analysis (config key \"analysis\" or --analysis)", "hotspot analyze");
    if (fs::is_directory(file)) file /= "analysis.json";
    if (!fs::exists(file)) throw PrerequisiteError(file.string(), "hotspot analyze");
    const json analysis = read_json(file);
    const json e = cfg.section("econ");

    CostTable base = CostTable::base_2008();
    double factor = default_inflation_factor();
    int report_year = 2018;
    ProgramCostInputs program;
    std::map<std::string, double> prevented;
    try {
        if (e.contains("cost_table")) {
            const auto p = cfg.resolve(e.at("cost_table").get<std::string>());
            std::ifstream in(p);
            if (!in) throw DataError("cannot read cost table " + p.string());
            base = read_cost_table_csv(in, e.value("base_year", 2008));
        }
        factor = e.value("inflation_factor", factor);
        report_year = e.value("report_year", report_year);
        if (e.contains("program")) program = e.at("program").get<ProgramCostInputs>();
        if (e.contains("prevented")) {
            prevented = e.at("prevented").get<std::map<std::string, double>>();
        } else {
            const double total = analysis.at("prevented").get<double>();
            const auto observed = analysis.at("observed_mix").get<std::map<std::string, double>>();
            prevented = allocate_by_mix(total, observed);
        }
    } catch (const json::exception& ex) {
        throw DataError("invalid econ inputs or analysis file: " + std::string(ex.what()));
    }
    auto report = cost_benefit_report(prevented, base, factor, report_year, program);
    report["prevented_total"] = analysis.value("prevented", json(nullptr));
    report["outcome"] = analysis.value("outcome", json(nullptr));
    write_json(cfg.out / "report.json", report);
    write_manifest(cfg.out, "report", cfg, {"report.json"});
    return report;
}

}  // namespace hotspot::cli
