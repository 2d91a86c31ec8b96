#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "hotspot/cli.hpp"

using namespace hotspot;
using namespace hotspot::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("hotspot_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

fs::path write_config(const fs::path& dir, const json& j) {
    const auto p = dir / "config.json";
    write_json(p, j);
    return p;
}

json small_trial_config() {
    return {{"grid", {{"rows", 12}, {"cols", 12}, {"cell_size", 500}, {"zone_blocks", {2, 2}}}},
            {"trial", {{"weeks", 8}, {"history_weeks", 56}, {"chronic_per_zone", 1}, {"temporary_per_zone", 1}}},
            {"world", {{"tau", 0.001}}},
            {"replications", 1},
            {"seed", 5}};
}

}  // namespace

TEST(Hashing, Fnv1aKnownVectors) {
    EXPECT_EQ(hex(fnv1a("")), "cbf29ce484222325");
    EXPECT_EQ(hex(fnv1a("a")), "af63dc4c8601ec8c");
    EXPECT_EQ(hex(fnv1a("foobar")), "85944171f73967e8");
}

TEST(Config, ResolvesPathsAndAppliesOverrides) {
    TempDir t("config");
    const auto p = write_config(t.path, {{"seed", 9}, {"out", "results"}, {"panel", "p"}});
    auto c = load_config(p);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.out, t.path / "results");
    EXPECT_EQ(*c.path("panel"), t.path / "p");
    const auto before = c.hash();
    c = load_config(p, {std::uint64_t{10}, 2u, std::string("/tmp/x")});
    EXPECT_EQ(c.seed, 10u);
    EXPECT_EQ(c.threads, 2u);
    EXPECT_EQ(c.out, fs::path("/tmp/x"));
    EXPECT_NE(c.hash(), before);
}

TEST(Config, RejectsUnusableInput) {
    TempDir t("config_bad");
    EXPECT_THROW(load_config(t.path / "missing.json"), UsageError);
    EXPECT_THROW(load_config(write_config(t.path, {{"seed", 1}})), UsageError);  // no output directory
    std::ofstream(t.path / "bad.json") << "{not json";
    EXPECT_THROW(load_config(t.path / "bad.json", {{}, {}, std::string("o")}), UsageError);
    EXPECT_THROW(load_config(write_config(t.path, {{"threads", 0}, {"out", "o"}})), UsageError);
}

TEST(Grid, ZoneBlocksTileTheGrid) {
    const auto g = grid_from_json({{"rows", 4}, {"cols", 6}, {"zone_blocks", {2, 3}}}, [](const std::string& s) {
        return fs::path(s);
    });
    EXPECT_EQ(g.n_zones(), 6);
    EXPECT_EQ(g.zone(g.index({0, 0})), 1);
    EXPECT_EQ(g.zone(g.index({0, 5})), 3);
    EXPECT_EQ(g.zone(g.index({3, 0})), 4);
    EXPECT_EQ(g.zone(g.index({3, 5})), 6);
    for (int z = 1; z <= 6; ++z) EXPECT_EQ(g.zone_cells(z).size(), 4u);
}

TEST(Grid, WrittenGridReadsBackIdentically) {
    TempDir t("grid");
    std::vector<int> zones(20, 0);
    for (int i = 0; i < 20; ++i) zones[i] = i % 7 == 0 ? 0 : 1 + i % 3;
    const GridSpec g(100.5, -20, 250, 4, 5, zones);
    write_grid(t.path, g);
    const auto back = read_grid(t.path);
    EXPECT_EQ(back.zones(), g.zones());
    EXPECT_EQ(back.origin_x(), g.origin_x());
    EXPECT_EQ(back.origin_y(), g.origin_y());
    EXPECT_EQ(back.cell_size(), g.cell_size());
}

TEST(Select, PerZoneChronicThenTemporaryWithoutRepeats) {
    const auto g = GridSpec::uniform(2, 4);  // one zone of 8 cells
    ScoreGrid chronic{0, g.masked_cells(), {5, 1, 5, 0, 2, 9, 0, 0}};
    ScoreGrid temporary{0, g.masked_cells(), {0, 0, 0, 0, 0, 9, 3, 3}};
    const auto h = weekly_hotspots(chronic, temporary, g, 7, 3, 2);
    ASSERT_EQ(h.size(), 5u);
    EXPECT_EQ(h[0].cell, 5);
    EXPECT_EQ(h[1].cell, 0);  // tie with cell 2 goes to the lower index
    EXPECT_EQ(h[2].cell, 2);
    EXPECT_EQ(h[3].type, HotspotType::temporary);
    EXPECT_EQ(h[3].cell, 6);  // cell 5 already chosen as chronic
    EXPECT_EQ(h[4].cell, 7);
    EXPECT_EQ(h[4].rank, 2);
    EXPECT_EQ(h[0].week, 7);
}

TEST(Simulate, RepeatedRunsAreByteIdentical) {
    TempDir t("simulate");
    const auto cfg_path = write_config(t.path, small_trial_config());
    cmd_simulate(load_config(cfg_path, {{}, {}, (t.path / "a").string()}));
    cmd_simulate(load_config(cfg_path, {{}, {}, (t.path / "b").string()}));
    auto files = bundle_files();
    files.push_back("manifest.json");
    for (const auto& f : files)
        EXPECT_EQ(read_text(t.path / "a" / "replication_000" / f), read_text(t.path / "b" / "replication_000" / f)) << f;
    EXPECT_EQ(read_text(t.path / "a" / "manifest.json"), read_text(t.path / "b" / "manifest.json"));
    cmd_simulate(load_config(cfg_path, {std::uint64_t{6}, {}, (t.path / "c").string()}));
    EXPECT_NE(read_text(t.path / "a" / "replication_000" / "events.csv"),
              read_text(t.path / "c" / "replication_000" / "events.csv"));
}

TEST(Simulate, ThreadCountDoesNotChangeOutputs) {
    TempDir t("simulate_threads");
    auto j = small_trial_config();
    j["replications"] = 3;
    const auto cfg_path = write_config(t.path, j);
    cmd_simulate(load_config(cfg_path, {{}, 1u, (t.path / "one").string()}));
    cmd_simulate(load_config(cfg_path, {{}, 3u, (t.path / "three").string()}));
    EXPECT_EQ(read_text(t.path / "one" / "manifest.json"), read_text(t.path / "three" / "manifest.json"));
}

TEST(Analyze, MissingPatrolFileNamesTheSimulateCommand) {
    TempDir t("analyze_missing");
    const auto cfg_path = write_config(t.path, small_trial_config());
    cmd_simulate(load_config(cfg_path, {{}, {}, (t.path / "sim").string()}));
    fs::remove(t.path / "sim" / "replication_000" / "patrols.csv");
    const auto cfg = load_config(cfg_path, {{}, {}, (t.path / "out").string()});
    try {
        cmd_analyze(cfg, (t.path / "sim" / "replication_000").string());
        FAIL() << "expected a prerequisite error";
    } catch (const PrerequisiteError& e) {
        EXPECT_EQ(e.command(), "hotspot simulate");
        EXPECT_NE(std::string(e.what()).find("patrols.csv"), std::string::npos);
        EXPECT_EQ(e.exit_code(), ExitCode::data);
    }
    EXPECT_THROW(cmd_analyze(cfg), PrerequisiteError);  // no bundle configured at all
}

TEST(Analyze, FileRoundTripReproducesInMemoryAnalysis) {
    TempDir t("roundtrip");
    const auto j = small_trial_config();
    const auto cfg_path = write_config(t.path, j);
    const auto cfg = load_config(cfg_path, {{}, {}, (t.path / "sim").string()});
    cmd_simulate(cfg);

    // Same replication in memory.
    const auto grid = config_grid(cfg);
    auto trial = j.at("trial").get<TrialConfig>();
    trial.seed = replication_seed(cfg.seed, 0);
    const auto run = simulate_trial(grid, j.at("world").get<WorldConfig>(), trial);

    const auto dict = IndicatorDictionary::standard();
    const auto bundle = read_bundle(t.path / "sim" / "replication_000", dict);
    EXPECT_EQ(bundle.schedule, run.schedule);
    EXPECT_EQ(bundle.selections, run.selections);
    EXPECT_EQ(bundle.patrols, run.patrols);
    const int v = run.panel.variable_index("P1V"), vb = bundle.panel.variable_index("P1V");
    for (int c = 0; c < grid.size(); ++c)
        for (int w = run.panel.first_week(); w < run.panel.end_week(); ++w)
            ASSERT_EQ(bundle.panel.at(vb, c, w), run.panel.at(v, c, w));

    const auto opts = inference_options(json::object(), trial);
    const auto from_files = analyze_bundle(bundle, opts, dict);
    const auto sample = build_sample(run.panel, grid, run.partitions, run.schedule, run.selections, run.patrols, "P1V",
                                     trial.adjacency_radius);
    ASSERT_EQ(from_files.sample.rows.size(), sample.rows.size());
    OlsOptions o;
    o.se = SeType::hc1;
    const auto direct = ols_fit(sample, o);
    const auto& replayed = from_files.regressions.front();
    ASSERT_EQ(replayed.coefficients.size(), direct.coefficients.size());
    for (std::size_t i = 0; i < direct.coefficients.size(); ++i) {
        EXPECT_EQ(replayed.coefficients[i].estimate, direct.coefficients[i].estimate);
        EXPECT_EQ(replayed.coefficients[i].se, direct.coefficients[i].se);
    }
}

TEST(Report, NeedsAnAnalysisAndUsesItsMix) {
    TempDir t("report");
    const auto cfg_path = write_config(t.path, {{"analysis", "analysis"}});
    const auto cfg = load_config(cfg_path, {{}, {}, (t.path / "out").string()});
    EXPECT_THROW(cmd_report(cfg), PrerequisiteError);
    write_json(t.path / "analysis" / "analysis.json",
               {{"prevented", 2.0}, {"observed_mix", {{"robbery", 1.0}, {"aggravated_assault", 1.0}}}, {"outcome", "P1V"}});
    const auto r = cmd_report(cfg);
    EXPECT_EQ(r.at("value_avoided").get<double>(), 175355.0);
    EXPECT_TRUE(fs::exists(t.path / "out" / "manifest.json"));
}
