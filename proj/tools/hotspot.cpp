#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hotspot/cli.hpp"

namespace {

using hotspot::ExitCode;

int code(ExitCode c) { return static_cast<int>(c); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hot-spot forecasting, crossover trial simulation and evaluation"};
    app.set_version_flag("--version", std::string(hotspot::cli::version));
    app.require_subcommand(1);

    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> out;
    app.add_option("--config", config, "Run configuration (JSON)")->required();
    app.add_option("--seed", seed, "Master seed; overrides the config");
    app.add_option("--threads", threads, "Worker cap; overrides the config")->check(CLI::PositiveNumber);
    app.add_option("--out", out, "Output directory; overrides the config");

    auto* ingest = app.add_subcommand("ingest", "Parse event files into a cell-week panel");
    auto* backtest = app.add_subcommand("backtest", "Rolling backtest of the model list with metrics");
    auto* select = app.add_subcommand("select", "Weekly hot-spot list for one week");
    std::optional<int> week;
    select->add_option("--week", week, "Forecast week index; defaults to the week after the panel");
    auto* simulate = app.add_subcommand("simulate", "Simulate crossover trial replications into bundles");
    std::optional<int> replications;
    simulate->add_option("--replications", replications, "Replication count; overrides the config")
        ->check(CLI::PositiveNumber);
    auto* analyze = app.add_subcommand("analyze", "Regressions and difference tables for a trial bundle");
    std::optional<std::string> bundle;
    analyze->add_option("--bundle", bundle, "Bundle directory; overrides the config");
    auto* report = app.add_subcommand("report", "Cost-benefit report from an analysis");
    std::optional<std::string> analysis;
    report->add_option("--analysis", analysis, "analysis.json or its directory; overrides the config");

    // Every subcommand accepts the global flags after its name too.
    for (auto* sub : {ingest, backtest, select, simulate, analyze, report}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : code(ExitCode::usage);
    }

    try {
        const auto cfg = hotspot::cli::load_config(config, {seed, threads, out});
        nlohmann::json result;
        if (*ingest) result = hotspot::cli::cmd_ingest(cfg);
        else if (*backtest) result = hotspot::cli::cmd_backtest(cfg);
        else if (*select) {
            const auto list = hotspot::cli::cmd_select(cfg, week);
            result = {{"hotspots", list.size()}};
        } else if (*simulate) result = hotspot::cli::cmd_simulate(cfg, replications);
        else if (*analyze) result = hotspot::cli::cmd_analyze(cfg, bundle);
        else if (*report) result = hotspot::cli::cmd_report(cfg, analysis);
        std::cout << result.dump(2) << '\n';
        return code(ExitCode::ok);
    } catch (const hotspot::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return code(e.exit_code());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed input: " << e.what() << '\n';
        return code(ExitCode::data);
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return code(ExitCode::data);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return code(ExitCode::numeric);
    }
}
