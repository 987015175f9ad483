#include "cascade/errors.hpp"
#include "cascade/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

using namespace cascade;
namespace fs = std::filesystem;

namespace {

void dump_snapshots(const std::vector<TrialResult>& results, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& r : results) {
        for (const auto& t : r.metrics.tiers) {
            if (t.snapshot_json.empty()) continue;
            nlohmann::json line{{"trial", r.trial}, {"tier", t.tier}};
            line["snapshot"] = nlohmann::json::parse(t.snapshot_json);
            out << line.dump() << '\n';
        }
    }
}

int run(const fs::path& config_path, const std::string& mode_name, std::optional<std::size_t> trials,
        std::optional<std::uint64_t> seed, std::optional<std::size_t> threads, bool snapshots, const fs::path& out_dir) {
    ExperimentConfig config = load_config(config_path);
    if (trials) config.n_trials = *trials;
    if (seed) config.rng_seed = *seed;
    if (threads) config.threads = *threads;
    config.validate();

    std::vector<ControlMode> modes;
    if (mode_name.empty()) {
        modes.push_back(config.control_mode);
    } else if (mode_name == "all") {
        modes.assign(std::begin(kAllModes), std::end(kAllModes));
    } else if (auto m = parse_control_mode(mode_name)) {
        modes.push_back(*m);
    } else {
        std::cerr << "unknown mode: " << mode_name << '\n';
        return 1;
    }

    fs::create_directories(out_dir);
    const RunContext context = RunContext::from_config(config);
    std::vector<ModeSummary> summaries;
    bool any_failed = false;
    for (ControlMode mode : modes) {
        const auto start = std::chrono::steady_clock::now();
        const auto results = run_trials(config, context, mode, snapshots);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        std::size_t failed = 0, warnings = 0;
        for (const auto& r : results) {
            if (r.failed) {
                ++failed;
                std::cerr << to_string(mode) << " trial " << r.trial << " failed: " << r.error << '\n';
            }
            for (const auto& t : r.metrics.tiers) warnings += t.warnings.size();
        }
        any_failed = any_failed || failed > 0;

        write_metrics_csv(metrics_rows(results), out_dir / metrics_file_name(mode));
        if (snapshots) dump_snapshots(results, out_dir / ("snapshots_" + std::string(to_string(mode)) + ".jsonl"));
        auto summary = summarize(to_string(mode), results);
        std::cerr << to_string(mode) << ": " << results.size() - failed << '/' << results.size()
                  << " trials, median load served " << summary.quartiles.median << ", " << warnings << " warnings, "
                  << secs << " s\n";
        summaries.push_back(std::move(summary));
    }
    write_summary_json(summaries, out_dir / "summary.json");
    return any_failed ? 2 : 0;
}

int report(const std::vector<fs::path>& inputs, const fs::path& out) {
    std::vector<ModeSummary> summaries;
    for (const auto& in : inputs) summaries.push_back(summarize_rows(mode_from_file_name(in), read_metrics_csv(in)));
    write_summary_json(summaries, out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cascading-failure simulator with topology estimation and preventive control"};
    app.require_subcommand(1);

    fs::path config_path, out_dir = ".";
    std::string mode;
    std::optional<std::size_t> trials, threads;
    std::optional<std::uint64_t> seed;
    bool snapshots = false;
    auto* run_cmd = app.add_subcommand("run", "Run Monte-Carlo cascades");
    run_cmd->add_option("--config", config_path, "JSON or TOML experiment config")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--mode", mode,
                        "perfect, proposed, breaker-closed, breaker-open, none or all (default: config value)");
    run_cmd->add_option("--trials", trials, "Override n_trials");
    run_cmd->add_option("--seed", seed, "Override rng_seed");
    run_cmd->add_option("--threads", threads, "Override threads (0: all cores)");
    run_cmd->add_flag("--dump-snapshots", snapshots, "Write per-tier measurement snapshots as JSON lines");
    run_cmd->add_option("--out", out_dir, "Output directory");

    std::vector<fs::path> inputs;
    fs::path summary_out = "summary.json";
    auto* report_cmd = app.add_subcommand("report", "Summarize metrics CSV files");
    report_cmd->add_option("--in", inputs, "metrics_<mode>.csv files")->required()->check(CLI::ExistingFile);
    report_cmd->add_option("--out", summary_out, "Summary JSON path");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run_cmd) return run(config_path, mode, trials, seed, threads, snapshots, out_dir);
        return report(inputs, summary_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
