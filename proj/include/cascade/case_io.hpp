#ifndef CASCADE_CASE_IO_HPP
#define CASCADE_CASE_IO_HPP

// Case-file parsing (MATPOWER-style tables), experiment configuration, and
// metric/summary serialization.

#include "cascade/grid.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cascade {

struct BusRow {
    int bus_id = 0;
    int type = 1;
    double load_p = 0.0;  ///< MW
    double load_q = 0.0;  ///< MVAr, carried but unused

    bool operator==(const BusRow&) const = default;
};

struct GenRow {
    int bus_id = 0;
    double gen_p = 0.0;  ///< MW
    int status = 1;

    bool operator==(const GenRow&) const = default;
};

struct BranchRow {
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;       ///< carried but unused
    double x = 0.0;       ///< per-unit
    double rate_a = 0.0;  ///< MW, 0 means unrated
    int status = 1;

    bool operator==(const BranchRow&) const = default;
};

struct CaseFile {
    double base_mva = 100.0;
    std::vector<BusRow> buses;
    std::vector<GenRow> gens;
    std::vector<BranchRow> branches;

    bool operator==(const CaseFile&) const = default;
};

/// Parses `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and `mpc.branch` from
/// MATPOWER `.m` text; other blocks are skipped.
/// Throws ParseError (with line number) or ValidationError.
CaseFile parse_case(std::string_view text);
CaseFile load_case(const std::filesystem::path& path);

/// Emits a MATPOWER-compatible `.m` text that parse_case reads back
/// to an identical CaseFile.
std::string serialize_case(const CaseFile& case_file);

struct GridOptions {
    double rating_fallback_factor = 1.3;
    double fallback_floor_percentile = 0.10;
};

/// Per-unit grid in bus-table order. Ratings of unrated in-service
/// branches fall back to factor * |base-case DC flow|, floored at the
/// 10th percentile of the nonzero ratings. Rated lines whose base-case
/// flow exceeds the rating are lifted to factor * |flow|.
Grid to_grid(const CaseFile& case_file, const GridOptions& options = {});

/// Simulation-ready copy of a raw grid: negative demand becomes generation
/// (and vice versa), then generation is scaled so the grid balances.
Grid prepare_base_case(const Grid& raw);

// ---------------------------------------------------------------------------
// Experiment configuration

enum class ControlMode { perfect, proposed, breaker_only_closed, breaker_only_open, none };

const char* to_string(ControlMode mode);
/// Accepts the config spellings and the CLI short forms (breaker-closed, breaker-open).
std::optional<ControlMode> parse_control_mode(std::string_view name);
inline constexpr ControlMode kAllModes[] = {ControlMode::perfect, ControlMode::proposed,
                                            ControlMode::breaker_only_closed, ControlMode::breaker_only_open,
                                            ControlMode::none};

struct ExperimentConfig {
    std::filesystem::path case_path;
    double initial_outage_fraction = 0.01;
    std::size_t n_trials = 100;
    std::uint64_t rng_seed = 1;
    std::size_t type1_link_count = 10;
    ControlMode control_mode = ControlMode::proposed;
    /// Multiplier on ||A'y||_inf.
    double lasso_lambda = 1e-3;
    /// Fraction of max |s_hat| used as the support threshold.
    double lasso_tol = 0.05;
    bool lasso_lambda_search = false;
    double rating_fallback_factor = 1.3;
    double noise_amplitude = 0.0;
    double overload_penalty = 100.0;
    std::size_t max_solutions = 25;
    std::size_t tier_cap = 50;
    std::size_t threads = 0;  ///< 0 = hardware concurrency

    /// Throws ValidationError when an invariant fails.
    void validate() const;
};

/// Reads a JSON object or flat `key = value` TOML with ExperimentConfig
/// field names. Relative case paths resolve against the config directory.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(std::string_view text, bool toml, const std::filesystem::path& base_dir = {});

// ---------------------------------------------------------------------------
// Metrics output

struct MetricsRow {
    std::size_t trial = 0;
    std::size_t tier = 0;
    std::size_t islands_true = 0;
    std::size_t islands_detected = 0;
    std::optional<double> island_accuracy;  ///< percent; empty when nothing was attempted
    double false_alarm_pct = 0.0;
    double miss_pct = 0.0;
    double load_served_pu = 0.0;

    bool operator==(const MetricsRow&) const = default;
};

inline constexpr std::string_view kMetricsHeader =
    "trial,tier,islands_true,islands_detected,island_accuracy,false_alarm_pct,miss_pct,load_served_pu";

std::string format_metrics_csv(const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);
std::vector<MetricsRow> parse_metrics_csv(std::string_view text);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

struct Quartiles {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

struct ModeSummary {
    std::string mode;
    std::vector<double> load_served;  ///< final value per trial
    Quartiles quartiles;
};

std::string format_summary_json(const std::vector<ModeSummary>& modes);
void write_summary_json(const std::vector<ModeSummary>& modes, const std::filesystem::path& path);

}  // namespace cascade

#endif
