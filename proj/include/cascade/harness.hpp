#ifndef CASCADE_HARNESS_HPP
#define CASCADE_HARNESS_HPP

// Monte-Carlo trial runner and the metrics computed over its results.

#include "cascade/engine.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cascade {

// ---------------------------------------------------------------------------
// Trials

struct TrialResult {
    std::size_t trial = 0;
    ControlMode mode = ControlMode::proposed;
    bool failed = false;
    std::string error;
    CascadeMetrics metrics;

    double final_load_served() const { return metrics.final_load_served; }
    std::size_t tier_count() const { return metrics.tiers.size(); }
};

struct RunContext {
    Grid base;
    CyberNetwork scada;

    /// Loads the case, prepares the balanced base and builds the SCADA tree.
    static RunContext from_config(const ExperimentConfig& config);
};

/// `config.n_trials` independent cascades in `mode`. Trial t draws from
/// trial_rng(config.rng_seed, t) whatever the mode, so modes are paired.
/// Trials run on `config.threads` workers (0: hardware concurrency); a trial
/// that throws is marked failed and the rest continue.
std::vector<TrialResult> run_trials(const ExperimentConfig& config, const RunContext& context, ControlMode mode,
                                    bool keep_snapshots = false);

/// One row per trial and tier, in trial order.
std::vector<MetricsRow> metrics_rows(const std::vector<TrialResult>& results);

// ---------------------------------------------------------------------------
// Aggregation

/// Counts pooled over trials for one tier index.
struct PooledTier {
    std::size_t tier = 0;
    std::size_t trials = 0;
    IslandAccuracy accuracy;
    LineStats lines;
    double mean_load_served = 0.0;
};

/// Tier k pools the trials that reached tier k.
std::vector<PooledTier> pool_by_tier(const std::vector<TrialResult>& results);

/// Pools each trial's last tier.
PooledTier pool_final_tier(const std::vector<TrialResult>& results);

/// Linear-interpolation (type 7) quantile of unsorted values.
double quantile_type7(std::vector<double> values, double q);
Quartiles quartiles_type7(const std::vector<double>& values);

/// Final load served per successful trial with its quartiles.
ModeSummary summarize(const std::string& mode, const std::vector<TrialResult>& results);

/// Same, from metrics rows: the last tier of each trial holds its final value.
ModeSummary summarize_rows(const std::string& mode, const std::vector<MetricsRow>& rows);

/// "metrics_<mode>.csv"
std::string metrics_file_name(ControlMode mode);
/// Mode name from a metrics file name, the stem itself otherwise.
std::string mode_from_file_name(const std::filesystem::path& path);

}  // namespace cascade

#endif
