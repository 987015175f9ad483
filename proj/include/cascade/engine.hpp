#ifndef CASCADE_ENGINE_HPP
#define CASCADE_ENGINE_HPP

// Ground-truth coupled cascade: initial outage, islanding, proportional
// shedding, frequency assignment, estimation, preventive control, overload
// tripping and communication failure propagation, tier by tier.

#include "cascade/case_io.hpp"
#include "cascade/control.hpp"
#include "cascade/cyber.hpp"
#include "cascade/island_detection.hpp"
#include "cascade/line_outage.hpp"
#include "cascade/metrics.hpp"

#include <random>
#include <string>
#include <vector>

namespace cascade {

// ---------------------------------------------------------------------------
// Physics primitives

struct InitialOutage {
    Grid grid;
    CyberNetwork cyber;
    std::vector<std::size_t> removed_buses;  ///< sorted
    std::vector<std::size_t> opened_lines;   ///< sorted
};

/// Removes ceil(fraction * n) distinct buses other than the control center,
/// opening every incident line and zeroing their injections; collocated
/// cyber nodes fail and Type-II links on opened lines die.
InitialOutage apply_initial_outage(const Grid& grid, const CyberNetwork& cyber, double fraction, std::mt19937_64& rng);

struct ShedResult {
    double gen_before = 0.0;
    double load_before = 0.0;
    double imbalance = 0.0;  ///< (gen - load) / max(gen, load, eps), before shedding
    bool blackout = false;
};

/// Scales the larger side of the island down to the smaller one. An island
/// with generation but no load (or the reverse) goes dark.
ShedResult proportional_shed(Grid& grid, std::span<const std::size_t> island);

struct FrequencyModel {
    double f0 = 60.0;
    double kappa = 0.05;
    double delta_f = 0.01;
};

/// f_i = f0 (1 + kappa imbalance_i); an island landing within delta_f of an
/// earlier one moves up by i * delta_f, then by delta_f until clear.
/// Dark islands read 0 Hz.
std::vector<double> assign_frequencies(std::span<const double> imbalances, const std::vector<bool>& blackout,
                                       const FrequencyModel& model = {});

/// Closed lines with |flow| strictly above rating; a relative 1e-9 absorbs
/// round-off on lines that control left exactly at their limit.
std::vector<std::size_t> trip_overloaded(const Vector& flows, const Grid& grid);

// ---------------------------------------------------------------------------
// Estimation

struct EstimatorOptions {
    DetectionOptions detection;
    LassoSettings lasso;
};

/// One frequency group's outcome.
struct GroupEstimate {
    std::vector<std::size_t> members;  ///< observable buses of the group
    DetectionStatus status = DetectionStatus::infeasible;
    bool estimable = false;            ///< parent and required injections available
    std::vector<std::size_t> island;   ///< detected buses when found
    std::vector<std::size_t> outages;  ///< lines found out by the LASSO
    bool low_confidence = false;
    std::vector<std::string> warnings;
};

struct EstimationResult {
    EstimatedTopology topology;
    Vector modeled_flows;  ///< per line under the estimate
    std::vector<GroupEstimate> groups;
};

/// Island identification then line-outage localization for every frequency
/// group, followed by the belief update used as the next tier's prior.
EstimationResult estimate_topology(const Grid& network, const MeasurementSnapshot& snapshot,
                                   const EstimatedTopology& previous, const Vector& previous_flows,
                                   const EstimatorOptions& options = {});

/// Breaker-only estimate: observed breakers taken as seen, every other line
/// assumed closed (`assume_closed`) or open.
EstimationResult estimate_from_breakers(const Grid& network, const MeasurementSnapshot& snapshot,
                                        const EstimatedTopology& previous, bool assume_closed);

/// Modeled DC flows for an estimate, imbalance absorbed at each reference.
Vector modeled_flows(const Grid& network, const EstimatedTopology& estimate);

// ---------------------------------------------------------------------------
// Cascade loop

struct CascadeOptions {
    ControlMode mode = ControlMode::proposed;
    EstimatorOptions estimator;
    double overload_penalty = 100.0;
    std::size_t tier_cap = 50;
    double noise_amplitude = 0.0;
    FrequencyModel frequency;
    bool keep_snapshots = false;

    static CascadeOptions from_config(const ExperimentConfig& config);
};

/// Per-tier record; counts pool across trials.
struct TierRecord {
    std::size_t tier = 0;
    std::size_t islands_true = 0;
    std::size_t islands_detected = 0;
    IslandAccuracy accuracy;
    LineStats lines;  ///< over lines with no breaker reading this tier
    std::size_t observable_buses = 0;
    double load_served = 0.0;  ///< fraction of initial demand
    double control_shed = 0.0;  ///< per-unit load shed by control commands
    std::vector<std::size_t> tripped;
    std::vector<std::string> warnings;
    std::string snapshot_json;  ///< only with keep_snapshots

    std::optional<double> accuracy_pct() const { return accuracy.total_pct(); }
    double false_alarm_pct() const { return lines.false_alarm_pct(); }
    double miss_pct() const { return lines.miss_pct(); }
};

struct CascadeMetrics {
    std::vector<TierRecord> tiers;
    double final_load_served = 1.0;
    bool tier_cap_reached = false;
    std::vector<std::size_t> removed_buses;
};

struct CascadeState {
    std::size_t tier = 0;
    Grid truth;
    CyberNetwork cyber;
    Vector flows;
    std::vector<std::vector<std::size_t>> islands;
    std::vector<double> island_frequency;
    MeasurementSnapshot snapshot;
    EstimatedTopology estimate;
    Vector estimate_flows;
    double initial_load = 0.0;
    bool terminated = false;
    CascadeMetrics metrics;
};

/// State right after the initial outage: the estimator still believes the
/// intact base case.
CascadeState initial_state(const Grid& base, const CyberNetwork& scada, double outage_fraction, std::mt19937_64& rng);

/// One tier: components, shedding, frequencies, flows, snapshot, estimation,
/// optional control, re-solve, trips, communication failures.
void step_tier(CascadeState& state, const Grid& base, const CascadeOptions& options, std::mt19937_64& rng);

/// Runs tiers until nothing trips or the cap is reached.
CascadeMetrics run_cascade(const Grid& base, const CyberNetwork& scada, double outage_fraction,
                           const CascadeOptions& options, std::mt19937_64& rng);

/// Served demand over initial demand.
double total_load_served(const CascadeState& state);

/// Per-trial stream: mt19937_64 seeded with seed_seq{root, trial}.
std::mt19937_64 trial_rng(std::uint64_t root, std::size_t trial);

}  // namespace cascade

#endif
