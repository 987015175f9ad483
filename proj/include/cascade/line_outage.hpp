#ifndef CASCADE_LINE_OUTAGE_HPP
#define CASCADE_LINE_OUTAGE_HPP

// Line-outage localization inside an identified island: pre-outage model
// with boundary generator/load duos, the sensitivity system y = A s, the
// breaker-constrained LASSO and the estimated admittance matrix.

#include "cascade/cyber.hpp"
#include "cascade/grid.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cascade {

/// Pre-detection model of one island. Vectors indexed by local bus (position
/// in `buses`) unless stated otherwise.
struct IslandEstimate {
    std::vector<std::size_t> buses;          ///< sorted global bus indices
    std::vector<std::size_t> lines;          ///< global lines in B: internal, believed closed, not observed open
    std::vector<std::size_t> pinned;         ///< local reference per connected part of B
    Vector p_pre;                            ///< pre-outage injections with duos present
    Vector p_post;                           ///< post-shed injections, duos removed
    Vector p_tilde;                          ///< p_post - p_pre
    std::vector<std::pair<std::size_t, double>> duos;  ///< (global bus, fictitious injection)
    SparseMatrix b;                          ///< local admittance over `lines`
    std::vector<std::size_t> detected;       ///< global lines found out
    SparseMatrix b_hat;                      ///< b minus detected lines
    bool low_confidence = false;             ///< no measurable line: detection skipped

    std::size_t local(std::size_t bus) const;  ///< throws when bus is outside the island
};

/// `pre_closed` is the pre-outage belief per network line and `observed_open`
/// marks lines whose breaker was seen open. Tie lines (one end inside,
/// believed closed before) turn their pre-outage flow into a duo injection.
/// Vectors `pre_injections`, `pre_flows`, `post_injections` are global.
IslandEstimate build_island_admittance_with_duos(const Grid& network, std::span<const std::size_t> island,
                                                 const std::vector<bool>& pre_closed,
                                                 const std::vector<bool>& observed_open, const Vector& pre_injections,
                                                 const Vector& pre_flows, const Vector& post_injections);

/// Local admittance of `lines` over `buses` (global indices).
SparseMatrix local_admittance(const Grid& network, std::span<const std::size_t> buses,
                              std::span<const std::size_t> lines);

struct LassoInputs {
    Vector y;                            ///< measured flow change minus C p_tilde, one per row line
    Matrix a;                            ///< C M, one column per island line
    std::vector<std::size_t> row_lines;  ///< global measurable lines
    std::vector<std::size_t> column_lines;
    std::vector<std::size_t> fixed_zero;  ///< column positions with observed-closed breakers
    Vector pre_flows;                     ///< modeled pre-outage flow per row line
};

/// Rows are island lines with a measured flow and an observed-closed breaker.
/// Returns empty rows when nothing is measurable; the caller marks the
/// island low-confidence.
LassoInputs compute_lasso_inputs(const Grid& network, const IslandEstimate& island,
                                 const MeasurementSnapshot& snapshot);

struct LassoSettings {
    double lambda_scale = 1e-3;  ///< lambda = scale * ||A'y||_inf
    double tol_scale = 0.05;     ///< tol = scale * max|s_hat|
    double tol_floor = 1e-4;
    /// Sweep cap: the larger of `min_sweeps` and `work_budget / (rows * cols)`.
    std::size_t min_sweeps = 5000;
    double work_budget = 2e8;
    /// Try lambda_scale in {1e-2, 1e-3, 1e-4}; keep the largest whose residual
    /// stays within 5% of ||y||, else the one with the smallest residual.
    bool lambda_search = false;
};

struct OutageVector {
    Vector s_hat;                     ///< per column
    std::vector<std::size_t> support;  ///< global lines, sorted
    double tol = 0.0;
    double lambda = 0.0;
    bool converged = true;
    double residual_norm = 0.0;
    std::vector<std::string> warnings;
};

OutageVector detect_line_outages(const LassoInputs& inputs, const LassoSettings& settings = {});

/// B minus the contributions of `support` (global lines), local indexing.
SparseMatrix assemble_estimated_admittance(const Grid& network, const IslandEstimate& island,
                                           std::span<const std::size_t> support);

/// Angle-based variant: rows are measured buses (global), y = (theta_tilde -
/// B^-1 p_tilde) at those buses, A = rows of B^-1 M. `theta_tilde` is local
/// and referenced to the island's pinned buses.
OutageVector detect_via_angles(const Grid& network, const IslandEstimate& island, const Vector& theta_tilde,
                               std::span<const std::size_t> measured_buses,
                               std::span<const std::size_t> fixed_zero_lines, const LassoSettings& settings = {});

}  // namespace cascade

#endif
