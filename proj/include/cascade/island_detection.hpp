#ifndef CASCADE_ISLAND_DETECTION_HPP
#define CASCADE_ISLAND_DETECTION_HPP

// Island identification from partial measurements: frequency grouping,
// potential parents, required injections, and the iterative cardinality ILP
// with Laplacian connectedness verification.

#include "cascade/cyber.hpp"
#include "cascade/grid.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cascade {

/// What the estimator believes about the grid at the end of a tier.
struct EstimatedTopology {
    std::vector<std::vector<std::size_t>> islands;  ///< partition of all buses
    std::vector<bool> line_closed;                  ///< per line
    Vector gen;                                     ///< prior per-bus generation
    Vector load;                                    ///< prior per-bus demand

    /// Tier-1 belief: one island, every in-service line closed, base injections.
    static EstimatedTopology from_grid(const Grid& grid);
};

struct FrequencyGroup {
    double frequency = 0.0;
    std::vector<std::size_t> members;  ///< observable buses, sorted
};

/// Observable buses partitioned by measured frequency (equal within tol),
/// groups ordered by their smallest bus.
std::vector<FrequencyGroup> group_by_frequency(const MeasurementSnapshot& snapshot, double tol = 1e-6);

/// Per-bus bounds for one group: members must be in, members of every other
/// group must be out.
struct IslandBounds {
    std::vector<bool> include;
    std::vector<bool> exclude;
};

IslandBounds bounds_for_group(std::span<const FrequencyGroup> groups, std::size_t index, std::size_t bus_count);

/// A breaker seen closed ties both ends to one island: inclusion and
/// exclusion spread along observed-closed lines.
void propagate_breaker_bounds(const Grid& network, const MeasurementSnapshot& snapshot, IslandBounds& bounds);

struct PotentialParent {
    std::vector<std::size_t> buses;  ///< sorted
    std::vector<bool> line_in;       ///< per line: both ends inside, believed closed, not observed open
    std::size_t source_island = 0;   ///< index into EstimatedTopology::islands
};

/// Previous-tier island holding the group, minus observed-open lines.
/// Empty when the group straddles two previous islands.
std::optional<PotentialParent> construct_potential_parent(const Grid& network, const EstimatedTopology& previous,
                                                          const MeasurementSnapshot& snapshot,
                                                          std::span<const std::size_t> group);

struct RequiredInjections {
    Vector p;  ///< per bus (zero outside the parent)
    double gen_ratio = 1.0;
    double load_ratio = 1.0;
};

/// Measured values at observable buses; elsewhere the prior scaled by the
/// shedding ratios seen at the group's largest observable generator and load.
/// Empty when the group lacks an observable generator or nonzero load.
std::optional<RequiredInjections> predict_required_injections(const PotentialParent& parent,
                                                              const EstimatedTopology& previous,
                                                              const MeasurementSnapshot& snapshot,
                                                              std::span<const std::size_t> group);

struct DetectionOptions {
    double epsilon = 1e-10;
    std::size_t max_solutions = 25;
    /// Branch-and-bound nodes allowed across all attempts for one group.
    std::size_t node_budget = 20000;
    double zero_tol = 1e-12;
    /// Refuse exhaustive search above this many free reduced buses.
    std::size_t exact_limit = 22;
};

enum class DetectionStatus { found, infeasible, no_connected_solution, budget_exhausted };

const char* to_string(DetectionStatus status);

struct IslandDetection {
    DetectionStatus status = DetectionStatus::infeasible;
    std::vector<std::size_t> core;   ///< selected nonzero-injection buses
    std::vector<std::size_t> buses;  ///< core plus adopted zero-injection buses, sorted
    std::vector<std::size_t> attempted_caps;
    std::size_t nodes = 0;
    std::size_t optimal_ties = 0;  ///< exact search only: other optimal sets found
    /// The node budget ran out with few enough free buses that the remaining
    /// attempts were finished by a split enumeration of the balance row.
    bool split_fallback = false;
};

/// Builds the parent subgraph of `network` restricted to the parent lines.
Grid parent_subgraph(const Grid& network, const PotentialParent& parent);

/// Iterative cardinality ILP: maximize |x| s.t. |p_hat'x| <= eps, bounds,
/// |x| <= m_a; a disconnected optimum lowers m_a to |x| - 1 and retries.
/// When branch and bound exhausts the node budget with at most 40 free
/// buses, the same loop continues on a meet-in-the-middle enumeration;
/// above that the status is budget_exhausted.
IslandDetection detect_island(const Grid& network, const PotentialParent& parent, const RequiredInjections& required,
                              const IslandBounds& bounds, const DetectionOptions& options = {});

/// Exhaustive maximum-cardinality balanced connected subset. Throws
/// ValidationError above options.exact_limit free reduced buses.
IslandDetection detect_island_exact(const Grid& network, const PotentialParent& parent,
                                    const RequiredInjections& required, const IslandBounds& bounds,
                                    const DetectionOptions& options = {});

/// Zero-injection clusters of `parent_graph` not yet assigned whose nonzero
/// neighbours touch exactly one detected island join that island.
void adopt_shared_zero_clusters(const Grid& parent_graph, const Vector& p, std::span<const std::size_t> members,
                                std::vector<std::vector<std::size_t>>& detected, double zero_tol = 1e-12);

}  // namespace cascade

#endif
