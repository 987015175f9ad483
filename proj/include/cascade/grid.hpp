#ifndef CASCADE_GRID_HPP
#define CASCADE_GRID_HPP

#include "cascade/solvers.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace cascade {

enum class Breaker : std::uint8_t { closed, open };

struct Bus {
    int id = 0;
    double gen = 0.0;   ///< per-unit generation
    double load = 0.0;  ///< per-unit demand

    double injection() const { return gen - load; }
};

/// A transmission line between bus indices (not ids).
struct Line {
    std::size_t from = 0;
    std::size_t to = 0;
    double x = 1.0;       ///< per-unit reactance
    double rating = kInf; ///< per-unit flow limit
    Breaker breaker = Breaker::closed;

    bool closed() const { return breaker == Breaker::closed; }
    double susceptance() const { return 1.0 / x; }
};

/// Power network in per-unit. Parallel lines are separate entries.
struct Grid {
    std::vector<Bus> buses;
    std::vector<Line> lines;
    double base_mva = 100.0;

    std::size_t bus_count() const { return buses.size(); }
    std::size_t line_count() const { return lines.size(); }

    Vector injections() const;
    Vector generation() const;
    Vector demand() const;
    double total_generation() const;
    double total_load() const;
    std::optional<std::size_t> index_of(int bus_id) const;

    /// Throws ValidationError on self-loops, x <= 0, bad indices or duplicate ids.
    void validate() const;
};

/// Node-edge incidence over every line (open ones included): column l has
/// +1 at `from` and -1 at `to`.
struct IncidenceMatrix {
    SparseMatrix m;
};

/// B = M D M'. `d` holds 1/x for closed lines and 0 for open ones, so
/// open lines keep their incidence column but contribute nothing.
struct AdmittanceMatrix {
    SparseMatrix b;
    Vector d;
};

struct FlowState {
    Vector theta;
    Vector flows;
    std::vector<std::size_t> ref_buses;
};

struct PowerFlowOptions {
    double balance_tol = 1e-8;
    /// When false, component imbalance is absorbed at the reference bus.
    bool check_balance = true;
};

IncidenceMatrix build_incidence(const Grid& grid);
AdmittanceMatrix build_admittance(const Grid& grid);

/// Per-line flow (theta_u - theta_v)/x for closed lines, 0 for open ones.
Vector line_flows(const Vector& theta, const Grid& grid);

/// Lowest-index generator bus of each component, else its lowest-index bus.
std::vector<std::size_t> choose_reference_buses(const Grid& grid);

FlowState solve_dc_power_flow(const Grid& grid, const Vector& p, std::span<const std::size_t> ref_buses,
                              const PowerFlowOptions& options = {});
/// Uses the grid's own injections and default reference buses.
FlowState solve_dc_power_flow(const Grid& grid, const PowerFlowOptions& options = {});

// ---------------------------------------------------------------------------
// Graph utilities

using Adjacency = std::vector<std::vector<std::size_t>>;

/// Adjacency over closed lines; parallel lines collapse to one neighbor entry.
Adjacency closed_adjacency(const Grid& grid);

/// Partition of all buses by closed-line connectivity, each component
/// sorted, components ordered by their smallest bus.
std::vector<std::vector<std::size_t>> connected_components(const Grid& grid);
std::vector<std::vector<std::size_t>> connected_components(const Adjacency& adjacency);

/// Component id per bus, consistent with connected_components ordering.
std::vector<std::size_t> component_labels(const Adjacency& adjacency);

/// Result of eliminating zero-injection buses: nonzero buses become the
/// reduced vertex set, and buses joined through a chain of zero-injection
/// buses become adjacent.
struct ReducedGraph {
    std::vector<std::size_t> kept;              ///< original index per reduced vertex
    std::vector<std::ptrdiff_t> reduced_index;  ///< original -> reduced, -1 if eliminated
    Adjacency adjacency;                        ///< over reduced vertices, sorted, no duplicates
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> multiplicity;  ///< (a<b) -> #parallel links
    Vector p_hat;                               ///< injections of kept buses
    /// Connected groups of eliminated buses and, for each, the kept buses
    /// adjacent to it (original indices).
    std::vector<std::vector<std::size_t>> zero_clusters;
    std::vector<std::vector<std::size_t>> cluster_neighbors;
};

/// `members` restricts the graph to a bus subset (all buses when empty);
/// a bus is zero-injection when |p_u| <= zero_tol.
ReducedGraph reduce_zero_injection(const Grid& grid, const Vector& p, std::span<const std::size_t> members = {},
                                   double zero_tol = 1e-12);
ReducedGraph reduce_zero_injection(const Grid& grid);

/// Rank with partial pivoting; entries below rel_tol * largest pivot count as zero.
std::size_t numeric_rank(Matrix a, double rel_tol = 1e-9);

/// True iff the Laplacian of the subgraph induced by `selected` has rank
/// |selected| - 1, i.e. the selection is connected.
bool connectedness_rank_test(std::span<const std::size_t> selected, const Adjacency& adjacency);

}  // namespace cascade

#endif
