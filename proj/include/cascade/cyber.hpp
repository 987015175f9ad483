#ifndef CASCADE_CYBER_HPP
#define CASCADE_CYBER_HPP

// SCADA layer: a spanning tree of communication links collocated with the
// power lines, and the measurements that reach the control center.

#include "cascade/grid.hpp"

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace cascade {

enum class LinkType : std::uint8_t { type1, type2 };

struct CyberLink {
    std::size_t u = 0;
    std::size_t v = 0;
    std::size_t line = 0;  ///< collocated power line
    LinkType type = LinkType::type2;
    bool alive = true;
};

struct CyberNetwork {
    std::vector<bool> node_alive;  ///< one node per bus
    std::vector<CyberLink> links;
    std::size_t cc = 0;  ///< control-center bus

    std::size_t node_count() const { return node_alive.size(); }
    std::size_t alive_link_count() const;
};

/// Highest-degree bus over closed lines (distinct neighbors), lowest index on ties.
std::size_t choose_control_center(const Grid& grid);

/// Minimum spanning tree by reactance (Kruskal, ties by line index); the
/// `type1_count` links nearest the control center are Type-I. The depth of a
/// link is the hop depth of its far endpoint; ties go to the lower bus index.
/// Throws StructuralError when the grid is disconnected.
CyberNetwork build_scada(const Grid& grid, std::size_t type1_count);

/// Type-II links on tripped lines die; failed buses lose their node and all
/// incident links. Type-I links survive line trips.
CyberNetwork propagate_comm_failures(CyberNetwork cyber, std::span<const std::size_t> tripped_lines,
                                     std::span<const std::size_t> failed_buses);

/// Buses reachable from the control center over live links and nodes.
std::vector<bool> observable_set(const CyberNetwork& cyber);

struct MeasurementSnapshot {
    std::vector<bool> observable;                ///< per bus
    std::vector<std::optional<double>> flows;    ///< per line, present iff measured
    std::vector<std::optional<Breaker>> breakers;
    std::vector<std::optional<double>> frequency;  ///< per bus, Hz
    std::vector<std::optional<double>> gen;        ///< per bus, per-unit
    std::vector<std::optional<double>> load;

    std::size_t observable_count() const;
    std::vector<std::size_t> observable_buses() const;
    std::vector<std::size_t> measured_lines() const;
};

struct NoiseModel {
    double amplitude = 0.0;  ///< uniform on [-a, a], applied to flows
    std::mt19937_64* rng = nullptr;
};

/// Every line with an observable endpoint reports flow and breaker status;
/// observable buses report frequency, generation and load. Angles never leave
/// the substation.
MeasurementSnapshot extract_snapshot(const Grid& truth, const CyberNetwork& cyber, const Vector& flows,
                                     std::span<const double> bus_frequency, const NoiseModel& noise = {});

std::string snapshot_to_json(const MeasurementSnapshot& snapshot);

}  // namespace cascade

#endif
