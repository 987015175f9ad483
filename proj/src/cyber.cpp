#include "cascade/cyber.hpp"

#include "cascade/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <queue>
#include <tuple>

namespace cascade {

std::size_t CyberNetwork::alive_link_count() const {
    return static_cast<std::size_t>(std::count_if(links.begin(), links.end(), [](const CyberLink& l) { return l.alive; }));
}

std::size_t choose_control_center(const Grid& grid) {
    const auto adj = closed_adjacency(grid);
    std::size_t best = 0;
    for (std::size_t i = 1; i < adj.size(); ++i)
        if (adj[i].size() > adj[best].size()) best = i;
    return best;
}

namespace {

struct DisjointSet {
    std::vector<std::size_t> parent;
    explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[std::max(a, b)] = std::min(a, b);
        return true;
    }
};

}  // namespace

CyberNetwork build_scada(const Grid& grid, std::size_t type1_count) {
    const std::size_t n = grid.bus_count();
    if (n == 0) throw StructuralError("empty grid");
    if (type1_count > n - 1) throw ValidationError("type1_count exceeds the number of tree links");

    std::vector<std::size_t> order;
    for (std::size_t l = 0; l < grid.line_count(); ++l)
        if (grid.lines[l].closed() && grid.lines[l].from != grid.lines[l].to) order.push_back(l);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return grid.lines[a].x < grid.lines[b].x; });

    CyberNetwork net;
    net.node_alive.assign(n, true);
    net.cc = choose_control_center(grid);
    DisjointSet dsu(n);
    for (auto l : order) {
        const auto& line = grid.lines[l];
        if (dsu.unite(line.from, line.to)) net.links.push_back({line.from, line.to, l, LinkType::type2, true});
    }
    if (net.links.size() != n - 1) throw StructuralError("grid is disconnected; no spanning tree exists");

    // Hop depth from the control center along the tree.
    std::vector<std::vector<std::size_t>> incident(n);
    for (std::size_t k = 0; k < net.links.size(); ++k) {
        incident[net.links[k].u].push_back(k);
        incident[net.links[k].v].push_back(k);
    }
    std::vector<std::size_t> depth(n, SIZE_MAX);
    std::queue<std::size_t> q;
    depth[net.cc] = 0;
    q.push(net.cc);
    while (!q.empty()) {
        const auto u = q.front();
        q.pop();
        for (auto k : incident[u]) {
            const auto v = net.links[k].u == u ? net.links[k].v : net.links[k].u;
            if (depth[v] == SIZE_MAX) {
                depth[v] = depth[u] + 1;
                q.push(v);
            }
        }
    }
    std::vector<std::size_t> rank(net.links.size());
    std::iota(rank.begin(), rank.end(), 0);
    auto far = [&](const CyberLink& l) { return depth[l.u] > depth[l.v] ? l.u : l.v; };
    std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        const auto fa = far(net.links[a]), fb = far(net.links[b]);
        return std::tie(depth[fa], fa) < std::tie(depth[fb], fb);
    });
    for (std::size_t k = 0; k < type1_count; ++k) net.links[rank[k]].type = LinkType::type1;
    return net;
}

CyberNetwork propagate_comm_failures(CyberNetwork cyber, std::span<const std::size_t> tripped_lines,
                                     std::span<const std::size_t> failed_buses) {
    std::vector<bool> tripped;
    for (auto l : tripped_lines) {
        if (l >= tripped.size()) tripped.resize(l + 1, false);
        tripped[l] = true;
    }
    for (auto b : failed_buses) cyber.node_alive[b] = false;
    for (auto& link : cyber.links) {
        if (!link.alive) continue;
        if (!cyber.node_alive[link.u] || !cyber.node_alive[link.v])
            link.alive = false;
        else if (link.type == LinkType::type2 && link.line < tripped.size() && tripped[link.line])
            link.alive = false;
    }
    return cyber;
}

std::vector<bool> observable_set(const CyberNetwork& cyber) {
    const std::size_t n = cyber.node_count();
    std::vector<bool> seen(n, false);
    if (n == 0 || !cyber.node_alive[cyber.cc]) return seen;
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& l : cyber.links)
        if (l.alive && cyber.node_alive[l.u] && cyber.node_alive[l.v]) {
            adj[l.u].push_back(l.v);
            adj[l.v].push_back(l.u);
        }
    std::vector<std::size_t> stack{cyber.cc};
    seen[cyber.cc] = true;
    while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        for (auto v : adj[u])
            if (!seen[v]) {
                seen[v] = true;
                stack.push_back(v);
            }
    }
    return seen;
}

std::size_t MeasurementSnapshot::observable_count() const {
    return static_cast<std::size_t>(std::count(observable.begin(), observable.end(), true));
}

std::vector<std::size_t> MeasurementSnapshot::observable_buses() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < observable.size(); ++i)
        if (observable[i]) out.push_back(i);
    return out;
}

std::vector<std::size_t> MeasurementSnapshot::measured_lines() const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < breakers.size(); ++l)
        if (breakers[l]) out.push_back(l);
    return out;
}

MeasurementSnapshot extract_snapshot(const Grid& truth, const CyberNetwork& cyber, const Vector& flows,
                                     std::span<const double> bus_frequency, const NoiseModel& noise) {
    MeasurementSnapshot s;
    s.observable = observable_set(cyber);
    const std::size_t n = truth.bus_count();
    s.frequency.resize(n);
    s.gen.resize(n);
    s.load.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!s.observable[i]) continue;
        s.frequency[i] = bus_frequency[i];
        s.gen[i] = truth.buses[i].gen;
        s.load[i] = truth.buses[i].load;
    }
    std::uniform_real_distribution<double> jitter(-noise.amplitude, noise.amplitude);
    const bool noisy = noise.amplitude > 0.0 && noise.rng != nullptr;
    s.flows.resize(truth.line_count());
    s.breakers.resize(truth.line_count());
    for (std::size_t l = 0; l < truth.line_count(); ++l) {
        const auto& line = truth.lines[l];
        if (!s.observable[line.from] && !s.observable[line.to]) continue;
        s.breakers[l] = line.breaker;
        double f = flows(static_cast<Eigen::Index>(l));
        if (noisy && line.closed()) f += jitter(*noise.rng);
        s.flows[l] = f;
    }
    return s;
}

std::string snapshot_to_json(const MeasurementSnapshot& s) {
    nlohmann::ordered_json j;
    j["observable_buses"] = s.observable_buses();
    auto lines = nlohmann::ordered_json::array();
    for (auto l : s.measured_lines())
        lines.push_back({{"line", l}, {"flow", *s.flows[l]}, {"closed", *s.breakers[l] == Breaker::closed}});
    j["lines"] = std::move(lines);
    auto buses = nlohmann::ordered_json::array();
    for (auto b : s.observable_buses())
        buses.push_back({{"bus", b}, {"frequency", *s.frequency[b]}, {"gen", *s.gen[b]}, {"load", *s.load[b]}});
    j["buses"] = std::move(buses);
    return j.dump();
}

}  // namespace cascade
