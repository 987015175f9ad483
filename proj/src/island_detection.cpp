#include "cascade/island_detection.hpp"

#include "cascade/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace cascade {

EstimatedTopology EstimatedTopology::from_grid(const Grid& grid) {
    EstimatedTopology t;
    t.islands = connected_components(grid);
    t.line_closed.resize(grid.line_count());
    for (std::size_t l = 0; l < grid.line_count(); ++l) t.line_closed[l] = grid.lines[l].closed();
    t.gen = grid.generation();
    t.load = grid.demand();
    return t;
}

std::vector<FrequencyGroup> group_by_frequency(const MeasurementSnapshot& snapshot, double tol) {
    std::vector<std::size_t> buses;
    for (std::size_t b = 0; b < snapshot.frequency.size(); ++b)
        if (snapshot.frequency[b]) buses.push_back(b);
    std::stable_sort(buses.begin(), buses.end(),
                     [&](std::size_t a, std::size_t b) { return *snapshot.frequency[a] < *snapshot.frequency[b]; });
    std::vector<FrequencyGroup> groups;
    for (auto b : buses) {
        const double f = *snapshot.frequency[b];
        if (groups.empty() || f - groups.back().frequency > tol) groups.push_back({f, {}});
        groups.back().members.push_back(b);
    }
    for (auto& g : groups) std::sort(g.members.begin(), g.members.end());
    std::sort(groups.begin(), groups.end(),
              [](const FrequencyGroup& a, const FrequencyGroup& b) { return a.members.front() < b.members.front(); });
    return groups;
}

IslandBounds bounds_for_group(std::span<const FrequencyGroup> groups, std::size_t index, std::size_t bus_count) {
    IslandBounds b;
    b.include.assign(bus_count, false);
    b.exclude.assign(bus_count, false);
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (auto bus : groups[g].members) (g == index ? b.include : b.exclude)[bus] = true;
    return b;
}

void propagate_breaker_bounds(const Grid& network, const MeasurementSnapshot& snapshot, IslandBounds& bounds) {
    Adjacency adj(network.bus_count());
    for (std::size_t l = 0; l < network.line_count(); ++l) {
        if (!snapshot.breakers[l] || *snapshot.breakers[l] != Breaker::closed) continue;
        adj[network.lines[l].from].push_back(network.lines[l].to);
        adj[network.lines[l].to].push_back(network.lines[l].from);
    }
    for (const auto& part : connected_components(adj)) {
        if (part.size() < 2) continue;
        const bool in = std::any_of(part.begin(), part.end(), [&](auto b) { return bounds.include[b]; });
        const bool out = std::any_of(part.begin(), part.end(), [&](auto b) { return bounds.exclude[b]; });
        for (auto b : part) {
            if (in) bounds.include[b] = true;
            if (out) bounds.exclude[b] = true;
        }
    }
}

std::optional<PotentialParent> construct_potential_parent(const Grid& network, const EstimatedTopology& previous,
                                                          const MeasurementSnapshot& snapshot,
                                                          std::span<const std::size_t> group) {
    std::vector<std::size_t> island_of(network.bus_count(), SIZE_MAX);
    for (std::size_t i = 0; i < previous.islands.size(); ++i)
        for (auto b : previous.islands[i]) island_of[b] = i;
    if (group.empty()) return std::nullopt;
    const auto source = island_of[group.front()];
    for (auto b : group)
        if (island_of[b] != source) return std::nullopt;
    if (source == SIZE_MAX) return std::nullopt;

    PotentialParent parent;
    parent.source_island = source;
    parent.buses = previous.islands[source];
    std::sort(parent.buses.begin(), parent.buses.end());
    parent.line_in.assign(network.line_count(), false);
    for (std::size_t l = 0; l < network.line_count(); ++l) {
        const auto& line = network.lines[l];
        if (island_of[line.from] != source || island_of[line.to] != source) continue;
        // A fresh observation overrides the stored belief.
        parent.line_in[l] = snapshot.breakers[l] ? *snapshot.breakers[l] == Breaker::closed : previous.line_closed[l];
    }
    return parent;
}

std::optional<RequiredInjections> predict_required_injections(const PotentialParent& parent,
                                                              const EstimatedTopology& previous,
                                                              const MeasurementSnapshot& snapshot,
                                                              std::span<const std::size_t> group) {
    std::optional<std::size_t> gen_bus, load_bus;
    for (auto b : group) {
        if (!snapshot.gen[b]) continue;
        const auto i = static_cast<Eigen::Index>(b);
        if (previous.gen(i) > 0.0 && (!gen_bus || previous.gen(i) > previous.gen(static_cast<Eigen::Index>(*gen_bus))))
            gen_bus = b;
        if (previous.load(i) > 0.0 &&
            (!load_bus || previous.load(i) > previous.load(static_cast<Eigen::Index>(*load_bus))))
            load_bus = b;
    }
    if (!gen_bus || !load_bus) return std::nullopt;

    RequiredInjections r;
    r.gen_ratio = *snapshot.gen[*gen_bus] / previous.gen(static_cast<Eigen::Index>(*gen_bus));
    r.load_ratio = *snapshot.load[*load_bus] / previous.load(static_cast<Eigen::Index>(*load_bus));
    r.p = Vector::Zero(static_cast<Eigen::Index>(snapshot.observable.size()));
    for (auto b : parent.buses) {
        const auto i = static_cast<Eigen::Index>(b);
        if (snapshot.gen[b])
            r.p(i) = *snapshot.gen[b] - *snapshot.load[b];
        else
            r.p(i) = r.gen_ratio * previous.gen(i) - r.load_ratio * previous.load(i);
    }
    return r;
}

const char* to_string(DetectionStatus status) {
    switch (status) {
        case DetectionStatus::found: return "found";
        case DetectionStatus::infeasible: return "infeasible";
        case DetectionStatus::no_connected_solution: return "no_connected_solution";
        case DetectionStatus::budget_exhausted: return "budget_exhausted";
    }
    return "unknown";
}

Grid parent_subgraph(const Grid& network, const PotentialParent& parent) {
    Grid g = network;
    for (std::size_t l = 0; l < g.line_count(); ++l) g.lines[l].breaker = parent.line_in[l] ? Breaker::closed : Breaker::open;
    return g;
}

namespace {

enum class Fix : std::uint8_t { free, in, out };

struct Setup {
    Grid graph;
    ReducedGraph rg;
    std::vector<Fix> fix;  // per reduced vertex
    bool conflict = false;
};

Setup prepare(const Grid& network, const PotentialParent& parent, const RequiredInjections& required,
              const IslandBounds& bounds, double zero_tol) {
    Setup s{parent_subgraph(network, parent), {}, {}, false};
    s.rg = reduce_zero_injection(s.graph, required.p, parent.buses, zero_tol);
    s.fix.assign(s.rg.kept.size(), Fix::free);
    for (std::size_t k = 0; k < s.rg.kept.size(); ++k) {
        const auto b = s.rg.kept[k];
        if (bounds.include[b] && bounds.exclude[b]) s.conflict = true;
        if (bounds.include[b])
            s.fix[k] = Fix::in;
        else if (bounds.exclude[b])
            s.fix[k] = Fix::out;
    }
    return s;
}

// Adds zero-injection clusters whose nonzero neighbours all lie in the
// selection, or which hold a bus that must be included.
std::vector<std::size_t> augment(const Setup& s, const std::vector<std::size_t>& core, const IslandBounds& bounds) {
    std::vector<bool> in(s.graph.bus_count(), false);
    for (auto b : core) in[b] = true;
    std::vector<std::size_t> out = core;
    for (std::size_t c = 0; c < s.rg.zero_clusters.size(); ++c) {
        const auto& cluster = s.rg.zero_clusters[c];
        const auto& nbrs = s.rg.cluster_neighbors[c];
        const bool excluded = std::any_of(cluster.begin(), cluster.end(), [&](auto b) { return bounds.exclude[b]; });
        if (excluded) continue;
        const bool forced = std::any_of(cluster.begin(), cluster.end(), [&](auto b) { return bounds.include[b]; });
        const bool enclosed = !nbrs.empty() && std::all_of(nbrs.begin(), nbrs.end(), [&](auto b) { return in[b]; });
        if (forced || enclosed) out.insert(out.end(), cluster.begin(), cluster.end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

constexpr std::size_t kSplitLimit = 40;

// Subset sums of each half of a value list, bucketed by size and sorted.
class SplitTables {
public:
    explicit SplitTables(const Vector& values)
        : n_(static_cast<std::size_t>(values.size())), h_(n_ / 2), left_(build(values, 0, h_)), right_(build(values, h_, n_)) {}

    // Largest subset (at most `cap`, at least `min_card`) with sum in [lo, hi].
    std::optional<std::vector<bool>> best(double lo, double hi, std::size_t cap, std::size_t min_card) const {
        for (std::size_t t = std::min(cap, n_) + 1; t-- > min_card;) {
            for (std::size_t c1 = t > n_ - h_ ? t - (n_ - h_) : 0; c1 <= std::min(t, h_); ++c1) {
                const auto& b = right_[t - c1];
                for (const auto& a : left_[c1]) {
                    auto it = std::lower_bound(b.begin(), b.end(), lo - a.sum,
                                               [](const Entry& e, double x) { return e.sum < x; });
                    if (it == b.end() || a.sum + it->sum > hi) continue;
                    std::vector<bool> pick(n_, false);
                    for (std::size_t j = 0; j < h_; ++j) pick[j] = a.mask >> j & 1U;
                    for (std::size_t j = h_; j < n_; ++j) pick[j] = it->mask >> (j - h_) & 1U;
                    return pick;
                }
            }
        }
        return std::nullopt;
    }

private:
    struct Entry {
        double sum;
        std::uint64_t mask;
    };
    using Buckets = std::vector<std::vector<Entry>>;

    static Buckets build(const Vector& values, std::size_t begin, std::size_t end) {
        const std::size_t m = end - begin;
        Buckets by_count(m + 1);
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
            double sum = 0.0;
            for (std::size_t j = 0; j < m; ++j)
                if (mask >> j & 1U) sum += values(static_cast<Eigen::Index>(begin + j));
            by_count[static_cast<std::size_t>(std::popcount(mask))].push_back({sum, mask});
        }
        for (auto& list : by_count)
            std::sort(list.begin(), list.end(), [](const Entry& x, const Entry& y) { return x.sum < y.sum; });
        return by_count;
    }

    std::size_t n_, h_;
    Buckets left_, right_;
};

}  // namespace

IslandDetection detect_island(const Grid& network, const PotentialParent& parent, const RequiredInjections& required,
                              const IslandBounds& bounds, const DetectionOptions& options) {
    IslandDetection result;
    Setup s = prepare(network, parent, required, bounds, options.zero_tol);
    if (s.conflict) return result;
    const auto& rg = s.rg;
    const std::size_t k = rg.kept.size();

    // Presolve: nothing outside the region reachable from the forced buses
    // (without crossing excluded ones) can join a connected answer.
    std::vector<std::size_t> forced;
    for (std::size_t v = 0; v < k; ++v)
        if (s.fix[v] == Fix::in) forced.push_back(v);
    if (!forced.empty()) {
        std::vector<std::size_t> label(k, SIZE_MAX);
        std::size_t next = 0;
        for (auto root : forced) {
            if (label[root] != SIZE_MAX) continue;
            std::vector<std::size_t> stack{root};
            label[root] = next;
            while (!stack.empty()) {
                const auto u = stack.back();
                stack.pop_back();
                for (auto v : rg.adjacency[u])
                    if (label[v] == SIZE_MAX && s.fix[v] != Fix::out) {
                        label[v] = next;
                        stack.push_back(v);
                    }
            }
            ++next;
        }
        if (next > 1) {
            result.status = DetectionStatus::no_connected_solution;
            return result;
        }
        for (std::size_t v = 0; v < k; ++v)
            if (label[v] == SIZE_MAX) s.fix[v] = Fix::out;
    }

    std::vector<std::size_t> free;
    double fixed_sum = 0.0;
    std::size_t fixed_in = 0;
    for (std::size_t v = 0; v < k; ++v) {
        if (s.fix[v] == Fix::free) free.push_back(v);
        if (s.fix[v] == Fix::in) {
            fixed_sum += rg.p_hat(static_cast<Eigen::Index>(v));
            ++fixed_in;
        }
    }
    const auto nf = static_cast<Eigen::Index>(free.size());

    IlpProblem ilp;
    ilp.lp = LpProblem::with_variables(free.size());
    ilp.lp.ub.setOnes();
    ilp.lp.c.setConstant(-1.0);
    Vector prow(nf);
    for (Eigen::Index j = 0; j < nf; ++j) prow(j) = rg.p_hat(static_cast<Eigen::Index>(free[static_cast<std::size_t>(j)]));
    ilp.lp.add_inequality(prow, options.epsilon - fixed_sum);
    ilp.lp.add_inequality(-prow, options.epsilon + fixed_sum);
    ilp.lp.add_inequality(Vector::Ones(nf), 0.0);  // cardinality cap, rhs set per attempt
    if (fixed_in == 0) ilp.lp.add_inequality(-Vector::Ones(nf), -1.0);
    ilp.integer.assign(free.size(), true);

    BranchAndBoundOptions bb;
    bb.lp.feasibility_tol = 1e-12;
    std::size_t cap = k + 1;
    std::size_t budget = options.node_budget;
    std::optional<SplitTables> split;
    for (std::size_t attempt = 0; attempt < options.max_solutions; ++attempt) {
        result.attempted_caps.push_back(cap);
        if (cap < fixed_in) {
            result.status = DetectionStatus::no_connected_solution;
            return result;
        }
        std::vector<bool> chosen;
        if (!split) {
            ilp.lp.b_ub(2) = static_cast<double>(cap - fixed_in);
            bb.node_limit = budget;
            const auto sol = solve_ilp(ilp, bb);
            result.nodes += sol.nodes;
            budget -= std::min(budget, sol.nodes);
            if (sol.status == LpStatus::node_limit) {
                if (free.size() > kSplitLimit) {
                    result.status = DetectionStatus::budget_exhausted;
                    return result;
                }
                split.emplace(prow);
                result.split_fallback = true;
            } else if (sol.status != LpStatus::optimal) {
                result.status = attempt == 0 ? DetectionStatus::infeasible : DetectionStatus::no_connected_solution;
                return result;
            } else {
                for (Eigen::Index j = 0; j < nf; ++j) chosen.push_back(sol.z(j) > 0.5);
            }
        }
        if (split) {
            auto pick = split->best(-options.epsilon - fixed_sum, options.epsilon - fixed_sum, cap - fixed_in,
                                    fixed_in == 0 ? 1 : 0);
            if (!pick) {
                result.status = attempt == 0 ? DetectionStatus::infeasible : DetectionStatus::no_connected_solution;
                return result;
            }
            chosen = std::move(*pick);
        }
        std::vector<std::size_t> selected;
        double sum = fixed_sum;
        for (std::size_t v = 0; v < k; ++v)
            if (s.fix[v] == Fix::in) selected.push_back(v);
        for (Eigen::Index j = 0; j < nf; ++j)
            if (chosen[static_cast<std::size_t>(j)]) {
                selected.push_back(free[static_cast<std::size_t>(j)]);
                sum += prow(j);
            }
        std::sort(selected.begin(), selected.end());
        if (std::abs(sum) <= options.epsilon && connectedness_rank_test(selected, rg.adjacency)) {
            result.status = DetectionStatus::found;
            for (auto v : selected) result.core.push_back(rg.kept[v]);
            result.buses = augment(s, result.core, bounds);
            return result;
        }
        if (selected.size() <= 1) break;
        cap = selected.size() - 1;
    }
    result.status = DetectionStatus::no_connected_solution;
    return result;
}

IslandDetection detect_island_exact(const Grid& network, const PotentialParent& parent,
                                    const RequiredInjections& required, const IslandBounds& bounds,
                                    const DetectionOptions& options) {
    IslandDetection result;
    Setup s = prepare(network, parent, required, bounds, options.zero_tol);
    if (s.conflict) return result;
    const auto& rg = s.rg;
    std::vector<std::size_t> free, fixed;
    double fixed_sum = 0.0;
    for (std::size_t v = 0; v < rg.kept.size(); ++v) {
        if (s.fix[v] == Fix::free) free.push_back(v);
        if (s.fix[v] == Fix::in) {
            fixed.push_back(v);
            fixed_sum += rg.p_hat(static_cast<Eigen::Index>(v));
        }
    }
    if (free.size() > options.exact_limit)
        throw ValidationError("exhaustive island search refused: " + std::to_string(free.size()) + " free buses");

    const std::size_t f = free.size();
    const std::uint64_t total = std::uint64_t{1} << f;
    std::vector<double> sums(total, 0.0);
    std::vector<std::uint64_t> balanced;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        if (mask) {
            const auto low = static_cast<std::size_t>(std::countr_zero(mask));
            sums[mask] = sums[mask & (mask - 1)] + rg.p_hat(static_cast<Eigen::Index>(free[low]));
        }
        if (fixed.empty() && mask == 0) continue;
        if (std::abs(fixed_sum + sums[mask]) <= options.epsilon) balanced.push_back(mask);
    }
    std::stable_sort(balanced.begin(), balanced.end(),
                     [](std::uint64_t a, std::uint64_t b) { return std::popcount(a) > std::popcount(b); });

    std::optional<std::uint64_t> best;
    for (auto mask : balanced) {
        if (best && std::popcount(mask) < std::popcount(*best)) break;
        std::vector<std::size_t> selected = fixed;
        for (std::size_t j = 0; j < f; ++j)
            if (mask >> j & 1) selected.push_back(free[j]);
        std::sort(selected.begin(), selected.end());
        if (!connectedness_rank_test(selected, rg.adjacency)) continue;
        if (best) {
            ++result.optimal_ties;
            continue;
        }
        best = mask;
        result.status = DetectionStatus::found;
        for (auto v : selected) result.core.push_back(rg.kept[v]);
    }
    if (!best) {
        result.status = balanced.empty() ? DetectionStatus::infeasible : DetectionStatus::no_connected_solution;
        return result;
    }
    result.buses = augment(s, result.core, bounds);
    return result;
}

void adopt_shared_zero_clusters(const Grid& parent_graph, const Vector& p, std::span<const std::size_t> members,
                                std::vector<std::vector<std::size_t>>& detected, double zero_tol) {
    const auto rg = reduce_zero_injection(parent_graph, p, members, zero_tol);
    std::vector<std::size_t> owner(parent_graph.bus_count(), SIZE_MAX);
    for (std::size_t i = 0; i < detected.size(); ++i)
        for (auto b : detected[i]) owner[b] = i;
    for (std::size_t c = 0; c < rg.zero_clusters.size(); ++c) {
        const auto& cluster = rg.zero_clusters[c];
        if (std::any_of(cluster.begin(), cluster.end(), [&](auto b) { return owner[b] != SIZE_MAX; })) continue;
        std::size_t touched = SIZE_MAX;
        bool unique = true;
        for (auto b : rg.cluster_neighbors[c]) {
            if (owner[b] == SIZE_MAX) continue;
            if (touched == SIZE_MAX)
                touched = owner[b];
            else if (touched != owner[b])
                unique = false;
        }
        if (touched == SIZE_MAX || !unique) continue;
        auto& island = detected[touched];
        island.insert(island.end(), cluster.begin(), cluster.end());
        std::sort(island.begin(), island.end());
    }
}

}  // namespace cascade
