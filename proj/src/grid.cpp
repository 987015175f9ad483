#include "cascade/grid.hpp"

#include "cascade/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <string>
#include <unordered_set>

namespace cascade {

Vector Grid::injections() const {
    Vector p(static_cast<Eigen::Index>(buses.size()));
    for (std::size_t i = 0; i < buses.size(); ++i) p(static_cast<Eigen::Index>(i)) = buses[i].injection();
    return p;
}

Vector Grid::generation() const {
    Vector g(static_cast<Eigen::Index>(buses.size()));
    for (std::size_t i = 0; i < buses.size(); ++i) g(static_cast<Eigen::Index>(i)) = buses[i].gen;
    return g;
}

Vector Grid::demand() const {
    Vector d(static_cast<Eigen::Index>(buses.size()));
    for (std::size_t i = 0; i < buses.size(); ++i) d(static_cast<Eigen::Index>(i)) = buses[i].load;
    return d;
}

namespace {

// Neumaier summation; totals are compared against table sums at 1e-12.
template <typename F>
double compensated_sum(const std::vector<Bus>& buses, F value) {
    double s = 0.0, c = 0.0;
    for (const auto& b : buses) {
        const double v = value(b);
        const double t = s + v;
        c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
        s = t;
    }
    return s + c;
}

}  // namespace

double Grid::total_generation() const {
    return compensated_sum(buses, [](const Bus& b) { return b.gen; });
}

double Grid::total_load() const {
    return compensated_sum(buses, [](const Bus& b) { return b.load; });
}

std::optional<std::size_t> Grid::index_of(int bus_id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == bus_id) return i;
    return std::nullopt;
}

void Grid::validate() const {
    std::unordered_set<int> ids;
    for (const auto& b : buses)
        if (!ids.insert(b.id).second) throw ValidationError("duplicate bus id " + std::to_string(b.id));
    for (std::size_t l = 0; l < lines.size(); ++l) {
        const auto& line = lines[l];
        if (line.from >= buses.size() || line.to >= buses.size())
            throw ValidationError("line " + std::to_string(l) + " references a missing bus");
        if (line.from == line.to) throw ValidationError("line " + std::to_string(l) + " is a self-loop");
        if (!(line.x > 0.0)) throw ValidationError("line " + std::to_string(l) + " has nonpositive reactance");
    }
}

IncidenceMatrix build_incidence(const Grid& grid) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(2 * grid.lines.size());
    for (std::size_t l = 0; l < grid.lines.size(); ++l) {
        t.emplace_back(static_cast<int>(grid.lines[l].from), static_cast<int>(l), 1.0);
        t.emplace_back(static_cast<int>(grid.lines[l].to), static_cast<int>(l), -1.0);
    }
    IncidenceMatrix inc;
    inc.m = SparseMatrix(static_cast<Eigen::Index>(grid.bus_count()), static_cast<Eigen::Index>(grid.line_count()));
    inc.m.setFromTriplets(t.begin(), t.end());
    return inc;
}

AdmittanceMatrix build_admittance(const Grid& grid) {
    AdmittanceMatrix adm;
    const auto n = static_cast<Eigen::Index>(grid.bus_count());
    adm.d = Vector::Zero(static_cast<Eigen::Index>(grid.line_count()));
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(4 * grid.lines.size() + grid.buses.size());
    for (std::size_t l = 0; l < grid.lines.size(); ++l) {
        const auto& line = grid.lines[l];
        if (!line.closed()) continue;
        const double d = line.susceptance();
        adm.d(static_cast<Eigen::Index>(l)) = d;
        const auto u = static_cast<int>(line.from), v = static_cast<int>(line.to);
        t.emplace_back(u, u, d);
        t.emplace_back(v, v, d);
        t.emplace_back(u, v, -d);
        t.emplace_back(v, u, -d);
    }
    adm.b = SparseMatrix(n, n);
    adm.b.setFromTriplets(t.begin(), t.end());
    return adm;
}

Vector line_flows(const Vector& theta, const Grid& grid) {
    Vector flows = Vector::Zero(static_cast<Eigen::Index>(grid.line_count()));
    for (std::size_t l = 0; l < grid.lines.size(); ++l) {
        const auto& line = grid.lines[l];
        if (!line.closed()) continue;
        flows(static_cast<Eigen::Index>(l)) =
            (theta(static_cast<Eigen::Index>(line.from)) - theta(static_cast<Eigen::Index>(line.to))) / line.x;
    }
    return flows;
}

// ---------------------------------------------------------------------------

Adjacency closed_adjacency(const Grid& grid) {
    Adjacency adj(grid.bus_count());
    for (const auto& line : grid.lines) {
        if (!line.closed()) continue;
        adj[line.from].push_back(line.to);
        adj[line.to].push_back(line.from);
    }
    for (auto& nbrs : adj) {
        std::sort(nbrs.begin(), nbrs.end());
        nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
    return adj;
}

std::vector<std::size_t> component_labels(const Adjacency& adjacency) {
    constexpr auto unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> label(adjacency.size(), unset);
    std::size_t next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < adjacency.size(); ++s) {
        if (label[s] != unset) continue;
        label[s] = next;
        stack.push_back(s);
        while (!stack.empty()) {
            const auto u = stack.back();
            stack.pop_back();
            for (auto v : adjacency[u]) {
                if (label[v] != unset) continue;
                label[v] = next;
                stack.push_back(v);
            }
        }
        ++next;
    }
    return label;
}

std::vector<std::vector<std::size_t>> connected_components(const Adjacency& adjacency) {
    const auto label = component_labels(adjacency);
    std::size_t count = 0;
    for (auto l : label) count = std::max(count, l + 1);
    std::vector<std::vector<std::size_t>> comps(count);
    for (std::size_t i = 0; i < label.size(); ++i) comps[label[i]].push_back(i);
    return comps;
}

std::vector<std::vector<std::size_t>> connected_components(const Grid& grid) {
    return connected_components(closed_adjacency(grid));
}

std::vector<std::size_t> choose_reference_buses(const Grid& grid) {
    std::vector<std::size_t> refs;
    for (const auto& comp : connected_components(grid)) {
        auto gen = std::find_if(comp.begin(), comp.end(), [&](std::size_t b) { return grid.buses[b].gen > 0.0; });
        refs.push_back(gen != comp.end() ? *gen : comp.front());
    }
    return refs;
}

FlowState solve_dc_power_flow(const Grid& grid, const Vector& p, std::span<const std::size_t> ref_buses,
                              const PowerFlowOptions& options) {
    const std::size_t n = grid.bus_count();
    if (static_cast<std::size_t>(p.size()) != n) throw ValidationError("injection vector size mismatch");
    const auto adjacency = closed_adjacency(grid);
    const auto label = component_labels(adjacency);
    std::size_t count = 0;
    for (auto l : label) count = std::max(count, l + 1);

    constexpr auto unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> ref_of(count, unset);
    for (auto r : ref_buses) {
        if (r >= n) throw ValidationError("reference bus out of range");
        auto& slot = ref_of[label[r]];
        if (slot != unset && slot != r)
            throw StructuralError("component " + std::to_string(label[r]) + " has more than one reference bus");
        slot = r;
    }
    for (std::size_t c = 0; c < count; ++c)
        if (ref_of[c] == unset) throw StructuralError("component " + std::to_string(c) + " has no reference bus");

    if (options.check_balance) {
        std::vector<double> sum(count, 0.0);
        for (std::size_t i = 0; i < n; ++i) sum[label[i]] += p(static_cast<Eigen::Index>(i));
        for (std::size_t c = 0; c < count; ++c)
            if (std::abs(sum[c]) > options.balance_tol) throw BalanceError(c, sum[c]);
    }

    const auto adm = build_admittance(grid);
    FlowState state;
    state.ref_buses = ref_of;
    state.theta = PinnedSolver(adm.b, ref_of).solve(p);
    state.flows = line_flows(state.theta, grid);
    return state;
}

FlowState solve_dc_power_flow(const Grid& grid, const PowerFlowOptions& options) {
    const auto refs = choose_reference_buses(grid);
    return solve_dc_power_flow(grid, grid.injections(), refs, options);
}

// ---------------------------------------------------------------------------

ReducedGraph reduce_zero_injection(const Grid& grid, const Vector& p, std::span<const std::size_t> members,
                                   double zero_tol) {
    const std::size_t n = grid.bus_count();
    std::vector<bool> member(n, members.empty());
    for (auto b : members) member[b] = true;

    ReducedGraph rg;
    rg.reduced_index.assign(n, -1);
    std::vector<bool> zero(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (!member[i]) continue;
        if (std::abs(p(static_cast<Eigen::Index>(i))) <= zero_tol) {
            zero[i] = true;
        } else {
            rg.reduced_index[i] = static_cast<std::ptrdiff_t>(rg.kept.size());
            rg.kept.push_back(i);
        }
    }
    rg.p_hat = Vector(static_cast<Eigen::Index>(rg.kept.size()));
    for (std::size_t k = 0; k < rg.kept.size(); ++k)
        rg.p_hat(static_cast<Eigen::Index>(k)) = p(static_cast<Eigen::Index>(rg.kept[k]));

    Adjacency adj(n);
    for (const auto& line : grid.lines) {
        if (!line.closed() || !member[line.from] || !member[line.to]) continue;
        adj[line.from].push_back(line.to);
        adj[line.to].push_back(line.from);
        if (!zero[line.from] && !zero[line.to]) {
            auto a = static_cast<std::size_t>(rg.reduced_index[line.from]);
            auto b = static_cast<std::size_t>(rg.reduced_index[line.to]);
            ++rg.multiplicity[{std::min(a, b), std::max(a, b)}];
        }
    }

    std::vector<bool> seen(n, false);
    for (std::size_t s = 0; s < n; ++s) {
        if (!zero[s] || seen[s]) continue;
        std::vector<std::size_t> cluster;
        std::set<std::size_t> boundary;
        std::vector<std::size_t> stack{s};
        seen[s] = true;
        while (!stack.empty()) {
            const auto u = stack.back();
            stack.pop_back();
            cluster.push_back(u);
            for (auto v : adj[u]) {
                if (zero[v]) {
                    if (!seen[v]) {
                        seen[v] = true;
                        stack.push_back(v);
                    }
                } else {
                    boundary.insert(v);
                }
            }
        }
        std::sort(cluster.begin(), cluster.end());
        std::vector<std::size_t> nbrs(boundary.begin(), boundary.end());
        for (std::size_t i = 0; i < nbrs.size(); ++i)
            for (std::size_t j = i + 1; j < nbrs.size(); ++j) {
                auto a = static_cast<std::size_t>(rg.reduced_index[nbrs[i]]);
                auto b = static_cast<std::size_t>(rg.reduced_index[nbrs[j]]);
                ++rg.multiplicity[{std::min(a, b), std::max(a, b)}];
            }
        rg.zero_clusters.push_back(std::move(cluster));
        rg.cluster_neighbors.push_back(std::move(nbrs));
    }

    rg.adjacency.assign(rg.kept.size(), {});
    for (const auto& [edge, count] : rg.multiplicity) {
        rg.adjacency[edge.first].push_back(edge.second);
        rg.adjacency[edge.second].push_back(edge.first);
    }
    for (auto& nbrs : rg.adjacency) std::sort(nbrs.begin(), nbrs.end());
    return rg;
}

ReducedGraph reduce_zero_injection(const Grid& grid) { return reduce_zero_injection(grid, grid.injections()); }

// ---------------------------------------------------------------------------

std::size_t numeric_rank(Matrix a, double rel_tol) {
    const auto rows = a.rows(), cols = a.cols();
    const auto steps = std::min(rows, cols);
    double first_pivot = 0.0;
    std::size_t rank = 0;
    for (Eigen::Index k = 0; k < steps; ++k) {
        Eigen::Index pr = k, pc = k;
        const double pivot = a.bottomRightCorner(rows - k, cols - k).cwiseAbs().maxCoeff(&pr, &pc);
        if (k == 0) first_pivot = pivot;
        if (pivot <= rel_tol * first_pivot || pivot == 0.0) break;
        pr += k;
        pc += k;
        a.row(k).swap(a.row(pr));
        a.col(k).swap(a.col(pc));
        for (Eigen::Index i = k + 1; i < rows; ++i) {
            const double f = a(i, k) / a(k, k);
            if (f != 0.0) a.row(i).tail(cols - k) -= f * a.row(k).tail(cols - k);
        }
        ++rank;
    }
    return rank;
}

namespace {

constexpr std::size_t kDenseRankLimit = 256;

}  // namespace

bool connectedness_rank_test(std::span<const std::size_t> selected, const Adjacency& adjacency) {
    const std::size_t k = selected.size();
    if (k == 0) return false;
    std::vector<std::ptrdiff_t> local(adjacency.size(), -1);
    for (std::size_t i = 0; i < k; ++i) local[selected[i]] = static_cast<std::ptrdiff_t>(i);

    if (k <= kDenseRankLimit) {
        Matrix laplacian = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
        for (std::size_t i = 0; i < k; ++i) {
            for (auto v : adjacency[selected[i]]) {
                const auto j = local[v];
                if (j < 0 || static_cast<std::size_t>(j) == i) continue;
                laplacian(static_cast<Eigen::Index>(i), j) = -1.0;
                laplacian(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += 1.0;
            }
        }
        return numeric_rank(std::move(laplacian)) + 1 == k;
    }

    // rank(L) = k - #components; count components of the induced subgraph.
    std::vector<bool> seen(k, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    std::size_t reached = 1;
    while (!stack.empty()) {
        const auto i = stack.back();
        stack.pop_back();
        for (auto v : adjacency[selected[i]]) {
            const auto j = local[v];
            if (j < 0 || seen[static_cast<std::size_t>(j)]) continue;
            seen[static_cast<std::size_t>(j)] = true;
            ++reached;
            stack.push_back(static_cast<std::size_t>(j));
        }
    }
    return reached == k;
}

}  // namespace cascade
