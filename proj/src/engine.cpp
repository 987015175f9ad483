#include "cascade/engine.hpp"

#include "cascade/errors.hpp"
#include "cascade/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace cascade {

namespace {

std::vector<std::size_t> labels_of(const std::vector<std::vector<std::size_t>>& parts, std::size_t n) {
    std::vector<std::size_t> label(n, SIZE_MAX);
    for (std::size_t i = 0; i < parts.size(); ++i)
        for (auto b : parts[i]) label[b] = i;
    return label;
}

bool observed_is(const MeasurementSnapshot& s, std::size_t line, Breaker state) {
    return s.breakers[line] && *s.breakers[line] == state;
}

// Components of `buses` over lines believed closed with both ends in the set.
std::vector<std::vector<std::size_t>> split_by_lines(const Grid& network, const std::vector<bool>& closed,
                                                     const std::vector<std::size_t>& buses) {
    std::vector<std::size_t> local(network.bus_count(), SIZE_MAX);
    for (std::size_t i = 0; i < buses.size(); ++i) local[buses[i]] = i;
    Adjacency adj(buses.size());
    for (std::size_t l = 0; l < network.line_count(); ++l) {
        if (!closed[l]) continue;
        const auto u = local[network.lines[l].from], v = local[network.lines[l].to];
        if (u == SIZE_MAX || v == SIZE_MAX) continue;
        adj[u].push_back(v);
        adj[v].push_back(u);
    }
    auto parts = connected_components(adj);
    for (auto& part : parts)
        for (auto& b : part) b = buses[b];
    return parts;
}

void blackout(Grid& grid, std::span<const std::size_t> island) {
    for (auto b : island) grid.buses[b].gen = grid.buses[b].load = 0.0;
}

// Solves true flows; a component that fails the balance check goes dark.
Vector solve_truth(Grid& truth, std::vector<std::string>& warnings) {
    for (;;) {
        try {
            return solve_dc_power_flow(truth).flows;
        } catch (const BalanceError& e) {
            const auto parts = connected_components(truth);
            blackout(truth, parts[e.component()]);
            warnings.push_back("flow solve failed on island at bus " + std::to_string(parts[e.component()].front()) +
                               "; island blacked out");
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------

InitialOutage apply_initial_outage(const Grid& grid, const CyberNetwork& cyber, double fraction,
                                   std::mt19937_64& rng) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("initial outage fraction must lie in (0, 1)");
    const auto n = grid.bus_count();
    // The guard keeps 0.02 * 100 at 2 despite rounding.
    auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    count = std::clamp<std::size_t>(count, 1, n - 1);

    std::vector<std::size_t> pool;
    for (std::size_t b = 0; b < n; ++b)
        if (b != cyber.cc) pool.push_back(b);
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    InitialOutage out{grid, cyber, {pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count)}, {}};
    std::sort(out.removed_buses.begin(), out.removed_buses.end());
    std::vector<bool> removed(n, false);
    for (auto b : out.removed_buses) {
        removed[b] = true;
        out.grid.buses[b].gen = out.grid.buses[b].load = 0.0;
    }
    for (std::size_t l = 0; l < grid.line_count(); ++l) {
        auto& line = out.grid.lines[l];
        if (line.closed() && (removed[line.from] || removed[line.to])) {
            line.breaker = Breaker::open;
            out.opened_lines.push_back(l);
        }
    }
    out.cyber = propagate_comm_failures(cyber, out.opened_lines, out.removed_buses);
    return out;
}

ShedResult proportional_shed(Grid& grid, std::span<const std::size_t> island) {
    ShedResult r;
    for (auto b : island) {
        r.gen_before += grid.buses[b].gen;
        r.load_before += grid.buses[b].load;
    }
    constexpr double eps_div = 1e-12;
    r.imbalance = (r.gen_before - r.load_before) / std::max({r.gen_before, r.load_before, eps_div});
    if (r.gen_before <= 0.0 || r.load_before <= 0.0) {
        r.blackout = true;
        blackout(grid, island);
        return r;
    }
    if (r.gen_before > r.load_before) {
        const double k = r.load_before / r.gen_before;
        for (auto b : island) grid.buses[b].gen *= k;
    } else if (r.load_before > r.gen_before) {
        const double k = r.gen_before / r.load_before;
        for (auto b : island) grid.buses[b].load *= k;
    }
    return r;
}

std::vector<double> assign_frequencies(std::span<const double> imbalances, const std::vector<bool>& dark,
                                       const FrequencyModel& model) {
    std::vector<double> f(imbalances.size(), 0.0);
    std::vector<double> taken;
    auto collides = [&](double x) {
        return std::any_of(taken.begin(), taken.end(),
                           [&](double y) { return std::abs(x - y) < model.delta_f - 1e-12; });
    };
    for (std::size_t i = 0; i < imbalances.size(); ++i) {
        if (dark[i]) continue;
        double x = model.f0 * (1.0 + model.kappa * imbalances[i]);
        if (collides(x)) {
            x += static_cast<double>(i) * model.delta_f;
            while (collides(x)) x += model.delta_f;
        }
        f[i] = x;
        taken.push_back(x);
    }
    return f;
}

std::vector<std::size_t> trip_overloaded(const Vector& flows, const Grid& grid) {
    // Flows within round-off of the rating count as equal: control drives binding lines onto it exactly.
    constexpr double rel = 1e-9;
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < grid.line_count(); ++l)
        if (grid.lines[l].closed() && std::abs(flows(static_cast<Eigen::Index>(l))) > grid.lines[l].rating * (1.0 + rel))
            out.push_back(l);
    return out;
}

// ---------------------------------------------------------------------------
// Estimation

Vector modeled_flows(const Grid& network, const EstimatedTopology& estimate) {
    Grid g = network;
    for (std::size_t l = 0; l < g.line_count(); ++l)
        g.lines[l].breaker = estimate.line_closed[l] ? Breaker::closed : Breaker::open;
    for (std::size_t b = 0; b < g.bus_count(); ++b) {
        g.buses[b].gen = estimate.gen(static_cast<Eigen::Index>(b));
        g.buses[b].load = estimate.load(static_cast<Eigen::Index>(b));
    }
    PowerFlowOptions lenient;
    lenient.check_balance = false;
    return solve_dc_power_flow(g, lenient).flows;
}

EstimationResult estimate_topology(const Grid& network, const MeasurementSnapshot& snapshot,
                                   const EstimatedTopology& previous, const Vector& previous_flows,
                                   const EstimatorOptions& options) {
    const auto n = network.bus_count();
    const auto nl = network.line_count();
    EstimationResult out;
    const auto groups = group_by_frequency(snapshot);

    std::vector<bool> observed_open(nl, false);
    for (std::size_t l = 0; l < nl; ++l) observed_open[l] = observed_is(snapshot, l, Breaker::open);

    struct Work {
        std::optional<PotentialParent> parent;
        std::optional<RequiredInjections> required;
    };
    std::vector<Work> work(groups.size());
    std::vector<std::size_t> owner(n, SIZE_MAX);  // group index owning each detected bus

    for (std::size_t g = 0; g < groups.size(); ++g) {
        GroupEstimate ge;
        ge.members = groups[g].members;
        if (groups[g].frequency > 0.0) {
            work[g].parent = construct_potential_parent(network, previous, snapshot, groups[g].members);
            if (work[g].parent)
                work[g].required = predict_required_injections(*work[g].parent, previous, snapshot, groups[g].members);
            ge.estimable = work[g].required.has_value();
            if (!work[g].parent) ge.warnings.push_back("group straddles previous islands");
        }
        if (ge.estimable) {
            auto bounds = bounds_for_group(groups, g, n);
            propagate_breaker_bounds(network, snapshot, bounds);
            const auto det = detect_island(network, *work[g].parent, *work[g].required, bounds, options.detection);
            ge.status = det.status;
            if (det.status == DetectionStatus::found) {
                const bool clash =
                    std::any_of(det.buses.begin(), det.buses.end(), [&](auto b) { return owner[b] != SIZE_MAX; });
                if (clash) {
                    ge.status = DetectionStatus::no_connected_solution;
                    ge.warnings.push_back("detected island overlaps an earlier group; dropped");
                } else {
                    ge.island = det.buses;
                    for (auto b : det.buses) owner[b] = g;
                }
            }
        }
        out.groups.push_back(std::move(ge));
    }

    // Shared zero-injection clusters, one pass per parent.
    std::map<std::size_t, std::vector<std::size_t>> by_parent;
    for (std::size_t g = 0; g < groups.size(); ++g)
        if (!out.groups[g].island.empty()) by_parent[work[g].parent->source_island].push_back(g);
    for (const auto& [source, members] : by_parent) {
        const auto& parent = *work[members.front()].parent;
        std::vector<std::vector<std::size_t>> detected;
        for (auto g : members) detected.push_back(out.groups[g].island);
        adopt_shared_zero_clusters(parent_subgraph(network, parent), work[members.front()].required->p, parent.buses,
                                   detected);
        for (std::size_t i = 0; i < members.size(); ++i) {
            out.groups[members[i]].island = detected[i];
            for (auto b : detected[i]) owner[b] = members[i];
        }
    }

    // Line outages inside every detected island.
    Vector prev_inj = previous.gen - previous.load;
    std::vector<bool> closed = previous.line_closed;
    for (std::size_t l = 0; l < nl; ++l) {
        if (observed_open[l]) closed[l] = false;
        if (observed_is(snapshot, l, Breaker::closed)) closed[l] = true;
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto& ge = out.groups[g];
        if (ge.island.empty()) continue;
        const auto est = build_island_admittance_with_duos(network, ge.island, previous.line_closed, observed_open,
                                                           prev_inj, previous_flows, work[g].required->p);
        const auto inputs = compute_lasso_inputs(network, est, snapshot);
        if (inputs.row_lines.empty()) {
            ge.low_confidence = true;
            continue;
        }
        auto found = detect_line_outages(inputs, options.lasso);
        ge.outages = found.support;
        for (auto& w : found.warnings) ge.warnings.push_back(std::move(w));
        for (auto l : ge.outages) closed[l] = false;
    }

    // New partition: detected islands, then what is left of each previous island.
    auto& topo = out.topology;
    for (const auto& ge : out.groups)
        if (!ge.island.empty()) topo.islands.push_back(ge.island);
    for (const auto& island : previous.islands) {
        std::vector<std::size_t> rest;
        for (auto b : island)
            if (owner[b] == SIZE_MAX) rest.push_back(b);
        if (rest.empty()) continue;
        for (auto& part : split_by_lines(network, closed, rest)) topo.islands.push_back(std::move(part));
    }
    std::sort(topo.islands.begin(), topo.islands.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    const auto label = labels_of(topo.islands, n);
    for (std::size_t l = 0; l < nl; ++l)
        if (label[network.lines[l].from] != label[network.lines[l].to]) closed[l] = false;
    topo.line_closed = std::move(closed);

    topo.gen = previous.gen;
    topo.load = previous.load;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (out.groups[g].island.empty()) continue;
        const auto& req = *work[g].required;
        for (auto b : out.groups[g].island) {
            const auto i = static_cast<Eigen::Index>(b);
            topo.gen(i) = req.gen_ratio * previous.gen(i);
            topo.load(i) = req.load_ratio * previous.load(i);
        }
    }
    for (std::size_t b = 0; b < n; ++b) {
        if (!snapshot.observable[b]) continue;
        topo.gen(static_cast<Eigen::Index>(b)) = snapshot.gen[b].value_or(0.0);
        topo.load(static_cast<Eigen::Index>(b)) = snapshot.load[b].value_or(0.0);
    }
    out.modeled_flows = modeled_flows(network, topo);
    return out;
}

EstimationResult estimate_from_breakers(const Grid& network, const MeasurementSnapshot& snapshot,
                                        const EstimatedTopology& previous, bool assume_closed) {
    EstimationResult out;
    auto& topo = out.topology;
    topo.line_closed.assign(network.line_count(), assume_closed);
    for (std::size_t l = 0; l < network.line_count(); ++l)
        if (snapshot.breakers[l]) topo.line_closed[l] = *snapshot.breakers[l] == Breaker::closed;
    std::vector<std::size_t> all(network.bus_count());
    std::iota(all.begin(), all.end(), std::size_t{0});
    topo.islands = split_by_lines(network, topo.line_closed, all);
    topo.gen = previous.gen;
    topo.load = previous.load;
    for (std::size_t b = 0; b < network.bus_count(); ++b) {
        if (!snapshot.observable[b]) continue;
        topo.gen(static_cast<Eigen::Index>(b)) = snapshot.gen[b].value_or(0.0);
        topo.load(static_cast<Eigen::Index>(b)) = snapshot.load[b].value_or(0.0);
    }
    out.modeled_flows = modeled_flows(network, topo);
    return out;
}

// ---------------------------------------------------------------------------
// Cascade loop

CascadeOptions CascadeOptions::from_config(const ExperimentConfig& config) {
    CascadeOptions o;
    o.mode = config.control_mode;
    o.estimator.lasso.lambda_scale = config.lasso_lambda;
    o.estimator.lasso.tol_scale = config.lasso_tol;
    o.estimator.lasso.lambda_search = config.lasso_lambda_search;
    o.estimator.detection.max_solutions = config.max_solutions;
    o.overload_penalty = config.overload_penalty;
    o.tier_cap = config.tier_cap;
    o.noise_amplitude = config.noise_amplitude;
    return o;
}

std::mt19937_64 trial_rng(std::uint64_t root, std::size_t trial) {
    const auto t = static_cast<std::uint64_t>(trial);
    std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                      static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32)};
    return std::mt19937_64(seq);
}

double total_load_served(const CascadeState& state) {
    if (state.initial_load <= 0.0) return 0.0;
    return std::clamp(state.truth.total_load() / state.initial_load, 0.0, 1.0);
}

CascadeState initial_state(const Grid& base, const CyberNetwork& scada, double outage_fraction, std::mt19937_64& rng) {
    auto outage = apply_initial_outage(base, scada, outage_fraction, rng);
    CascadeState s;
    s.truth = std::move(outage.grid);
    s.cyber = std::move(outage.cyber);
    s.estimate = EstimatedTopology::from_grid(base);
    s.estimate_flows = modeled_flows(base, s.estimate);
    s.initial_load = base.total_load();
    s.metrics.removed_buses = std::move(outage.removed_buses);
    return s;
}

namespace {

// Island accuracy by observability class and line statistics over unobserved lines.
void score_tier(TierRecord& rec, const CascadeState& s, const Grid& base) {
    const auto n = s.truth.bus_count();
    const auto est_label = labels_of(s.estimate.islands, n);
    rec.islands_true = s.islands.size();
    std::vector<bool> counted(s.estimate.islands.size(), false);
    std::vector<bool> gen_seen(n, false), load_seen(n, false);
    for (std::size_t b = 0; b < n; ++b) {
        if (!s.snapshot.observable[b]) continue;
        gen_seen[b] = s.snapshot.gen[b].value_or(0.0) > 0.0;
        load_seen[b] = s.snapshot.load[b].value_or(0.0) > 0.0;
        if (s.snapshot.frequency[b].value_or(0.0) > 0.0 && !counted[est_label[b]]) {
            counted[est_label[b]] = true;
            ++rec.islands_detected;
        }
    }
    rec.accuracy = compute_island_accuracy(s.islands, s.estimate.islands, s.snapshot.observable, gen_seen, load_seen);

    std::vector<std::size_t> unobserved, out, flagged;
    for (std::size_t l = 0; l < base.line_count(); ++l) {
        if (!base.lines[l].closed() || s.snapshot.breakers[l]) continue;
        unobserved.push_back(l);
        if (!s.truth.lines[l].closed()) out.push_back(l);
        if (!s.estimate.line_closed[l]) flagged.push_back(l);
    }
    rec.lines = compute_line_stats(out, flagged, unobserved);
}

void run_control(CascadeState& s, const Grid& base, const CascadeOptions& options, TierRecord& rec) {
    const auto n = s.truth.bus_count();
    ControlProblem problem;
    problem.network = &base;
    problem.controllable = s.snapshot.observable;
    problem.overload_penalty = options.overload_penalty;
    problem.gen = s.estimate.gen;
    problem.load = s.estimate.load;
    for (std::size_t b = 0; b < n; ++b)
        if (s.snapshot.observable[b]) {
            problem.gen(static_cast<Eigen::Index>(b)) = s.truth.buses[b].gen;
            problem.load(static_cast<Eigen::Index>(b)) = s.truth.buses[b].load;
        }
    std::vector<double> flows;
    if (options.mode == ControlMode::perfect) {
        problem.model_closed.resize(s.truth.line_count());
        for (std::size_t l = 0; l < s.truth.line_count(); ++l) {
            problem.model_closed[l] = s.truth.lines[l].closed();
            if (problem.model_closed[l]) {
                problem.measured_lines.push_back(l);
                flows.push_back(s.flows(static_cast<Eigen::Index>(l)));
            }
        }
    } else {
        problem.model_closed = s.estimate.line_closed;
        for (std::size_t l = 0; l < s.truth.line_count(); ++l)
            if (s.snapshot.flows[l] && observed_is(s.snapshot, l, Breaker::closed) && problem.model_closed[l]) {
                problem.measured_lines.push_back(l);
                flows.push_back(*s.snapshot.flows[l]);
            }
    }
    problem.measured_flows = Eigen::Map<const Vector>(flows.data(), static_cast<Eigen::Index>(flows.size()));

    const auto action = solve_preventive_control(problem);
    if (action.flagged) {
        rec.warnings.push_back("control LP failed: " + action.diagnostics);
        return;
    }
    apply_control(s.truth, action, problem.controllable);
    for (std::size_t b = 0; b < n; ++b) {
        if (!problem.controllable[b]) continue;
        const auto i = static_cast<Eigen::Index>(b);
        rec.control_shed -= action.d_load(i);
        s.estimate.gen(i) = s.truth.buses[b].gen;
        s.estimate.load(i) = s.truth.buses[b].load;
    }
    // Dropped commands can leave a true island unbalanced.
    for (const auto& island : s.islands) proportional_shed(s.truth, island);
    s.flows = solve_truth(s.truth, rec.warnings);
    s.estimate_flows = modeled_flows(base, s.estimate);
}

}  // namespace

void step_tier(CascadeState& s, const Grid& base, const CascadeOptions& options, std::mt19937_64& rng) {
    if (s.terminated) return;
    TierRecord rec;
    rec.tier = ++s.tier;
    const auto n = s.truth.bus_count();

    s.islands = connected_components(s.truth);
    std::vector<double> imbalance;
    std::vector<bool> dark;
    for (const auto& island : s.islands) {
        const auto r = proportional_shed(s.truth, island);
        imbalance.push_back(r.imbalance);
        dark.push_back(r.blackout);
    }
    s.island_frequency = assign_frequencies(imbalance, dark, options.frequency);
    s.flows = solve_truth(s.truth, rec.warnings);

    std::vector<double> bus_frequency(n, 0.0);
    for (std::size_t i = 0; i < s.islands.size(); ++i)
        for (auto b : s.islands[i]) bus_frequency[b] = s.island_frequency[i];
    s.snapshot = extract_snapshot(s.truth, s.cyber, s.flows, bus_frequency, NoiseModel{options.noise_amplitude, &rng});
    rec.observable_buses = s.snapshot.observable_count();
    if (options.keep_snapshots) rec.snapshot_json = snapshot_to_json(s.snapshot);

    switch (options.mode) {
        case ControlMode::perfect: {
            EstimatedTopology truth_view;
            truth_view.islands = s.islands;
            truth_view.line_closed.resize(s.truth.line_count());
            for (std::size_t l = 0; l < s.truth.line_count(); ++l) truth_view.line_closed[l] = s.truth.lines[l].closed();
            truth_view.gen = s.truth.generation();
            truth_view.load = s.truth.demand();
            s.estimate = std::move(truth_view);
            s.estimate_flows = s.flows;
            break;
        }
        case ControlMode::breaker_only_closed:
        case ControlMode::breaker_only_open: {
            auto r = estimate_from_breakers(base, s.snapshot, s.estimate, options.mode == ControlMode::breaker_only_closed);
            s.estimate = std::move(r.topology);
            s.estimate_flows = std::move(r.modeled_flows);
            break;
        }
        case ControlMode::proposed:
        case ControlMode::none: {
            auto r = estimate_topology(base, s.snapshot, s.estimate, s.estimate_flows, options.estimator);
            for (auto& g : r.groups)
                for (auto& w : g.warnings) rec.warnings.push_back(std::move(w));
            s.estimate = std::move(r.topology);
            s.estimate_flows = std::move(r.modeled_flows);
            break;
        }
    }
    score_tier(rec, s, base);

    if (options.mode != ControlMode::none) run_control(s, base, options, rec);
    rec.load_served = total_load_served(s);

    rec.tripped = trip_overloaded(s.flows, s.truth);
    for (auto l : rec.tripped) s.truth.lines[l].breaker = Breaker::open;
    s.cyber = propagate_comm_failures(s.cyber, rec.tripped, {});

    s.metrics.final_load_served = rec.load_served;
    const bool quiet = rec.tripped.empty();
    s.metrics.tiers.push_back(std::move(rec));
    if (quiet) {
        s.terminated = true;
    } else if (s.tier >= options.tier_cap) {
        s.terminated = true;
        s.metrics.tier_cap_reached = true;
    }
}

CascadeMetrics run_cascade(const Grid& base, const CyberNetwork& scada, double outage_fraction,
                           const CascadeOptions& options, std::mt19937_64& rng) {
    auto state = initial_state(base, scada, outage_fraction, rng);
    while (!state.terminated) step_tier(state, base, options, rng);
    return std::move(state.metrics);
}

}  // namespace cascade
