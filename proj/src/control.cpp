#include "cascade/control.hpp"

#include "cascade/errors.hpp"

#include <algorithm>
#include <cmath>

namespace cascade {

namespace {

Adjacency model_adjacency(const ControlProblem& p) {
    const Grid& g = *p.network;
    Adjacency adj(g.bus_count());
    for (std::size_t l = 0; l < g.line_count(); ++l)
        if (p.model_closed[l]) {
            adj[g.lines[l].from].push_back(g.lines[l].to);
            adj[g.lines[l].to].push_back(g.lines[l].from);
        }
    return adj;
}

SparseMatrix model_admittance(const ControlProblem& p) {
    const Grid& g = *p.network;
    const auto n = static_cast<Eigen::Index>(g.bus_count());
    std::vector<Eigen::Triplet<double>> t;
    for (std::size_t l = 0; l < g.line_count(); ++l) {
        if (!p.model_closed[l]) continue;
        const auto u = static_cast<Eigen::Index>(g.lines[l].from), v = static_cast<Eigen::Index>(g.lines[l].to);
        const double b = g.lines[l].susceptance();
        t.emplace_back(u, u, b);
        t.emplace_back(v, v, b);
        t.emplace_back(u, v, -b);
        t.emplace_back(v, u, -b);
    }
    SparseMatrix b(n, n);
    b.setFromTriplets(t.begin(), t.end());
    return b;
}

void check(const ControlProblem& p) {
    if (!p.network) throw ValidationError("control problem without a network");
    const Grid& g = *p.network;
    if (p.model_closed.size() != g.line_count() || p.controllable.size() != g.bus_count() ||
        static_cast<std::size_t>(p.gen.size()) != g.bus_count() || static_cast<std::size_t>(p.load.size()) != g.bus_count() ||
        static_cast<std::size_t>(p.measured_flows.size()) != p.measured_lines.size())
        throw ValidationError("control problem dimensions do not match the network");
    if (!(p.overload_penalty > 0.0)) throw ValidationError("overload penalty must be positive");
    for (auto l : p.measured_lines)
        if (!p.model_closed[l]) throw ValidationError("measured line " + std::to_string(l) + " is open in the model");
}

}  // namespace

std::vector<std::size_t> ControlProblem::reference_buses() const {
    std::vector<std::size_t> refs;
    for (const auto& c : connected_components(model_adjacency(*this))) refs.push_back(c.front());
    return refs;
}

ControlAction ControlAction::none(std::size_t buses, std::size_t measured) {
    ControlAction a;
    a.d_gen = Vector::Zero(static_cast<Eigen::Index>(buses));
    a.d_load = Vector::Zero(static_cast<Eigen::Index>(buses));
    a.overload = Vector::Zero(static_cast<Eigen::Index>(measured));
    return a;
}

LpProblem build_control_lp(const ControlProblem& p) {
    check(p);
    const Grid& g = *p.network;
    const auto n = static_cast<Eigen::Index>(g.bus_count());
    const auto m = static_cast<Eigen::Index>(p.measured_lines.size());
    const Eigen::Index th = 0, ov = n, dg = n + m, dl = 2 * n + m, total = 3 * n + m;

    LpProblem lp = LpProblem::with_variables(static_cast<std::size_t>(total));
    for (Eigen::Index u = 0; u < n; ++u) {
        lp.lb(th + u) = -kInf;
        lp.ub(th + u) = kInf;
        const bool ctrl = p.controllable[static_cast<std::size_t>(u)];
        lp.lb(dg + u) = ctrl ? -p.gen(u) : 0.0;
        lp.ub(dg + u) = 0.0;
        lp.lb(dl + u) = ctrl ? -p.load(u) : 0.0;
        lp.ub(dl + u) = 0.0;
        lp.c(dl + u) = -1.0;
    }
    for (auto r : p.reference_buses()) {
        lp.lb(th + static_cast<Eigen::Index>(r)) = 0.0;
        lp.ub(th + static_cast<Eigen::Index>(r)) = 0.0;
    }
    for (Eigen::Index k = 0; k < m; ++k) lp.c(ov + k) = p.overload_penalty;

    const Matrix b = Matrix(model_admittance(p));
    lp.a_eq = Matrix::Zero(n, total);
    lp.b_eq = Vector::Zero(n);
    lp.a_eq.block(0, th, n, n) = b;
    for (Eigen::Index u = 0; u < n; ++u) {
        lp.a_eq(u, dg + u) = -1.0;
        lp.a_eq(u, dl + u) = 1.0;
    }

    lp.a_ub = Matrix::Zero(2 * m, total);
    lp.b_ub = Vector::Zero(2 * m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& line = g.lines[p.measured_lines[static_cast<std::size_t>(k)]];
        const double s = 1.0 / line.x;
        const auto u = static_cast<Eigen::Index>(line.from), v = static_cast<Eigen::Index>(line.to);
        // flow + s (th_u - th_v) - ov <= rating
        lp.a_ub(2 * k, th + u) = s;
        lp.a_ub(2 * k, th + v) = -s;
        lp.a_ub(2 * k, ov + k) = -1.0;
        lp.b_ub(2 * k) = line.rating - p.measured_flows(k);
        lp.a_ub(2 * k + 1, th + u) = -s;
        lp.a_ub(2 * k + 1, th + v) = s;
        lp.a_ub(2 * k + 1, ov + k) = -1.0;
        lp.b_ub(2 * k + 1) = line.rating + p.measured_flows(k);
        if (std::isinf(line.rating)) {
            lp.b_ub(2 * k) = kInf;
            lp.b_ub(2 * k + 1) = kInf;
        }
    }
    // Unrated lines impose nothing; drop their rows.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < lp.b_ub.size(); ++r)
        if (std::isfinite(lp.b_ub(r))) keep.push_back(r);
    Matrix a_ub(static_cast<Eigen::Index>(keep.size()), total);
    Vector b_ub(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
        a_ub.row(static_cast<Eigen::Index>(i)) = lp.a_ub.row(keep[i]);
        b_ub(static_cast<Eigen::Index>(i)) = lp.b_ub(keep[i]);
    }
    lp.a_ub = std::move(a_ub);
    lp.b_ub = std::move(b_ub);
    return lp;
}

ControlAction action_from_full_solution(const ControlProblem& p, const LpResult& result) {
    const auto n = static_cast<Eigen::Index>(p.network->bus_count());
    const auto m = static_cast<Eigen::Index>(p.measured_lines.size());
    ControlAction a = ControlAction::none(static_cast<std::size_t>(n), static_cast<std::size_t>(m));
    a.status = result.status;
    if (result.status != LpStatus::optimal) {
        a.flagged = true;
        a.diagnostics = std::string("control LP ") + to_string(result.status);
        return a;
    }
    a.overload = result.z.segment(n, m);
    a.d_gen = result.z.segment(n + m, n);
    a.d_load = result.z.segment(2 * n + m, n);
    a.objective = result.objective;
    a.rounds = 1;
    return a;
}

ControlAction solve_preventive_control(const ControlProblem& p) {
    check(p);
    const Grid& g = *p.network;
    const std::size_t n = g.bus_count();
    const std::size_t m = p.measured_lines.size();
    ControlAction action = ControlAction::none(n, m);

    const auto refs = p.reference_buses();
    const PinnedSolver solver(model_admittance(p), refs);
    const auto labels = component_labels(model_adjacency(p));

    // Set-point variables: one per controllable generator and load.
    struct SetPoint {
        std::size_t bus;
        bool is_load;
    };
    std::vector<SetPoint> vars;
    for (std::size_t u = 0; u < n; ++u) {
        if (!p.controllable[u]) continue;
        if (p.gen(static_cast<Eigen::Index>(u)) > 0.0) vars.push_back({u, false});
        if (p.load(static_cast<Eigen::Index>(u)) > 0.0) vars.push_back({u, true});
    }
    const auto nv = static_cast<Eigen::Index>(vars.size());

    auto rating = [&](std::size_t k) { return g.lines[p.measured_lines[k]].rating; };
    // Injection-change coefficient of each variable on line k's flow.
    auto sensitivity = [&](std::size_t k) {
        const auto& line = g.lines[p.measured_lines[k]];
        Vector e = Vector::Zero(static_cast<Eigen::Index>(n));
        e(static_cast<Eigen::Index>(line.from)) = 1.0;
        e(static_cast<Eigen::Index>(line.to)) -= 1.0;
        const Vector w = solver.solve(e) / line.x;
        Vector row(nv);
        for (Eigen::Index j = 0; j < nv; ++j) {
            const auto& v = vars[static_cast<std::size_t>(j)];
            row(j) = (v.is_load ? -1.0 : 1.0) * w(static_cast<Eigen::Index>(v.bus));
        }
        return row;
    };

    std::vector<std::size_t> active;
    std::vector<Vector> rows;
    for (std::size_t k = 0; k < m; ++k)
        if (std::abs(p.measured_flows(static_cast<Eigen::Index>(k))) > rating(k)) active.push_back(k);
    for (auto k : active) rows.push_back(sensitivity(k));
    if (active.empty()) return action;

    std::vector<std::size_t> comp_ids;
    for (const auto& v : vars) comp_ids.push_back(labels[v.bus]);
    std::sort(comp_ids.begin(), comp_ids.end());
    comp_ids.erase(std::unique(comp_ids.begin(), comp_ids.end()), comp_ids.end());

    Vector z;
    for (std::size_t round = 1; round <= 100; ++round) {
        action.rounds = round;
        const auto na = static_cast<Eigen::Index>(active.size());
        LpProblem lp = LpProblem::with_variables(static_cast<std::size_t>(nv + na));
        for (Eigen::Index j = 0; j < nv; ++j) {
            const auto& v = vars[static_cast<std::size_t>(j)];
            lp.lb(j) = -(v.is_load ? p.load : p.gen)(static_cast<Eigen::Index>(v.bus));
            lp.ub(j) = 0.0;
            lp.c(j) = v.is_load ? -1.0 : 0.0;
        }
        for (Eigen::Index k = 0; k < na; ++k) lp.c(nv + k) = p.overload_penalty;
        lp.a_eq = Matrix::Zero(static_cast<Eigen::Index>(comp_ids.size()), nv + na);
        lp.b_eq = Vector::Zero(static_cast<Eigen::Index>(comp_ids.size()));
        for (Eigen::Index j = 0; j < nv; ++j) {
            const auto& v = vars[static_cast<std::size_t>(j)];
            const auto c = std::lower_bound(comp_ids.begin(), comp_ids.end(), labels[v.bus]) - comp_ids.begin();
            lp.a_eq(c, j) = v.is_load ? -1.0 : 1.0;
        }
        lp.a_ub = Matrix::Zero(2 * na, nv + na);
        lp.b_ub = Vector::Zero(2 * na);
        for (Eigen::Index k = 0; k < na; ++k) {
            const auto line = active[static_cast<std::size_t>(k)];
            const double f = p.measured_flows(static_cast<Eigen::Index>(line));
            lp.a_ub.block(2 * k, 0, 1, nv) = rows[static_cast<std::size_t>(k)].transpose();
            lp.a_ub(2 * k, nv + k) = -1.0;
            lp.b_ub(2 * k) = rating(line) - f;
            lp.a_ub.block(2 * k + 1, 0, 1, nv) = -rows[static_cast<std::size_t>(k)].transpose();
            lp.a_ub(2 * k + 1, nv + k) = -1.0;
            lp.b_ub(2 * k + 1) = rating(line) + f;
        }
        const auto result = solve_lp(lp);
        if (result.status != LpStatus::optimal) {
            action = ControlAction::none(n, m);
            action.status = result.status;
            action.flagged = true;
            action.diagnostics = std::string("control LP ") + to_string(result.status);
            return action;
        }
        z = result.z;
        action.objective = result.objective;

        // Modeled flows on every measured line under this action.
        Vector dp = Vector::Zero(static_cast<Eigen::Index>(n));
        for (Eigen::Index j = 0; j < nv; ++j) {
            const auto& v = vars[static_cast<std::size_t>(j)];
            dp(static_cast<Eigen::Index>(v.bus)) += v.is_load ? -z(j) : z(j);
        }
        const Vector dtheta = solver.solve(dp);
        std::vector<bool> is_active(m, false);
        for (auto k : active) is_active[k] = true;
        std::vector<std::size_t> added;
        for (std::size_t k = 0; k < m; ++k) {
            if (is_active[k] || std::isinf(rating(k))) continue;
            const auto& line = g.lines[p.measured_lines[k]];
            const double flow = p.measured_flows(static_cast<Eigen::Index>(k)) +
                                (dtheta(static_cast<Eigen::Index>(line.from)) - dtheta(static_cast<Eigen::Index>(line.to))) / line.x;
            if (std::abs(flow) > rating(k) * (1.0 + 1e-9) + 1e-12) added.push_back(k);
        }
        if (added.empty()) break;
        for (auto k : added) {
            active.push_back(k);
            rows.push_back(sensitivity(k));
        }
        if (round == 100) {
            action.flagged = true;
            action.diagnostics = "lazy constraint loop hit its round cap";
        }
    }

    for (Eigen::Index j = 0; j < nv; ++j) {
        const auto& v = vars[static_cast<std::size_t>(j)];
        (v.is_load ? action.d_load : action.d_gen)(static_cast<Eigen::Index>(v.bus)) = z(j);
    }
    for (std::size_t k = 0; k < active.size(); ++k)
        action.overload(static_cast<Eigen::Index>(active[k])) = z(nv + static_cast<Eigen::Index>(k));
    return action;
}

void apply_control(Grid& truth, const ControlAction& action, const std::vector<bool>& controllable) {
    for (std::size_t u = 0; u < truth.bus_count(); ++u) {
        if (!controllable[u]) continue;
        auto& bus = truth.buses[u];
        bus.gen = std::max(0.0, bus.gen + action.d_gen(static_cast<Eigen::Index>(u)));
        bus.load = std::max(0.0, bus.load + action.d_load(static_cast<Eigen::Index>(u)));
    }
}

}  // namespace cascade
