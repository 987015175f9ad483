#include "cascade/line_outage.hpp"

#include "cascade/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>

namespace cascade {

std::size_t IslandEstimate::local(std::size_t bus) const {
    const auto it = std::lower_bound(buses.begin(), buses.end(), bus);
    if (it == buses.end() || *it != bus) throw ValidationError("bus " + std::to_string(bus) + " is not in the island");
    return static_cast<std::size_t>(it - buses.begin());
}

SparseMatrix local_admittance(const Grid& network, std::span<const std::size_t> buses,
                              std::span<const std::size_t> lines) {
    auto local = [&](std::size_t bus) {
        return static_cast<Eigen::Index>(std::lower_bound(buses.begin(), buses.end(), bus) - buses.begin());
    };
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(lines.size() * 4);
    for (auto l : lines) {
        const auto& line = network.lines[l];
        const auto u = local(line.from), v = local(line.to);
        const double b = line.susceptance();
        t.emplace_back(u, u, b);
        t.emplace_back(v, v, b);
        t.emplace_back(u, v, -b);
        t.emplace_back(v, u, -b);
    }
    const auto m = static_cast<Eigen::Index>(buses.size());
    SparseMatrix out(m, m);
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

namespace {

// Lowest local bus of each connected part of the island model.
std::vector<std::size_t> pin_per_part(const Grid& network, const IslandEstimate& est) {
    Adjacency adj(est.buses.size());
    for (auto l : est.lines) {
        const auto u = est.local(network.lines[l].from), v = est.local(network.lines[l].to);
        adj[u].push_back(v);
        adj[v].push_back(u);
    }
    std::vector<std::size_t> pins;
    for (const auto& part : connected_components(adj)) pins.push_back(part.front());
    return pins;
}

// Local flow on `line` for local angles theta.
double local_flow(const Grid& network, const IslandEstimate& est, std::size_t line, const Vector& theta) {
    const auto& l = network.lines[line];
    return (theta(static_cast<Eigen::Index>(est.local(l.from))) - theta(static_cast<Eigen::Index>(est.local(l.to)))) /
           l.x;
}

// B^-1 m_l for each listed line, one column each.
Matrix solve_incidence_columns(const Grid& network, const IslandEstimate& est, const PinnedSolver& solver,
                               std::span<const std::size_t> lines) {
    const auto m = static_cast<Eigen::Index>(est.buses.size());
    Matrix out(m, static_cast<Eigen::Index>(lines.size()));
    Vector rhs = Vector::Zero(m);
    for (std::size_t j = 0; j < lines.size(); ++j) {
        const auto u = static_cast<Eigen::Index>(est.local(network.lines[lines[j]].from));
        const auto v = static_cast<Eigen::Index>(est.local(network.lines[lines[j]].to));
        rhs(u) = 1.0;
        rhs(v) = -1.0;
        out.col(static_cast<Eigen::Index>(j)) = solver.solve(rhs);
        rhs(u) = 0.0;
        rhs(v) = 0.0;
    }
    return out;
}

OutageVector run_lasso(const Vector& y, const Matrix& a, const std::vector<std::size_t>& fixed_zero,
                       std::span<const std::size_t> column_lines, const LassoSettings& settings) {
    OutageVector out;
    out.s_hat = Vector::Zero(a.cols());
    out.tol = settings.tol_floor;
    if (a.rows() == 0 || a.cols() == 0) return out;
    std::vector<bool> fixed(static_cast<std::size_t>(a.cols()), false);
    for (auto j : fixed_zero) fixed[j] = true;

    const Vector correlation = a.transpose() * y;
    double scale = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        if (!fixed[static_cast<std::size_t>(j)]) scale = std::max(scale, std::abs(correlation(j)));
    out.residual_norm = y.norm();
    if (scale == 0.0) {
        if (y.norm() > 1e-9) out.warnings.push_back("measured flow change has no admissible explanation");
        return out;
    }
    out.lambda = settings.lambda_scale * scale;
    LassoOptions opts;
    const double cells = static_cast<double>(a.rows()) * static_cast<double>(a.cols());
    opts.max_sweeps = std::max(settings.min_sweeps, static_cast<std::size_t>(settings.work_budget / cells));
    const auto fit = solve_constrained_lasso({y, a, out.lambda, fixed_zero}, opts);
    out.s_hat = fit.s;
    out.converged = fit.converged;
    out.residual_norm = fit.residual_norm;

    constexpr double eps_div = 1e-12;
    double peak = eps_div;
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        if (!fixed[static_cast<std::size_t>(j)]) peak = std::max(peak, std::abs(fit.s(j)));
    out.tol = std::max(settings.tol_floor, settings.tol_scale * peak);
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        if (!fixed[static_cast<std::size_t>(j)] && std::abs(fit.s(j)) > out.tol)
            out.support.push_back(column_lines[static_cast<std::size_t>(j)]);
    std::sort(out.support.begin(), out.support.end());

    if (!fit.converged) out.warnings.push_back("LASSO stopped before convergence; support from last iterate");
    if (fit.residual_norm > 0.1 * y.norm() && fit.residual_norm > 1e-9) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "breaker data contradicts flow changes: residual %.3g of %.3g left unexplained",
                      fit.residual_norm, y.norm());
        out.warnings.emplace_back(buf);
    }
    return out;
}

}  // namespace

IslandEstimate build_island_admittance_with_duos(const Grid& network, std::span<const std::size_t> island,
                                                 const std::vector<bool>& pre_closed,
                                                 const std::vector<bool>& observed_open, const Vector& pre_injections,
                                                 const Vector& pre_flows, const Vector& post_injections) {
    IslandEstimate est;
    est.buses.assign(island.begin(), island.end());
    std::sort(est.buses.begin(), est.buses.end());
    const auto m = static_cast<Eigen::Index>(est.buses.size());
    std::vector<bool> inside(network.bus_count(), false);
    for (auto b : est.buses) inside[b] = true;

    est.p_pre.resize(m);
    est.p_post.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto g = static_cast<Eigen::Index>(est.buses[static_cast<std::size_t>(i)]);
        est.p_pre(i) = pre_injections(g);
        est.p_post(i) = post_injections(g);
    }
    for (std::size_t l = 0; l < network.line_count(); ++l) {
        const auto& line = network.lines[l];
        const bool a = inside[line.from], b = inside[line.to];
        if (a && b) {
            if (pre_closed[l] && !observed_open[l]) est.lines.push_back(l);
        } else if ((a || b) && pre_closed[l]) {
            // Flow into the inside end keeps the internal pre-outage flows intact once the tie is cut.
            const auto u = a ? line.from : line.to;
            const double into = a ? -pre_flows(static_cast<Eigen::Index>(l)) : pre_flows(static_cast<Eigen::Index>(l));
            est.duos.emplace_back(u, into);
            est.p_pre(static_cast<Eigen::Index>(est.local(u))) += into;
        }
    }
    est.p_tilde = est.p_post - est.p_pre;
    est.b = local_admittance(network, est.buses, est.lines);
    est.b_hat = est.b;
    est.pinned = pin_per_part(network, est);
    return est;
}

LassoInputs compute_lasso_inputs(const Grid& network, const IslandEstimate& island,
                                 const MeasurementSnapshot& snapshot) {
    LassoInputs in;
    in.column_lines = island.lines;
    for (std::size_t j = 0; j < island.lines.size(); ++j) {
        const auto l = island.lines[j];
        const bool seen_closed = snapshot.breakers[l] && *snapshot.breakers[l] == Breaker::closed;
        if (seen_closed) {
            in.fixed_zero.push_back(j);
            if (snapshot.flows[l]) in.row_lines.push_back(l);
        }
    }
    if (in.row_lines.empty()) return in;

    const PinnedSolver solver(island.b, island.pinned);
    const Vector theta_pre = solver.solve(island.p_pre);
    const Vector theta_shift = solver.solve(island.p_tilde);
    const Matrix columns = solve_incidence_columns(network, island, solver, island.lines);

    const auto rows = static_cast<Eigen::Index>(in.row_lines.size());
    in.y.resize(rows);
    in.pre_flows.resize(rows);
    in.a.resize(rows, static_cast<Eigen::Index>(island.lines.size()));
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto l = in.row_lines[static_cast<std::size_t>(r)];
        in.pre_flows(r) = local_flow(network, island, l, theta_pre);
        in.y(r) = (*snapshot.flows[l] - in.pre_flows(r)) - local_flow(network, island, l, theta_shift);
        const auto& line = network.lines[l];
        const auto u = static_cast<Eigen::Index>(island.local(line.from));
        const auto v = static_cast<Eigen::Index>(island.local(line.to));
        in.a.row(r) = (columns.row(u) - columns.row(v)) / line.x;
    }
    return in;
}

OutageVector detect_line_outages(const LassoInputs& inputs, const LassoSettings& settings) {
    if (!settings.lambda_search)
        return run_lasso(inputs.y, inputs.a, inputs.fixed_zero, inputs.column_lines, settings);
    std::optional<OutageVector> best;
    for (double scale : {1e-2, 1e-3, 1e-4}) {
        auto trial = settings;
        trial.lambda_scale = scale;
        auto out = run_lasso(inputs.y, inputs.a, inputs.fixed_zero, inputs.column_lines, trial);
        if (out.residual_norm <= 0.05 * inputs.y.norm()) return out;
        if (!best || out.residual_norm < best->residual_norm) best = std::move(out);
    }
    return *best;
}

SparseMatrix assemble_estimated_admittance(const Grid& network, const IslandEstimate& island,
                                           std::span<const std::size_t> support) {
    std::vector<std::size_t> kept;
    for (auto l : island.lines)
        if (std::find(support.begin(), support.end(), l) == support.end()) kept.push_back(l);
    return local_admittance(network, island.buses, kept);
}

OutageVector detect_via_angles(const Grid& network, const IslandEstimate& island, const Vector& theta_tilde,
                               std::span<const std::size_t> measured_buses,
                               std::span<const std::size_t> fixed_zero_lines, const LassoSettings& settings) {
    const PinnedSolver solver(island.b, island.pinned);
    const Vector shift = solver.solve(island.p_tilde);
    const Matrix columns = solve_incidence_columns(network, island, solver, island.lines);
    const auto rows = static_cast<Eigen::Index>(measured_buses.size());
    Vector y(rows);
    Matrix a(rows, columns.cols());
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto u = static_cast<Eigen::Index>(island.local(measured_buses[static_cast<std::size_t>(r)]));
        y(r) = theta_tilde(u) - shift(u);
        a.row(r) = columns.row(u);
    }
    std::vector<std::size_t> fixed;
    for (std::size_t j = 0; j < island.lines.size(); ++j)
        if (std::find(fixed_zero_lines.begin(), fixed_zero_lines.end(), island.lines[j]) != fixed_zero_lines.end())
            fixed.push_back(j);
    return run_lasso(y, a, fixed, island.lines, settings);
}

}  // namespace cascade
