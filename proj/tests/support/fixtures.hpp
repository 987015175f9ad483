#ifndef CASCADE_TESTS_FIXTURES_HPP
#define CASCADE_TESTS_FIXTURES_HPP

#include "cascade/case_io.hpp"
#include "cascade/grid.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

inline std::filesystem::path data_dir() { return CASCADE_DATA_DIR; }
inline std::filesystem::path case118_path() { return data_dir() / "case118.m"; }
inline std::filesystem::path polish_path() { return data_dir() / "case2383wp.m"; }

/// Balanced, simulation-ready IEEE-118 grid.
inline const cascade::Grid& ieee118() {
    static const cascade::Grid g = cascade::prepare_base_case(cascade::to_grid(cascade::load_case(case118_path())));
    return g;
}

inline cascade::Line line(std::size_t u, std::size_t v, double x, double rating = cascade::kInf) {
    cascade::Line l;
    l.from = u;
    l.to = v;
    l.x = x;
    l.rating = rating;
    return l;
}

/// Buses with the given injections (positive -> generation, negative -> load).
inline cascade::Grid make_grid(const std::vector<double>& p, const std::vector<cascade::Line>& lines) {
    cascade::Grid g;
    for (std::size_t i = 0; i < p.size(); ++i)
        g.buses.push_back({static_cast<int>(i + 1), p[i] > 0 ? p[i] : 0.0, p[i] < 0 ? -p[i] : 0.0});
    g.lines = lines;
    return g;
}

inline oracle::Edges closed_edges(const cascade::Grid& g) {
    oracle::Edges e;
    for (const auto& l : g.lines)
        if (l.closed()) e.emplace_back(l.from, l.to);
    return e;
}

inline oracle::Mat to_mat(const cascade::Matrix& m) {
    oracle::Mat out(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
    return out;
}

/// Dense B built directly from line data, independent of build_admittance.
inline oracle::Mat dense_b(const cascade::Grid& g) {
    const auto n = g.bus_count();
    oracle::Mat b(n, oracle::Vec(n, 0.0));
    for (const auto& l : g.lines) {
        if (!l.closed()) continue;
        const double y = 1.0 / l.x;
        b[l.from][l.from] += y;
        b[l.to][l.to] += y;
        b[l.from][l.to] -= y;
        b[l.to][l.from] -= y;
    }
    return b;
}

/// Angles by dense elimination on the reduced system with theta_ref = 0.
inline oracle::Vec oracle_theta(const cascade::Grid& g, const oracle::Vec& p, const std::vector<std::size_t>& refs) {
    const auto n = g.bus_count();
    const auto full = dense_b(g);
    std::vector<bool> pinned(n, false);
    for (auto r : refs) pinned[r] = true;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i)
        if (!pinned[i]) keep.push_back(i);
    oracle::Mat a(keep.size(), oracle::Vec(keep.size()));
    oracle::Vec rhs(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        rhs[i] = p[keep[i]];
        for (std::size_t j = 0; j < keep.size(); ++j) a[i][j] = full[keep[i]][keep[j]];
    }
    oracle::Vec theta(n, 0.0);
    if (keep.empty()) return theta;
    auto x = oracle::dense_solve(a, rhs);
    if (!x) return {};
    for (std::size_t i = 0; i < keep.size(); ++i) theta[keep[i]] = (*x)[i];
    return theta;
}

}  // namespace fixtures

#endif
