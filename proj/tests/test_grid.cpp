#include <catch2/catch_amalgamated.hpp>

#include "cascade/errors.hpp"
#include "cascade/grid.hpp"
#include "fixtures.hpp"

#include <random>

using namespace cascade;
using Catch::Approx;
using fixtures::line;
using fixtures::make_grid;

namespace {

// Random subgraph of the fixture: open a fraction of lines, rebalance each
// component by scaling its loads.
Grid random_subgraph(std::mt19937_64& rng, double open_fraction) {
    Grid g = fixtures::ieee118();
    std::bernoulli_distribution drop(open_fraction);
    for (auto& l : g.lines)
        if (drop(rng)) l.breaker = Breaker::open;
    for (const auto& comp : connected_components(g)) {
        double gen = 0.0, load = 0.0;
        for (auto b : comp) {
            gen += g.buses[b].gen;
            load += g.buses[b].load;
        }
        for (auto b : comp) {
            if (gen > 0.0 && load > 0.0)
                g.buses[b].load *= gen / load;
            else
                g.buses[b].gen = g.buses[b].load = 0.0;
        }
    }
    return g;
}

}  // namespace

TEST_CASE("admittance of a single line", "[grid]") {
    const Grid g = make_grid({1, -1}, {line(0, 1, 0.5)});
    const Matrix b = build_admittance(g).b;
    CHECK(b(0, 0) == 2.0);
    CHECK(b(0, 1) == -2.0);
    CHECK(b(1, 0) == -2.0);
    CHECK(b(1, 1) == 2.0);
}

TEST_CASE("admittance of a unit triangle", "[grid]") {
    const Grid g = make_grid({0, 0, 0}, {line(0, 1, 1), line(1, 2, 1), line(2, 0, 1)});
    const Matrix b = build_admittance(g).b;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(b(i, j) == (i == j ? 2.0 : -1.0));
}

TEST_CASE("incidence and admittance structure on the 118-bus fixture", "[grid]") {
    const Grid& g = fixtures::ieee118();
    const auto m = build_incidence(g);
    const auto adm = build_admittance(g);
    const Matrix md = Matrix(m.m);
    for (Eigen::Index l = 0; l < md.cols(); ++l) {
        CHECK(md.col(l).sum() == 0.0);
        CHECK((md.col(l).array() == 1.0).count() == 1);
        CHECK((md.col(l).array() == -1.0).count() == 1);
    }
    const Matrix b = Matrix(adm.b);
    const Matrix mdm = md * adm.d.asDiagonal() * md.transpose();
    CHECK((b - mdm).cwiseAbs().maxCoeff() <= 1e-12);
    const auto ref = fixtures::dense_b(g);
    double diff = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i)
        for (std::size_t j = 0; j < ref.size(); ++j) diff = std::max(diff, std::abs(ref[i][j] - b(i, j)));
    CHECK(diff <= 1e-12);
    CHECK(b.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(oracle::rank(ref) == 117);
    CHECK(numeric_rank(b) == 117);
}

TEST_CASE("rank of B plus component count equals bus count on random subgraphs", "[grid]") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const Grid g = random_subgraph(rng, 0.15);
        const auto comps = oracle::bfs_component_count(g.bus_count(), fixtures::closed_edges(g));
        CHECK(oracle::rank(fixtures::dense_b(g)) + comps == g.bus_count());
        CHECK(numeric_rank(Matrix(build_admittance(g).b)) + comps == g.bus_count());
    }
}

TEST_CASE("two-bus power flow by hand", "[grid]") {
    const Grid g = make_grid({1, -1}, {line(0, 1, 0.5)});
    const std::size_t refs[] = {0};
    const auto fs = solve_dc_power_flow(g, g.injections(), refs);
    CHECK(fs.theta(0) == 0.0);
    CHECK(fs.theta(1) == Approx(-0.5));
    CHECK(fs.flows(0) == Approx(1.0));
}

TEST_CASE("zero injections give zero angles and flows", "[grid]") {
    const Grid g = make_grid({0, 0, 0, 0}, {line(0, 1, 0.1), line(1, 2, 0.1), line(2, 3, 0.1), line(3, 0, 0.1)});
    const auto fs = solve_dc_power_flow(g);
    CHECK(fs.theta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(fs.flows.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("four-bus ring matches dense elimination", "[grid]") {
    const Grid g = make_grid({1, 0, -1, 0}, {line(0, 1, 0.1), line(1, 2, 0.1), line(2, 3, 0.1), line(3, 0, 0.1)});
    const std::size_t refs[] = {0};
    const auto fs = solve_dc_power_flow(g, g.injections(), refs);
    const auto theta = fixtures::oracle_theta(g, {1, 0, -1, 0}, {0});
    REQUIRE(theta.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(fs.theta(i) == Approx(theta[i]).margin(1e-12));
    // Symmetric ring splits the transfer evenly.
    CHECK(fs.flows(0) == Approx(0.5));
    CHECK(fs.flows(3) == Approx(-0.5));
}

TEST_CASE("line flows agree with the matrix form", "[grid]") {
    const Grid g = make_grid({0, 0, 0, 0}, {line(0, 1, 0.1), line(1, 2, 0.2), line(2, 3, 0.3), line(3, 0, 0.4)});
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    Vector theta(4);
    for (int i = 0; i < 4; ++i) theta(i) = u(rng);
    const auto adm = build_admittance(g);
    const Vector ref = adm.d.asDiagonal() * (Matrix(build_incidence(g).m).transpose() * theta);
    CHECK((line_flows(theta, g) - ref).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("power flow on random subgraphs matches the dense oracle", "[grid]") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 25; ++trial) {
        const Grid g = random_subgraph(rng, 0.1);
        const auto refs = choose_reference_buses(g);
        const auto fs = solve_dc_power_flow(g);
        const Vector p = g.injections();
        const auto theta = fixtures::oracle_theta(g, oracle::Vec(p.data(), p.data() + p.size()), refs);
        REQUIRE(theta.size() == g.bus_count());
        double err = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) err = std::max(err, std::abs(theta[i] - fs.theta(i)));
        CHECK(err <= 1e-8);
        const Vector conservation = Matrix(build_incidence(g).m) * fs.flows - p;
        CHECK(conservation.cwiseAbs().maxCoeff() <= 1e-8);
        for (auto r : refs) CHECK(fs.theta(r) == 0.0);
    }
}

TEST_CASE("unbalanced component raises a balance error", "[grid]") {
    const Grid g = make_grid({1, -1, 0.5, 0}, {line(0, 1, 0.1), line(2, 3, 0.1)});
    try {
        solve_dc_power_flow(g);
        FAIL("expected BalanceError");
    } catch (const BalanceError& e) {
        CHECK(e.component() == 1);
        CHECK(e.residual() == Approx(0.5));
    }
    PowerFlowOptions lenient;
    lenient.check_balance = false;
    CHECK_NOTHROW(solve_dc_power_flow(g, lenient));
}

TEST_CASE("reference buses prefer the lowest generator bus", "[grid]") {
    const Grid g = make_grid({-1, 0.5, 0.5, -1, 1}, {line(0, 1, 0.1), line(1, 2, 0.1), line(3, 4, 0.1)});
    CHECK(choose_reference_buses(g) == std::vector<std::size_t>{1, 4});
    const Grid loads = make_grid({-1, -1}, {});
    CHECK(choose_reference_buses(loads) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("connected components: trivial cases", "[grid]") {
    Grid g = fixtures::ieee118();
    CHECK(connected_components(g).size() == 1);
    for (auto& l : g.lines) l.breaker = Breaker::open;
    CHECK(connected_components(g).size() == 118);
}

TEST_CASE("a two-line cut of the 118-bus fixture matches BFS", "[grid]") {
    Grid g = fixtures::ieee118();
    const auto n = g.bus_count();
    std::optional<std::pair<std::size_t, std::size_t>> cut;
    for (std::size_t a = 0; a < g.line_count() && !cut; ++a)
        for (std::size_t b = a + 1; b < g.line_count() && !cut; ++b) {
            auto edges = fixtures::closed_edges(g);
            edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(b));
            edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(a));
            if (oracle::bfs_component_count(n, edges) != 2) continue;
            auto ea = fixtures::closed_edges(g), eb = ea;
            ea.erase(ea.begin() + static_cast<std::ptrdiff_t>(a));
            eb.erase(eb.begin() + static_cast<std::ptrdiff_t>(b));
            if (oracle::bfs_component_count(n, ea) == 1 && oracle::bfs_component_count(n, eb) == 1) cut = {a, b};
        }
    REQUIRE(cut);
    g.lines[cut->first].breaker = Breaker::open;
    g.lines[cut->second].breaker = Breaker::open;
    const auto comps = connected_components(g);
    REQUIRE(comps.size() == 2);
    const auto labels = oracle::bfs_labels(n, fixtures::closed_edges(g));
    for (std::size_t c = 0; c < 2; ++c)
        for (auto b : comps[c]) CHECK(labels[b] == c);
}

TEST_CASE("zero-injection reduction: path and star", "[grid]") {
    const Grid path = make_grid({1, 0, -1}, {line(0, 1, 0.1), line(1, 2, 0.1)});
    const auto rp = reduce_zero_injection(path);
    CHECK(rp.kept == std::vector<std::size_t>{0, 2});
    CHECK(rp.adjacency[0] == std::vector<std::size_t>{1});
    CHECK(rp.zero_clusters == std::vector<std::vector<std::size_t>>{{1}});

    const Grid star = make_grid({0, 1, -0.5, -0.5}, {line(0, 1, 0.1), line(0, 2, 0.1), line(0, 3, 0.1)});
    const auto rs = reduce_zero_injection(star);
    REQUIRE(rs.kept.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(rs.adjacency[i].size() == 2);
    CHECK(rs.cluster_neighbors[0] == std::vector<std::size_t>{1, 2, 3});
}

TEST_CASE("zero-injection reduction without zero buses is the identity", "[grid]") {
    const Grid g = make_grid({1, -0.5, -0.5}, {line(0, 1, 0.1), line(1, 2, 0.1), line(0, 1, 0.2)});
    const auto r = reduce_zero_injection(g);
    CHECK(r.kept == std::vector<std::size_t>{0, 1, 2});
    CHECK(r.adjacency == Adjacency{{1}, {0, 2}, {1}});
    CHECK(r.multiplicity.at({0, 1}) == 2);
    CHECK(r.zero_clusters.empty());
}

TEST_CASE("zero-injection reduction preserves reachability between nonzero buses", "[grid]") {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<std::size_t> size(3, 20);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = size(rng);
        std::vector<double> p(n);
        for (auto& v : p) v = coin(rng) ? 0.0 : 1.0;
        std::vector<Line> lines;
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b)
                if (rng() % n < 2) lines.push_back(line(a, b, 0.1));
        const Grid g = make_grid(p, lines);
        const auto r = reduce_zero_injection(g);
        const auto labels = oracle::bfs_labels(n, fixtures::closed_edges(g));
        oracle::Edges reduced;
        for (std::size_t a = 0; a < r.adjacency.size(); ++a)
            for (auto b : r.adjacency[a])
                if (a < b) reduced.emplace_back(a, b);
        const auto rlabels = oracle::bfs_labels(r.kept.size(), reduced);
        for (std::size_t a = 0; a < r.kept.size(); ++a)
            for (std::size_t b = 0; b < r.kept.size(); ++b)
                CHECK((labels[r.kept[a]] == labels[r.kept[b]]) == (rlabels[a] == rlabels[b]));
    }
}

TEST_CASE("rank connectedness test: adjacent and non-adjacent pairs", "[grid]") {
    const Adjacency adj{{1}, {0, 2}, {1}};
    const std::size_t ab[] = {0, 1}, ac[] = {0, 2};
    CHECK(connectedness_rank_test(ab, adj));
    CHECK_FALSE(connectedness_rank_test(ac, adj));
}

TEST_CASE("rank connectedness test equals BFS on every subset of small graphs", "[grid]") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 4 + trial % 7;
        Adjacency adj(n);
        oracle::Edges edges;
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b)
                if (rng() % 3 == 0) {
                    adj[a].push_back(b);
                    adj[b].push_back(a);
                    edges.emplace_back(a, b);
                }
        for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
            std::vector<std::size_t> subset;
            for (std::size_t i = 0; i < n; ++i)
                if (mask >> i & 1) subset.push_back(i);
            CHECK(connectedness_rank_test(subset, adj) == oracle::induced_connected(subset, edges));
        }
    }
}

TEST_CASE("rank connectedness test on random 6-bus subsets of the fixture", "[grid]") {
    const Grid& g = fixtures::ieee118();
    const auto adj = closed_adjacency(g);
    const auto edges = fixtures::closed_edges(g);
    std::mt19937_64 rng(8);
    int connected = 0;
    for (int trial = 0; trial < 300; ++trial) {
        // Grow from a seed so that a fair share of subsets is connected.
        std::vector<std::size_t> subset{rng() % g.bus_count()};
        while (subset.size() < 6) {
            const auto from = subset[rng() % subset.size()];
            const auto cand = rng() % 8 == 0 ? rng() % g.bus_count() : adj[from][rng() % adj[from].size()];
            if (std::find(subset.begin(), subset.end(), cand) == subset.end()) subset.push_back(cand);
        }
        const bool expect = oracle::induced_connected(subset, edges);
        connected += expect;
        CHECK(connectedness_rank_test(subset, adj) == expect);
    }
    CHECK(connected > 10);
    CHECK(connected < 270);
}

TEST_CASE("rank connectedness test uses component counting on large selections", "[grid]") {
    // Path of 400 buses: connected; removing one interior bus disconnects.
    const std::size_t n = 400;
    Adjacency adj(n);
    for (std::size_t i = 1; i < n; ++i) {
        adj[i - 1].push_back(i);
        adj[i].push_back(i - 1);
    }
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    CHECK(connectedness_rank_test(all, adj));
    all.erase(all.begin() + 200);
    CHECK_FALSE(connectedness_rank_test(all, adj));
}

TEST_CASE("grid validation rejects bad data", "[grid]") {
    CHECK_THROWS_AS(make_grid({0, 0}, {line(0, 0, 0.1)}).validate(), ValidationError);
    CHECK_THROWS_AS(make_grid({0, 0}, {line(0, 1, 0.0)}).validate(), ValidationError);
    CHECK_THROWS_AS(make_grid({0, 0}, {line(0, 2, 0.1)}).validate(), ValidationError);
    Grid dup = make_grid({0, 0}, {line(0, 1, 0.1)});
    dup.buses[1].id = dup.buses[0].id;
    CHECK_THROWS_AS(dup.validate(), ValidationError);
}
