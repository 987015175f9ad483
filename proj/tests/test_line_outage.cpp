#include <catch2/catch_amalgamated.hpp>

#include "cascade/line_outage.hpp"
#include "fixtures.hpp"
#include "outage_instances.hpp"

#include <random>

using namespace cascade;
using fixtures::line;
using fixtures::make_grid;
using Catch::Matchers::WithinAbs;

namespace {

// C M computed from scratch: dense reduced inverse with the island's first
// bus pinned, then flow rows for the requested lines.
oracle::Mat oracle_sensitivity(const outages::OutageInstance& inst, const std::vector<std::size_t>& rows,
                               const std::vector<std::size_t>& cols) {
    const std::size_t m = inst.island_size;
    oracle::Mat out(rows.size(), oracle::Vec(cols.size(), 0.0));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        // B over the island's modeled lines (observed-open ones dropped).
        oracle::Mat b(m, oracle::Vec(m, 0.0));
        for (std::size_t l = 0; l < inst.pre.line_count(); ++l) {
            const auto& ln = inst.pre.lines[l];
            if (ln.from >= m || ln.to >= m) continue;
            if (!inst.unobserved[l] && !inst.post.lines[l].closed()) continue;
            b[ln.from][ln.from] += 1 / ln.x;
            b[ln.to][ln.to] += 1 / ln.x;
            b[ln.from][ln.to] -= 1 / ln.x;
            b[ln.to][ln.from] -= 1 / ln.x;
        }
        oracle::Mat red(m - 1, oracle::Vec(m - 1));
        oracle::Vec rhs(m - 1, 0.0);
        for (std::size_t i = 1; i < m; ++i)
            for (std::size_t j = 1; j < m; ++j) red[i - 1][j - 1] = b[i][j];
        const auto& cl = inst.pre.lines[cols[c]];
        if (cl.from > 0) rhs[cl.from - 1] += 1.0;
        if (cl.to > 0) rhs[cl.to - 1] -= 1.0;
        const auto x = oracle::dense_solve(red, rhs);
        oracle::Vec theta(m, 0.0);
        for (std::size_t i = 1; i < m; ++i) theta[i] = (*x)[i - 1];
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto& rl = inst.pre.lines[rows[r]];
            out[r][c] = (theta[rl.from] - theta[rl.to]) / rl.x;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("no boundary trips and no shedding leave p_tilde at zero", "[outage]") {
    std::mt19937_64 rng(1);
    const auto inst = outages::random_outage_instance(rng, 8, 0, 0, 0.3);
    const auto est = outages::island_model(inst);
    CHECK(est.duos.empty());
    CHECK(est.p_tilde.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a tie line carrying 0.4 into u becomes a +0.4 duo at u", "[outage]") {
    // Island {0,1}; outside bus 2 feeds bus 1 with 0.4 over line 1.
    Grid g = make_grid({-0.1, -0.3, 0.4}, {line(0, 1, 0.1), line(2, 1, 0.2)});
    const Vector p = g.injections();
    const Vector post = Vector::Zero(3);  // no generation left inside: blackout
    const std::size_t island[] = {0, 1};
    const auto est = build_island_admittance_with_duos(g, island, {true, true}, {false, true}, p,
                                                       (Vector(2) << -0.1, 0.4).finished(), post);
    REQUIRE(est.duos.size() == 1);
    CHECK(est.duos[0].first == 1);
    CHECK(est.duos[0].second == 0.4);
    CHECK(est.p_pre(1) == -0.3 + 0.4);
    CHECK(est.p_tilde(1) == post(1) - est.p_pre(1));
    CHECK(est.lines == std::vector<std::size_t>{0});
}

TEST_CASE("island admittance equals the dense oracle", "[outage]") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        const auto inst = outages::random_outage_instance(rng, 6 + t % 5, 2, 1, 0.4);
        const auto est = outages::island_model(inst);
        const Matrix b = Matrix(est.b);
        Grid modeled = inst.pre;
        modeled.buses.resize(inst.island_size);
        std::vector<Line> kept;
        for (auto l : est.lines) kept.push_back(inst.pre.lines[l]);
        modeled.lines = kept;
        const auto expect = fixtures::dense_b(modeled);
        for (std::size_t i = 0; i < inst.island_size; ++i)
            for (std::size_t j = 0; j < inst.island_size; ++j)
                CHECK_THAT(b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), WithinAbs(expect[i][j], 1e-12));
    }
}

TEST_CASE("the angle-change identity holds on oracle states", "[outage]") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        const auto inst = outages::random_outage_instance(rng, 5 + t % 10, t % 3, 1 + t % 3, 0.5);
        const auto est = outages::island_model(inst);
        // theta' relative to the island's first bus; pre angles from the duo model.
        const Vector theta_pre = PinnedSolver(est.b, est.pinned).solve(est.p_pre);
        const auto m = static_cast<Eigen::Index>(inst.island_size);
        Vector theta_post(m);
        for (Eigen::Index i = 0; i < m; ++i)
            theta_post(i) = inst.theta_post[static_cast<std::size_t>(i)] - inst.theta_post[0];
        // Pre angles reproduce the oracle's internal pre flows.
        for (auto l : est.lines) {
            const auto& ln = inst.pre.lines[l];
            const double f = (theta_pre(static_cast<Eigen::Index>(ln.from)) - theta_pre(static_cast<Eigen::Index>(ln.to))) / ln.x;
            CHECK_THAT(f, WithinAbs(inst.flows_pre[l], 1e-9));
        }
        Vector residual = est.b * (theta_post - theta_pre) - est.p_tilde;
        for (auto l : inst.outaged) {
            const auto& ln = inst.pre.lines[l];
            const double s = (theta_post(static_cast<Eigen::Index>(ln.from)) - theta_post(static_cast<Eigen::Index>(ln.to))) / ln.x;
            residual(static_cast<Eigen::Index>(ln.from)) -= s;
            residual(static_cast<Eigen::Index>(ln.to)) += s;
        }
        CHECK(residual.cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("lasso inputs: zero cases and one known outage", "[outage]") {
    std::mt19937_64 rng(4);
    SECTION("no outages, no shedding") {
        const auto inst = outages::random_outage_instance(rng, 9, 0, 0, 0.3);
        const auto in = compute_lasso_inputs(inst.pre, outages::island_model(inst), outages::snapshot_of(inst));
        REQUIRE(in.y.size() > 0);
        CHECK(in.y.cwiseAbs().maxCoeff() < 1e-12);
        CHECK(detect_line_outages(in).support.empty());
    }
    SECTION("shedding without outages is fully explained") {
        const auto inst = outages::random_outage_instance(rng, 9, 3, 0, 0.3);
        const auto est = outages::island_model(inst);
        CHECK(est.p_tilde.cwiseAbs().maxCoeff() > 1e-3);
        const auto in = compute_lasso_inputs(inst.pre, est, outages::snapshot_of(inst));
        CHECK(in.y.cwiseAbs().maxCoeff() < 1e-10);
    }
    SECTION("single outage on a five-bus toy") {
        auto inst = outages::random_outage_instance(rng, 5, 0, 1, 0.0);
        REQUIRE(inst.outaged.size() == 1);
        const auto est = outages::island_model(inst);
        const auto in = compute_lasso_inputs(inst.pre, est, outages::snapshot_of(inst));
        const auto l = inst.outaged[0];
        const auto& ln = inst.pre.lines[l];
        const double s_true = (inst.theta_post[ln.from] - inst.theta_post[ln.to]) / ln.x;
        const auto col = static_cast<Eigen::Index>(std::find(in.column_lines.begin(), in.column_lines.end(), l) -
                                                   in.column_lines.begin());
        const Vector expect = in.a.col(col) * s_true;
        CHECK((in.y - expect).cwiseAbs().maxCoeff() < 1e-10);
        const auto a_oracle = oracle_sensitivity(inst, in.row_lines, in.column_lines);
        for (std::size_t r = 0; r < in.row_lines.size(); ++r)
            for (std::size_t c = 0; c < in.column_lines.size(); ++c)
                CHECK_THAT(in.a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)), WithinAbs(a_oracle[r][c], 1e-10));
    }
}

TEST_CASE("eight-line toy: the outaged line is found exactly", "[outage]") {
    // Five meshed buses, eight lines; even-indexed lines measured.
    const std::vector<double> p{1.2, -0.4, -0.3, 0.5, -1.0};
    const Grid g = make_grid(p, {line(0, 1, 0.1), line(1, 2, 0.2), line(2, 3, 0.15), line(3, 4, 0.1),
                                 line(4, 0, 0.12), line(0, 2, 0.3), line(1, 3, 0.1), line(2, 4, 0.2)});
    std::size_t identifiable = 0;
    for (std::size_t out = 0; out < 8; ++out) {
        outages::OutageInstance inst;
        inst.pre = g;
        inst.island_size = 5;
        inst.island = {0, 1, 2, 3, 4};
        inst.p_pre = p;
        inst.theta_pre = fixtures::oracle_theta(inst.pre, p, {0});
        inst.flows_pre = outages::oracle_flows(inst.pre, inst.theta_pre);
        inst.post = inst.pre;
        inst.post.lines[out].breaker = Breaker::open;
        inst.p_post = p;
        inst.theta_post = fixtures::oracle_theta(inst.post, p, {0});
        inst.flows_post = outages::oracle_flows(inst.post, inst.theta_post);
        inst.outaged = {out};
        inst.unobserved.assign(8, false);
        for (std::size_t l = 0; l < 8; ++l)
            if (l % 2 == 1 || l == out) inst.unobserved[l] = true;

        const auto in = compute_lasso_inputs(inst.pre, outages::island_model(inst), outages::snapshot_of(inst));
        if (!outages::identifiable(in, out)) continue;
        ++identifiable;
        // Exhaustive single-line oracle over the unobserved columns.
        std::vector<std::size_t> free_cols;
        for (std::size_t j = 0; j < in.column_lines.size(); ++j)
            if (std::find(in.fixed_zero.begin(), in.fixed_zero.end(), j) == in.fixed_zero.end()) free_cols.push_back(j);
        oracle::Mat a(in.row_lines.size(), oracle::Vec(free_cols.size()));
        oracle::Vec y(in.row_lines.size());
        for (std::size_t r = 0; r < in.row_lines.size(); ++r) {
            y[r] = in.y(static_cast<Eigen::Index>(r));
            for (std::size_t c = 0; c < free_cols.size(); ++c)
                a[r][c] = in.a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(free_cols[c]));
        }
        const auto best = in.column_lines[free_cols[oracle::best_single_support(a, y)]];
        INFO("outage " << out);
        CHECK(best == out);
        const auto found = detect_line_outages(in);
        CHECK(found.support == std::vector<std::size_t>{best});
        for (const auto& w : found.warnings) UNSCOPED_INFO(w);
        CHECK(found.warnings.empty());
    }
    CHECK(identifiable >= 4);
}

TEST_CASE("contradictory breaker data is flagged", "[outage]") {
    std::mt19937_64 rng(6);
    auto inst = outages::random_outage_instance(rng, 10, 0, 1, 0.3);
    const auto l = inst.outaged[0];
    auto snap = outages::snapshot_of(inst);
    snap.breakers[l] = Breaker::closed;  // says closed, truth is open
    snap.flows[l] = inst.flows_pre[l];
    inst.unobserved[l] = false;
    std::vector<bool> pre_closed(inst.pre.line_count(), true), open(inst.pre.line_count(), false);
    const auto est = build_island_admittance_with_duos(inst.pre, inst.island, pre_closed, open,
                                                       outages::to_vector(inst.p_pre), outages::to_vector(inst.flows_pre),
                                                       outages::to_vector(inst.p_post));
    const auto in = compute_lasso_inputs(inst.pre, est, snap);
    const auto found = detect_line_outages(in);
    CHECK(std::find(found.support.begin(), found.support.end(), l) == found.support.end());
    CHECK_FALSE(found.warnings.empty());
}

TEST_CASE("fixed-zero lines never enter the support", "[outage]") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 40; ++t) {
        const auto inst = outages::random_outage_instance(rng, 8 + t % 8, t % 2, 1 + t % 3, 0.4);
        const auto in = compute_lasso_inputs(inst.pre, outages::island_model(inst), outages::snapshot_of(inst));
        const auto found = detect_line_outages(in);
        for (auto j : in.fixed_zero)
            CHECK(std::find(found.support.begin(), found.support.end(), in.column_lines[j]) == found.support.end());
    }
}

TEST_CASE("estimated admittance", "[outage]") {
    std::mt19937_64 rng(8);
    const auto inst = outages::random_outage_instance(rng, 12, 0, 3, 0.5);
    const auto est = outages::island_model(inst);
    CHECK(Matrix(assemble_estimated_admittance(inst.pre, est, {})) == Matrix(est.b));

    const Matrix b_hat = assemble_estimated_admittance(inst.pre, est, inst.outaged);
    const auto truth = fixtures::dense_b(inst.post);
    for (std::size_t i = 0; i < 12; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 12; ++j) {
            CHECK_THAT(b_hat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), WithinAbs(truth[i][j], 1e-12));
            row += b_hat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        CHECK(std::abs(row) < 1e-9);
    }
    CHECK((b_hat - b_hat.transpose()).cwiseAbs().maxCoeff() == 0.0);

    const Grid two = make_grid({0.5, -0.5}, {line(0, 1, 0.1)});
    const std::size_t both[] = {0, 1};
    const auto e2 = build_island_admittance_with_duos(two, both, {true}, {false}, two.injections(), Vector::Zero(1),
                                                      two.injections());
    const std::size_t all[] = {0};
    CHECK(Matrix(assemble_estimated_admittance(two, e2, all)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("angle-based detection", "[outage]") {
    std::mt19937_64 rng(9);
    std::size_t compared = 0;
    for (int t = 0; t < 60 && compared < 30; ++t) {
        const auto inst = outages::random_outage_instance(rng, 5 + t % 6, 0, 1, 0.0);
        const auto est = outages::island_model(inst);
        const auto in = compute_lasso_inputs(inst.pre, est, outages::snapshot_of(inst));
        if (inst.outaged.empty() || !outages::identifiable(in, inst.outaged[0])) continue;
        const Vector theta_pre = PinnedSolver(est.b, est.pinned).solve(est.p_pre);
        Vector tilde(static_cast<Eigen::Index>(inst.island_size));
        for (std::size_t i = 0; i < inst.island_size; ++i)
            tilde(static_cast<Eigen::Index>(i)) = inst.theta_post[i] - inst.theta_post[0] - theta_pre(static_cast<Eigen::Index>(i));
        std::vector<std::size_t> fixed;
        for (auto j : in.fixed_zero) fixed.push_back(in.column_lines[j]);
        const auto by_angles = detect_via_angles(inst.pre, est, tilde, inst.island, fixed);
        const auto by_flows = detect_line_outages(in);
        INFO("instance " << t);
        CHECK(by_angles.support == inst.outaged);
        CHECK(by_flows.support == by_angles.support);
        ++compared;
    }
    CHECK(compared == 30);

    const auto inst = outages::random_outage_instance(rng, 6, 0, 0, 0.4);
    const auto est = outages::island_model(inst);
    CHECK(detect_via_angles(inst.pre, est, Vector::Zero(6), inst.island, {}).support.empty());
}

TEST_CASE("single unobserved outage is localized on random islands", "[outage]") {
    std::mt19937_64 rng(10);
    std::size_t done = 0;
    while (done < 40) {
        const auto inst = outages::random_outage_instance(rng, 10 + rng() % 11, rng() % 3, 1, 0.0);
        if (inst.outaged.size() != 1) continue;
        const auto in = compute_lasso_inputs(inst.pre, outages::island_model(inst), outages::snapshot_of(inst));
        CHECK(detect_line_outages(in).support == inst.outaged);
        ++done;
    }
}

TEST_CASE("with a third of the lines hidden, single outages are still mostly exact", "[outage]") {
    std::mt19937_64 rng(11);
    std::size_t done = 0, exact = 0;
    while (done < 200) {
        const auto inst = outages::random_outage_instance(rng, 10 + rng() % 11, rng() % 3, 1, 0.3);
        if (inst.outaged.size() != 1) continue;
        const auto in = compute_lasso_inputs(inst.pre, outages::island_model(inst), outages::snapshot_of(inst));
        if (!outages::identifiable(in, inst.outaged[0])) continue;
        exact += detect_line_outages(in).support == inst.outaged;
        ++done;
    }
    CHECK(exact >= 190);
}
