#ifndef CASCADE_TESTS_ORACLES_HPP
#define CASCADE_TESTS_ORACLES_HPP

// Reference implementations used only by tests. Nothing here calls into the
// library's solvers or Eigen factorizations; plain std::vector arithmetic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major

inline constexpr double inf = std::numeric_limits<double>::infinity();

/// Gaussian elimination with partial pivoting. Returns nullopt if singular.
inline std::optional<Vec> dense_solve(Mat a, Vec b, double sing_tol = 1e-13) {
    const std::size_t n = b.size();
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a[i][k]) > std::abs(a[piv][k])) piv = i;
        if (std::abs(a[piv][k]) < sing_tol) return std::nullopt;
        std::swap(a[k], a[piv]);
        std::swap(b[k], b[piv]);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = a[i][k] / a[k][k];
            if (f == 0.0) continue;
            for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
            b[i] -= f * b[k];
        }
    }
    Vec x(n);
    for (std::size_t k = n; k-- > 0;) {
        double s = b[k];
        for (std::size_t j = k + 1; j < n; ++j) s -= a[k][j] * x[j];
        x[k] = s / a[k][k];
    }
    return x;
}

/// Rank by row echelon with partial pivoting, relative tolerance on the
/// largest absolute entry.
inline std::size_t rank(Mat a, double rel_tol = 1e-9) {
    if (a.empty()) return 0;
    const std::size_t m = a.size(), n = a[0].size();
    double scale = 0.0;
    for (const auto& r : a)
        for (double v : r) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return 0;
    std::size_t r = 0;
    for (std::size_t c = 0; c < n && r < m; ++c) {
        std::size_t piv = r;
        for (std::size_t i = r + 1; i < m; ++i)
            if (std::abs(a[i][c]) > std::abs(a[piv][c])) piv = i;
        if (std::abs(a[piv][c]) <= rel_tol * scale) continue;
        std::swap(a[r], a[piv]);
        for (std::size_t i = r + 1; i < m; ++i) {
            const double f = a[i][c] / a[r][c];
            for (std::size_t j = c; j < n; ++j) a[i][j] -= f * a[r][j];
        }
        ++r;
    }
    return r;
}

using Edges = std::vector<std::pair<std::size_t, std::size_t>>;

/// Component label per vertex via BFS, labels in order of smallest vertex.
inline std::vector<std::size_t> bfs_labels(std::size_t n, const Edges& edges) {
    std::vector<std::vector<std::size_t>> adj(n);
    for (auto [u, v] : edges) {
        adj[u].push_back(v);
        adj[v].push_back(u);
    }
    std::vector<std::size_t> label(n, SIZE_MAX);
    std::size_t next = 0;
    for (std::size_t s = 0; s < n; ++s) {
        if (label[s] != SIZE_MAX) continue;
        std::queue<std::size_t> q;
        q.push(s);
        label[s] = next;
        while (!q.empty()) {
            const auto u = q.front();
            q.pop();
            for (auto v : adj[u])
                if (label[v] == SIZE_MAX) {
                    label[v] = next;
                    q.push(v);
                }
        }
        ++next;
    }
    return label;
}

inline std::size_t bfs_component_count(std::size_t n, const Edges& edges) {
    const auto l = bfs_labels(n, edges);
    return n == 0 ? 0 : *std::max_element(l.begin(), l.end()) + 1;
}

/// Is the subgraph induced by `subset` connected?
inline bool induced_connected(const std::vector<std::size_t>& subset, const Edges& edges) {
    if (subset.empty()) return false;
    std::size_t top = *std::max_element(subset.begin(), subset.end());
    for (auto [u, v] : edges) top = std::max({top, u, v});
    std::vector<std::size_t> pos(top + 1, SIZE_MAX);
    for (std::size_t i = 0; i < subset.size(); ++i) pos[subset[i]] = i;
    Edges sub;
    for (auto [u, v] : edges)
        if (pos[u] != SIZE_MAX && pos[v] != SIZE_MAX) sub.emplace_back(pos[u], pos[v]);
    return bfs_component_count(subset.size(), sub) == 1;
}

// ---------------------------------------------------------------------------
// LP in standard form: min c'x, A x = b, x >= 0. Enumerates every basis.

struct LpOracleResult {
    bool feasible = false;
    double objective = inf;
    Vec x;
};

inline LpOracleResult lp_vertex_enumeration(const Mat& a, const Vec& b, const Vec& c) {
    const std::size_t m = a.size(), n = c.size();
    LpOracleResult best;
    std::vector<std::size_t> basis(m);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
        if (depth == m) {
            Mat sub(m, Vec(m));
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t k = 0; k < m; ++k) sub[i][k] = a[i][basis[k]];
            auto xb = dense_solve(sub, b, 1e-10);
            if (!xb) return;
            for (double v : *xb)
                if (v < -1e-9) return;
            double obj = 0.0;
            for (std::size_t k = 0; k < m; ++k) obj += c[basis[k]] * (*xb)[k];
            if (obj < best.objective) {
                best.feasible = true;
                best.objective = obj;
                best.x.assign(n, 0.0);
                for (std::size_t k = 0; k < m; ++k) best.x[basis[k]] = (*xb)[k];
            }
            return;
        }
        for (std::size_t j = start; j + (m - depth) <= n; ++j) {
            basis[depth] = j;
            rec(j + 1, depth + 1);
        }
    };
    rec(0, 0);
    return best;
}

// ---------------------------------------------------------------------------
// Binary program: min c'z, A_eq z = b_eq, A_ub z <= b_ub, z in {0,1}^n.

struct IlpOracleResult {
    bool feasible = false;
    double objective = inf;
    std::vector<int> z;
};

inline IlpOracleResult ilp_exhaustive(const Mat& a_eq, const Vec& b_eq, const Mat& a_ub, const Vec& b_ub,
                                      const Vec& c, double tol = 1e-9) {
    const std::size_t n = c.size();
    IlpOracleResult best;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        auto val = [&](const Vec& row) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (mask >> j & 1) s += row[j];
            return s;
        };
        bool ok = true;
        for (std::size_t i = 0; ok && i < a_eq.size(); ++i) ok = std::abs(val(a_eq[i]) - b_eq[i]) <= tol;
        for (std::size_t i = 0; ok && i < a_ub.size(); ++i) ok = val(a_ub[i]) <= b_ub[i] + tol;
        if (!ok) continue;
        const double obj = val(c);
        if (obj < best.objective - 1e-12) {
            best.feasible = true;
            best.objective = obj;
            best.z.assign(n, 0);
            for (std::size_t j = 0; j < n; ++j) best.z[j] = static_cast<int>(mask >> j & 1);
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Sparse recovery

/// Best single column for y ~ a_j s: minimizes ||y - a_j s||^2 over j.
inline std::size_t best_single_support(const Mat& a, const Vec& y) {
    const std::size_t m = a.size(), n = a[0].size();
    std::size_t best = 0;
    double best_res = inf;
    for (std::size_t j = 0; j < n; ++j) {
        double aa = 0.0, ay = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            aa += a[i][j] * a[i][j];
            ay += a[i][j] * y[i];
        }
        const double s = aa > 0.0 ? ay / aa : 0.0;
        double res = 0.0;
        for (std::size_t i = 0; i < m; ++i) res += (y[i] - a[i][j] * s) * (y[i] - a[i][j] * s);
        if (res < best_res - 1e-12) {
            best_res = res;
            best = j;
        }
    }
    return best;
}

/// Exact LASSO minimizer of ||y - A s||^2 + lambda ||s||_1 by enumerating
/// sign patterns in {-1,0,+1}^n and keeping KKT-consistent candidates.
inline Vec lasso_exhaustive(const Mat& a, const Vec& y, double lambda) {
    const std::size_t m = a.size(), n = a[0].size();
    Vec best;
    double best_obj = inf;
    std::vector<int> sign(n, 0);
    auto objective = [&](const Vec& s) {
        double r = 0.0, l1 = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double e = y[i];
            for (std::size_t j = 0; j < n; ++j) e -= a[i][j] * s[j];
            r += e * e;
        }
        for (double v : s) l1 += std::abs(v);
        return r + lambda * l1;
    };
    std::function<void(std::size_t)> rec = [&](std::size_t j) {
        if (j == n) {
            std::vector<std::size_t> sup;
            for (std::size_t k = 0; k < n; ++k)
                if (sign[k] != 0) sup.push_back(k);
            Vec s(n, 0.0);
            if (!sup.empty()) {
                const std::size_t k = sup.size();
                Mat g(k, Vec(k, 0.0));
                Vec rhs(k, 0.0);
                for (std::size_t p = 0; p < k; ++p) {
                    for (std::size_t q = 0; q < k; ++q)
                        for (std::size_t i = 0; i < m; ++i) g[p][q] += a[i][sup[p]] * a[i][sup[q]];
                    for (std::size_t i = 0; i < m; ++i) rhs[p] += a[i][sup[p]] * y[i];
                    rhs[p] -= 0.5 * lambda * sign[sup[p]];
                }
                auto sol = dense_solve(g, rhs, 1e-12);
                if (!sol) return;
                for (std::size_t p = 0; p < k; ++p) {
                    if ((*sol)[p] * sign[sup[p]] <= 0.0) return;
                    s[sup[p]] = (*sol)[p];
                }
            }
            const double obj = objective(s);
            if (obj < best_obj) {
                best_obj = obj;
                best = s;
            }
            return;
        }
        for (int sg : {0, 1, -1}) {
            sign[j] = sg;
            rec(j + 1);
        }
        sign[j] = 0;
    };
    rec(0);
    return best;
}

// ---------------------------------------------------------------------------
// Quantiles (type 7: linear interpolation between order statistics).

inline double quantile7(Vec v, double q) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1) * q;
    const double lo = std::floor(h);
    const auto i = static_cast<std::size_t>(lo);
    if (i + 1 >= v.size()) return v.back();
    return v[i] + (h - lo) * (v[i + 1] - v[i]);
}

}  // namespace oracle

#endif
