#include "cascade/solvers.hpp"

#include "cascade/errors.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <utility>

namespace cascade {

LpProblem LpProblem::with_variables(std::size_t n) {
    LpProblem p;
    const auto size = static_cast<Eigen::Index>(n);
    p.c = Vector::Zero(size);
    p.a_eq = Matrix(0, size);
    p.b_eq = Vector(0);
    p.a_ub = Matrix(0, size);
    p.b_ub = Vector(0);
    p.lb = Vector::Zero(size);
    p.ub = Vector::Constant(size, kInf);
    return p;
}

namespace {

void append_row(Matrix& a, Vector& b, const Vector& row, double rhs) {
    const auto m = a.rows();
    Matrix grown(m + 1, a.cols());
    if (m > 0) grown.topRows(m) = a;
    grown.row(m) = row.transpose();
    a = std::move(grown);
    b.conservativeResize(m + 1);
    b(m) = rhs;
}

}  // namespace

void LpProblem::add_equality(const Vector& row, double rhs) { append_row(a_eq, b_eq, row, rhs); }
void LpProblem::add_inequality(const Vector& row, double rhs) { append_row(a_ub, b_ub, row, rhs); }

const char* to_string(LpStatus status) {
    switch (status) {
        case LpStatus::optimal: return "optimal";
        case LpStatus::infeasible: return "infeasible";
        case LpStatus::unbounded: return "unbounded";
        case LpStatus::numerical_failure: return "numerical_failure";
        case LpStatus::node_limit: return "node_limit";
    }
    return "unknown";
}

// ===========================================================================
// Bounded-variable two-phase simplex on a dense tableau.

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class VarState : std::uint8_t { lower, upper, basic };

// Column of the working problem: z_orig += sign * value.
struct WorkColumn {
    std::ptrdiff_t orig = -1;  // -1 for slack / artificial
    double sign = 1.0;
};

class Simplex {
public:
    Simplex(const LpProblem& p, const SimplexOptions& options) : p_(p), opt_(options) {}

    LpResult run();

private:
    bool build(LpResult& result);
    bool iterate(bool phase_two, LpResult& result);
    void pivot(std::size_t row, std::size_t col);
    void price(const Vector& cost);
    double column_value(std::size_t j) const;
    void drive_out_artificials();

    const LpProblem& p_;
    SimplexOptions opt_;

    std::size_t m_ = 0;           // rows
    std::size_t ncols_ = 0;       // all working columns
    std::size_t first_art_ = 0;   // artificials are [first_art_, ncols_)
    std::vector<WorkColumn> cols_;
    Vector offset_;               // per original variable
    Vector upper_;                // per working column
    std::vector<VarState> state_;
    std::vector<std::size_t> basis_;
    std::vector<std::size_t> init_col_;  // unit column of each row in the initial basis
    std::vector<double> flip_;           // +-1 per row
    RowMajor t_;
    Vector beta_;
    Vector d_;
    Vector cost2_;
    std::size_t iterations_ = 0;
};

bool Simplex::build(LpResult& result) {
    const auto n = static_cast<std::size_t>(p_.c.size());
    offset_ = Vector::Zero(static_cast<Eigen::Index>(n));
    std::vector<double> upper;

    for (std::size_t j = 0; j < n; ++j) {
        const double lb = p_.lb(static_cast<Eigen::Index>(j));
        const double ub = p_.ub(static_cast<Eigen::Index>(j));
        if (lb > ub + opt_.feasibility_tol) {
            result.status = LpStatus::infeasible;
            result.diagnostics = "variable " + std::to_string(j) + " has lb > ub";
            return false;
        }
        if (std::isfinite(lb)) {
            offset_(static_cast<Eigen::Index>(j)) = lb;
            cols_.push_back({static_cast<std::ptrdiff_t>(j), 1.0});
            upper.push_back(std::isfinite(ub) ? std::max(0.0, ub - lb) : kInf);
        } else if (std::isfinite(ub)) {
            offset_(static_cast<Eigen::Index>(j)) = ub;
            cols_.push_back({static_cast<std::ptrdiff_t>(j), -1.0});
            upper.push_back(kInf);
        } else {
            cols_.push_back({static_cast<std::ptrdiff_t>(j), 1.0});
            upper.push_back(kInf);
            cols_.push_back({static_cast<std::ptrdiff_t>(j), -1.0});
            upper.push_back(kInf);
        }
    }
    const std::size_t structural = cols_.size();
    const auto m_eq = static_cast<std::size_t>(p_.a_eq.rows());
    const auto m_ub = static_cast<std::size_t>(p_.a_ub.rows());
    m_ = m_eq + m_ub;

    Vector rhs(static_cast<Eigen::Index>(m_));
    if (m_eq) rhs.head(static_cast<Eigen::Index>(m_eq)) = p_.b_eq - p_.a_eq * offset_;
    if (m_ub) rhs.tail(static_cast<Eigen::Index>(m_ub)) = p_.b_ub - p_.a_ub * offset_;

    flip_.assign(m_, 1.0);
    std::vector<bool> needs_art(m_, true);
    std::size_t n_art = 0;
    for (std::size_t i = 0; i < m_; ++i) {
        if (rhs(static_cast<Eigen::Index>(i)) < 0.0) flip_[i] = -1.0;
        if (i >= m_eq && flip_[i] > 0.0) needs_art[i] = false;
        if (needs_art[i]) ++n_art;
    }

    for (std::size_t k = 0; k < m_ub; ++k) {
        cols_.push_back({-1, 1.0});
        upper.push_back(kInf);
    }
    first_art_ = cols_.size();
    for (std::size_t k = 0; k < n_art; ++k) {
        cols_.push_back({-1, 1.0});
        upper.push_back(kInf);
    }
    ncols_ = cols_.size();
    upper_ = Eigen::Map<Vector>(upper.data(), static_cast<Eigen::Index>(upper.size()));

    t_ = RowMajor::Zero(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(ncols_));
    beta_ = Vector(static_cast<Eigen::Index>(m_));
    basis_.assign(m_, 0);
    init_col_.assign(m_, 0);
    state_.assign(ncols_, VarState::lower);

    std::size_t art = first_art_;
    for (std::size_t i = 0; i < m_; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const bool is_eq = i < m_eq;
        for (std::size_t k = 0; k < structural; ++k) {
            const auto orig = static_cast<Eigen::Index>(cols_[k].orig);
            const double a = is_eq ? p_.a_eq(r, orig) : p_.a_ub(r - static_cast<Eigen::Index>(m_eq), orig);
            t_(r, static_cast<Eigen::Index>(k)) = flip_[i] * cols_[k].sign * a;
        }
        if (!is_eq) t_(r, static_cast<Eigen::Index>(structural + i - m_eq)) = flip_[i];
        beta_(r) = flip_[i] * rhs(r);
        if (needs_art[i]) {
            t_(r, static_cast<Eigen::Index>(art)) = 1.0;
            init_col_[i] = art++;
        } else {
            init_col_[i] = structural + i - m_eq;
        }
        basis_[i] = init_col_[i];
        state_[basis_[i]] = VarState::basic;
    }

    cost2_ = Vector::Zero(static_cast<Eigen::Index>(ncols_));
    for (std::size_t k = 0; k < structural; ++k)
        cost2_(static_cast<Eigen::Index>(k)) = cols_[k].sign * p_.c(static_cast<Eigen::Index>(cols_[k].orig));
    return true;
}

void Simplex::price(const Vector& cost) {
    d_ = cost;
    for (std::size_t i = 0; i < m_; ++i) {
        const double cb = cost(static_cast<Eigen::Index>(basis_[i]));
        if (cb != 0.0) d_ -= cb * t_.row(static_cast<Eigen::Index>(i)).transpose();
    }
}

void Simplex::pivot(std::size_t row, std::size_t col) {
    const auto r = static_cast<Eigen::Index>(row);
    const auto q = static_cast<Eigen::Index>(col);
    const double piv = t_(r, q);
    t_.row(r) /= piv;
    for (Eigen::Index i = 0; i < t_.rows(); ++i) {
        if (i == r) continue;
        const double f = t_(i, q);
        if (f != 0.0) t_.row(i) -= f * t_.row(r);
    }
    const double dq = d_(q);
    if (dq != 0.0) d_ -= dq * t_.row(r).transpose();
}

double Simplex::column_value(std::size_t j) const {
    switch (state_[j]) {
        case VarState::lower: return 0.0;
        case VarState::upper: return upper_(static_cast<Eigen::Index>(j));
        case VarState::basic: break;
    }
    for (std::size_t i = 0; i < m_; ++i)
        if (basis_[i] == j) return beta_(static_cast<Eigen::Index>(i));
    return 0.0;
}

bool Simplex::iterate(bool phase_two, LpResult& result) {
    std::size_t degenerate_run = 0;
    while (true) {
        if (++iterations_ > opt_.max_iterations) {
            result.status = LpStatus::numerical_failure;
            result.diagnostics = "iteration limit reached";
            return false;
        }
        const bool bland = degenerate_run >= opt_.degenerate_switch;
        std::ptrdiff_t enter = -1;
        double best = 0.0;
        const std::size_t limit = phase_two ? first_art_ : ncols_;
        for (std::size_t j = 0; j < limit; ++j) {
            const auto vs = state_[j];
            if (vs == VarState::basic) continue;
            if (upper_(static_cast<Eigen::Index>(j)) <= 0.0) continue;
            const double dj = d_(static_cast<Eigen::Index>(j));
            double gain = 0.0;
            if (vs == VarState::lower && dj < -opt_.optimality_tol) gain = -dj;
            if (vs == VarState::upper && dj > opt_.optimality_tol) gain = dj;
            if (gain <= 0.0) continue;
            if (bland) {
                enter = static_cast<std::ptrdiff_t>(j);
                break;
            }
            if (gain > best) {
                best = gain;
                enter = static_cast<std::ptrdiff_t>(j);
            }
        }
        if (enter < 0) return true;

        const auto q = static_cast<std::size_t>(enter);
        const auto qi = static_cast<Eigen::Index>(q);
        const double dir = state_[q] == VarState::lower ? 1.0 : -1.0;

        double step = upper_(qi);
        std::ptrdiff_t leave = -1;
        bool leave_to_upper = false;
        for (std::size_t i = 0; i < m_; ++i) {
            const auto ri = static_cast<Eigen::Index>(i);
            const double a = t_(ri, qi) * dir;
            double ratio;
            bool to_upper;
            if (a > opt_.pivot_tol) {
                ratio = beta_(ri) / a;
                to_upper = false;
            } else if (a < -opt_.pivot_tol && std::isfinite(upper_(static_cast<Eigen::Index>(basis_[i])))) {
                ratio = (upper_(static_cast<Eigen::Index>(basis_[i])) - beta_(ri)) / (-a);
                to_upper = true;
            } else {
                continue;
            }
            ratio = std::max(ratio, 0.0);
            // Ties go to the lowest basic column index (Bland).
            const bool better = ratio < step - 1e-12 ||
                                (leave >= 0 && ratio <= step + 1e-12 &&
                                 basis_[i] < basis_[static_cast<std::size_t>(leave)]);
            if (better) {
                step = ratio;
                leave = static_cast<std::ptrdiff_t>(i);
                leave_to_upper = to_upper;
            }
        }
        if (!std::isfinite(step)) {
            result.status = LpStatus::unbounded;
            result.diagnostics = "unbounded ray along column " + std::to_string(q);
            return false;
        }

        degenerate_run = step <= 1e-12 ? degenerate_run + 1 : 0;
        if (step != 0.0) beta_ -= (step * dir) * t_.col(qi);

        if (leave < 0) {
            state_[q] = state_[q] == VarState::lower ? VarState::upper : VarState::lower;
            continue;
        }
        const auto r = static_cast<std::size_t>(leave);
        const double entering_value = state_[q] == VarState::lower ? step : upper_(qi) - step;
        const std::size_t out = basis_[r];
        pivot(r, q);
        state_[out] = leave_to_upper ? VarState::upper : VarState::lower;
        state_[q] = VarState::basic;
        basis_[r] = q;
        beta_(static_cast<Eigen::Index>(r)) = entering_value;
    }
}

void Simplex::drive_out_artificials() {
    for (std::size_t i = 0; i < m_; ++i) {
        if (basis_[i] < first_art_) continue;
        const auto ri = static_cast<Eigen::Index>(i);
        std::ptrdiff_t best = -1;
        double mag = 1e-7;
        for (std::size_t j = 0; j < first_art_; ++j) {
            if (state_[j] == VarState::basic) continue;
            const double a = std::abs(t_(ri, static_cast<Eigen::Index>(j)));
            if (a > mag) {
                mag = a;
                best = static_cast<std::ptrdiff_t>(j);
            }
        }
        const std::size_t art = basis_[i];
        if (best < 0) {
            // Redundant row: the artificial stays basic, pinned at zero.
            upper_(static_cast<Eigen::Index>(art)) = 0.0;
            continue;
        }
        const auto q = static_cast<std::size_t>(best);
        const double value = column_value(q);
        pivot(i, q);
        state_[art] = VarState::lower;
        state_[q] = VarState::basic;
        basis_[i] = q;
        beta_(ri) = value;
    }
    for (std::size_t j = first_art_; j < ncols_; ++j)
        if (state_[j] != VarState::basic) upper_(static_cast<Eigen::Index>(j)) = 0.0;
}

LpResult Simplex::run() {
    LpResult result;
    if (!build(result)) return result;

    if (first_art_ < ncols_) {
        Vector cost1 = Vector::Zero(static_cast<Eigen::Index>(ncols_));
        cost1.tail(static_cast<Eigen::Index>(ncols_ - first_art_)).setOnes();
        price(cost1);
        if (!iterate(false, result)) {
            if (result.status == LpStatus::unbounded) result.status = LpStatus::numerical_failure;
            result.iterations = iterations_;
            return result;
        }
        double infeasibility = 0.0;
        for (std::size_t i = 0; i < m_; ++i)
            if (basis_[i] >= first_art_) infeasibility += std::abs(beta_(static_cast<Eigen::Index>(i)));
        double scale = 1.0;
        if (p_.b_eq.size()) scale = std::max(scale, p_.b_eq.cwiseAbs().maxCoeff());
        if (p_.b_ub.size()) scale = std::max(scale, p_.b_ub.cwiseAbs().maxCoeff());
        if (infeasibility > opt_.feasibility_tol * scale) {
            result.status = LpStatus::infeasible;
            result.diagnostics = "phase one residual " + std::to_string(infeasibility);
            result.iterations = iterations_;
            return result;
        }
        drive_out_artificials();
    }

    price(cost2_);
    if (!iterate(true, result)) {
        result.iterations = iterations_;
        return result;
    }

    // Map back to the original variables.
    const auto n = p_.c.size();
    result.z = offset_;
    for (std::size_t j = 0; j < first_art_; ++j) {
        if (cols_[j].orig < 0) continue;
        result.z(cols_[j].orig) += cols_[j].sign * column_value(j);
    }
    result.objective = p_.c.dot(result.z);

    const auto m_eq = p_.a_eq.rows();
    const auto m_ub = p_.a_ub.rows();
    result.dual_eq = Vector(m_eq);
    result.dual_ub = Vector(m_ub);
    for (std::size_t i = 0; i < m_; ++i) {
        const auto init = static_cast<Eigen::Index>(init_col_[i]);
        const double y = (cost2_(init) - d_(init)) * flip_[i];
        const auto ri = static_cast<Eigen::Index>(i);
        if (ri < m_eq)
            result.dual_eq(ri) = y;
        else
            result.dual_ub(ri - m_eq) = y;
    }

    // Lagrangian bound at the recovered multipliers.
    Vector mu = result.dual_ub.cwiseMin(0.0);
    Vector reduced = p_.c;
    double bound = 0.0;
    if (m_eq) {
        reduced -= p_.a_eq.transpose() * result.dual_eq;
        bound += p_.b_eq.dot(result.dual_eq);
    }
    if (m_ub) {
        reduced -= p_.a_ub.transpose() * mu;
        bound += p_.b_ub.dot(mu);
    }
    const double scale = 1.0 + (n ? p_.c.cwiseAbs().maxCoeff() : 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double r = reduced(j);
        const double lb = p_.lb(j), ub = p_.ub(j);
        if (std::abs(r) <= 1e-9 * scale) {
            const double at = std::isfinite(lb) ? lb : (std::isfinite(ub) ? ub : 0.0);
            bound += r * at;
        } else if (r > 0.0) {
            bound = std::isfinite(lb) ? bound + r * lb : -kInf;
        } else {
            bound = std::isfinite(ub) ? bound + r * ub : -kInf;
        }
    }
    result.dual_bound = bound;

    double residual = 0.0;
    if (m_eq) residual = std::max(residual, (p_.a_eq * result.z - p_.b_eq).cwiseAbs().maxCoeff());
    if (m_ub) residual = std::max(residual, (p_.a_ub * result.z - p_.b_ub).cwiseMax(0.0).maxCoeff());
    for (Eigen::Index j = 0; j < n; ++j) {
        residual = std::max(residual, p_.lb(j) - result.z(j));
        residual = std::max(residual, result.z(j) - p_.ub(j));
    }
    result.primal_residual = residual;
    result.iterations = iterations_;
    result.status = LpStatus::optimal;
    if (residual > 1e-6 * (1.0 + (m_eq ? p_.b_eq.cwiseAbs().maxCoeff() : 0.0) +
                           (m_ub ? p_.b_ub.cwiseAbs().maxCoeff() : 0.0))) {
        result.status = LpStatus::numerical_failure;
        result.diagnostics = "primal residual " + std::to_string(residual);
    }
    return result;
}

}  // namespace

LpResult solve_lp(const LpProblem& problem, const SimplexOptions& options) {
    const auto n = problem.c.size();
    if (problem.lb.size() != n || problem.ub.size() != n || problem.a_eq.cols() != n ||
        problem.a_ub.cols() != n || problem.a_eq.rows() != problem.b_eq.size() ||
        problem.a_ub.rows() != problem.b_ub.size())
        throw ValidationError("solve_lp: inconsistent problem dimensions");
    Simplex simplex(problem, options);
    return simplex.run();
}

// ===========================================================================
// Branch and bound

IlpResult solve_ilp(const IlpProblem& problem, const BranchAndBoundOptions& options) {
    const auto n = problem.lp.c.size();
    if (static_cast<Eigen::Index>(problem.integer.size()) != n)
        throw ValidationError("solve_ilp: integrality mask size mismatch");

    bool integral_objective = true;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double c = problem.lp.c(j);
        if (problem.integer[static_cast<std::size_t>(j)]) {
            if (std::abs(c - std::round(c)) > 1e-12) integral_objective = false;
        } else if (c != 0.0) {
            integral_objective = false;
        }
    }

    struct Node {
        Vector lb;
        Vector ub;
    };
    std::vector<Node> stack;
    stack.push_back({problem.lp.lb, problem.lp.ub});

    IlpResult best;
    LpProblem work = problem.lp;
    bool hit_limit = false;
    bool unbounded = false;

    while (!stack.empty()) {
        if (best.nodes >= options.node_limit) {
            hit_limit = true;
            break;
        }
        Node node = std::move(stack.back());
        stack.pop_back();
        ++best.nodes;

        work.lb = node.lb;
        work.ub = node.ub;
        const LpResult lp = solve_lp(work, options.lp);
        if (lp.status == LpStatus::infeasible) continue;
        if (lp.status == LpStatus::unbounded) {
            unbounded = true;
            break;
        }
        if (lp.status != LpStatus::optimal) continue;

        double bound = lp.objective;
        if (integral_objective) bound = std::ceil(bound - 1e-6);
        if (bound >= best.objective - 1e-9) continue;

        std::ptrdiff_t branch = -1;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!problem.integer[static_cast<std::size_t>(j)]) continue;
            const double v = lp.z(j);
            if (std::abs(v - std::round(v)) > options.integrality_tol) {
                branch = j;
                break;
            }
        }
        if (branch < 0) {
            best.z = lp.z;
            for (Eigen::Index j = 0; j < n; ++j)
                if (problem.integer[static_cast<std::size_t>(j)]) best.z(j) = std::round(best.z(j));
            best.objective = problem.lp.c.dot(best.z);
            continue;
        }
        const double v = lp.z(branch);
        Node up = node;
        up.lb(branch) = std::ceil(v);
        Node down = std::move(node);
        down.ub(branch) = std::floor(v);
        stack.push_back(std::move(up));
        stack.push_back(std::move(down));
    }

    if (unbounded) {
        best.status = LpStatus::unbounded;
    } else if (hit_limit) {
        best.status = LpStatus::node_limit;
    } else {
        best.status = std::isfinite(best.objective) ? LpStatus::optimal : LpStatus::infeasible;
    }
    return best;
}

// ===========================================================================
// Coordinate-descent LASSO

namespace {

double soft_threshold(double value, double threshold) {
    if (value > threshold) return value - threshold;
    if (value < -threshold) return value + threshold;
    return 0.0;
}

}  // namespace

LassoResult solve_constrained_lasso(const LassoProblem& problem, const LassoOptions& options) {
    const auto rows = problem.a.rows();
    const auto cols = problem.a.cols();
    if (problem.y.size() != rows) throw ValidationError("solve_constrained_lasso: y/A row mismatch");
    if (problem.lambda < 0.0) throw ValidationError("solve_constrained_lasso: lambda must be nonnegative");

    std::vector<bool> active(static_cast<std::size_t>(cols), true);
    for (std::size_t j : problem.fixed_zero) {
        if (static_cast<Eigen::Index>(j) >= cols) throw ValidationError("solve_constrained_lasso: fixed index out of range");
        active[j] = false;
    }

    const Vector norms2 = problem.a.colwise().squaredNorm().transpose();
    LassoResult result;
    result.s = Vector::Zero(cols);
    Vector residual = problem.y;
    const double half_lambda = 0.5 * problem.lambda;

#ifndef NDEBUG
    auto objective = [&] { return residual.squaredNorm() + problem.lambda * result.s.lpNorm<1>(); };
    double previous = objective();
#endif

    for (result.sweeps = 0; result.sweeps < options.max_sweeps;) {
        ++result.sweeps;
        double max_delta = 0.0;
        for (Eigen::Index j = 0; j < cols; ++j) {
            if (!active[static_cast<std::size_t>(j)] || norms2(j) <= 0.0) continue;
            const double old = result.s(j);
            const double rho = problem.a.col(j).dot(residual) + norms2(j) * old;
            const double updated = soft_threshold(rho, half_lambda) / norms2(j);
            const double delta = updated - old;
            if (delta != 0.0) {
                residual.noalias() -= delta * problem.a.col(j);
                result.s(j) = updated;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
#ifndef NDEBUG
        const double current = objective();
        assert(current <= previous + 1e-9 * (1.0 + std::abs(previous)));
        previous = current;
#endif
        if (max_delta < options.update_tol) {
            result.converged = true;
            break;
        }
    }
    result.residual_norm = residual.norm();
    result.objective = residual.squaredNorm() + problem.lambda * result.s.lpNorm<1>();
    return result;
}

// ===========================================================================
// Pinned symmetric solves

PinnedSolver::PinnedSolver(const SparseMatrix& a, std::span<const std::size_t> pinned)
    : n_(static_cast<std::size_t>(a.rows())) {
    if (a.rows() != a.cols()) throw ValidationError("PinnedSolver: matrix must be square");
    reduced_index_.assign(n_, 0);
    for (std::size_t k : pinned) {
        if (k >= n_) throw ValidationError("PinnedSolver: pinned index out of range");
        reduced_index_[k] = -1;
    }
    for (std::size_t i = 0; i < n_; ++i) {
        if (reduced_index_[i] < 0) continue;
        reduced_index_[i] = static_cast<std::ptrdiff_t>(free_.size());
        free_.push_back(i);
    }

    const auto nf = static_cast<Eigen::Index>(free_.size());
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(a.nonZeros()));
    for (Eigen::Index col = 0; col < a.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
            const auto r = reduced_index_[static_cast<std::size_t>(it.row())];
            const auto c = reduced_index_[static_cast<std::size_t>(it.col())];
            if (r >= 0 && c >= 0) triplets.emplace_back(r, c, it.value());
        }
    }
    SparseMatrix reduced(nf, nf);
    reduced.setFromTriplets(triplets.begin(), triplets.end());

    factor_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>();
    if (nf == 0) return;
    factor_->compute(reduced);
    if (factor_->info() != Eigen::Success) throw StructuralError("pinned system is singular");
    const Vector diag = factor_->vectorD();
    const double largest = diag.cwiseAbs().maxCoeff();
    if (!(diag.cwiseAbs().minCoeff() > 1e-13 * std::max(1.0, largest)))
        throw StructuralError("pinned system is singular (zero pivot)");
}

Vector PinnedSolver::solve(const Vector& b) const {
    if (static_cast<std::size_t>(b.size()) != n_) throw ValidationError("PinnedSolver: rhs size mismatch");
    Vector x = Vector::Zero(b.size());
    if (free_.empty()) return x;
    Vector rhs(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t k = 0; k < free_.size(); ++k) rhs(static_cast<Eigen::Index>(k)) = b(static_cast<Eigen::Index>(free_[k]));
    const Vector sol = factor_->solve(rhs);
    for (std::size_t k = 0; k < free_.size(); ++k) x(static_cast<Eigen::Index>(free_[k])) = sol(static_cast<Eigen::Index>(k));
    return x;
}

Vector solve_linear_system(const SparseMatrix& a, const Vector& b, std::span<const std::size_t> pinned) {
    return PinnedSolver(a, pinned).solve(b);
}

Vector solve_linear_system(const Matrix& a, const Vector& b, std::span<const std::size_t> pinned) {
    SparseMatrix sparse = a.sparseView();
    return PinnedSolver(sparse, pinned).solve(b);
}

}  // namespace cascade
