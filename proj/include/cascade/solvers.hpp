#ifndef CASCADE_SOLVERS_HPP
#define CASCADE_SOLVERS_HPP

// Self-contained optimization kernels: bounded-variable simplex, binary
// branch-and-bound, coordinate-descent LASSO, and pinned symmetric solves.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cascade {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Linear programming

/// minimize c'z  s.t.  a_eq z = b_eq,  a_ub z <= b_ub,  lb <= z <= ub.
/// Bounds may be +-kInf. Empty constraint blocks are 0 x n matrices.
struct LpProblem {
    Vector c;
    Matrix a_eq;
    Vector b_eq;
    Matrix a_ub;
    Vector b_ub;
    Vector lb;
    Vector ub;

    std::size_t variable_count() const { return static_cast<std::size_t>(c.size()); }

    /// Problem with n variables, no constraints, bounds [0, +inf).
    static LpProblem with_variables(std::size_t n);
    void add_equality(const Vector& row, double rhs);
    void add_inequality(const Vector& row, double rhs);
};

enum class LpStatus { optimal, infeasible, unbounded, numerical_failure, node_limit };

const char* to_string(LpStatus status);

struct LpResult {
    LpStatus status = LpStatus::numerical_failure;
    Vector z;
    double objective = kInf;
    /// Multipliers with c - A'y as reduced costs; dual_ub <= 0 at optimum.
    Vector dual_eq;
    Vector dual_ub;
    /// Lagrangian lower bound evaluated at (dual_eq, dual_ub).
    double dual_bound = -kInf;
    /// max violation of equality rows, inequality rows and bounds at z.
    double primal_residual = kInf;
    std::size_t iterations = 0;
    std::string diagnostics;
};

struct SimplexOptions {
    double pivot_tol = 1e-9;
    double optimality_tol = 1e-9;
    double feasibility_tol = 1e-8;
    std::size_t max_iterations = 200000;
    /// Consecutive degenerate pivots before pricing falls back to Bland's rule.
    std::size_t degenerate_switch = 50;
};

LpResult solve_lp(const LpProblem& problem, const SimplexOptions& options = {});

// ---------------------------------------------------------------------------
// Integer programming

struct IlpProblem {
    LpProblem lp;
    /// Variables required to be integral. Only binaries are supported.
    std::vector<bool> integer;
};

struct BranchAndBoundOptions {
    SimplexOptions lp;
    double integrality_tol = 1e-6;
    std::size_t node_limit = 1000000;
};

struct IlpResult {
    LpStatus status = LpStatus::infeasible;
    Vector z;
    double objective = kInf;
    std::size_t nodes = 0;
};

/// Depth-first branch and bound; branches on the lowest-index fractional
/// variable and explores the 0-branch first.
IlpResult solve_ilp(const IlpProblem& problem, const BranchAndBoundOptions& options = {});

// ---------------------------------------------------------------------------
// Sparse recovery

/// minimize ||y - A s||_2^2 + lambda ||s||_1  with s_j = 0 for j in fixed_zero.
struct LassoProblem {
    Vector y;
    Matrix a;
    double lambda = 0.0;
    std::vector<std::size_t> fixed_zero;
};

struct LassoOptions {
    double update_tol = 1e-9;
    std::size_t max_sweeps = 10000;
};

struct LassoResult {
    Vector s;
    bool converged = false;
    std::size_t sweeps = 0;
    double objective = 0.0;
    double residual_norm = 0.0;
};

LassoResult solve_constrained_lasso(const LassoProblem& problem, const LassoOptions& options = {});

// ---------------------------------------------------------------------------
// Linear systems

/// Factorization of a symmetric matrix with selected rows/columns pinned:
/// pinned unknowns are fixed at zero and their equations dropped. The
/// remaining block must be positive definite (a Laplacian with one pinned
/// bus per connected component satisfies this).
class PinnedSolver {
public:
    PinnedSolver(const SparseMatrix& a, std::span<const std::size_t> pinned);

    std::size_t size() const { return n_; }
    Vector solve(const Vector& b) const;

private:
    std::size_t n_ = 0;
    std::vector<std::ptrdiff_t> reduced_index_;
    std::vector<std::size_t> free_;
    std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> factor_;
};

Vector solve_linear_system(const SparseMatrix& a, const Vector& b, std::span<const std::size_t> pinned);
Vector solve_linear_system(const Matrix& a, const Vector& b, std::span<const std::size_t> pinned);

}  // namespace cascade

#endif
