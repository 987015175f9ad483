#ifndef CASCADE_CONTROL_HPP
#define CASCADE_CONTROL_HPP

// Preventive control: shed generation and load at controllable buses so the
// modeled flows on measured lines stay within rating, over the estimated
// admittance matrix.

#include "cascade/grid.hpp"

#include <span>
#include <string>
#include <vector>

namespace cascade {

/// Everything indexed globally over `network`'s buses and lines.
struct ControlProblem {
    const Grid* network = nullptr;            ///< line reactances and ratings
    std::vector<bool> model_closed;           ///< per line: closed in the estimated admittance
    std::vector<std::size_t> measured_lines;  ///< must be closed in the model
    Vector measured_flows;                    ///< one per measured line
    Vector gen;                               ///< current per-bus generation
    Vector load;                              ///< current per-bus demand
    std::vector<bool> controllable;           ///< per bus; others keep their set points
    double overload_penalty = 100.0;

    /// Lowest bus of each connected component of the model.
    std::vector<std::size_t> reference_buses() const;
};

struct ControlAction {
    Vector d_gen;       ///< per bus, <= 0
    Vector d_load;      ///< per bus, <= 0
    Vector overload;    ///< per measured line, >= 0
    double objective = 0.0;
    LpStatus status = LpStatus::optimal;
    bool flagged = false;  ///< LP failure: no-op action returned
    std::size_t rounds = 0;
    std::string diagnostics;

    static ControlAction none(std::size_t buses, std::size_t measured);
};

/// Full form over (dtheta, overload, d_gen, d_load) in that order:
/// minimize -1'd_load + penalty'overload s.t. d_gen - d_load = B dtheta,
/// dtheta_ref = 0, |flow + D M' dtheta| <= rating + overload on measured lines.
LpProblem build_control_lp(const ControlProblem& problem);

/// Splits a full-form solution vector into an action.
ControlAction action_from_full_solution(const ControlProblem& problem, const LpResult& result);

/// Same optimum as the full form, solved over the controllable set points
/// with line constraints added only once they bind or are violated.
ControlAction solve_preventive_control(const ControlProblem& problem);

/// Applies commands at controllable buses only, clamping at zero.
void apply_control(Grid& truth, const ControlAction& action, const std::vector<bool>& controllable);

}  // namespace cascade

#endif
