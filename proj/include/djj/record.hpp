#pragma once
// Steady-state scan records shared by the solvers and the sweep engine.

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>

namespace djj {

enum class InitialCondition { Full, Empty };
enum class SolverKind { Meanfield, TwoMode };

inline const char* to_string(InitialCondition ic) {
    return ic == InitialCondition::Full ? "Full" : "Empty";
}
inline const char* to_string(SolverKind s) {
    return s == SolverKind::Meanfield ? "Meanfield" : "TwoMode";
}

struct SteadyStateRecord {
    double j_coupling = 0;
    double gamma = 0;
    InitialCondition initial_condition = InitialCondition::Full;
    double filling_ratio = 0;          // N_S / N0, in [0, 1.05]
    double current = 0;                // gamma * N_S, fixed by construction
    double delta_phi = 0;
    std::optional<double> tau;         // empty = NotConverged
    bool converged = true;             // steady value certified within t_max
    SolverKind solver = SolverKind::TwoMode;
};

// current = gamma * ratio * n0 is enforced here so the self-consistency
// invariant holds for every record in the system.
inline SteadyStateRecord make_record(double j, double gamma, InitialCondition ic,
                                     double filling_ratio, double n0,
                                     double delta_phi, std::optional<double> tau,
                                     bool converged, SolverKind solver) {
    if (filling_ratio < -1e-9 || filling_ratio > 1.05 + 1e-9)
        throw std::invalid_argument("filling_ratio outside [0, 1.05]: " +
                                    std::to_string(filling_ratio));
    SteadyStateRecord r;
    r.j_coupling = j;
    r.gamma = gamma;
    r.initial_condition = ic;
    r.filling_ratio = std::min(std::max(filling_ratio, 0.0), 1.05);
    r.current = gamma * r.filling_ratio * n0;
    r.delta_phi = delta_phi;
    r.tau = tau;
    r.converged = converged;
    r.solver = solver;
    return r;
}

} // namespace djj
