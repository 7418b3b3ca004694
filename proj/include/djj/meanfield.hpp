#pragma once
// Dissipative discrete nonlinear Schroedinger equation on an open chain:
//   dpsi_n/dt = i*Jt_n*(psi_{n-1}+psi_{n+1}) - i*U|psi_n|^2 psi_n
//               - delta_{nm}*(gamma/2)*psi_n
// with the effective coupling Jt on the two bonds touching the lossy site
// and bare J elsewhere.  Also provides the analytic Bloch steady state.

#include <complex>
#include <iostream>
#include <vector>

#include "integrate.hpp"
#include "types.hpp"

namespace djj {


struct MeanfieldState {
    std::vector<cdouble> amplitudes;
    double time = 0.0;

    double filling(int n) const { return std::norm(amplitudes[n]); }
    double total_norm() const {
        double s = 0;
        for (const auto& a : amplitudes) s += std::norm(a);
        return s;
    }
};

struct BlochSteadyState {
    double delta_phi;       // adjacent-site phase difference, radians
    double quasi_momentum;  // q = delta_phi per lattice period
    double filling;         // atoms per site
};

struct NoSuperfluidSteadyState : std::runtime_error {
    NoSuperfluidSteadyState()
        : std::runtime_error("gamma > 4J: supercurrent cannot balance the loss; "
                             "no superfluid steady state") {}
};

// Effective coupling on the two bonds touching the lossy site, from the
// filling imbalance between the lossy site and its neighbor average.
inline double lossy_bond_coupling(const std::vector<cdouble>& amps,
                                  const LatticeParams& p, const CouplingModel& cm) {
    int m = p.lossy_site;
    double nb = 0.0;
    int cnt = 0;
    if (m - 1 >= 0)         { nb += std::norm(amps[m - 1]); ++cnt; }
    if (m + 1 < p.n_sites)  { nb += std::norm(amps[m + 1]); ++cnt; }
    double mean_neighbor = cnt ? nb / cnt : 0.0;
    if (p.j_coupling == 0.0) return 0.0;  // decoupled-site limit of J' in (0, J]
    return effective_coupling(cm, p.j_coupling, mean_neighbor - std::norm(amps[m]));
}

inline void dnls_rhs_raw(const std::vector<cdouble>& amps, const LatticeParams& p,
                         const CouplingModel& cm, std::vector<cdouble>& out) {
    const int n = p.n_sites;
    if (static_cast<int>(amps.size()) != n)
        throw std::invalid_argument("dnls_rhs: state length does not match n_sites");
    out.resize(n);
    const double jprime = lossy_bond_coupling(amps, p, cm);
    const int m = p.lossy_site;
    const cdouble iu(0.0, 1.0);
    for (int k = 0; k < n; ++k) {
        cdouble hop(0.0, 0.0);
        if (k - 1 >= 0) {
            double jb = (k == m || k - 1 == m) ? jprime : p.j_coupling;
            hop += jb * amps[k - 1];
        }
        if (k + 1 < n) {
            double jb = (k == m || k + 1 == m) ? jprime : p.j_coupling;
            hop += jb * amps[k + 1];
        }
        out[k] = iu * hop - iu * p.u_interaction * std::norm(amps[k]) * amps[k];
        if (k == m) out[k] -= 0.5 * p.gamma * amps[k];
    }
}

inline MeanfieldState dnls_rhs(const MeanfieldState& s, const LatticeParams& p,
                               const CouplingModel& cm) {
    MeanfieldState d;
    d.time = s.time;
    dnls_rhs_raw(s.amplitudes, p, cm, d.amplitudes);
    return d;
}

struct EvolveOptions {
    double tol = 1e-8;
    int n_samples = 201;     // sample count including the initial point
    bool clamp_edges = false;  // hold |psi| at the chain ends to sqrt(n0)
};

struct MeanfieldTrajectory {
    std::vector<MeanfieldState> states;
    bool aborted_depletion = false;  // reservoir lost >10%: model assumption broken
};

inline MeanfieldTrajectory evolve(MeanfieldState state, const LatticeParams& p,
                                  const CouplingModel& cm, double t_final,
                                  const EvolveOptions& opt) {
    cm.validate();  // lattice left unchecked: the J = 0 decoupled limit is legal here
    if (static_cast<int>(state.amplitudes.size()) != p.n_sites)
        throw std::invalid_argument("evolve: state length does not match n_sites");
    if (!(t_final > 0)) throw std::invalid_argument("evolve: t_final must be > 0");
    if (!(opt.tol > 0)) throw std::invalid_argument("evolve: tol must be > 0");
    if (opt.n_samples < 2) throw std::invalid_argument("evolve: need >= 2 samples");

    double reservoir0 = 0.0;
    for (int k = 0; k < p.n_sites; ++k)
        if (k != p.lossy_site) reservoir0 += std::norm(state.amplitudes[k]);

    auto rhs = [&](double, const std::vector<cdouble>& y, std::vector<cdouble>& dy) {
        dnls_rhs_raw(y, p, cm, dy);
    };
    auto hook = [&](double, std::vector<cdouble>& y) {
        if (!opt.clamp_edges) return false;
        const double target = std::sqrt(p.n0);
        for (int e : {0, p.n_sites - 1}) {
            double a = std::abs(y[e]);
            if (a > 0) y[e] *= target / a;  // magnitude only; phase stays free
        }
        return true;
    };

    MeanfieldTrajectory traj;
    traj.states.push_back(state);
    auto times = linspace(state.time, state.time + t_final, opt.n_samples);
    std::vector<cdouble> y = state.amplitudes;
    RK45Stepper<std::vector<cdouble>, decltype(rhs)&> stepper(
        rhs, y, state.time, opt.tol, t_final);
    for (int i = 1; i < opt.n_samples; ++i) {
        while (stepper.step(times[i])) {
            if (hook(stepper.t(), stepper.y_ref()))
                stepper.invalidate_derivative_cache();
        }
        MeanfieldState snap;
        snap.amplitudes = stepper.y();
        snap.time = times[i];
        traj.states.push_back(snap);
        if (reservoir0 > 0) {
            double res = 0.0;
            for (int k = 0; k < p.n_sites; ++k)
                if (k != p.lossy_site) res += std::norm(snap.amplitudes[k]);
            if (res < 0.9 * reservoir0) {
                std::cerr << "warning: reservoir depletion exceeded 10% at t = "
                          << times[i] << " s; stopping (reservoir assumption broken)\n";
                traj.aborted_depletion = true;
                break;
            }
        }
    }
    return traj;
}

inline MeanfieldTrajectory evolve(const MeanfieldState& state, const LatticeParams& p,
                                  const CouplingModel& cm, double t_final, double tol) {
    EvolveOptions opt;
    opt.tol = tol;
    return evolve(state, p, cm, t_final, opt);
}

inline BlochSteadyState analytic_bloch_steady_state(const LatticeParams& p) {
    p.validate();
    double x = p.gamma / (4.0 * p.j_coupling);
    if (x > 1.0) throw NoSuperfluidSteadyState();
    BlochSteadyState b;
    b.delta_phi = std::asin(x);  // principal branch: [0, pi/2]
    b.quasi_momentum = b.delta_phi;
    b.filling = p.n0;
    return b;
}

enum class InitialKind { FullUniform, EmptyLossySite };

inline MeanfieldState prepare_initial(const LatticeParams& p, InitialKind kind,
                                      double seed_fraction = 1e-3) {
    p.validate();
    MeanfieldState s;
    s.amplitudes.assign(p.n_sites, cdouble(std::sqrt(p.n0), 0.0));
    if (kind == InitialKind::EmptyLossySite) {
        require(seed_fraction > 0 && seed_fraction < 1,
                "seed_fraction must be in (0,1): a zero amplitude has no phase to "
                "seed refilling");
        s.amplitudes[p.lossy_site] = cdouble(std::sqrt(seed_fraction * p.n0), 0.0);
    }
    return s;
}

// Phase-tent Bloch state: sqrt(N0) * exp(-i*|n-m|*delta_phi).  Atoms flow
// from both edges toward the lossy site; interior fillings are stationary
// when sin(delta_phi) = gamma/(4J).
inline MeanfieldState bloch_lattice_state(const LatticeParams& p, double delta_phi) {
    p.validate();
    MeanfieldState s;
    s.amplitudes.resize(p.n_sites);
    double a = std::sqrt(p.n0);
    for (int k = 0; k < p.n_sites; ++k) {
        double phi = -std::abs(k - p.lossy_site) * delta_phi;
        s.amplitudes[k] = std::polar(a, phi);
    }
    return s;
}

// Reservoir-to-site current I(t) = dN_m/dt + gamma*N_m, with the filling
// derivative taken by finite differences along the sampled trajectory.
inline std::vector<double> site_current(const MeanfieldTrajectory& traj,
                                        const LatticeParams& p) {
    const auto& st = traj.states;
    if (st.empty()) throw std::invalid_argument("site_current: empty trajectory");
    const int m = p.lossy_site;
    const std::size_t n = st.size();
    std::vector<double> out(n, 0.0);
    auto nm = [&](std::size_t i) { return st[i].filling(m); };
    for (std::size_t i = 0; i < n; ++i) {
        double dndt = 0.0;
        if (n >= 2) {
            if (i == 0)
                dndt = (nm(1) - nm(0)) / (st[1].time - st[0].time);
            else if (i == n - 1)
                dndt = (nm(n - 1) - nm(n - 2)) / (st[n - 1].time - st[n - 2].time);
            else {
                // central difference on a possibly non-uniform grid
                double h1 = st[i].time - st[i - 1].time;
                double h2 = st[i + 1].time - st[i].time;
                dndt = (nm(i + 1) * h1 * h1 - nm(i - 1) * h2 * h2
                        + nm(i) * (h2 * h2 - h1 * h1)) / (h1 * h2 * (h1 + h2));
            }
        }
        out[i] = dndt + p.gamma * nm(i);
    }
    return out;
}

} // namespace djj
