#pragma once
// Lumped model of the lossy site fed by two reservoir leads:
//   dN/dt   = -gamma*N + 4*J'(dN)*sqrt(N*N0)*sin(dPhi) + kappa*(N0 - N)
//   dPhi/dt = mu(N0) - mu(N)
// with dN = N0 - N, kappa = c*J^2.  The factor 4 reproduces the lattice
// steady-state relation sin(dPhi) = gamma/(4J) at N = N0.

#include <array>
#include <cmath>
#include <complex>
#include <iostream>
#include <optional>
#include <vector>

#include "integrate.hpp"
#include "record.hpp"
#include "types.hpp"

namespace djj {

inline double wrap_phase(double phi) {
    double w = std::remainder(phi, 2.0 * M_PI);  // lands in [-pi, pi]
    if (w <= -M_PI) w = M_PI;                    // store (-pi, pi]
    return w;
}

struct TwoModeState {
    double n = 0.0;         // lossy-site filling, atoms
    double delta_phi = 0.0; // reservoir-to-site phase difference

    TwoModeState() = default;
    TwoModeState(double n_, double phi_) : n(n_), delta_phi(wrap_phase(phi_)) {
        if (!(n >= 0) || !finite(n))
            throw std::domain_error("TwoModeState: filling must be >= 0");
    }
};

struct RateModelParams {
    LatticeParams lattice;
    CouplingModel coupling;
    double kappa_coefficient = 2e-3;   // kappa = c * J^2
    ChemicalPotentialModel mu_model;

    double kappa() const {
        return kappa_coefficient * lattice.j_coupling * lattice.j_coupling;
    }
    void validate() const {
        lattice.validate();
        coupling.validate();
        mu_model.validate();
        require(finite(kappa_coefficient) && kappa_coefficient >= 0,
                "kappa_coefficient must be >= 0");
    }
};

enum class Stability { Stable, Unstable, Saddle };

inline const char* to_string(Stability s) {
    switch (s) {
        case Stability::Stable: return "Stable";
        case Stability::Unstable: return "Unstable";
        default: return "Saddle";
    }
}

struct FixedPoint {
    TwoModeState state;
    Stability stability;
    std::array<std::complex<double>, 2> eigenvalues;
};

namespace detail {
// Flow field without wrapping; n below zero (finite-difference probes,
// integrator overshoot) is evaluated at the n = 0 boundary.
inline void two_mode_flow(const RateModelParams& p, double n, double phi,
                          double& dn, double& dphi) {
    const auto& L = p.lattice;
    double nc = std::max(n, 0.0);
    double jp = effective_coupling(p.coupling, L.j_coupling, L.n0 - nc);
    dn = -L.gamma * nc + 4.0 * jp * std::sqrt(nc * L.n0) * std::sin(phi)
         + p.kappa() * (L.n0 - nc);
    dphi = p.mu_model.mu(L.n0) - p.mu_model.mu(nc);
}
} // namespace detail

inline TwoModeState rate_rhs(const TwoModeState& s, const RateModelParams& p) {
    if (!(s.n >= 0)) throw std::domain_error("rate_rhs: filling must be >= 0");
    double dn, dphi;
    detail::two_mode_flow(p, s.n, s.delta_phi, dn, dphi);
    TwoModeState d;       // derivative container; no wrapping applies
    d.n = dn;
    d.delta_phi = dphi;
    return d;
}

inline double default_t_max(const RateModelParams& p) {
    double by_j = 1e4 / p.lattice.j_coupling;
    if (p.lattice.gamma <= 0) return by_j;
    return std::max(100.0 / p.lattice.gamma, by_j);
}

// tau criterion on a sampled series: first time after which the series
// stays within eps_abs of target.  The certified tail must span at least
// certified_fraction of the full window, else the result does not count
// as converged (guards against a trajectory that only brushes the band
// near the end of the window).
inline std::optional<double> tau_from_series(const std::vector<double>& times,
                                             const std::vector<double>& values,
                                             double target, double eps_abs,
                                             double certified_fraction = 0.1) {
    if (times.empty() || times.size() != values.size())
        throw std::invalid_argument("tau_from_series: bad series");
    std::ptrdiff_t last_bad = -1;
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(times.size()); ++i)
        if (std::abs(values[i] - target) >= eps_abs) last_bad = i;
    if (last_bad + 1 >= static_cast<std::ptrdiff_t>(times.size()))
        return std::nullopt;  // never entered the band for good
    double tau = (last_bad < 0) ? times.front() : times[last_bad + 1];
    double window = times.back() - times.front();
    if (window > 0 && (times.back() - tau) < certified_fraction * window)
        return std::nullopt;
    return tau - times.front();
}

struct SettleResult {
    double n_steady = 0;            // trailing-window mean, snapped to N0 when locked
    double phi_final = 0;           // wrapped
    std::optional<double> tau;      // certified relaxation time, or NotConverged
    bool settled = false;           // trailing quarter-means agree
    TwoModeState final_state;
};

// Integrates the rate equations over [0, t_max] and characterizes the
// long-time behavior.  A state locked to the filled fixed point reports
// n_steady = N0 exactly; a running-phase (resistive) state reports the
// cycle-averaged filling with tau = NotConverged.
inline SettleResult settle(const RateModelParams& p, const TwoModeState& s0,
                           double epsilon = 0.05, double t_max = 0,
                           int n_samples = 0, double tol = 1e-8) {
    p.validate();
    if (!(epsilon > 0 && epsilon < 1))
        throw std::invalid_argument("settle: epsilon must be in (0,1)");
    if (t_max <= 0) t_max = default_t_max(p);
    if (n_samples <= 0) {
        // ~1 ms sampling resolves the Josephson oscillation so the tau
        // criterion cannot alias across band excursions
        n_samples = std::clamp(int(t_max * 1000.0) + 1, 2001, 60001);
    }

    auto rhs = [&](double, const std::vector<double>& y, std::vector<double>& dy) {
        dy.resize(2);
        detail::two_mode_flow(p, y[0], y[1], dy[0], dy[1]);
    };
    std::vector<double> y{s0.n, s0.delta_phi};
    auto times = linspace(0.0, t_max, n_samples);
    std::vector<double> ns(n_samples);
    ns[0] = y[0];
    RK45Stepper<std::vector<double>, decltype(rhs)&> stepper(rhs, y, 0.0, tol, t_max);
    for (int i = 1; i < n_samples; ++i) {
        while (stepper.step(times[i])) {}
        ns[i] = std::max(stepper.y()[0], 0.0);
    }
    y = stepper.y();

    const double n0 = p.lattice.n0;
    int q = n_samples / 4;
    auto mean = [&](int a, int b) {
        double s = 0;
        for (int i = a; i < b; ++i) s += ns[i];
        return s / std::max(b - a, 1);
    };
    double m_prev = mean(n_samples - 2 * q, n_samples - q);
    double m_last = mean(n_samples - q, n_samples);
    double var = 0;
    for (int i = n_samples - q; i < n_samples; ++i)
        var += (ns[i] - m_last) * (ns[i] - m_last);
    double sd = std::sqrt(var / std::max(q, 1));

    SettleResult r;
    r.settled = std::abs(m_last - m_prev) < 1e-3 * n0;
    r.n_steady = m_last;
    if (sd < 1e-3 * n0 && std::abs(m_last - n0) < 1e-2 * n0)
        r.n_steady = n0;  // locked fixed point sits exactly at N0
    r.phi_final = wrap_phase(y[1]);
    r.final_state = TwoModeState(std::max(y[0], 0.0), y[1]);
    r.tau = tau_from_series(times, ns, r.n_steady, epsilon * n0);
    return r;
}

struct DivergentError : std::runtime_error {
    explicit DivergentError(double t_max)
        : std::runtime_error("no convergence to the attracting steady state "
                             "within t_max = " + std::to_string(t_max) + " s") {}
};

// tau = first time after which |N(t) - N_S| < epsilon*N0 for all later
// sampled times, with N_S the steady value this initial condition reaches.
inline double relaxation_time(const RateModelParams& p, const TwoModeState& initial,
                              double epsilon = 0.05, double t_max = 0) {
    if (t_max <= 0) t_max = default_t_max(p);
    SettleResult r = settle(p, initial, epsilon, t_max);
    if (!r.tau) throw DivergentError(t_max);
    return *r.tau;
}

// --- fixed points -----------------------------------------------------------

namespace detail {

struct Jac2 {
    double a11, a12, a21, a22;
};

// Central finite differences, step 1e-6 relative to each variable's scale.
inline Jac2 flow_jacobian(const RateModelParams& p, double n, double phi) {
    double hn = 1e-6 * std::max(std::abs(n), p.lattice.n0);
    double hp = 1e-6 * std::max(std::abs(phi), 1.0);
    double f1p, f2p, f1m, f2m;
    Jac2 J;
    two_mode_flow(p, n + hn, phi, f1p, f2p);
    two_mode_flow(p, n - hn, phi, f1m, f2m);
    J.a11 = (f1p - f1m) / (2 * hn);
    J.a21 = (f2p - f2m) / (2 * hn);
    two_mode_flow(p, n, phi + hp, f1p, f2p);
    two_mode_flow(p, n, phi - hp, f1m, f2m);
    J.a12 = (f1p - f1m) / (2 * hp);
    J.a22 = (f2p - f2m) / (2 * hp);
    return J;
}

inline std::array<std::complex<double>, 2> eig2(const Jac2& J) {
    double tr = J.a11 + J.a22;
    double det = J.a11 * J.a22 - J.a12 * J.a21;
    std::complex<double> disc = std::sqrt(std::complex<double>(tr * tr - 4 * det, 0.0));
    return {0.5 * (tr + disc), 0.5 * (tr - disc)};
}

inline Stability classify_eigs(const std::array<std::complex<double>, 2>& ev) {
    double r1 = ev[0].real(), r2 = ev[1].real();
    if (r1 < 0 && r2 < 0) return Stability::Stable;
    bool real_pair = std::abs(ev[0].imag()) < 1e-12 * (1 + std::abs(r1));
    if (real_pair && r1 * r2 < 0) return Stability::Saddle;
    return Stability::Unstable;
}

} // namespace detail

// All fixed points of the flow in N in [0, 1.2*N0], dPhi in (-pi, pi]:
// dense grid bracketing, then damped Newton to residual < 1e-10*N0*J.
inline std::vector<FixedPoint> find_fixed_points(const RateModelParams& p) {
    p.validate();
    const double n0 = p.lattice.n0;
    const double res_tol = 1e-10 * n0 * p.lattice.j_coupling;
    const int KN = 97, KP = 129;
    const double n_hi = 1.2 * n0;

    std::vector<double> ngrid(KN), pgrid(KP);
    for (int i = 0; i < KN; ++i) ngrid[i] = n_hi * i / (KN - 1);
    for (int j = 0; j < KP; ++j) pgrid[j] = -M_PI + 2 * M_PI * j / (KP - 1);

    std::vector<double> f1(KN * KP), f2(KN * KP);
    for (int i = 0; i < KN; ++i)
        for (int j = 0; j < KP; ++j)
            detail::two_mode_flow(p, ngrid[i], pgrid[j], f1[i * KP + j], f2[i * KP + j]);

    auto newton = [&](double n, double phi, double& rn, double& rphi) {
        double fn, fp;
        detail::two_mode_flow(p, n, phi, fn, fp);
        double res = std::max(std::abs(fn), std::abs(fp));
        for (int it = 0; it < 200 && res >= res_tol; ++it) {
            auto J = detail::flow_jacobian(p, n, phi);
            double det = J.a11 * J.a22 - J.a12 * J.a21;
            if (std::abs(det) < 1e-300) return false;
            double dn = -(fn * J.a22 - fp * J.a12) / det;
            double dphi = -(J.a11 * fp - J.a21 * fn) / det;
            double lam = 1.0;
            for (; lam > 1e-6; lam *= 0.5) {
                double n_t = std::clamp(n + lam * dn, 0.0, n_hi + 0.05 * n0);
                double p_t = phi + lam * dphi;
                double g1, g2;
                detail::two_mode_flow(p, n_t, p_t, g1, g2);
                double r_t = std::max(std::abs(g1), std::abs(g2));
                if (r_t < res || r_t < res_tol) {
                    n = n_t; phi = p_t; fn = g1; fp = g2; res = r_t;
                    break;
                }
            }
            if (lam <= 1e-6) return false;
        }
        rn = n; rphi = phi;
        return res < res_tol;
    };

    std::vector<FixedPoint> found;
    auto try_from = [&](double n_init, double phi_init, int ci, int cj) {
        double rn, rphi;
        if (!newton(n_init, phi_init, rn, rphi)) {
            bool near_known = false;
            for (const auto& fp : found)
                if (std::abs(fp.state.n - n_init) < 0.1 * n0) near_known = true;
            if (!near_known)
                std::cerr << "warning: Newton failed on bracketed cell ["
                          << ngrid[ci] << "," << ngrid[ci + 1] << "] x ["
                          << pgrid[cj] << "," << pgrid[cj + 1] << "]\n";
            return;
        }
        if (rn < -1e-9 || rn > n_hi + 1e-6 * n0) return;
        rphi = wrap_phase(rphi);
        for (const auto& fp : found) {
            double dphi = std::abs(std::remainder(fp.state.delta_phi - rphi, 2 * M_PI));
            if (std::abs(fp.state.n - rn) < 1e-7 * n0 && dphi < 1e-7) return;
        }
        FixedPoint fp;
        fp.state = TwoModeState(std::max(rn, 0.0), rphi);
        auto J = detail::flow_jacobian(p, fp.state.n, fp.state.delta_phi);
        fp.eigenvalues = detail::eig2(J);
        fp.stability = detail::classify_eigs(fp.eigenvalues);
        found.push_back(fp);
    };

    auto sign_mix = [](double a, double b, double c, double d) {
        double lo = std::min(std::min(a, b), std::min(c, d));
        double hi = std::max(std::max(a, b), std::max(c, d));
        return lo <= 0.0 && hi >= 0.0;
    };
    for (int i = 0; i + 1 < KN; ++i) {
        for (int j = 0; j + 1 < KP; ++j) {
            double a1 = f1[i * KP + j], b1 = f1[(i + 1) * KP + j];
            double c1 = f1[i * KP + j + 1], d1 = f1[(i + 1) * KP + j + 1];
            double a2 = f2[i * KP + j], b2 = f2[(i + 1) * KP + j];
            double c2 = f2[i * KP + j + 1], d2 = f2[(i + 1) * KP + j + 1];
            if (sign_mix(a1, b1, c1, d1) && sign_mix(a2, b2, c2, d2))
                try_from(0.5 * (ngrid[i] + ngrid[i + 1]),
                         0.5 * (pgrid[j] + pgrid[j + 1]), i, j);
        }
    }

    std::sort(found.begin(), found.end(), [](const FixedPoint& a, const FixedPoint& b) {
        if (a.state.n != b.state.n) return a.state.n < b.state.n;
        return a.state.delta_phi < b.state.delta_phi;
    });
    return found;
}

// --- sweeps -----------------------------------------------------------------

enum class SweepDirection { Up, Down };

inline TwoModeState empty_start() { return TwoModeState(0.0, 0.0); }
inline TwoModeState full_start(const RateModelParams& p) {
    return TwoModeState(p.lattice.n0, 0.0);
}

inline SteadyStateRecord steady_record(const RateModelParams& p, InitialCondition ic,
                                       const SettleResult& r) {
    return make_record(p.lattice.j_coupling, p.lattice.gamma, ic,
                       r.n_steady / p.lattice.n0, p.lattice.n0, r.phi_final,
                       r.tau, r.settled, SolverKind::TwoMode);
}

// Adiabatic continuation: the converged state at one gamma seeds the next.
// Up walks the grid in ascending order from the empty branch; Down walks
// it in descending order from the full branch.  Records return sorted by
// gamma ascending either way.
inline std::vector<SteadyStateRecord> hysteresis_sweep(RateModelParams p,
                                                       std::vector<double> gamma_grid,
                                                       SweepDirection dir,
                                                       double epsilon = 0.05) {
    p.validate();
    for (std::size_t i = 0; i + 1 < gamma_grid.size(); ++i)
        if (!(gamma_grid[i] < gamma_grid[i + 1]))
            throw std::invalid_argument("gamma_grid must be strictly ascending");
    for (double g : gamma_grid)
        require(finite(g) && g >= 0, "gamma_grid entries must be >= 0");

    std::vector<SteadyStateRecord> out;
    TwoModeState state = (dir == SweepDirection::Up) ? empty_start() : full_start(p);
    InitialCondition ic = (dir == SweepDirection::Up) ? InitialCondition::Empty
                                                      : InitialCondition::Full;
    std::vector<std::size_t> order(gamma_grid.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = (dir == SweepDirection::Up) ? i : order.size() - 1 - i;

    for (std::size_t k : order) {
        p.lattice.gamma = gamma_grid[k];
        SettleResult r = settle(p, state, epsilon);
        out.push_back(steady_record(p, ic, r));
        state = r.final_state;  // carried to the next grid point
    }
    std::sort(out.begin(), out.end(),
              [](const SteadyStateRecord& a, const SteadyStateRecord& b) {
                  return a.gamma < b.gamma;
              });
    return out;
}

inline std::vector<std::pair<double, double>>
current_voltage_curve(const std::vector<SteadyStateRecord>& records,
                      const ChemicalPotentialModel& mu, double n0) {
    std::vector<std::pair<double, double>> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        double ns = r.filling_ratio * n0;
        out.emplace_back(chemical_potential_difference(mu, n0, ns), r.current);
    }
    return out;
}

} // namespace djj
