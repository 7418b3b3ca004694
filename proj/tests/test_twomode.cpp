#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "djj/rng.hpp"
#include "djj/sweep.hpp"
#include "djj/twomode.hpp"

using namespace djj;

namespace {

const double J = LatticeParams{}.j_coupling;  // 230 s^-1
const double N0 = LatticeParams{}.n0;         // 700

RateModelParams fc_params(double gamma_over_j, double sigma = 350.0) {
    RateModelParams p;
    p.coupling = {CouplingVariant::FranckCondon, sigma};
    p.lattice.gamma = gamma_over_j * J;
    return p;
}

RateModelParams constant_params(double gamma_over_j) {
    RateModelParams p;
    p.coupling = {CouplingVariant::Constant, 350.0};
    p.lattice.gamma = gamma_over_j * J;
    return p;
}

// evolve the raw flow from a given state for a fixed horizon
TwoModeState flow_to(const RateModelParams& p, TwoModeState s, double t_final,
                     double tol = 1e-10) {
    auto rhs = [&](double, const std::vector<double>& y, std::vector<double>& dy) {
        dy.resize(2);
        detail::two_mode_flow(p, y[0], y[1], dy[0], dy[1]);
    };
    std::vector<double> y{s.n, s.delta_phi};
    integrate_to(rhs, y, 0.0, t_final, tol);
    return TwoModeState(std::max(y[0], 0.0), y[1]);
}

} // namespace

TEST_CASE("wrap_phase: lands in (-pi, pi] and preserves the angle") {
    CHECK(wrap_phase(0.0) == 0.0);
    CHECK(wrap_phase(M_PI) == M_PI);
    CHECK(wrap_phase(-M_PI) == M_PI);
    CHECK(wrap_phase(2.0 * M_PI) == 0.0);
    CHECK(wrap_phase(M_PI + 0.1) == doctest::Approx(-M_PI + 0.1).epsilon(1e-14));
    for (double x : {-9.0, -3.2, -0.4, 1.1, 4.9, 31.7, 100.0 * M_PI + 0.3}) {
        double w = wrap_phase(x);
        CHECK(w > -M_PI);
        CHECK(w <= M_PI);
        CHECK(std::abs(std::polar(1.0, w) - std::polar(1.0, x)) < 1e-12);
    }
}

TEST_CASE("TwoModeState: wraps the phase, rejects bad fillings") {
    TwoModeState s(700.0, 2.0 * M_PI + 0.25);
    CHECK(s.delta_phi == doctest::Approx(0.25).epsilon(1e-14));
    CHECK_THROWS_AS(TwoModeState(-1.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(TwoModeState(std::nan(""), 0.0), std::domain_error);
}

TEST_CASE("RateModelParams: kappa = c*J^2 and validation") {
    RateModelParams p = fc_params(1.0);
    CHECK(p.kappa() == doctest::Approx(2e-3 * 230.0 * 230.0).epsilon(1e-14));
    CHECK(p.kappa() == doctest::Approx(105.8).epsilon(1e-12));
    p.kappa_coefficient = -1e-6;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("rate_rhs: lossless equilibrium has zero derivatives") {
    RateModelParams p = constant_params(0.0);
    TwoModeState d = rate_rhs(TwoModeState(N0, 0.0), p);
    CHECK(d.n == 0.0);
    CHECK(d.delta_phi == 0.0);
}

TEST_CASE("rate_rhs: dN/dt = 0 at N = N0 recovers sin(dPhi) = gamma/(4J)") {
    for (double gf : {0.3, 1.0, 2.0, 3.5}) {
        RateModelParams p = constant_params(gf);
        double phi = std::asin(p.lattice.gamma / (4.0 * J));
        TwoModeState d = rate_rhs(TwoModeState(N0, phi), p);
        CHECK(std::abs(d.n) < 1e-9 * N0 * J);
        // phase equation idles on the N = N0 line
        CHECK(d.delta_phi == 0.0);
    }
}

TEST_CASE("rate_rhs: empty site refills through the incoherent channel only") {
    RateModelParams p = fc_params(2.0);
    TwoModeState d = rate_rhs(TwoModeState(0.0, 1.234), p);
    CHECK(d.n == doctest::Approx(p.kappa() * N0).epsilon(1e-14));
    // derivative container carries mu(N0) - mu(0) = U*N0 unwrapped
    CHECK(d.delta_phi == doctest::Approx(0.5 * N0).epsilon(1e-14));
}

TEST_CASE("rate_rhs: negative filling is a domain error") {
    TwoModeState s;
    s.n = -5.0;  // bypasses the constructor check on purpose
    CHECK_THROWS_AS(rate_rhs(s, fc_params(1.0)), std::domain_error);
}

TEST_CASE("default_t_max: 100/gamma or 1e4/J, whichever is larger") {
    RateModelParams p = fc_params(0.0);
    CHECK(default_t_max(p) == doctest::Approx(1e4 / J).epsilon(1e-14));
    p.lattice.gamma = 1.0;  // slow loss: 100/gamma dominates
    CHECK(default_t_max(p) == doctest::Approx(100.0).epsilon(1e-14));
    p.lattice.gamma = 10.0 * J;
    CHECK(default_t_max(p) == doctest::Approx(1e4 / J).epsilon(1e-14));
}

TEST_CASE("tau_from_series: exponential approach gives tau0*ln(1/eps)") {
    const double tau0 = 0.37, eps = 0.05;
    auto times = linspace(0.0, 10.0 * tau0, 10001);
    std::vector<double> vals(times.size());
    for (std::size_t i = 0; i < times.size(); ++i)
        vals[i] = N0 * (1.0 - std::exp(-times[i] / tau0));
    auto tau = tau_from_series(times, vals, N0, eps * N0);
    REQUIRE(tau.has_value());
    double expect = tau0 * std::log(1.0 / eps);
    CHECK(*tau == doctest::Approx(expect).epsilon(2e-3));
}

TEST_CASE("tau_from_series: edge cases") {
    auto times = linspace(0.0, 1.0, 101);
    std::vector<double> in_band(101, 700.0);
    CHECK(tau_from_series(times, in_band, 700.0, 35.0).value() == 0.0);

    std::vector<double> never(101, 0.0);
    CHECK(!tau_from_series(times, never, 700.0, 35.0).has_value());

    // enters the band only in the last 5% of the window: not certified
    std::vector<double> brush(101, 0.0);
    for (int i = 96; i < 101; ++i) brush[i] = 700.0;
    CHECK(!tau_from_series(times, brush, 700.0, 35.0).has_value());

    CHECK_THROWS_AS(tau_from_series({}, {}, 0.0, 1.0), std::invalid_argument);
    std::vector<double> short_series(50, 0.0);
    CHECK_THROWS_AS(tau_from_series(times, short_series, 0.0, 1.0),
                    std::invalid_argument);
}

TEST_CASE("settle: empty start locks to the filled branch below gamma_RB") {
    RateModelParams p = fc_params(1.5);
    SettleResult r = settle(p, empty_start());
    CHECK(r.settled);
    CHECK(r.n_steady == N0);  // locked branch reports N0 exactly
    REQUIRE(r.tau.has_value());
    CHECK(*r.tau > 0.05);
    CHECK(*r.tau < 0.2);
    CHECK(r.phi_final == doctest::Approx(std::asin(1.5 * J / (4.0 * J))).epsilon(1e-6));
}

TEST_CASE("settle: resistive branch is a running-phase cycle, tau never certifies") {
    RateModelParams p = fc_params(2.0);
    SettleResult r1 = settle(p, empty_start());
    CHECK(r1.settled);
    CHECK(r1.n_steady > 0.1 * N0);
    CHECK(r1.n_steady < 0.3 * N0);
    CHECK(!r1.tau.has_value());
    // the cycle mean does not depend on where the trajectory entered it
    SettleResult r2 = settle(p, TwoModeState(0.3 * N0, 1.0));
    CHECK(std::abs(r1.n_steady - r2.n_steady) < 1e-3 * N0);
}

TEST_CASE("relaxation_time: zero from the fixed point itself") {
    RateModelParams p = fc_params(1.5);
    auto fps = find_fixed_points(p);
    bool seen = false;
    for (const auto& fp : fps) {
        if (fp.stability != Stability::Stable) continue;
        seen = true;
        CHECK(relaxation_time(p, fp.state) == 0.0);
    }
    CHECK(seen);
}

TEST_CASE("relaxation_time: grows toward the capture boundary, then diverges") {
    double t13 = relaxation_time(fc_params(1.3), empty_start());
    double t145 = relaxation_time(fc_params(1.45), empty_start());
    double t158 = relaxation_time(fc_params(1.58), empty_start());
    CHECK(t13 < t145);
    CHECK(t145 < t158);
    // past the boundary the empty start joins the resistive cycle instead
    CHECK_THROWS_AS(relaxation_time(fc_params(1.7), empty_start()), DivergentError);
}

TEST_CASE("find_fixed_points: gamma = 0 has the unique stable lossless equilibrium") {
    // sin(dPhi) = 0 admits dPhi = 0 and pi; only the in-phase root attracts
    RateModelParams p = fc_params(0.0);
    auto fps = find_fixed_points(p);
    REQUIRE(fps.size() == 2);
    int stable = 0;
    for (const auto& fp : fps) {
        CHECK(fp.state.n == doctest::Approx(N0).epsilon(1e-7));
        if (fp.stability == Stability::Stable) {
            ++stable;
            CHECK(std::abs(fp.state.delta_phi) < 1e-7);
        } else {
            CHECK(fp.stability == Stability::Saddle);
            CHECK(std::abs(fp.state.delta_phi) == doctest::Approx(M_PI).epsilon(1e-7));
        }
    }
    CHECK(stable == 1);
}

TEST_CASE("find_fixed_points: locked pair obeys sin(dPhi) = gamma/(4J) exactly") {
    for (double gf : {0.5, 1.0, 2.0, 3.0, 3.9}) {
        RateModelParams p = constant_params(gf);
        p.kappa_coefficient = 0.0;
        auto fps = find_fixed_points(p);
        REQUIRE(fps.size() == 2);
        double target = gf / 4.0;
        int stable = 0, saddle = 0;
        for (const auto& fp : fps) {
            CHECK(std::abs(fp.state.n - N0) < 1e-6 * N0);
            CHECK(std::abs(std::sin(fp.state.delta_phi) - target) < 1e-10);
            if (fp.stability == Stability::Stable) {
                ++stable;
                CHECK(fp.state.delta_phi < M_PI / 2);  // arcsine branch
            }
            if (fp.stability == Stability::Saddle) {
                ++saddle;
                CHECK(fp.state.delta_phi > M_PI / 2);  // pi - arcsine partner
            }
        }
        CHECK(stable == 1);
        CHECK(saddle == 1);
    }
}

TEST_CASE("find_fixed_points: none above the fold; a running attractor remains") {
    RateModelParams p = constant_params(4.3);
    p.kappa_coefficient = 0.0;
    CHECK(find_fixed_points(p).empty());

    // with the incoherent channel on, both starts land on the same cycle
    RateModelParams q = constant_params(4.5);
    SettleResult rf = settle(q, full_start(q));
    SettleResult re = settle(q, empty_start());
    CHECK(!rf.tau.has_value());
    CHECK(rf.n_steady > 0.3 * N0);
    CHECK(rf.n_steady < 0.5 * N0);
    CHECK(std::abs(rf.n_steady - re.n_steady) < 1e-3 * N0);
}

TEST_CASE("find_fixed_points: narrow Franck-Condon width keeps the locked pair") {
    // sigma = N0/4: the locked pair persists (dN = 0 there, so sigma drops
    // out) while the empty site is essentially decoupled, J'(N0)/J = e^{-8}
    RateModelParams p = fc_params(2.0, 175.0);
    auto fps = find_fixed_points(p);
    REQUIRE(fps.size() == 2);
    CHECK(fps[0].state.n == doctest::Approx(N0).epsilon(1e-7));
    CHECK(fps[0].state.delta_phi == doctest::Approx(M_PI / 6).epsilon(1e-9));
    CHECK(fps[0].stability == Stability::Stable);
    CHECK(fps[1].state.delta_phi == doctest::Approx(M_PI - M_PI / 6).epsilon(1e-9));
    CHECK(fps[1].stability == Stability::Saddle);

    // bistability: the locked point attracts locally while an independent
    // low-filling cycle coexists
    TwoModeState near(N0 * (1.0 - 1e-3), fps[0].state.delta_phi + 1e-3);
    TwoModeState pulled = flow_to(p, near, 0.1);
    CHECK(std::abs(pulled.n - N0) < 1e-6 * N0);
    SettleResult cycle = settle(p, empty_start());
    CHECK(cycle.n_steady < 0.3 * N0);
}

TEST_CASE("fixed-point stability labels agree with the eigenvalue real parts") {
    for (double gf : {0.3, 0.8, 1.5, 2.5, 3.5}) {
        for (auto p : {fc_params(gf), constant_params(gf)}) {
            for (const auto& fp : find_fixed_points(p)) {
                double r1 = fp.eigenvalues[0].real();
                double r2 = fp.eigenvalues[1].real();
                if (fp.stability == Stability::Stable) {
                    CHECK(r1 < 0);
                    CHECK(r2 < 0);
                } else if (fp.stability == Stability::Saddle) {
                    CHECK(r1 * r2 < 0);
                } else {
                    CHECK(std::max(r1, r2) >= 0);
                }
            }
        }
    }
}

TEST_CASE("every stable fixed point pulls back random 1e-3 perturbations") {
    for (double gf : {0.5, 1.5, 3.0}) {
        RateModelParams p = fc_params(gf);
        Xoshiro256pp rng(7);
        for (const auto& fp : find_fixed_points(p)) {
            if (fp.stability != Stability::Stable) continue;
            for (int t = 0; t < 10; ++t) {
                double n = fp.state.n * (1.0 + 1e-3 * (2.0 * rng.uniform() - 1.0));
                double ph = fp.state.delta_phi + 1e-3 * (2.0 * rng.uniform() - 1.0);
                TwoModeState out = flow_to(p, TwoModeState(n, ph), 0.5);
                double dist = std::abs(out.n - fp.state.n)
                              + N0 * std::abs(wrap_phase(out.delta_phi
                                                         - fp.state.delta_phi));
                CHECK(dist < 1e-6 * N0);
            }
        }
    }
}

TEST_CASE("hysteresis_sweep: locked and resistive branches overlap in a window") {
    RateModelParams p = fc_params(1.0);
    std::vector<double> grid;
    for (double gf : {0.8, 1.2, 1.7, 2.0, 2.4, 3.0, 3.6, 4.2, 4.6})
        grid.push_back(gf * J);
    auto up = hysteresis_sweep(p, grid, SweepDirection::Up);
    auto down = hysteresis_sweep(p, grid, SweepDirection::Down);
    REQUIRE(up.size() == grid.size());
    REQUIRE(down.size() == grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(up[i].gamma == grid[i]);    // sorted ascending either direction
        CHECK(down[i].gamma == grid[i]);
        CHECK(up[i].initial_condition == InitialCondition::Empty);
        CHECK(down[i].initial_condition == InitialCondition::Full);
    }
    // below the window both sweeps sit on the full branch
    for (std::size_t i : {0u, 1u}) {
        CHECK(up[i].filling_ratio == 1.0);
        CHECK(down[i].filling_ratio == 1.0);
    }
    // inside: the adiabatically carried branches disagree by > 0.2*N0
    for (std::size_t i : {2u, 3u, 4u, 5u})
        CHECK(std::abs(up[i].filling_ratio - down[i].filling_ratio) > 0.2);
    // above: both sides ride the same depleted cycle
    for (std::size_t i : {6u, 7u, 8u}) {
        CHECK(up[i].filling_ratio < 0.2);
        CHECK(std::abs(up[i].filling_ratio - down[i].filling_ratio) < 1e-3);
    }
}

TEST_CASE("hysteresis_sweep: records coincide with an independent attractor") {
    // capture at 1.2J seeds the Up walk; the carried state at 2J is locked
    RateModelParams p = fc_params(1.0);
    std::vector<double> grid{1.2 * J, 2.0 * J};
    auto up = hysteresis_sweep(p, grid, SweepDirection::Up);
    auto down = hysteresis_sweep(p, grid, SweepDirection::Down);
    p.lattice.gamma = 2.0 * J;
    auto fps = find_fixed_points(p);
    REQUIRE(!fps.empty());
    CHECK(fps[0].stability == Stability::Stable);
    CHECK(std::abs(up[1].filling_ratio * N0 - fps[0].state.n) < 1e-3 * N0);
    // fresh full start at 2J > gamma_SF sheds atoms and joins the cycle:
    // the Down record matches an independent cycle measurement
    SettleResult cycle = settle(p, empty_start());
    CHECK(std::abs(down[1].filling_ratio * N0 - cycle.n_steady) < 1e-3 * N0);
}

TEST_CASE("hysteresis_sweep: grid must be ascending and nonnegative") {
    RateModelParams p = fc_params(1.0);
    CHECK_THROWS_AS(hysteresis_sweep(p, {2.0 * J, 1.0 * J}, SweepDirection::Up),
                    std::invalid_argument);
    CHECK_THROWS_AS(hysteresis_sweep(p, {-1.0, 1.0 * J}, SweepDirection::Up),
                    std::invalid_argument);
}

TEST_CASE("current_voltage_curve: supercurrent at zero voltage on the full branch") {
    ChemicalPotentialModel mu{MuVariant::Linear, 1.0};
    std::vector<SteadyStateRecord> recs;
    recs.push_back(make_record(J, 2.0 * J, InitialCondition::Full, 1.0, N0, 0.5,
                               0.01, true, SolverKind::TwoMode));
    recs.push_back(make_record(J, 0.0, InitialCondition::Full, 1.0, N0, 0.0,
                               0.0, true, SolverKind::TwoMode));
    recs.push_back(make_record(J, 2.0 * J, InitialCondition::Empty, 0.5, N0, 1.0,
                               std::nullopt, true, SolverKind::TwoMode));
    auto iv = current_voltage_curve(recs, mu, N0);
    REQUIRE(iv.size() == 3);
    CHECK(iv[0].first == 0.0);  // delta_mu vanishes exactly on the full branch
    CHECK(iv[0].second == doctest::Approx(2.0 * J * N0).epsilon(1e-14));
    CHECK(iv[1].first == 0.0);
    CHECK(iv[1].second == 0.0);
    CHECK(iv[2].first == doctest::Approx(350.0).epsilon(1e-14));
    CHECK(iv[2].second == doctest::Approx(2.0 * J * 350.0).epsilon(1e-14));
}

TEST_CASE("saddle-node: slow eigenvalue and tau scale as the square root") {
    // gamma -> 4J from below at Constant coupling: the locked pair merges
    std::vector<double> ld, le, lt;
    for (double d : geomspace(3e-4, 5e-3, 8)) {
        RateModelParams p = constant_params(4.0 * (1.0 - d));
        double lam = 1e300;
        for (const auto& fp : find_fixed_points(p))
            if (fp.stability == Stability::Stable)
                for (const auto& ev : fp.eigenvalues)
                    lam = std::min(lam, std::abs(ev.real()));
        REQUIRE(lam < 1e300);
        ld.push_back(std::log(d));
        le.push_back(std::log(lam));
        SettleResult r = settle(p, empty_start(), 1e-4);
        REQUIRE(r.tau.has_value());
        lt.push_back(std::log(*r.tau));
    }
    double eig_slope = theil_sen(ld, le).first;
    CHECK(eig_slope > 0.40);
    CHECK(eig_slope < 0.60);
    double tau_slope = theil_sen(ld, lt).first;
    CHECK(tau_slope > -0.65);
    CHECK(tau_slope < -0.35);
}

TEST_CASE("steady_record: carries the settle outcome into a labelled record") {
    RateModelParams p = fc_params(1.5);
    SettleResult r = settle(p, empty_start());
    SteadyStateRecord rec = steady_record(p, InitialCondition::Empty, r);
    CHECK(rec.j_coupling == J);
    CHECK(rec.gamma == 1.5 * J);
    CHECK(rec.initial_condition == InitialCondition::Empty);
    CHECK(rec.filling_ratio == 1.0);
    CHECK(rec.current == doctest::Approx(1.5 * J * N0).epsilon(1e-12));
    CHECK(rec.tau == r.tau);
    CHECK(rec.converged);
    CHECK(rec.solver == SolverKind::TwoMode);
    CHECK(empty_start().n == 0.0);
    CHECK(full_start(p).n == N0);
}
