#pragma once
// Parameter scans over (J, gamma): classification into superfluid /
// bistable / resistive, critical-rate extraction (gamma_RB, gamma_SF,
// gamma_CSD), tau curves, power-law fits, and phase-diagram assembly.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "meanfield.hpp"
#include "parallel.hpp"
#include "record.hpp"
#include "twomode.hpp"
#include "types.hpp"

namespace djj {

enum class PhaseLabel { Superfluid, Bistable, Resistive };

inline const char* to_string(PhaseLabel l) {
    switch (l) {
        case PhaseLabel::Superfluid: return "Superfluid";
        case PhaseLabel::Bistable: return "Bistable";
        default: return "Resistive";
    }
}

struct PhasePoint {
    double j_coupling = 0;
    double gamma = 0;
    PhaseLabel label = PhaseLabel::Superfluid;
    SteadyStateRecord full_record;
    SteadyStateRecord empty_record;
    std::string error;  // nonempty if a branch run failed at this point
};

// Totalized classification: Superfluid if both branches refill; otherwise
// Bistable when they disagree by the agreement threshold, else Resistive.
inline PhasePoint classify(const SteadyStateRecord& full_rec,
                           const SteadyStateRecord& empty_rec,
                           double threshold_high = 0.9,
                           double threshold_agree = 0.1) {
    if (full_rec.j_coupling != empty_rec.j_coupling
        || full_rec.gamma != empty_rec.gamma)
        throw std::invalid_argument("classify: records are not at the same (J, gamma)");
    PhasePoint pt;
    pt.j_coupling = full_rec.j_coupling;
    pt.gamma = full_rec.gamma;
    pt.full_record = full_rec;
    pt.empty_record = empty_rec;
    double f = full_rec.filling_ratio, e = empty_rec.filling_ratio;
    if (f >= threshold_high && e >= threshold_high)
        pt.label = PhaseLabel::Superfluid;
    else if (std::abs(f - e) >= threshold_agree)
        pt.label = PhaseLabel::Bistable;
    else
        pt.label = PhaseLabel::Resistive;
    return pt;
}

class CriticalRates {
public:
    CriticalRates() = default;
    // ordering_slack: measurement resolution under which the gamma_RB <=
    // gamma_CSD <= gamma_SF ordering is still accepted (rates carry half
    // a grid step of bracketing uncertainty).
    CriticalRates(std::optional<double> rb, std::optional<double> sf,
                  std::optional<double> csd, double ordering_slack = 0.0)
        : gamma_rb_(rb), gamma_sf_(sf), gamma_csd_(csd) {
        if (rb && csd && *rb > *csd + ordering_slack)
            throw std::invalid_argument("critical rates out of order: gamma_RB > gamma_CSD");
        if (csd && sf && *csd > *sf + ordering_slack)
            throw std::invalid_argument("critical rates out of order: gamma_CSD > gamma_SF");
        if (rb && sf && *rb > *sf + ordering_slack)
            throw std::invalid_argument("critical rates out of order: gamma_RB > gamma_SF");
    }
    const std::optional<double>& gamma_rb() const { return gamma_rb_; }
    const std::optional<double>& gamma_sf() const { return gamma_sf_; }
    const std::optional<double>& gamma_csd() const { return gamma_csd_; }

private:
    std::optional<double> gamma_rb_, gamma_sf_, gamma_csd_;
};

struct TauPoint {
    double gamma = 0;
    std::optional<double> tau;   // empty = NotConverged at this gamma
    double n_steady = 0;
};

// Critical rates at one J: each boundary is the midpoint of the grid
// interval bracketing the condition change; gamma_CSD is the tau argmax.
inline CriticalRates extract_critical_rates(const std::vector<PhasePoint>& points,
                                            const std::vector<TauPoint>& tau_curve,
                                            double threshold_high = 0.9,
                                            double ordering_slack = 0.0) {
    if (points.size() < 2)
        throw std::invalid_argument("extract_critical_rates: need >= 2 points");
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        if (!(points[i].gamma < points[i + 1].gamma))
            throw std::invalid_argument("extract_critical_rates: points must be "
                                        "sorted by gamma");
        if (points[i].j_coupling != points[i + 1].j_coupling)
            throw std::invalid_argument("extract_critical_rates: mixed J values");
    }
    std::optional<double> rb, sf, csd;
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        double e0 = points[i].empty_record.filling_ratio;
        double e1 = points[i + 1].empty_record.filling_ratio;
        if (!rb && e0 >= threshold_high && e1 < threshold_high)
            rb = 0.5 * (points[i].gamma + points[i + 1].gamma);
        double f0 = points[i].full_record.filling_ratio;
        double f1 = points[i + 1].full_record.filling_ratio;
        if (!sf && f0 >= threshold_high && f1 < threshold_high)
            sf = 0.5 * (points[i].gamma + points[i + 1].gamma);
    }
    double best = -1;
    for (const auto& tp : tau_curve) {
        if (tp.tau && *tp.tau > best) {
            best = *tp.tau;
            csd = tp.gamma;
        }
    }
    return CriticalRates(rb, sf, csd, ordering_slack);
}

struct PowerLawFit {
    double amplitude = 0;
    double exponent = 0;
    double exponent_stderr = 0;
};

// Least squares on log(gamma) = log(a) + b*log(J); stderr of b from the
// linear-fit covariance.
inline PowerLawFit fit_power_law(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.size() < 3)
        throw std::invalid_argument("fit_power_law: need >= 3 pairs");
    const std::size_t n = pairs.size();
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(pairs[i].first > 0) || !(pairs[i].second > 0))
            throw std::domain_error("fit_power_law: values must be positive");
        x[i] = std::log(pairs[i].first);
        y[i] = std::log(pairs[i].second);
    }
    double xb = 0, yb = 0;
    for (std::size_t i = 0; i < n; ++i) { xb += x[i]; yb += y[i]; }
    xb /= n; yb /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - xb) * (x[i] - xb);
        sxy += (x[i] - xb) * (y[i] - yb);
    }
    if (sxx <= 0) throw std::domain_error("fit_power_law: degenerate abscissae");
    PowerLawFit f;
    f.exponent = sxy / sxx;
    double icept = yb - f.exponent * xb;
    f.amplitude = std::exp(icept);
    double ssr = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = y[i] - (icept + f.exponent * x[i]);
        ssr += r * r;
    }
    f.exponent_stderr = (n > 2) ? std::sqrt(ssr / double(n - 2) / sxx) : 0.0;
    return f;
}

// Median-of-pairwise-slopes line fit; robust against single outliers
// (used for tau-scaling fits where one point can sit off the asymptote).
inline std::pair<double, double> theil_sen(const std::vector<double>& x,
                                           const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("theil_sen: need >= 2 matched points");
    std::vector<double> slopes;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j)
            if (x[j] != x[i]) slopes.push_back((y[j] - y[i]) / (x[j] - x[i]));
    if (slopes.empty()) throw std::invalid_argument("theil_sen: no distinct abscissae");
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        std::size_t m = v.size() / 2;
        return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    };
    double slope = median(slopes);
    std::vector<double> icepts(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) icepts[i] = y[i] - slope * x[i];
    return {slope, median(icepts)};
}

// --- scan drivers -----------------------------------------------------------

inline SteadyStateRecord two_mode_steady_record(RateModelParams p,
                                                InitialCondition ic,
                                                double epsilon = 0.05) {
    TwoModeState s0 = (ic == InitialCondition::Full) ? full_start(p) : empty_start();
    return steady_record(p, ic, settle(p, s0, epsilon));
}

// Lattice-solver analogue: evolve with clamped edges (sustained reservoir),
// then read the trailing quarter.  The clamped boundary sheds phase-slip
// fronts moving inward at ~2J sites/s, so the window is capped where the
// center is still causally clean of them; the local site transients (~few
// tunneling times) fit well inside that cap on the default chain.
inline SteadyStateRecord meanfield_steady_record(LatticeParams lp,
                                                 const CouplingModel& cm,
                                                 InitialCondition ic,
                                                 double epsilon = 0.05,
                                                 double seed_fraction = 1e-3,
                                                 double tol = 1e-8) {
    lp.validate();
    // measured edge-front speed is 3.0-3.4 J sites/s across gamma; 4 J here
    double front_speed = 4.0 * lp.j_coupling;
    double causal = (0.5 * lp.n_sites - 2.0) / front_speed;
    double t_max = std::min(25.0 / lp.j_coupling, causal);
    t_max = std::max(t_max, 2.0 / lp.j_coupling);
    MeanfieldState s0;
    if (ic == InitialCondition::Full) {
        // seed the conducting branch with its analytic phase tent (the
        // uniform start's self-organization dip outlasts the causal window);
        // the record reads whether the lattice sustains the profile
        double sine = std::min(lp.gamma / (4.0 * lp.j_coupling), 1.0);
        s0 = bloch_lattice_state(lp, std::asin(sine));
    } else {
        s0 = prepare_initial(lp, InitialKind::EmptyLossySite, seed_fraction);
    }
    EvolveOptions opt;
    opt.tol = tol;
    opt.clamp_edges = true;
    opt.n_samples = std::clamp(int(t_max * 1000.0) + 1, 201, 5001);
    MeanfieldTrajectory traj = evolve(s0, lp, cm, t_max, opt);

    const int m = lp.lossy_site;
    const std::size_t ns = traj.states.size();
    std::vector<double> times(ns), fills(ns);
    for (std::size_t i = 0; i < ns; ++i) {
        times[i] = traj.states[i].time;
        fills[i] = traj.states[i].filling(m);
    }
    // medians resist the post-transient ring crests that bias window means
    std::size_t q = std::max<std::size_t>(ns / 4, 1);
    auto median = [&](std::size_t a, std::size_t b) {
        std::vector<double> w(fills.begin() + a, fills.begin() + b);
        std::sort(w.begin(), w.end());
        std::size_t h = w.size() / 2;
        return w.size() % 2 ? w[h] : 0.5 * (w[h - 1] + w[h]);
    };
    double m_prev = median(ns - std::min(2 * q, ns), ns - std::min(q, ns));
    double m_last = median(ns - std::min(q, ns), ns);
    double var = 0;
    for (std::size_t i = ns - std::min(q, ns); i < ns; ++i)
        var += (fills[i] - m_last) * (fills[i] - m_last);
    double sd = std::sqrt(var / double(std::min(q, ns)));
    double n_steady = m_last;
    if (sd < 1e-2 * lp.n0 && std::abs(m_last - lp.n0) < 1e-2 * lp.n0)
        n_steady = lp.n0;
    n_steady = std::clamp(n_steady, 0.0, 1.05 * lp.n0);
    bool settled = !traj.aborted_depletion
                   && std::abs(m_last - m_prev) < 5e-3 * lp.n0;
    auto tau = tau_from_series(times, fills, n_steady, epsilon * lp.n0);

    const auto& last = traj.states.back().amplitudes;
    int nb = (m > 0) ? m - 1 : m + 1;
    double dphi = wrap_phase(std::arg(last[m]) - std::arg(last[nb]));
    return make_record(lp.j_coupling, lp.gamma, ic, n_steady / lp.n0, lp.n0,
                       dphi, tau, settled, SolverKind::Meanfield);
}

inline SteadyStateRecord steady_state_record(const RateModelParams& p,
                                             SolverKind solver, InitialCondition ic,
                                             double epsilon = 0.05) {
    if (solver == SolverKind::TwoMode)
        return two_mode_steady_record(p, ic, epsilon);
    return meanfield_steady_record(p.lattice, p.coupling, ic, epsilon);
}

// Fresh-start relaxation-time curve over a gamma grid (parallel over grid
// points, merged in index order).
inline std::vector<TauPoint> tau_curve(const RateModelParams& tmpl,
                                       const std::vector<double>& gammas,
                                       InitialCondition ic = InitialCondition::Empty,
                                       double epsilon = 0.05, bool parallel = true) {
    std::vector<TauPoint> out(gammas.size());
    for_each_index(static_cast<long>(gammas.size()), parallel, [&](long i) {
        RateModelParams q = tmpl;
        q.lattice.gamma = gammas[i];
        TwoModeState s0 = (ic == InitialCondition::Full) ? full_start(q) : empty_start();
        SettleResult r = settle(q, s0, epsilon);
        out[i] = TauPoint{gammas[i], r.tau, r.n_steady};
    });
    return out;
}

struct PhaseDiagram {
    std::vector<PhasePoint> points;  // sorted by (J, gamma)
    std::vector<std::pair<double, CriticalRates>> critical_per_j;
};

inline std::vector<double> default_j_grid() { return geomspace(100.0, 600.0, 8); }
inline std::vector<double> default_gamma_factors() { return linspace(0.0, 8.0, 40); }

// Runs both fresh initial conditions at every (J, gamma), classifies, and
// extracts per-J critical rates.  gamma_factors are multiples of J when
// gamma_relative is set (the dissipation window scales with the tunneling
// rate), absolute rates otherwise.  Failures are recorded per point.
inline PhaseDiagram build_phase_diagram(const RateModelParams& tmpl,
                                        SolverKind solver,
                                        std::vector<double> j_grid,
                                        std::vector<double> gamma_factors,
                                        bool gamma_relative = true,
                                        double epsilon = 0.05,
                                        bool parallel = true,
                                        int tau_refine = 13) {
    if (j_grid.empty() || gamma_factors.empty())
        throw std::invalid_argument("build_phase_diagram: empty grid");
    for (std::size_t i = 0; i + 1 < j_grid.size(); ++i)
        if (!(j_grid[i] < j_grid[i + 1]))
            throw std::invalid_argument("build_phase_diagram: j_grid must ascend");
    for (std::size_t i = 0; i + 1 < gamma_factors.size(); ++i)
        if (!(gamma_factors[i] < gamma_factors[i + 1]))
            throw std::invalid_argument("build_phase_diagram: gamma grid must ascend");

    const long nj = static_cast<long>(j_grid.size());
    const long ng = static_cast<long>(gamma_factors.size());
    struct Slot {
        SteadyStateRecord full, empty;
        std::string error;
    };
    std::vector<Slot> slots(std::size_t(nj) * ng);

    for_each_index(nj * ng, parallel, [&](long k) {
        long ji = k / ng, gi = k % ng;
        RateModelParams q = tmpl;
        q.lattice.j_coupling = j_grid[ji];
        q.lattice.gamma = gamma_relative ? gamma_factors[gi] * j_grid[ji]
                                         : gamma_factors[gi];
        Slot& s = slots[k];
        try {
            s.full = steady_state_record(q, solver, InitialCondition::Full, epsilon);
            s.empty = steady_state_record(q, solver, InitialCondition::Empty, epsilon);
        } catch (const std::exception& e) {
            s.error = e.what();
        }
    });

    PhaseDiagram out;
    out.points.reserve(slots.size());
    for (long ji = 0; ji < nj; ++ji) {
        std::vector<PhasePoint> line;
        for (long gi = 0; gi < ng; ++gi) {
            const Slot& s = slots[ji * ng + gi];
            if (!s.error.empty()) {
                PhasePoint pt;
                pt.j_coupling = j_grid[ji];
                pt.gamma = gamma_relative ? gamma_factors[gi] * j_grid[ji]
                                          : gamma_factors[gi];
                pt.error = s.error;
                out.points.push_back(pt);
                continue;
            }
            PhasePoint pt = classify(s.full, s.empty);
            out.points.push_back(pt);
            line.push_back(pt);
        }
        if (line.size() < 2) {
            out.critical_per_j.emplace_back(j_grid[ji], CriticalRates{});
            continue;
        }

        // coarse brackets from the phase grid; tau refined on a finer grid
        // inside the empty-branch departure bracket
        std::vector<TauPoint> taus;
        for (const auto& pt : line)
            taus.push_back(TauPoint{pt.gamma, pt.empty_record.tau,
                                    pt.empty_record.filling_ratio * tmpl.lattice.n0});
        double coarse_step = line[1].gamma - line[0].gamma;
        std::optional<std::pair<double, double>> rb_bracket;
        for (std::size_t i = 0; i + 1 < line.size(); ++i)
            if (line[i].empty_record.filling_ratio >= 0.9
                && line[i + 1].empty_record.filling_ratio < 0.9) {
                rb_bracket = {line[i].gamma, line[i + 1].gamma};
                break;
            }
        double fine_step = 0;
        if (rb_bracket && tau_refine >= 3 && solver == SolverKind::TwoMode) {
            auto fine = linspace(rb_bracket->first, rb_bracket->second, tau_refine);
            fine_step = fine[1] - fine[0];
            RateModelParams q = tmpl;
            q.lattice.j_coupling = j_grid[ji];
            auto fine_taus = tau_curve(q, fine, InitialCondition::Empty, epsilon,
                                       parallel);
            taus.insert(taus.end(), fine_taus.begin(), fine_taus.end());
        }
        double slack = 0.55 * coarse_step + fine_step;
        try {
            out.critical_per_j.emplace_back(
                j_grid[ji], extract_critical_rates(line, taus, 0.9, slack));
        } catch (const std::exception&) {
            out.critical_per_j.emplace_back(j_grid[ji], CriticalRates{});
        }
    }
    return out;
}

} // namespace djj
