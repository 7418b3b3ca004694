// djjsim: command-line front end for the lossy junction-array solvers.
// Subcommands: evolve, steady, sweep, lindblad, fit, validate.

#include <complex>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "djj/io.hpp"
#include "djj/lindblad.hpp"
#include "djj/meanfield.hpp"
#include "djj/parallel.hpp"
#include "djj/sweep.hpp"
#include "djj/twomode.hpp"

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

djj::RunConfig load_config(const std::string& path) {
    return djj::parse_config(slurp(path));
}

// records go to the configured output file, or stdout when none is set;
// side commentary then moves to stderr so stdout stays machine-parseable
struct Sink {
    explicit Sink(const djj::RunConfig& c) : to_file(!c.output.empty()) {}
    bool to_file;
    std::ostream& side() { return to_file ? std::cout : std::cerr; }
};

void write_records(const djj::RunConfig& c,
                   const std::vector<djj::SteadyStateRecord>& recs) {
    std::string hash = djj::config_hash_hex(c);
    if (c.output.empty())
        djj::emit_records(recs, c.format, std::cout, hash);
    else
        djj::emit_records(recs, c.format, c.output, hash);
}

void write_table(const djj::RunConfig& c, const std::vector<std::string>& cols,
                 const std::vector<std::vector<double>>& rows) {
    std::string hash = djj::config_hash_hex(c);
    if (c.output.empty())
        djj::emit_table(cols, rows, c.format, std::cout, hash);
    else
        djj::emit_table(cols, rows, c.format, c.output, hash);
}

int cmd_validate(const std::string& path) {
    djj::RunConfig c = load_config(path);
    std::cout << "# config = " << djj::config_hash_hex(c) << "\n"
              << djj::dump_config(c);
    return 0;
}

int cmd_evolve(const djj::RunConfig& c) {
    if (c.solver == djj::SolverChoice::Lindblad)
        throw std::runtime_error("solver lindblad: use the lindblad subcommand");

    if (c.solver == djj::SolverChoice::Meanfield) {
        const djj::LatticeParams& lp = c.lattice;
        double t_final = c.t_final > 0 ? c.t_final : 100.0 / lp.j_coupling;
        djj::EvolveOptions opt;
        opt.tol = c.tolerance;
        opt.n_samples = c.n_samples > 0 ? c.n_samples : 1001;
        opt.clamp_edges = c.clamp_edges;
        djj::MeanfieldState s0 = djj::prepare_initial(
            lp, c.initial == djj::InitialCondition::Full
                    ? djj::InitialKind::FullUniform
                    : djj::InitialKind::EmptyLossySite,
            c.seed_fraction);
        auto traj = djj::evolve(s0, lp, c.coupling, t_final, opt);
        auto current = djj::site_current(traj, lp);

        std::vector<std::string> cols = {"time", "total_norm", "current_lossy"};
        for (int s = 0; s < lp.n_sites; ++s) cols.push_back("site_" + std::to_string(s));
        std::vector<std::vector<double>> rows;
        rows.reserve(traj.states.size());
        for (std::size_t i = 0; i < traj.states.size(); ++i) {
            const auto& st = traj.states[i];
            std::vector<double> row = {st.time, st.total_norm(), current[i]};
            for (int s = 0; s < lp.n_sites; ++s) row.push_back(st.filling(s));
            rows.push_back(std::move(row));
        }
        write_table(c, cols, rows);
        if (traj.aborted_depletion)
            std::cerr << "warning: run truncated, reservoir depleted beyond 10%\n";
        return 0;
    }

    djj::RateModelParams p = c.rate_params();
    p.validate();
    double t_final = c.t_final > 0 ? c.t_final : djj::default_t_max(p);
    int n_samples = c.n_samples > 0 ? c.n_samples : 2001;
    djj::TwoModeState s0 = (c.initial == djj::InitialCondition::Full)
                               ? djj::full_start(p) : djj::empty_start();
    std::vector<double> y = {s0.n, s0.delta_phi};
    auto rhs = [&](double, const std::vector<double>& v, std::vector<double>& dv) {
        dv.resize(2);
        djj::detail::two_mode_flow(p, v[0], v[1], dv[0], dv[1]);
    };
    std::vector<std::vector<double>> rows;
    rows.reserve(n_samples);
    djj::integrate_sampled(rhs, y, 0.0, djj::linspace(0.0, t_final, n_samples),
                           c.tolerance, [&](double t, const std::vector<double>& v) {
                               rows.push_back({t, std::max(v[0], 0.0),
                                               djj::wrap_phase(v[1])});
                           });
    write_table(c, {"time", "n", "delta_phi"}, rows);
    return 0;
}

int cmd_steady(const djj::RunConfig& c) {
    if (c.solver == djj::SolverChoice::Lindblad)
        throw std::runtime_error("solver lindblad: use the lindblad subcommand");
    Sink sink(c);

    std::vector<djj::SteadyStateRecord> recs;
    if (c.solver == djj::SolverChoice::TwoMode) {
        djj::RateModelParams p = c.rate_params();
        p.validate();
        recs.push_back(djj::two_mode_steady_record(p, djj::InitialCondition::Full,
                                                   c.epsilon));
        recs.push_back(djj::two_mode_steady_record(p, djj::InitialCondition::Empty,
                                                   c.epsilon));
        write_records(c, recs);
        auto fps = djj::find_fixed_points(p);
        sink.side() << "# fixed points: n, delta_phi, stability, re(lambda1), "
                       "re(lambda2)\n";
        for (const auto& fp : fps)
            sink.side() << "#   " << djj::format_double(fp.state.n) << ", "
                        << djj::format_double(fp.state.delta_phi) << ", "
                        << djj::to_string(fp.stability) << ", "
                        << djj::format_double(fp.eigenvalues[0].real()) << ", "
                        << djj::format_double(fp.eigenvalues[1].real()) << "\n";
        return 0;
    }

    recs.push_back(djj::meanfield_steady_record(c.lattice, c.coupling,
                                                djj::InitialCondition::Full,
                                                c.epsilon, c.seed_fraction,
                                                c.tolerance));
    recs.push_back(djj::meanfield_steady_record(c.lattice, c.coupling,
                                                djj::InitialCondition::Empty,
                                                c.epsilon, c.seed_fraction,
                                                c.tolerance));
    write_records(c, recs);
    try {
        auto b = djj::analytic_bloch_steady_state(c.lattice);
        sink.side() << "# Bloch steady state: delta_phi = "
                    << djj::format_double(b.delta_phi)
                    << ", I_S = " << djj::format_double(c.lattice.gamma * b.filling)
                    << "\n";
    } catch (const djj::NoSuperfluidSteadyState&) {
        sink.side() << "# no superfluid steady state at this gamma (gamma > 4J)\n";
    }
    return 0;
}

int cmd_sweep(const djj::RunConfig& c, bool hysteresis) {
    if (c.solver == djj::SolverChoice::Lindblad)
        throw std::runtime_error("solver lindblad: use the lindblad subcommand");
    Sink sink(c);

    if (hysteresis) {
        if (c.solver != djj::SolverChoice::TwoMode)
            throw std::runtime_error("hysteresis sweep requires solver = two_mode");
        djj::RateModelParams p = c.rate_params();
        p.validate();
        std::vector<double> gammas =
            c.gamma_grid.empty() ? djj::default_gamma_factors() : c.gamma_grid;
        if (c.gamma_relative)
            for (double& g : gammas) g *= p.lattice.j_coupling;
        if (!gammas.empty() && gammas.front() <= 0)
            gammas.erase(gammas.begin());  // carried sweep needs gamma > 0 grid
        auto recs = djj::hysteresis_sweep(p, gammas, c.direction, c.epsilon);
        write_records(c, recs);
        return 0;
    }

    djj::RateModelParams tmpl = c.rate_params();
    tmpl.validate();
    auto j_grid = c.j_grid.empty() ? djj::default_j_grid() : c.j_grid;
    auto factors = c.gamma_grid.empty() ? djj::default_gamma_factors() : c.gamma_grid;
    djj::SolverKind kind = (c.solver == djj::SolverChoice::Meanfield)
                               ? djj::SolverKind::Meanfield : djj::SolverKind::TwoMode;
    auto pd = djj::build_phase_diagram(tmpl, kind, j_grid, factors,
                                       c.gamma_relative, c.epsilon);
    std::vector<djj::SteadyStateRecord> recs;
    for (const auto& pt : pd.points) {
        if (!pt.error.empty()) {
            std::cerr << "warning: J = " << pt.j_coupling << ", gamma = "
                      << pt.gamma << ": " << pt.error << "\n";
            continue;
        }
        recs.push_back(pt.full_record);
        recs.push_back(pt.empty_record);
    }
    write_records(c, recs);
    sink.side() << "# phase labels: J, gamma, label\n";
    for (const auto& pt : pd.points)
        if (pt.error.empty())
            sink.side() << "#   " << djj::format_double(pt.j_coupling) << ", "
                        << djj::format_double(pt.gamma) << ", "
                        << djj::to_string(pt.label) << "\n";
    sink.side() << "# critical rates: J, gamma_RB, gamma_SF, gamma_CSD\n";
    auto opt_str = [](const std::optional<double>& v) {
        return v ? djj::format_double(*v) : std::string("none");
    };
    for (const auto& [j, cr] : pd.critical_per_j)
        sink.side() << "#   " << djj::format_double(j) << ", "
                    << opt_str(cr.gamma_rb()) << ", " << opt_str(cr.gamma_sf())
                    << ", " << opt_str(cr.gamma_csd()) << "\n";
    return 0;
}

int cmd_lindblad(const djj::RunConfig& c) {
    if (c.solver != djj::SolverChoice::Lindblad)
        throw std::runtime_error("lindblad subcommand requires solver = lindblad");
    const djj::LatticeParams& lp = c.lattice;
    Sink sink(c);

    int cap = c.n_total_cap >= 0 ? c.n_total_cap : lp.n_sites * c.n_max;
    djj::FockBasis basis = djj::build_fock_basis(lp.n_sites, c.n_max, cap);

    // initial product Fock state: every site at round(n0), lossy site emptied
    // for the refill protocol
    int fill = std::min<int>(c.n_max, int(std::llround(lp.n0)));
    std::vector<int> occ(lp.n_sites, fill);
    if (c.initial == djj::InitialCondition::Empty) occ[lp.lossy_site] = 0;
    int total = 0;
    for (int v : occ) total += v;
    if (total > cap)
        throw std::runtime_error("initial state exceeds n_total_cap");
    int idx = basis.index_of(occ.data());
    if (idx < 0) throw std::runtime_error("initial state missing from basis");

    std::vector<djj::JumpOperatorSpec> jumps;
    if (lp.gamma > 0) jumps.push_back({lp.lossy_site, lp.gamma});
    double t_final = c.t_final > 0 ? c.t_final
                     : lp.gamma > 0
                         ? std::max(10.0 / lp.j_coupling, 5.0 / lp.gamma)
                         : 10.0 / lp.j_coupling;

    if (c.method == djj::LindbladMethod::Master) {
        auto L = djj::build_liouvillian_apply(lp, basis, jumps);
        std::vector<djj::cdouble> psi(basis.dim(), 0.0);
        psi[idx] = 1.0;
        auto rho0 = djj::DensityMatrix::pure(psi);
        int n_samples = c.n_samples > 0 ? c.n_samples : 101;
        auto traj = djj::evolve_master(rho0, L, t_final, c.tolerance, n_samples, true);
        std::vector<std::string> cols = {"time"};
        for (int s = 0; s < lp.n_sites; ++s) cols.push_back("site_" + std::to_string(s));
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < traj.times.size(); ++i) {
            std::vector<double> row = {traj.times[i]};
            for (int s = 0; s < lp.n_sites; ++s)
                row.push_back(djj::expect_number(basis, traj.states[i], s));
            rows.push_back(std::move(row));
        }
        write_table(c, cols, rows);
        return 0;
    }

    if (c.method == djj::LindbladMethod::Trajectories) {
        std::vector<djj::cdouble> psi(basis.dim(), 0.0);
        psi[idx] = 1.0;
        int n_traj = c.n_traj > 0 ? c.n_traj : 1000;
        int n_samples = c.n_samples > 0 ? c.n_samples : 41;
        auto res = djj::evolve_trajectories(psi, lp, basis, jumps, t_final, n_traj,
                                            c.rng_seed, n_samples, c.tolerance, true);
        std::vector<std::string> cols = {"time"};
        for (int s = 0; s < lp.n_sites; ++s) {
            cols.push_back("site_" + std::to_string(s));
            cols.push_back("site_" + std::to_string(s) + "_stderr");
        }
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < res.times.size(); ++i) {
            std::vector<double> row = {res.times[i]};
            for (int s = 0; s < lp.n_sites; ++s) {
                row.push_back(res.mean[i][s]);
                row.push_back(res.std_error[i][s]);
            }
            rows.push_back(std::move(row));
        }
        write_table(c, cols, rows);
        sink.side() << "# trajectories = " << n_traj << ", jumps = "
                    << res.jump_count << ", restarts = " << res.zero_norm_restarts
                    << "\n";
        return 0;
    }

    auto L = djj::build_liouvillian_apply(lp, basis, jumps);
    auto rho = djj::find_ness(L, djj::NessMethod::LongTime, c.tolerance);
    std::vector<std::vector<double>> rows;
    for (int s = 0; s < lp.n_sites; ++s)
        rows.push_back({double(s), djj::expect_number(basis, rho, s)});
    write_table(c, {"site", "filling"}, rows);
    sink.side() << "# hop current into lossy site = "
                << djj::format_double(
                       djj::expect_hop_current(L, lp, rho, lp.lossy_site))
                << "\n";
    return 0;
}

int cmd_fit(const std::string& path) {
    auto pairs = djj::parse_xy_csv(slurp(path));
    auto fit = djj::fit_power_law(pairs);
    std::cout << "power-law fit: y = a * x^b over " << pairs.size() << " points\n"
              << "a = " << djj::format_double(fit.amplitude) << "\n"
              << "b = " << djj::format_double(fit.exponent) << " +/- "
              << djj::format_double(fit.exponent_stderr) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Driven-dissipative Josephson junction array toolkit"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "cap worker thread count");

    std::string cfg_path, csv_path;
    auto* sc_evolve = app.add_subcommand("evolve", "integrate one configuration in time");
    sc_evolve->add_option("config", cfg_path, "config file")->required();
    auto* sc_steady = app.add_subcommand("steady",
                                         "steady-state records and fixed points");
    sc_steady->add_option("config", cfg_path, "config file")->required();
    auto* sc_sweep = app.add_subcommand("sweep", "phase diagram over (J, gamma)");
    sc_sweep->add_option("config", cfg_path, "config file")->required();
    bool hysteresis = false;
    sc_sweep->add_flag("--hysteresis", hysteresis,
                       "carried-state sweep at fixed J instead of a phase diagram");
    auto* sc_lindblad = app.add_subcommand("lindblad", "quantum master equation runs");
    sc_lindblad->add_option("config", cfg_path, "config file")->required();
    auto* sc_fit = app.add_subcommand("fit", "power-law fit of a two-column CSV");
    sc_fit->add_option("csv", csv_path, "CSV with x, y columns")->required();
    auto* sc_validate = app.add_subcommand("validate",
                                           "parse a config and echo it normalized");
    sc_validate->add_option("config", cfg_path, "config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors exit 2, --help exits 0
    }

    try {
        if (sc_fit->parsed()) {
            if (threads > 0) djj::set_thread_count(threads);
            return cmd_fit(csv_path);
        }
        if (sc_validate->parsed()) return cmd_validate(cfg_path);

        djj::RunConfig c = load_config(cfg_path);
        if (c.threads > 0) djj::set_thread_count(c.threads);
        if (threads > 0) djj::set_thread_count(threads);  // flag wins over config
        if (sc_evolve->parsed()) return cmd_evolve(c);
        if (sc_steady->parsed()) return cmd_steady(c);
        if (sc_sweep->parsed()) return cmd_sweep(c, hysteresis);
        if (sc_lindblad->parsed()) return cmd_lindblad(c);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
