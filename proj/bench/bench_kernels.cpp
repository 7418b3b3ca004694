// Timing harness comparing the serial reference kernels against their
// OpenMP twins.  Outputs one line per kernel and fails if the parallel
// result is not bit-identical to the serial one.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "djj/lindblad.hpp"
#include "djj/parallel.hpp"
#include "djj/sweep.hpp"
#include "djj/twomode.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

template <class F>
double time_ms(F&& f, int reps) {
    auto t0 = clock_type::now();
    for (int i = 0; i < reps; ++i) f();
    auto t1 = clock_type::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool report(const char* name, double serial_ms, double parallel_ms, bool same) {
    std::printf("%-18s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   %s\n",
                name, serial_ms, parallel_ms, serial_ms / parallel_ms,
                same ? "bit-identical" : "MISMATCH");
    return same;
}

bool bench_liouvillian(bool quick) {
    djj::LatticeParams p;
    p.n_sites = 4;
    p.lossy_site = 1;
    p.gamma = p.j_coupling;
    p.n0 = 2;
    int n_max = quick ? 2 : 3;
    auto basis = djj::build_fock_basis(4, n_max, 4 * n_max);
    auto L = djj::build_liouvillian_apply(p, basis, {{p.lossy_site, p.gamma}});
    auto rho = djj::DensityMatrix::maximally_mixed(basis.dim());
    auto out_s = djj::DensityMatrix::zero(basis.dim());
    auto out_p = djj::DensityMatrix::zero(basis.dim());
    int reps = quick ? 20 : 200;
    double ts = time_ms([&] { L.apply(rho.a.data(), out_s.a.data(), false); }, reps);
    double tp = time_ms([&] { L.apply(rho.a.data(), out_p.a.data(), true); }, reps);
    bool same = std::memcmp(out_s.a.data(), out_p.a.data(),
                            out_s.a.size() * sizeof(djj::cdouble)) == 0;
    return report("liouvillian_apply", ts, tp, same);
}

bool bench_trajectories(bool quick) {
    djj::LatticeParams p;
    p.n_sites = 3;
    p.lossy_site = 1;
    p.gamma = p.j_coupling;
    p.n0 = 2;
    auto basis = djj::build_fock_basis(3, 2, 6);
    std::vector<int> occ = {1, 1, 1};
    std::vector<djj::cdouble> psi(basis.dim(), 0.0);
    psi[basis.index_of(occ.data())] = 1.0;
    int n_traj = quick ? 64 : 1024;
    double t_final = 2.0 / p.j_coupling;
    djj::TrajectoryResult rs, rp;
    double ts = time_ms([&] {
        rs = djj::evolve_trajectories(psi, p, basis, {{p.lossy_site, p.gamma}},
                                      t_final, n_traj, 42, 21, 1e-8, false);
    }, 1);
    double tp = time_ms([&] {
        rp = djj::evolve_trajectories(psi, p, basis, {{p.lossy_site, p.gamma}},
                                      t_final, n_traj, 42, 21, 1e-8, true);
    }, 1);
    bool same = rs.mean == rp.mean && rs.std_error == rp.std_error
                && rs.jump_count == rp.jump_count;
    return report("trajectory_batch", ts, tp, same);
}

bool bench_sweep(bool quick) {
    djj::RateModelParams p;
    auto gammas = djj::linspace(0.5 * p.lattice.j_coupling,
                                3.0 * p.lattice.j_coupling, quick ? 8 : 24);
    std::vector<djj::TauPoint> rs, rp;
    double ts = time_ms([&] {
        rs = djj::tau_curve(p, gammas, djj::InitialCondition::Empty, 0.05, false);
    }, 1);
    double tp = time_ms([&] {
        rp = djj::tau_curve(p, gammas, djj::InitialCondition::Empty, 0.05, true);
    }, 1);
    bool same = rs.size() == rp.size();
    for (std::size_t i = 0; same && i < rs.size(); ++i)
        same = rs[i].gamma == rp[i].gamma && rs[i].tau == rp[i].tau
               && rs[i].n_steady == rp[i].n_steady;
    return report("tau_curve_batch", ts, tp, same);
}

} // namespace

int main(int argc, char** argv) {
    bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
    std::printf("threads: %d\n", djj::thread_count());
    bool ok = bench_liouvillian(quick);
    ok = bench_trajectories(quick) && ok;
    ok = bench_sweep(quick) && ok;
    return ok ? 0 : 1;
}
