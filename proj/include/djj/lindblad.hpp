#pragma once
// Exact open-system dynamics for few-site Bose-Hubbard chains with local
// loss:  L(rho) = -i[H,rho] + sum_i (g_i/2)(2 a_i rho a_i+ - {a_i+ a_i, rho})
// with H = -J sum(a_i+ a_{i+1} + h.c.) + (U/2) sum n_i(n_i-1).
// Dense density-matrix propagation, quantum-jump trajectories, and NESS
// search at desk scale (D^2 capped).  The Liouvillian acts matrix-free:
// the D^2 x D^2 superoperator is never materialized.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "integrate.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace djj {

// --- basis ------------------------------------------------------------------

struct FockBasis {
    int n_sites = 0;
    int n_max = 0;        // per-site occupation cap
    int n_total_cap = 0;  // cap on total atom number
    std::vector<int> occ;        // dim x n_sites, row-major
    std::vector<std::uint64_t> keys;  // packed occupations, ascending

    int dim() const { return static_cast<int>(keys.size()); }
    int occupation(int idx, int site) const { return occ[idx * n_sites + site]; }

    std::uint64_t pack(const int* o) const {
        std::uint64_t k = 0;
        for (int s = 0; s < n_sites; ++s) k = (k << 8) | std::uint64_t(o[s]);
        return k;
    }
    int index_of(const int* o) const {
        auto it = std::lower_bound(keys.begin(), keys.end(), pack(o));
        if (it == keys.end() || *it != pack(o)) return -1;
        return static_cast<int>(it - keys.begin());
    }
};

// Enumerates all occupation tuples with n_i <= n_max and sum <= n_total_cap
// in lexicographic order (site 0 most significant).
inline FockBasis build_fock_basis(int n_sites, int n_max, int n_total_cap) {
    require(n_sites >= 1 && n_sites <= 8, "fock basis: 1..8 sites");
    require(n_max >= 0 && n_max <= 255, "fock basis: n_max in [0, 255]");
    require(n_total_cap >= 0, "fock basis: n_total_cap >= 0");
    FockBasis b;
    b.n_sites = n_sites;
    b.n_max = n_max;
    b.n_total_cap = n_total_cap;
    std::vector<int> cur(n_sites, 0);
    std::function<void(int, int)> rec = [&](int site, int used) {
        if (site == n_sites) {
            b.occ.insert(b.occ.end(), cur.begin(), cur.end());
            b.keys.push_back(b.pack(cur.data()));
            return;
        }
        int hi = std::min(n_max, n_total_cap - used);
        for (int n = 0; n <= hi; ++n) {
            cur[site] = n;
            rec(site + 1, used + n);
        }
        cur[site] = 0;
    };
    rec(0, 0);
    return b;
}

struct JumpOperatorSpec {
    int site = 0;
    double rate = 0.0;
};

struct DimensionOverflow : std::runtime_error {
    explicit DimensionOverflow(long d, long cap)
        : std::runtime_error(make_msg(d, cap)) {}
    static std::string make_msg(long d, long cap) {
        std::ostringstream os;
        os << "refusing to build Liouvillian: D^2 = " << d * d << " (D = " << d
           << ") exceeds cap " << cap;
        return os.str();
    }
};

struct IntegrationAccuracyError : std::runtime_error {
    explicit IntegrationAccuracyError(const std::string& what)
        : std::runtime_error(what) {}
};

struct NonUniqueSteadyState : std::runtime_error {
    NonUniqueSteadyState()
        : std::runtime_error("gamma = 0: dynamics are unitary and every energy "
                             "eigenprojector is stationary; no unique NESS") {}
};

// --- density matrix ---------------------------------------------------------

struct DensityMatrix {
    int dim = 0;
    std::vector<cdouble> a;  // row-major dim x dim

    cdouble& at(int r, int c) { return a[std::size_t(r) * dim + c]; }
    const cdouble& at(int r, int c) const { return a[std::size_t(r) * dim + c]; }

    cdouble trace() const {
        cdouble t = 0;
        for (int i = 0; i < dim; ++i) t += at(i, i);
        return t;
    }
    double hermiticity_defect() const {
        double d = 0;
        for (int r = 0; r < dim; ++r)
            for (int c = r; c < dim; ++c)
                d = std::max(d, std::abs(at(r, c) - std::conj(at(c, r))));
        return d;
    }
    void hermitize() {
        for (int r = 0; r < dim; ++r) {
            at(r, r) = cdouble(at(r, r).real(), 0.0);
            for (int c = r + 1; c < dim; ++c) {
                cdouble v = 0.5 * (at(r, c) + std::conj(at(c, r)));
                at(r, c) = v;
                at(c, r) = std::conj(v);
            }
        }
    }

    static DensityMatrix zero(int d) {
        DensityMatrix m;
        m.dim = d;
        m.a.assign(std::size_t(d) * d, cdouble(0, 0));
        return m;
    }
    static DensityMatrix pure(const std::vector<cdouble>& psi) {
        DensityMatrix m = zero(static_cast<int>(psi.size()));
        double n2 = 0;
        for (const auto& v : psi) n2 += std::norm(v);
        require(n2 > 0, "pure state must be nonzero");
        for (int r = 0; r < m.dim; ++r)
            for (int c = 0; c < m.dim; ++c)
                m.at(r, c) = psi[r] * std::conj(psi[c]) / n2;
        return m;
    }
    static DensityMatrix maximally_mixed(int d) {
        DensityMatrix m = zero(d);
        for (int i = 0; i < d; ++i) m.at(i, i) = 1.0 / d;
        return m;
    }
};

// lambda_min(rho) > -floor_eps check by Cholesky of rho + floor_eps*I.
inline bool positive_within(const DensityMatrix& rho, double floor_eps) {
    const int D = rho.dim;
    std::vector<cdouble> L(std::size_t(D) * D, cdouble(0, 0));
    auto el = [&](int r, int c) -> cdouble& { return L[std::size_t(r) * D + c]; };
    for (int j = 0; j < D; ++j) {
        double s = rho.at(j, j).real() + floor_eps;
        for (int k = 0; k < j; ++k) s -= std::norm(el(j, k));
        if (s <= 0) return false;
        double d = std::sqrt(s);
        el(j, j) = d;
        for (int i = j + 1; i < D; ++i) {
            cdouble v = rho.at(i, j);
            for (int k = 0; k < j; ++k) v -= el(i, k) * std::conj(el(j, k));
            el(i, j) = v / d;
        }
    }
    return true;
}

inline double expect_number(const FockBasis& b, const DensityMatrix& rho, int site) {
    double s = 0;
    for (int i = 0; i < rho.dim; ++i)
        s += b.occupation(i, site) * rho.at(i, i).real();
    return s;
}

// --- sparse Hamiltonian -----------------------------------------------------

struct SparseOp {
    int dim = 0;
    std::vector<int> ptr, idx;
    std::vector<double> val;

    void apply(const cdouble* x, cdouble* y) const {
        for (int r = 0; r < dim; ++r) {
            cdouble s = 0;
            for (int k = ptr[r]; k < ptr[r + 1]; ++k) s += val[k] * x[idx[k]];
            y[r] = s;
        }
    }
};

inline SparseOp build_hamiltonian(const LatticeParams& p, const FockBasis& b) {
    if (b.n_sites != p.n_sites)
        throw std::invalid_argument("basis does not match n_sites");
    const int D = b.dim();
    struct Entry { int r, c; double v; };
    std::vector<Entry> coo;
    std::vector<int> o(b.n_sites);
    for (int c = 0; c < D; ++c) {
        for (int s = 0; s < b.n_sites; ++s) o[s] = b.occupation(c, s);
        double diag = 0;
        for (int s = 0; s < b.n_sites; ++s)
            diag += 0.5 * p.u_interaction * o[s] * (o[s] - 1.0);
        if (diag != 0) coo.push_back({c, c, diag});
        for (int bnd = 0; bnd + 1 < b.n_sites; ++bnd) {
            // -J a+_bnd a_{bnd+1} |c>
            if (o[bnd + 1] >= 1 && o[bnd] + 1 <= b.n_max) {
                o[bnd] += 1; o[bnd + 1] -= 1;
                int r = b.index_of(o.data());
                double amp = std::sqrt(double(o[bnd]) * (o[bnd + 1] + 1.0));
                o[bnd] -= 1; o[bnd + 1] += 1;
                if (r >= 0) coo.push_back({r, c, -p.j_coupling * amp});
            }
            // -J a+_{bnd+1} a_bnd |c>
            if (o[bnd] >= 1 && o[bnd + 1] + 1 <= b.n_max) {
                o[bnd] -= 1; o[bnd + 1] += 1;
                int r = b.index_of(o.data());
                double amp = std::sqrt(double(o[bnd + 1]) * (o[bnd] + 1.0));
                o[bnd] += 1; o[bnd + 1] -= 1;
                if (r >= 0) coo.push_back({r, c, -p.j_coupling * amp});
            }
        }
    }
    std::sort(coo.begin(), coo.end(), [](const Entry& a, const Entry& b2) {
        return a.r != b2.r ? a.r < b2.r : a.c < b2.c;
    });
    SparseOp H;
    H.dim = D;
    H.ptr.assign(D + 1, 0);
    for (const auto& e : coo) ++H.ptr[e.r + 1];
    for (int r = 0; r < D; ++r) H.ptr[r + 1] += H.ptr[r];
    H.idx.resize(coo.size());
    H.val.resize(coo.size());
    for (std::size_t k = 0; k < coo.size(); ++k) {
        H.idx[k] = coo[k].c;
        H.val[k] = coo[k].v;
    }
    return H;
}

// --- Liouvillian ------------------------------------------------------------

struct Liouvillian {
    FockBasis basis;
    SparseOp h;
    struct Channel {
        int site;
        double rate;
        std::vector<int> raise_idx;   // state with one more atom at site, or -1
        std::vector<int> lower_idx;   // state with one less atom at site, or -1
        std::vector<double> occ;      // n_site per state (a+a diagonal)
    };
    std::vector<Channel> channels;

    int dim() const { return h.dim; }
    bool any_loss() const {
        for (const auto& c : channels)
            if (c.rate > 0) return true;
        return false;
    }

    // out = L(rho), both row-major D x D.  Each output row depends only on
    // the input, so rows are computed independently; serial and parallel
    // paths run the identical per-row code and agree bitwise.
    void apply(const cdouble* rho, cdouble* out, bool parallel = false) const {
        const int D = h.dim;
        auto row_work = [&](long r) {
            cdouble* o = out + std::size_t(r) * D;
            const cdouble* rrow = rho + std::size_t(r) * D;
            for (int c = 0; c < D; ++c) o[c] = 0;
            // -i (H rho): row r of H times rho
            for (int k = h.ptr[r]; k < h.ptr[r + 1]; ++k) {
                const cdouble* src = rho + std::size_t(h.idx[k]) * D;
                cdouble w = cdouble(0, -1) * h.val[k];
                for (int c = 0; c < D; ++c) o[c] += w * src[c];
            }
            // +i (rho H): row r of rho times H, scattered by H's rows
            for (int kcol = 0; kcol < D; ++kcol) {
                cdouble w = cdouble(0, 1) * rrow[kcol];
                if (w == cdouble(0, 0)) continue;
                for (int k = h.ptr[kcol]; k < h.ptr[kcol + 1]; ++k)
                    o[h.idx[k]] += w * h.val[k];
            }
            for (const auto& ch : channels) {
                if (ch.rate == 0) continue;
                const double g = ch.rate;
                const int R = ch.raise_idx[r];
                const double dr = ch.occ[r];
                if (R >= 0) {
                    const double ar = std::sqrt(ch.occ[R]);
                    const cdouble* up = rho + std::size_t(R) * D;
                    for (int c = 0; c < D; ++c) {
                        int C = ch.raise_idx[c];
                        if (C >= 0)
                            o[c] += g * ar * std::sqrt(ch.occ[C]) * up[C];
                    }
                }
                for (int c = 0; c < D; ++c)
                    o[c] -= 0.5 * g * (dr + ch.occ[c]) * rrow[c];
            }
        };
        for_each_index(D, parallel, row_work);
    }

    DensityMatrix apply(const DensityMatrix& rho, bool parallel = false) const {
        DensityMatrix out = DensityMatrix::zero(rho.dim);
        apply(rho.a.data(), out.a.data(), parallel);
        return out;
    }
};

inline Liouvillian build_liouvillian_apply(const LatticeParams& p, const FockBasis& b,
                                           const std::vector<JumpOperatorSpec>& jumps,
                                           long d2_cap = 400L * 400L) {
    p.validate();
    long D = b.dim();
    if (D * D > d2_cap) throw DimensionOverflow(D, d2_cap);
    Liouvillian L;
    L.basis = b;
    L.h = build_hamiltonian(p, b);
    std::vector<int> o(b.n_sites);
    for (const auto& j : jumps) {
        require(j.site >= 0 && j.site < b.n_sites, "jump site out of range");
        require(finite(j.rate) && j.rate >= 0, "jump rate must be >= 0");
        Liouvillian::Channel ch;
        ch.site = j.site;
        ch.rate = j.rate;
        ch.raise_idx.resize(D);
        ch.lower_idx.resize(D);
        ch.occ.resize(D);
        for (int i = 0; i < D; ++i) {
            for (int s = 0; s < b.n_sites; ++s) o[s] = b.occupation(i, s);
            ch.occ[i] = o[j.site];
            o[j.site] += 1;
            ch.raise_idx[i] = (o[j.site] <= b.n_max) ? b.index_of(o.data()) : -1;
            o[j.site] -= 2;
            ch.lower_idx[i] = (o[j.site] >= 0) ? b.index_of(o.data()) : -1;
            o[j.site] += 1;
        }
        L.channels.push_back(std::move(ch));
    }
    return L;
}

// Coherent-current operator expectation at site m:
//   <i J (a+_m a_{m-1} + a+_m a_{m+1} - h.c.)>  — the quantum Eq.-2 current.
inline double expect_hop_current(const Liouvillian& L, const LatticeParams& p,
                                 const DensityMatrix& rho, int m) {
    const FockBasis& b = L.basis;
    std::vector<int> o(b.n_sites);
    cdouble acc = 0;
    for (int c = 0; c < rho.dim; ++c) {
        for (int s = 0; s < b.n_sites; ++s) o[s] = b.occupation(c, s);
        for (int nb : {m - 1, m + 1}) {
            if (nb < 0 || nb >= b.n_sites) continue;
            // term i J a+_m a_nb |c><r| contribution: r = c with nb->m move
            if (o[nb] >= 1 && o[m] + 1 <= b.n_max) {
                o[m] += 1; o[nb] -= 1;
                int r = b.index_of(o.data());
                double amp = std::sqrt(double(o[m]) * (o[nb] + 1.0));
                o[m] -= 1; o[nb] += 1;
                if (r >= 0) {
                    cdouble kv = cdouble(0, p.j_coupling) * amp;
                    // tr(K rho) over this entry pair: K_{rc} rho_{cr} + K_{cr} rho_{rc}
                    acc += kv * rho.at(c, r) + std::conj(kv) * rho.at(r, c);
                }
            }
        }
    }
    return acc.real();
}

// --- dense master-equation propagation --------------------------------------

struct MasterTrajectory {
    std::vector<double> times;
    std::vector<DensityMatrix> states;
};

inline MasterTrajectory evolve_master(const DensityMatrix& rho0, const Liouvillian& L,
                                      double t_final, double tol, int n_samples = 51,
                                      bool parallel = false) {
    const int D = L.dim();
    if (rho0.dim != D) throw std::invalid_argument("evolve_master: dimension mismatch");
    if (!(t_final > 0) || !(tol > 0))
        throw std::invalid_argument("evolve_master: t_final and tol must be > 0");

    auto rhs = [&](double, const std::vector<cdouble>& y, std::vector<cdouble>& dy) {
        dy.resize(y.size());
        L.apply(y.data(), dy.data(), parallel);
    };
    auto rehermitize = [&](double, std::vector<cdouble>& y) {
        for (int r = 0; r < D; ++r) {
            y[std::size_t(r) * D + r] = cdouble(y[std::size_t(r) * D + r].real(), 0.0);
            for (int c = r + 1; c < D; ++c) {
                cdouble v = 0.5 * (y[std::size_t(r) * D + c]
                                   + std::conj(y[std::size_t(c) * D + r]));
                y[std::size_t(r) * D + c] = v;
                y[std::size_t(c) * D + r] = std::conj(v);
            }
        }
        return true;
    };

    MasterTrajectory out;
    out.times = linspace(0.0, t_final, n_samples);
    std::vector<cdouble> y = rho0.a;
    DensityMatrix snap = rho0;
    auto check = [&](const DensityMatrix& m, double t) {
        if (std::abs(m.trace() - cdouble(1, 0)) > 1e-8 * (1.0 + t))
            throw IntegrationAccuracyError("trace drift beyond tolerance at t = "
                                           + std::to_string(t));
        if (!positive_within(m, 1e-6 + 1e-9))
            throw IntegrationAccuracyError("density matrix eigenvalue below -1e-6 "
                                           "at t = " + std::to_string(t));
    };
    check(snap, 0.0);
    out.states.push_back(snap);
    for (int i = 1; i < n_samples; ++i) {
        integrate_to_hooked(rhs, y, out.times[i - 1], out.times[i], tol, rehermitize);
        snap.a = y;
        check(snap, out.times[i]);
        out.states.push_back(snap);
    }
    return out;
}

// --- quantum-jump trajectories ----------------------------------------------

struct TrajectoryResult {
    std::vector<double> times;
    // mean[sample][site], stderr[sample][site]
    std::vector<std::vector<double>> mean;
    std::vector<std::vector<double>> std_error;
    long zero_norm_restarts = 0;
    long jump_count = 0;
};

inline TrajectoryResult evolve_trajectories(const std::vector<cdouble>& psi0,
                                            const LatticeParams& p, const FockBasis& b,
                                            const std::vector<JumpOperatorSpec>& jumps,
                                            double t_final, int n_traj,
                                            std::uint64_t rng_seed,
                                            int n_samples = 41, double tol = 1e-8,
                                            bool parallel = true) {
    require(n_traj >= 1, "n_traj must be >= 1");
    Liouvillian L = build_liouvillian_apply(p, b, jumps);
    const int D = L.dim();
    if (static_cast<int>(psi0.size()) != D)
        throw std::invalid_argument("evolve_trajectories: psi0 dimension mismatch");
    double nn = 0;
    for (const auto& v : psi0) nn += std::norm(v);
    require(nn > 0, "psi0 must be nonzero");

    const bool has_loss = L.any_loss();
    const int S = b.n_sites;
    auto times = linspace(0.0, t_final, n_samples);

    // per-trajectory occupation series, merged in index order afterwards
    std::vector<double> table(std::size_t(n_traj) * n_samples * S, 0.0);
    std::vector<long> restarts(n_traj, 0), njumps(n_traj, 0);

    auto rhs = [&](double, const std::vector<cdouble>& y, std::vector<cdouble>& dy) {
        dy.resize(y.size());
        L.h.apply(y.data(), dy.data());
        for (int i = 0; i < D; ++i) {
            cdouble v = cdouble(0, -1) * dy[i];
            for (const auto& ch : L.channels)
                v -= 0.5 * ch.rate * ch.occ[i] * y[i];
            dy[i] = v;
        }
    };

    auto run_one = [&](long idx) {
        Xoshiro256pp rng(rng_seed + std::uint64_t(idx));
        for (int attempt = 0; attempt < 100; ++attempt) {
            std::vector<cdouble> psi = psi0;
            for (auto& v : psi) v /= std::sqrt(nn);
            double thr = rng.uniform();
            while (thr <= 0.0) thr = rng.uniform();

            RK45Stepper<std::vector<cdouble>, decltype(rhs)&> stepper(
                rhs, psi, 0.0, tol, t_final);
            auto norm2 = [](const std::vector<cdouble>& v) {
                double s = 0;
                for (const auto& z : v) s += std::norm(z);
                return s;
            };
            bool dead = false;
            int si = 0;
            auto record = [&](const std::vector<cdouble>& v, int sample) {
                double n2 = norm2(v);
                for (int s = 0; s < S; ++s) {
                    double x = 0;
                    for (int i = 0; i < D; ++i)
                        x += b.occupation(i, s) * std::norm(v[i]);
                    table[(std::size_t(idx) * n_samples + sample) * S + s] = x / n2;
                }
            };
            record(psi, si++);
            while (si < n_samples && !dead) {
                double target = times[si];
                while (stepper.t() < target) {
                    stepper.step(target);
                    if (!has_loss || norm2(stepper.y()) > thr) continue;
                    // jump inside (t_prev, t]: bisect to where the squared
                    // norm crosses the threshold (norm decays monotonically)
                    double lo = stepper.t_prev(), hi = stepper.t();
                    std::vector<cdouble> cand = stepper.y();  // norm <= thr side
                    for (int it = 0; it < 200; ++it) {
                        if (std::abs(norm2(cand) - thr) < 1e-6
                            || hi - lo < 1e-15 * t_final)
                            break;
                        double mid = 0.5 * (lo + hi);
                        std::vector<cdouble> probe = stepper.y_prev();
                        integrate_to(rhs, probe, stepper.t_prev(), mid, tol);
                        if (norm2(probe) > thr) {
                            lo = mid;
                        } else {
                            hi = mid;
                            cand = std::move(probe);
                        }
                    }
                    double t_jump = hi;
                    // channel selection weighted by g * |a psi|^2
                    std::vector<double> w(L.channels.size(), 0.0);
                    double wt = 0;
                    for (std::size_t c = 0; c < L.channels.size(); ++c) {
                        double s = 0;
                        const auto& ch = L.channels[c];
                        for (int i = 0; i < D; ++i)
                            s += ch.rate * ch.occ[i] * std::norm(cand[i]);
                        w[c] = s;
                        wt += s;
                    }
                    if (wt <= 0) {
                        // crossing with zero loss weight: state sits in the
                        // dark subspace; rearm below the current norm
                        stepper.set_state(cand, t_jump);
                        thr = rng.uniform() * norm2(cand);
                        continue;
                    }
                    double u = rng.uniform() * wt, acc2 = 0;
                    std::size_t pick = 0;
                    for (std::size_t c = 0; c < L.channels.size(); ++c) {
                        acc2 += w[c];
                        if (u <= acc2) { pick = c; break; }
                    }
                    const auto& ch = L.channels[pick];
                    std::vector<cdouble> post(D, cdouble(0, 0));
                    for (int i = 0; i < D; ++i)
                        if (ch.lower_idx[i] >= 0)
                            post[ch.lower_idx[i]] += std::sqrt(ch.occ[i]) * cand[i];
                    double pn = norm2(post);
                    if (pn < 1e-280) { dead = true; break; }
                    for (auto& v : post) v /= std::sqrt(pn);
                    ++njumps[idx];
                    stepper.set_state(post, t_jump);
                    thr = rng.uniform();
                    while (thr <= 0.0) thr = rng.uniform();
                }
                if (dead) break;
                record(stepper.y(), si++);
            }
            if (!dead) return;
            ++restarts[idx];
        }
        throw std::runtime_error("trajectory restarted 100 times on zero-norm collapse");
    };

    for_each_index(n_traj, parallel, run_one);

    TrajectoryResult res;
    res.times = times;
    res.mean.assign(n_samples, std::vector<double>(S, 0.0));
    res.std_error.assign(n_samples, std::vector<double>(S, 0.0));
    for (long k = 0; k < n_traj; ++k) {
        res.zero_norm_restarts += restarts[k];
        res.jump_count += njumps[k];
    }
    for (int s = 0; s < n_samples; ++s) {
        for (int site = 0; site < S; ++site) {
            double sum = 0;
            for (long k = 0; k < n_traj; ++k)
                sum += table[(std::size_t(k) * n_samples + s) * S + site];
            double m = sum / n_traj;
            double var = 0;
            for (long k = 0; k < n_traj; ++k) {
                double d = table[(std::size_t(k) * n_samples + s) * S + site] - m;
                var += d * d;
            }
            res.mean[s][site] = m;
            res.std_error[s][site] =
                (n_traj > 1) ? std::sqrt(var / (double(n_traj) * (n_traj - 1))) : 0.0;
        }
    }
    return res;
}

// --- steady state -----------------------------------------------------------

enum class NessMethod { LongTime, PowerIteration };

inline double max_entry_norm(const DensityMatrix& m) {
    double v = 0;
    for (const auto& z : m.a) v = std::max(v, std::abs(z));
    return v;
}

inline DensityMatrix find_ness(const Liouvillian& L, NessMethod method,
                               double residual_tol = 1e-8) {
    if (!L.any_loss()) throw NonUniqueSteadyState();
    const int D = L.dim();
    double gmin = std::numeric_limits<double>::max();
    for (const auto& c : L.channels)
        if (c.rate > 0) gmin = std::min(gmin, c.rate);

    DensityMatrix rho = DensityMatrix::maximally_mixed(D);
    if (method == NessMethod::LongTime) {
        double chunk = 2.0 / gmin;
        for (int it = 0; it < 400; ++it) {
            DensityMatrix r = L.apply(rho);
            if (max_entry_norm(r) < residual_tol) return rho;
            MasterTrajectory t = evolve_master(rho, L, chunk, 1e-10, 2);
            rho = t.states.back();
            rho.hermitize();
            double tr = rho.trace().real();  // keep roundoff from accumulating
            for (auto& z : rho.a) z /= tr;
        }
        throw std::runtime_error("find_ness(LongTime): residual did not reach tolerance");
    }

    // power iteration on (1 + eps*L); eps from a crude spectral estimate
    double hmax = 0;
    for (int r = 0; r < D; ++r) {
        double s = 0;
        for (int k = L.h.ptr[r]; k < L.h.ptr[r + 1]; ++k) s += std::abs(L.h.val[k]);
        hmax = std::max(hmax, s);
    }
    double dmax = 0;
    for (const auto& c : L.channels) {
        double o = 0;
        for (double v : c.occ) o = std::max(o, v);
        dmax += c.rate * (o + 1.0);
    }
    double eps = 0.25 / std::max(2.0 * hmax + dmax, 1e-12);
    DensityMatrix lr = DensityMatrix::zero(D);
    for (long it = 0; it < 2000000; ++it) {
        L.apply(rho.a.data(), lr.a.data());
        double res = 0;
        for (const auto& z : lr.a) res = std::max(res, std::abs(z));
        if (res < residual_tol) return rho;
        for (std::size_t i = 0; i < rho.a.size(); ++i) rho.a[i] += eps * lr.a[i];
        rho.hermitize();
        double tr = rho.trace().real();
        if (tr <= 0) throw std::runtime_error("find_ness: trace collapsed");
        for (auto& z : rho.a) z /= tr;
    }
    throw std::runtime_error("find_ness(PowerIteration): no convergence");
}

} // namespace djj
