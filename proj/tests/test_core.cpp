#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "djj/parallel.hpp"
#include "djj/rng.hpp"
#include "djj/types.hpp"

using namespace djj;

static const double kNan = std::numeric_limits<double>::quiet_NaN();
static const double kInf = std::numeric_limits<double>::infinity();

TEST_CASE("lattice params: defaults are the paper operating point and validate") {
    LatticeParams p;
    CHECK(p.n_sites == 41);
    CHECK(p.j_coupling == 230.0);
    CHECK(p.u_interaction == 0.5);
    CHECK(p.gamma == 0.0);
    CHECK(p.lossy_site == 20);
    CHECK(p.n0 == 700.0);
    CHECK_NOTHROW(p.validate());
}

TEST_CASE("lattice params: out-of-range fields rejected") {
    LatticeParams p;
    p.n_sites = 1;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = LatticeParams{};
    p.j_coupling = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = LatticeParams{};
    p.j_coupling = -5;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = LatticeParams{};
    p.u_interaction = -0.1;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = LatticeParams{};
    p.gamma = -1;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = LatticeParams{};
    p.n0 = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = LatticeParams{};
    p.lossy_site = -1;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = LatticeParams{};
    p.lossy_site = 41;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("lattice params: NaN and Inf rejected in every numeric field") {
    for (double bad : {kNan, kInf, -kInf}) {
        LatticeParams p;
        p.j_coupling = bad;
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
        p = LatticeParams{};
        p.u_interaction = bad;
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
        p = LatticeParams{};
        p.gamma = bad;
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
        p = LatticeParams{};
        p.n0 = bad;
        CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    }
}

TEST_CASE("effective coupling: J'(0) = J for the Franck-Condon variant") {
    CouplingModel cm{CouplingVariant::FranckCondon, 350.0};
    CHECK(effective_coupling(cm, 230.0, 0.0) == 230.0);
}

TEST_CASE("effective coupling: delta_n = sigma suppresses by exactly 1/e") {
    CouplingModel cm{CouplingVariant::FranckCondon, 350.0};
    CHECK(effective_coupling(cm, 230.0, 350.0)
          == doctest::Approx(230.0 * std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("effective coupling: constant variant ignores the population difference") {
    CouplingModel cm{CouplingVariant::Constant, 350.0};
    CHECK(effective_coupling(cm, 230.0, 700.0) == 230.0);
    CHECK(effective_coupling(cm, 230.0, -50.0) == 230.0);
}

TEST_CASE("effective coupling: negative delta_n means no suppression") {
    CouplingModel cm{CouplingVariant::FranckCondon, 350.0};
    CHECK(effective_coupling(cm, 230.0, -400.0) == 230.0);
}

TEST_CASE("effective coupling: non-finite delta_n and bad j rejected") {
    CouplingModel cm{CouplingVariant::FranckCondon, 350.0};
    CHECK_THROWS_AS(effective_coupling(cm, 230.0, kNan), std::invalid_argument);
    CHECK_THROWS_AS(effective_coupling(cm, 230.0, kInf), std::invalid_argument);
    CHECK_THROWS_AS(effective_coupling(cm, 0.0, 10.0), std::invalid_argument);
    CHECK_THROWS_AS(effective_coupling(cm, -1.0, 10.0), std::invalid_argument);
}

TEST_CASE("effective coupling: non-increasing in delta_n, always in (0, J]") {
    CouplingModel cm{CouplingVariant::FranckCondon, 350.0};
    double prev = effective_coupling(cm, 230.0, -100.0);
    for (int i = 0; i < 1000; ++i) {
        double dn = -100.0 + 1.5 * (i + 1);
        double v = effective_coupling(cm, 230.0, dn);
        CHECK(v <= prev);
        CHECK(v > 0.0);
        CHECK(v <= 230.0);
        prev = v;
    }
}

TEST_CASE("coupling model: fc_width must be a positive finite number") {
    CouplingModel cm{CouplingVariant::FranckCondon, 0.0};
    CHECK_THROWS_AS(cm.validate(), std::invalid_argument);
    cm.fc_width = -10;
    CHECK_THROWS_AS(cm.validate(), std::invalid_argument);
    cm.fc_width = kNan;
    CHECK_THROWS_AS(cm.validate(), std::invalid_argument);
    cm.fc_width = 350;
    CHECK_NOTHROW(cm.validate());
}

TEST_CASE("chemical potential: equal fillings give zero difference") {
    ChemicalPotentialModel m{MuVariant::Linear, 0.5};
    CHECK(chemical_potential_difference(m, 700.0, 700.0) == 0.0);
}

TEST_CASE("chemical potential: linear in the filling difference") {
    ChemicalPotentialModel m1{MuVariant::Linear, 1.0};
    CHECK(chemical_potential_difference(m1, 700.0, 0.0) == 700.0);
    ChemicalPotentialModel mh{MuVariant::Linear, 0.5};
    CHECK(chemical_potential_difference(mh, 700.0, 350.0) == 175.0);
}

TEST_CASE("chemical potential: mu(0) = 0 and strictly increasing") {
    ChemicalPotentialModel m{MuVariant::Linear, 0.5};
    CHECK(m.mu(0.0) == 0.0);
    double prev = m.mu(0.0);
    for (int i = 1; i <= 100; ++i) {
        double v = m.mu(10.0 * i);
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("chemical potential: antisymmetric in its arguments") {
    ChemicalPotentialModel m{MuVariant::Linear, 0.5};
    for (int a = 0; a <= 10; ++a)
        for (int b = 0; b <= 10; ++b)
            CHECK(chemical_potential_difference(m, 70.0 * a, 70.0 * b)
                  == -chemical_potential_difference(m, 70.0 * b, 70.0 * a));
}

TEST_CASE("chemical potential: negative fillings rejected") {
    ChemicalPotentialModel m{MuVariant::Linear, 0.5};
    CHECK_THROWS_AS(chemical_potential_difference(m, -1.0, 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(chemical_potential_difference(m, 0.0, -1.0),
                    std::invalid_argument);
    ChemicalPotentialModel bad{MuVariant::Linear, -0.5};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("splitmix64 matches the published reference stream") {
    SplitMix64 sm(0);
    CHECK(sm.next() == 0xe220a8397b1dcdafULL);
    CHECK(sm.next() == 0x6e789e6aa1b965f4ULL);
    CHECK(sm.next() == 0x06c45d188009454fULL);
}

TEST_CASE("xoshiro256++: deterministic per seed, uniform in [0,1)") {
    Xoshiro256pp a(12345), b(12345), c(54321);
    bool all_same = true, any_diff = false;
    for (int i = 0; i < 1000; ++i) {
        double ua = a.uniform(), ub = b.uniform(), uc = c.uniform();
        all_same = all_same && (ua == ub);
        any_diff = any_diff || (ua != uc);
        CHECK(ua >= 0.0);
        CHECK(ua < 1.0);
    }
    CHECK(all_same);
    CHECK(any_diff);
}

TEST_CASE("xoshiro256++: mean of the uniform stream is near 1/2") {
    Xoshiro256pp r(7);
    double s = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) s += r.uniform();
    CHECK(std::abs(s / n - 0.5) < 0.005);  // ~3.5 sigma of 1/sqrt(12n)
}

TEST_CASE("parallel loop matches the serial reference slot for slot") {
    const long n = 1000;
    std::vector<double> a(n), b(n);
    for_each_index_serial(n, [&](long i) { a[i] = std::sin(0.001 * i) * i; });
    for_each_index_parallel(n, [&](long i) { b[i] = std::sin(0.001 * i) * i; });
    CHECK(a == b);
}

TEST_CASE("exceptions thrown inside a parallel region propagate to the caller") {
    CHECK_THROWS_WITH_AS(
        for_each_index_parallel(100, [](long i) {
            if (i == 57) throw std::runtime_error("worker failure");
        }),
        "worker failure", std::runtime_error);
}
