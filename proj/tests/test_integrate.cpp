#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "djj/integrate.hpp"

using namespace djj;
using cvec = std::vector<std::complex<double>>;
using rvec = std::vector<double>;

TEST_CASE("exponential decay integrates to machine-near accuracy") {
    rvec y = {1.0};
    auto rhs = [](double, const rvec& v, rvec& dv) {
        dv.resize(1);
        dv[0] = -v[0];
    };
    integrate_to(rhs, y, 0.0, 10.0, 1e-10);
    CHECK(std::abs(y[0] - std::exp(-10.0)) < 1e-11);
}

TEST_CASE("complex rotation preserves modulus and lands on the right phase") {
    const double w = 3.0;
    cvec y = {{1.0, 0.0}};
    auto rhs = [&](double, const cvec& v, cvec& dv) {
        dv.resize(1);
        dv[0] = std::complex<double>(0, w) * v[0];
    };
    integrate_to(rhs, y, 0.0, 20.0, 1e-10);
    CHECK(std::abs(std::abs(y[0]) - 1.0) < 1e-9);
    CHECK(std::abs(y[0] - std::polar(1.0, w * 20.0)) < 1e-7);
}

TEST_CASE("tightening the tolerance tightens the result") {
    auto run = [](double tol) {
        rvec y = {1.0, 0.0};
        auto rhs = [](double, const rvec& v, rvec& dv) {
            dv.resize(2);
            dv[0] = v[1];
            dv[1] = -v[0];
        };
        integrate_to(rhs, y, 0.0, 30.0, tol);
        return std::hypot(y[0] - std::cos(30.0), y[1] + std::sin(30.0));
    };
    double loose = run(1e-5), tight = run(1e-9);
    CHECK(tight < loose);
    CHECK(tight < 1e-7);
}

TEST_CASE("finite-time blowup raises a stiffness error near the singularity") {
    rvec y = {1.0};
    auto rhs = [](double, const rvec& v, rvec& dv) {
        dv.resize(1);
        dv[0] = v[0] * v[0];  // y = 1/(1-t), singular at t = 1
    };
    try {
        integrate_to(rhs, y, 0.0, 2.0, 1e-8);
        FAIL("expected StiffnessError");
    } catch (const StiffnessError& e) {
        CHECK(e.t_fail > 0.99);
        CHECK(e.t_fail <= 1.0);
        CHECK(std::string(e.what()).find("step size underflow")
              != std::string::npos);
    }
}

TEST_CASE("stepper exposes the pre-step state for event location") {
    rvec y0 = {1.0};
    auto rhs = [](double, const rvec& v, rvec& dv) {
        dv.resize(1);
        dv[0] = -v[0];
    };
    RK45Stepper<rvec, decltype(rhs)> st(rhs, y0, 0.0, 1e-8, 1.0);
    double t_before = st.t();
    double y_before = st.y()[0];
    REQUIRE(st.step(1.0));
    CHECK(st.t_prev() == t_before);
    CHECK(st.y_prev()[0] == y_before);
    CHECK(st.t() > t_before);
    while (st.step(1.0)) {}
    CHECK(st.t() == 1.0);
    CHECK(std::abs(st.y()[0] - std::exp(-1.0)) < 1e-9);
}

TEST_CASE("stepping in pieces equals one continuous integration") {
    auto rhs = [](double t, const rvec& v, rvec& dv) {
        dv.resize(1);
        dv[0] = std::cos(t) * v[0];
    };
    rvec a = {1.0};
    integrate_to(rhs, a, 0.0, 5.0, 1e-10);
    rvec b = {1.0};
    for (double tl : linspace(0.0, 5.0, 101))
        integrate_to(rhs, b, std::max(tl - 0.05, 0.0), tl, 1e-10);
    CHECK(std::abs(a[0] - b[0]) < 1e-8);
    CHECK(std::abs(a[0] - std::exp(std::sin(5.0))) < 1e-8);
}

TEST_CASE("hook modifications are honored by subsequent steps") {
    rvec y = {1.0};
    auto rhs = [](double, const rvec& v, rvec& dv) {
        dv.resize(1);
        dv[0] = -10.0 * v[0];
    };
    // projection hook pinning the value back to 1 after every accepted step
    integrate_to_hooked(rhs, y, 0.0, 1.0, 1e-8, [](double, rvec& v) {
        v[0] = 1.0;
        return true;
    });
    CHECK(y[0] == 1.0);
}

TEST_CASE("sampled integration visits exactly the requested times") {
    rvec y = {1.0};
    auto rhs = [](double, const rvec& v, rvec& dv) {
        dv.resize(1);
        dv[0] = -v[0];
    };
    std::vector<double> seen;
    auto times = linspace(0.0, 2.0, 21);
    integrate_sampled(rhs, y, 0.0, times, 1e-10,
                      [&](double t, const rvec& v) {
                          seen.push_back(t);
                          CHECK(std::abs(v[0] - std::exp(-t)) < 1e-9);
                      });
    CHECK(seen == times);
}

TEST_CASE("sampled integration rejects non-ascending times") {
    rvec y = {1.0};
    auto rhs = [](double, const rvec& v, rvec& dv) {
        dv.resize(1);
        dv[0] = -v[0];
    };
    std::vector<double> bad = {0.0, 1.0, 0.5};
    CHECK_THROWS_AS(integrate_sampled(rhs, y, 0.0, bad, 1e-8,
                                      [](double, const rvec&) {}),
                    std::invalid_argument);
}

TEST_CASE("linspace and geomspace hit both endpoints exactly") {
    auto l = linspace(0.25, 4.0, 7);
    CHECK(l.size() == 7);
    CHECK(l.front() == 0.25);
    CHECK(l.back() == 4.0);
    for (std::size_t i = 1; i < l.size(); ++i)
        CHECK(l[i] - l[i - 1] == doctest::Approx(3.75 / 6).epsilon(1e-12));

    auto g = geomspace(0.25, 4.0, 5);
    CHECK(g.size() == 5);
    CHECK(g.front() == 0.25);
    CHECK(g.back() == 4.0);
    for (std::size_t i = 1; i < g.size(); ++i)
        CHECK(g[i] / g[i - 1] == doctest::Approx(2.0).epsilon(1e-12));

    CHECK(linspace(3.0, 9.0, 1) == std::vector<double>{3.0});
    CHECK(geomspace(3.0, 9.0, 1) == std::vector<double>{3.0});
}
