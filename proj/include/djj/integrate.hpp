#pragma once
// Adaptive Dormand-Prince 5(4) integration over vector-like states
// (real or complex elements).  Error is controlled per unit time: a step
// of size h is accepted when max_i |e_i|/(1+|y_i|) <= tol*h.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace djj {

struct StiffnessError : std::runtime_error {
    double t_fail;
    explicit StiffnessError(double t)
        : std::runtime_error(make_msg(t)), t_fail(t) {}
    static std::string make_msg(double t) {
        std::ostringstream os;
        os << "integrator step size underflow at t = " << t
           << " (problem too stiff for requested tolerance)";
        return os.str();
    }
};

namespace detail {
inline double absval(double x) { return std::abs(x); }
inline double absval(const std::complex<double>& x) { return std::abs(x); }
}

// One-step driver; exposes the pre-step state so callers can locate events
// (norm thresholds) inside the last accepted step.
template <class State, class RHS>
class RK45Stepper {
public:
    RK45Stepper(RHS rhs, const State& y0, double t0, double tol, double t_scale)
        : rhs_(rhs), y_(y0), y_prev_(y0), t_(t0), t_prev_(t0), tol_(tol),
          h_(t_scale * 1e-3), h_floor_(t_scale * 1e-14) {
        const std::size_t n = y_.size();
        for (State* s : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &ytmp_, &y5_})
            s->resize(n);
        fsal_valid_ = false;
    }

    double t() const { return t_; }
    double t_prev() const { return t_prev_; }
    const State& y() const { return y_; }
    const State& y_prev() const { return y_prev_; }
    State& y_ref() { return y_; }
    void invalidate_derivative_cache() { fsal_valid_ = false; }

    void set_state(const State& y, double t) {
        y_ = y;
        y_prev_ = y;
        t_ = t_prev_ = t;
        fsal_valid_ = false;
    }

    // Takes one accepted step, clipped so t never passes t_limit.
    // Returns false when already at (or past) t_limit.
    bool step(double t_limit) {
        if (t_ >= t_limit) return false;
        const std::size_t n = y_.size();
        std::uint64_t rejects = 0;
        for (;;) {
            if (h_ < h_floor_) throw StiffnessError(t_);
            if (++rejects > 10000) throw StiffnessError(t_);
            double h = std::min(h_, t_limit - t_);
            if (!fsal_valid_) { rhs_(t_, y_, k1_); fsal_valid_ = true; }

            for (std::size_t i = 0; i < n; ++i)
                ytmp_[i] = y_[i] + h * (1.0/5.0) * k1_[i];
            rhs_(t_ + h/5.0, ytmp_, k2_);
            for (std::size_t i = 0; i < n; ++i)
                ytmp_[i] = y_[i] + h * (3.0/40.0*k1_[i] + 9.0/40.0*k2_[i]);
            rhs_(t_ + 3.0*h/10.0, ytmp_, k3_);
            for (std::size_t i = 0; i < n; ++i)
                ytmp_[i] = y_[i] + h * (44.0/45.0*k1_[i] - 56.0/15.0*k2_[i]
                                        + 32.0/9.0*k3_[i]);
            rhs_(t_ + 4.0*h/5.0, ytmp_, k4_);
            for (std::size_t i = 0; i < n; ++i)
                ytmp_[i] = y_[i] + h * (19372.0/6561.0*k1_[i] - 25360.0/2187.0*k2_[i]
                                        + 64448.0/6561.0*k3_[i] - 212.0/729.0*k4_[i]);
            rhs_(t_ + 8.0*h/9.0, ytmp_, k5_);
            for (std::size_t i = 0; i < n; ++i)
                ytmp_[i] = y_[i] + h * (9017.0/3168.0*k1_[i] - 355.0/33.0*k2_[i]
                                        + 46732.0/5247.0*k3_[i] + 49.0/176.0*k4_[i]
                                        - 5103.0/18656.0*k5_[i]);
            rhs_(t_ + h, ytmp_, k6_);
            for (std::size_t i = 0; i < n; ++i)
                y5_[i] = y_[i] + h * (35.0/384.0*k1_[i] + 500.0/1113.0*k3_[i]
                                      + 125.0/192.0*k4_[i] - 2187.0/6784.0*k5_[i]
                                      + 11.0/84.0*k6_[i]);
            rhs_(t_ + h, y5_, k7_);

            double err = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                auto e = h * (71.0/57600.0*k1_[i] - 71.0/16695.0*k3_[i]
                              + 71.0/1920.0*k4_[i] - 17253.0/339200.0*k5_[i]
                              + 22.0/525.0*k6_[i] - 1.0/40.0*k7_[i]);
                double sc = 1.0 + detail::absval(y_[i]);
                err = std::max(err, detail::absval(e) / sc);
            }

            double budget = tol_ * h;
            double ratio = (err > 0.0) ? std::pow(budget / err, 0.2) : 5.0;
            double grow = std::clamp(0.9 * ratio, 0.2, 5.0);
            if (err <= budget) {
                std::swap(y_prev_, y_);      // old y saved as pre-step state
                std::swap(y_, y5_);
                std::swap(k1_, k7_);         // first-same-as-last
                t_prev_ = t_;
                t_ += h;
                h_ = h * grow;
                return true;
            }
            h_ = h * grow;
        }
    }

private:
    RHS rhs_;
    State y_, y_prev_, k1_, k2_, k3_, k4_, k5_, k6_, k7_, ytmp_, y5_;
    double t_, t_prev_, tol_, h_, h_floor_;
    bool fsal_valid_;
};

// Advances y in place from t0 to t1.  hook(t, y) runs after every accepted
// step and returns true if it modified y (constraint projection etc.).
template <class State, class RHS, class Hook>
void integrate_to_hooked(RHS&& rhs, State& y, double t0, double t1, double tol,
                         Hook&& hook) {
    if (t1 <= t0) return;
    RK45Stepper<State, RHS&> stepper(rhs, y, t0, tol, t1 - t0);
    while (stepper.step(t1)) {
        if (hook(stepper.t(), stepper.y_ref()))
            stepper.invalidate_derivative_cache();
    }
    y = stepper.y();
}

template <class State, class RHS>
void integrate_to(RHS&& rhs, State& y, double t0, double t1, double tol) {
    integrate_to_hooked(rhs, y, t0, t1, tol,
                        [](double, State&) { return false; });
}

// Integrates through ascending sample times, invoking obs(t, y) at each.
template <class State, class RHS, class Obs>
void integrate_sampled(RHS&& rhs, State& y, double t0,
                       const std::vector<double>& times, double tol, Obs&& obs) {
    double t = t0;
    for (double ts : times) {
        if (ts < t)
            throw std::invalid_argument("sample times must be ascending from t0");
        if (ts > t) integrate_to(rhs, y, t, ts, tol);
        t = ts;
        obs(t, y);
    }
}

inline std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(n);
    if (n == 1) { v[0] = a; return v; }
    for (int i = 0; i < n; ++i) v[i] = a + (b - a) * double(i) / double(n - 1);
    v.back() = b;
    return v;
}

inline std::vector<double> geomspace(double a, double b, int n) {
    std::vector<double> v(n);
    if (n == 1) { v[0] = a; return v; }
    double la = std::log(a), lb = std::log(b);
    for (int i = 0; i < n; ++i)
        v[i] = std::exp(la + (lb - la) * double(i) / double(n - 1));
    v.front() = a;
    v.back() = b;
    return v;
}

} // namespace djj
