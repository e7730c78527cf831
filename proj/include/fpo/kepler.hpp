#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "fpo/numerics.hpp"
#include "fpo/potentials.hpp"
#include "fpo/trajectory.hpp"

namespace fpo {

/**
 * Half brake orbit of the regularized one-dimensional Kepler problem
 * q'' = f_eps'(q) with q(0) = 0 and q'(T) = 0: the particle leaves the
 * attracting centre, rises to its amplitude w = q(T) and stops there.
 * Energy convention: (1/2) q'^2 - f_eps(q) is conserved and equals
 * -f_eps(w) at the brake point.
 */
struct BrakeOrbit {
    Profile prof;          // q on the uniform grid of [0, T]
    std::vector<double> v; // velocities from the integrator, same grid
    double w = 0.0;        // amplitude q(T)
    double level = 0.0;    // discrete action of the profile
    double energy = 0.0;   // -f_eps(w)
};

/// Discrete brake action: exact piecewise-linear kinetic term plus trapezoid
/// rule for f_eps. Shares the quadrature of the two-body action so levels are
/// directly comparable.
inline double discrete_brake_action(const SmoothedPotentials& sp, const Profile& p) {
    const double dt = p.dt();
    double kin = 0.0, pot = 0.0;
    for (int i = 0; i < p.n(); ++i) {
        const double d = p.q[i + 1] - p.q[i];
        kin += d * d / (2.0 * dt);
    }
    for (int i = 0; i <= p.n(); ++i) {
        const double w = (i == 0 || i == p.n()) ? 0.5 : 1.0;
        pot += w * sp.f_eps(p.q[i]);
    }
    return kin + dt * pot;
}

inline constexpr int kPeriodQuadOrder = 200;

/**
 * Time to fall from rest at amplitude w to the centre:
 *   T(w) = 2^{-1/2} int_0^1 w dq / sqrt(f_eps(w q) - f_eps(w)).
 * The substitution q = sin^2(theta) absorbs the inverse-square-root endpoint
 * singularity at q = 1 exactly for homogeneous tails. The integral is split
 * at w q = eps1 so each Gauss-Legendre panel sees an analytic integrand.
 */
inline double period_of_amplitude(const SmoothedPotentials& sp, double w) {
    if (!(w > sp.eps1()))
        throw std::domain_error("period_of_amplitude: requires w > eps1");
    const double fw = sp.f_eps(w);
    auto integrand = [&](double theta) {
        const double st = std::sin(theta), ct = std::cos(theta);
        const double drop = sp.f_eps(w * st * st) - fw;
        if (!(drop > 0.0))
            throw std::runtime_error("period_of_amplitude: f_eps not strictly decreasing on [0,w]");
        return 2.0 * w * st * ct / std::sqrt(2.0 * drop);
    };
    const double theta_split = std::asin(std::sqrt(std::min(1.0, sp.eps1() / w)));
    double total = integrate_gl(integrand, theta_split, 0.5 * M_PI, kPeriodQuadOrder);
    if (theta_split > 0.0) total += integrate_gl(integrand, 0.0, theta_split, kPeriodQuadOrder);
    return total;
}

/**
 * Inverse of the strictly monotone period map: w with |T(w) - T| small
 * (relative tolerance 1e-10 guaranteed, typically much better). Brackets by
 * geometric expansion, then Illinois iteration.
 */
inline double amplitude_of_period(const SmoothedPotentials& sp, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("amplitude_of_period: T must be positive");
    auto period_err = [&](double w) { return period_of_amplitude(sp, w) - T; };

    double lo = std::max(2.0 * sp.eps1(), 1e-12), hi = std::max(1.0, 4.0 * sp.eps1());
    double flo = period_err(lo), fhi = period_err(hi);
    int rounds = 0;
    while (fhi < 0.0 && rounds++ < 200) {
        hi *= 2.0;
        fhi = period_err(hi);
    }
    rounds = 0;
    while (flo > 0.0 && rounds++ < 200) {
        const double next = 0.5 * (lo + sp.eps1());
        if (next <= sp.eps1() * (1.0 + 1e-12) || next == lo) break;
        lo = next;
        flo = period_err(lo);
    }
    if (flo > 0.0 || fhi < 0.0)
        throw std::runtime_error("amplitude_of_period: bracket expansion failed (lo=" +
                                 std::to_string(lo) + ", hi=" + std::to_string(hi) +
                                 ", T(lo)-T=" + std::to_string(flo) +
                                 ", T(hi)-T=" + std::to_string(fhi) + ")");
    const double w = solve_bracketed(period_err, lo, hi, flo, fhi, 1e-14 * hi);
    if (std::abs(period_of_amplitude(sp, w) - T) > 1e-10 * T)
        throw std::runtime_error("amplitude_of_period: inversion did not reach tolerance");
    return w;
}

namespace detail {

/**
 * Integrate q'' = f_eps'(q) from rest at w over [0, span], sampling the
 * uniform grid tau_j = j span / n. Returns (q_j, dq/dtau_j).
 *
 * The fall splits at the junction q = eps1: above it f_eps = f is analytic
 * and a high-order adaptive stepper lands exactly on each grid point; below
 * it the force is the constant f'(eps1), so the tail is an exact parabola in
 * time. Stepping across the C^{1,1} junction would silently degrade the
 * integrator's order, which is why the tail is never stepped numerically.
 */
inline std::pair<std::vector<double>, std::vector<double>>
integrate_brake(const SmoothedPotentials& sp, double w, double span, int n, double tol) {
    namespace odeint = boost::numeric::odeint;
    using State = std::array<double, 2>;
    auto rhs = [&sp](const State& y, State& dydt, double) {
        dydt[0] = y[1];
        dydt[1] = sp.f_eps_prime(y[0]);
    };
    const double e1 = sp.eps1();
    const double k = -sp.f_eps_prime(e1);  // constant force on the tangent branch
    const double vstar = std::sqrt(2.0 * (sp.f_eps(e1) - sp.f_eps(w)));  // speed at the junction
    const double tail = (-vstar + std::sqrt(vstar * vstar + 2.0 * k * e1)) / k;  // eps1 -> 0 time
    const double tau_star = span - tail;  // junction crossing time
    if (!(tau_star > 0.0))
        throw std::runtime_error("brake_orbit: regularized tail covers the whole fall");

    auto stepper = odeint::make_controlled(tol, tol,
                                           odeint::runge_kutta_fehlberg78<State>());
    State y{w, 0.0};
    std::vector<double> q(n + 1), v(n + 1);
    q[0] = w;
    v[0] = 0.0;
    const double dtau = span / n;
    double t_cur = 0.0;
    for (int j = 1; j <= n; ++j) {
        const double t_next = j * dtau;
        if (t_next <= tau_star) {
            odeint::integrate_adaptive(stepper, rhs, y, t_cur, t_next, 0.25 * dtau);
            t_cur = t_next;
            q[j] = y[0];
            v[j] = y[1];
        } else {
            if (t_cur < tau_star) {  // finish the analytic region first
                odeint::integrate_adaptive(stepper, rhs, y, t_cur, tau_star, 0.25 * dtau);
                t_cur = tau_star;
                y[0] = e1;  // anchor the exact junction state
                y[1] = -vstar;
            }
            const double s = t_next - tau_star;
            q[j] = e1 - vstar * s - 0.5 * k * s * s;
            v[j] = -vstar - k * s;
        }
        if (q[j] > w * (1.0 + 1e-9) || q[j] < -1e-5 * w)
            throw std::runtime_error("brake_orbit: integration left [0, w]");
    }
    return {std::move(q), std::move(v)};
}

} // namespace detail

/**
 * Brake orbit with brake time T on an n-grid. The amplitude comes from the
 * period map; the profile from backward integration out of the brake point,
 * which stays well-conditioned as eps1 -> 0 (the collision end is only
 * reached, never started from). Checks q(0) = 0 within 1e-8 w.
 */
inline BrakeOrbit brake_orbit(const SmoothedPotentials& sp, double T, int n,
                              double integrator_tol = 1e-12) {
    if (n < kMinNodes) throw std::invalid_argument("brake_orbit: need n >= 16");
    BrakeOrbit orbit;
    orbit.w = amplitude_of_period(sp, T);
    auto [qb, vb] = detail::integrate_brake(sp, orbit.w, T, n, integrator_tol);
    if (std::abs(qb[n]) > 1e-8 * orbit.w)
        throw std::runtime_error("brake_orbit: q(0) mismatch " + std::to_string(qb[n]));
    orbit.prof.T = T;
    orbit.prof.q.assign(n + 1, 0.0);
    orbit.v.assign(n + 1, 0.0);
    for (int i = 0; i <= n; ++i) {
        orbit.prof.q[i] = qb[n - i];  // q(t) = qtilde(T - t)
        orbit.v[i] = -vb[n - i];
    }
    orbit.prof.q[0] = 0.0;
    orbit.energy = -sp.f_eps(orbit.w);
    orbit.level = discrete_brake_action(sp, orbit.prof);
    return orbit;
}

/// Reference levels a_eps for a decreasing eps1 sequence (eps2 is irrelevant
/// here and tied to eps1). Monotone non-decreasing toward the unregularized
/// level, since f_eps <= f pointwise.
inline std::vector<double> brake_level_convergence(const PotentialFamily& fam,
                                                   const std::vector<double>& eps1_values,
                                                   double T, int n) {
    for (std::size_t i = 1; i < eps1_values.size(); ++i)
        if (!(eps1_values[i] < eps1_values[i - 1]))
            throw std::invalid_argument("brake_level_convergence: eps1 sequence must decrease");
    std::vector<double> levels;
    levels.reserve(eps1_values.size());
    for (double e1 : eps1_values) {
        SmoothedPotentials sp(fam, e1, e1);
        levels.push_back(brake_orbit(sp, T, n).level);
    }
    return levels;
}

/// Monotonicity criterion for the period map: T'(w) > 0 whenever
/// s -> 2 f_eps(s) - s f_eps'(s) is strictly decreasing.
inline double period_monotone_indicator(const SmoothedPotentials& sp, double s) {
    return 2.0 * sp.f_eps(s) - s * sp.f_eps_prime(s);
}

/**
 * Direct minimization of the discrete brake action from an initial profile:
 * the independent cross-check for the integrated orbit. Damped Newton on the
 * gradient with a finite-difference tridiagonal Jacobian (the functional is
 * convex, so the Thomas solve is safe).
 */
inline Profile minimize_brake_action(const SmoothedPotentials& sp, double T, int n,
                                     Profile init, double tol = 1e-12, int max_iters = 200) {
    if (static_cast<int>(init.q.size()) != n + 1)
        throw std::invalid_argument("minimize_brake_action: bad initial profile");
    init.T = T;
    init.q[0] = 0.0;
    const double dt = T / n;

    auto grad = [&](const std::vector<double>& q) {
        std::vector<double> g(n);  // slots for q[1..n]
        for (int i = 1; i <= n; ++i) {
            double k = (q[i] - q[i - 1]) / dt;
            if (i < n) k -= (q[i + 1] - q[i]) / dt;
            const double w = (i == n) ? 0.5 : 1.0;
            g[i - 1] = k + dt * w * sp.f_eps_prime(q[i]);
        }
        return g;
    };

    std::vector<double> q = init.q;
    std::vector<double> g = grad(q);
    for (int iter = 0; iter < max_iters; ++iter) {
        if (inf_norm(g) < tol) break;
        // FD Jacobian, tridiagonal in the free coordinates. Row i (0-based,
        // equation for q[i+1]) holds sub[i] = J[i][i-1], dia[i] = J[i][i],
        // sup[i] = J[i][i+1]. Columns with index stride 3 have disjoint row
        // supports, so three probe evaluations fill the whole band.
        std::vector<double> sub(n, 0.0), dia(n, 0.0), sup(n, 0.0), rhs(n, 0.0);
        for (int color = 0; color < 3; ++color) {
            std::vector<double> qp = q;
            std::vector<double> hs(n, 0.0);
            for (int j = color; j < n; j += 3) {
                hs[j] = 1e-7 * (1.0 + std::abs(q[j + 1]));
                qp[j + 1] += hs[j];
            }
            std::vector<double> gp = grad(qp);
            for (int j = color; j < n; j += 3) {
                for (int i = std::max(0, j - 1); i <= std::min(n - 1, j + 1); ++i) {
                    const double d = (gp[i] - g[i]) / hs[j];
                    if (i == j) dia[i] = d;
                    else if (j == i + 1) sup[i] = d;
                    else sub[i] = d;
                }
            }
        }
        for (int i = 0; i < n; ++i) rhs[i] = -g[i];
        // Thomas solve J delta = rhs
        for (int i = 1; i < n; ++i) {
            const double m = sub[i] / dia[i - 1];
            dia[i] -= m * sup[i - 1];
            rhs[i] -= m * rhs[i - 1];
        }
        std::vector<double> delta(n, 0.0);
        delta[n - 1] = rhs[n - 1] / dia[n - 1];
        for (int i = n - 2; i >= 0; --i) delta[i] = (rhs[i] - sup[i] * delta[i + 1]) / dia[i];

        const double g0 = two_norm(g);
        double lambda = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
            std::vector<double> qc = q;
            for (int i = 1; i <= n; ++i) qc[i] += lambda * delta[i - 1];
            std::vector<double> gc = grad(qc);
            if (two_norm(gc) < g0) {
                q = std::move(qc);
                g = std::move(gc);
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!accepted) break;
    }
    Profile out;
    out.T = T;
    out.q = std::move(q);
    return out;
}

} // namespace fpo
