#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fpo/action.hpp"
#include "fpo/potentials.hpp"
#include "fpo/trajectory.hpp"

namespace fpo {

// Compact-window conventions. Residuals and Cauchy norms use delta = T/20;
// the energy profile uses delta = T/10, where symmetric differencing of the
// collision approach is meaningful (stencil errors grow like t^{-10/3}
// toward the collision, so the tighter window would be dominated by its own
// discretization edge).
inline constexpr int kResidualWindowDivisor = 20;
inline constexpr int kEnergyWindowDivisor = 10;

namespace detail {

inline double centered_d1(const std::vector<double>& q, int i, double dt) {
    return (q[i + 1] - q[i - 1]) / (2.0 * dt);
}

/// Second-order one-sided first derivatives at the two ends.
inline double onesided_d1_left(const std::vector<double>& q, double dt) {
    return (-3.0 * q[0] + 4.0 * q[1] - q[2]) / (2.0 * dt);
}
inline double onesided_d1_right(const std::vector<double>& q, double dt) {
    const std::size_t n = q.size() - 1;
    return (3.0 * q[n] - 4.0 * q[n - 1] + q[n - 2]) / (2.0 * dt);
}

} // namespace detail

/**
 * Defect of the discrete trajectory against the equations of motion.
 * The 3-point stencil residual at interior nodes is the action gradient over
 * dt, so it certifies criticality; the 5-point (4th-order) probe measures
 * genuine distance to the continuum solution and is the quantity whose
 * n-doubling order is second.
 */
struct ResidualStats {
    double max_full = 0.0;
    double l2_full = 0.0;
    double max_window = 0.0;
    double l2_window = 0.0;
    double rel_window = 0.0;     // max_window / max |rhs| on the window
    double probe4_window = 0.0;  // 4th-order stencil residual on the window
    double max_q1_full = 0.0;    // per-equation maxima
    double max_q2_full = 0.0;
    double max_q1_window = 0.0;
    double max_q2_window = 0.0;
};

inline ResidualStats ode_residual(const ActionContext& ctx, const Trajectory& t) {
    detail::check_grid(ctx, t);
    detail::check_domain(t);
    const int n = t.n();
    const double dt = t.dt();
    const int i0 = static_cast<int>(std::ceil(static_cast<double>(n) / kResidualWindowDivisor));
    ResidualStats rs;
    double sum_full = 0.0, sum_win = 0.0, rhs_scale = 0.0;
    int count_full = 0, count_win = 0;
    for (int i = 1; i < n; ++i) {
        const double gap = t.q2[i] - t.q1[i];
        const double rhs1 = ctx.sp.f_eps_prime(t.q1[i]) + ctx.mu * ctx.sp.g_eps_prime(gap);
        const double rhs2 = ctx.sp.f_eps_prime(t.q2[i]) - ctx.mu * ctx.sp.g_eps_prime(gap);
        const double r1 = (t.q1[i + 1] - 2.0 * t.q1[i] + t.q1[i - 1]) / (dt * dt) - rhs1;
        const double r2 = (t.q2[i + 1] - 2.0 * t.q2[i] + t.q2[i - 1]) / (dt * dt) - rhs2;
        const double m = std::max(std::abs(r1), std::abs(r2));
        rs.max_full = std::max(rs.max_full, m);
        rs.max_q1_full = std::max(rs.max_q1_full, std::abs(r1));
        rs.max_q2_full = std::max(rs.max_q2_full, std::abs(r2));
        sum_full += r1 * r1 + r2 * r2;
        count_full += 2;
        if (i >= i0) {
            rs.max_window = std::max(rs.max_window, m);
            rs.max_q1_window = std::max(rs.max_q1_window, std::abs(r1));
            rs.max_q2_window = std::max(rs.max_q2_window, std::abs(r2));
            sum_win += r1 * r1 + r2 * r2;
            count_win += 2;
            rhs_scale = std::max(rhs_scale, std::max(std::abs(rhs1), std::abs(rhs2)));
        }
        if (i >= std::max(i0, 2) && i <= n - 2) {
            const double a1 = (-t.q1[i - 2] + 16.0 * t.q1[i - 1] - 30.0 * t.q1[i] +
                               16.0 * t.q1[i + 1] - t.q1[i + 2]) /
                              (12.0 * dt * dt);
            const double a2 = (-t.q2[i - 2] + 16.0 * t.q2[i - 1] - 30.0 * t.q2[i] +
                               16.0 * t.q2[i + 1] - t.q2[i + 2]) /
                              (12.0 * dt * dt);
            rs.probe4_window = std::max(rs.probe4_window,
                                        std::max(std::abs(a1 - rhs1), std::abs(a2 - rhs2)));
        }
    }
    rs.l2_full = std::sqrt(sum_full / std::max(count_full, 1));
    rs.l2_window = std::sqrt(sum_win / std::max(count_win, 1));
    rs.rel_window = rhs_scale > 0.0 ? rs.max_window / rhs_scale : 0.0;
    return rs;
}

/// One-sided discrete derivatives at the free endpoints. q1(0) = 0 is
/// structural; the other three margins must vanish at the discretization's
/// own rate, gated at 10 scale / n.
struct BoundaryReport {
    double q1_at_0 = 0.0;
    double dq1_T = 0.0;
    double dq2_0 = 0.0;
    double dq2_T = 0.0;
    double dq1_0 = 0.0;  // outgoing velocity, sign-checked only
    double scale = 1.0;
    double tol = 0.0;
    bool pass = false;
    bool outgoing = false;  // dq1_0 > 0
};

inline BoundaryReport boundary_check(const Trajectory& t) {
    const int n = t.n();
    const double dt = t.dt();
    BoundaryReport b;
    b.q1_at_0 = t.q1[0];
    b.dq1_T = detail::onesided_d1_right(t.q1, dt);
    b.dq2_0 = detail::onesided_d1_left(t.q2, dt);
    b.dq2_T = detail::onesided_d1_right(t.q2, dt);
    b.dq1_0 = detail::onesided_d1_left(t.q1, dt);
    // velocity scale away from the collision layer
    const int i0 = static_cast<int>(std::ceil(static_cast<double>(n) / kEnergyWindowDivisor));
    double vmax = 0.0;
    for (int i = i0; i < n; ++i)
        vmax = std::max(vmax, std::max(std::abs(detail::centered_d1(t.q1, i, dt)),
                                       std::abs(detail::centered_d1(t.q2, i, dt))));
    b.scale = std::max(1.0, vmax);
    b.tol = 10.0 * b.scale / n;
    b.pass = b.q1_at_0 == 0.0 && std::abs(b.dq1_T) < b.tol && std::abs(b.dq2_0) < b.tol &&
             std::abs(b.dq2_T) < b.tol;
    b.outgoing = b.dq1_0 > 0.0;
    return b;
}

/**
 * Pointwise energy h(t) = (1/2)(v1^2 + v2^2) - f_eps(q1) - f_eps(q2)
 * + mu g_eps(q2-q1) via centered stencils (one-sided at t = T). h_mean and
 * the drift are taken on [T/10, T]; the full-grid drift is reported as a
 * diagnostic. h_identity = (||qdot||^2 - A) / T is the energy consistent
 * with the discrete action, exact for discrete critical points.
 */
struct EnergyReport {
    double h_mean = 0.0;
    double drift_window = 0.0;
    double drift_full = 0.0;
    double h_at_T = 0.0;     // boundary formula -U(T), uses qdot(T) = 0
    double h_identity = 0.0;
    double kinetic_l2_sq = 0.0;
};

inline EnergyReport energy_profile(const ActionContext& ctx, const Trajectory& t) {
    detail::check_grid(ctx, t);
    detail::check_domain(t);
    const int n = t.n();
    const double dt = t.dt();
    auto U = [&](int i) {
        return ctx.sp.f_eps(t.q1[i]) + ctx.sp.f_eps(t.q2[i]) -
               ctx.mu * ctx.sp.g_eps(t.q2[i] - t.q1[i]);
    };
    std::vector<double> h(n + 1);
    {
        const double v1 = detail::onesided_d1_left(t.q1, dt);
        const double v2 = detail::onesided_d1_left(t.q2, dt);
        h[0] = 0.5 * (v1 * v1 + v2 * v2) - U(0);
    }
    for (int i = 1; i < n; ++i) {
        const double v1 = detail::centered_d1(t.q1, i, dt);
        const double v2 = detail::centered_d1(t.q2, i, dt);
        h[i] = 0.5 * (v1 * v1 + v2 * v2) - U(i);
    }
    {
        const double v1 = detail::onesided_d1_right(t.q1, dt);
        const double v2 = detail::onesided_d1_right(t.q2, dt);
        h[n] = 0.5 * (v1 * v1 + v2 * v2) - U(n);
    }

    EnergyReport er;
    const int i0 = static_cast<int>(std::ceil(static_cast<double>(n) / kEnergyWindowDivisor));
    double sum = 0.0;
    for (int i = i0; i <= n; ++i) sum += h[i];
    er.h_mean = sum / (n - i0 + 1);
    for (int i = i0; i <= n; ++i) er.drift_window = std::max(er.drift_window, std::abs(h[i] - er.h_mean));
    for (int i = 0; i <= n; ++i) er.drift_full = std::max(er.drift_full, std::abs(h[i] - er.h_mean));
    er.h_at_T = -U(n);
    const double k = l2_norm_dot(t);
    er.kinetic_l2_sq = k * k;
    er.h_identity = (er.kinetic_l2_sq - action_value(ctx, t)) / ctx.T;
    return er;
}

/// One named check with a signed margin (pass <=> margin >= 0 up to its own
/// tolerance, already folded in).
struct Check {
    bool pass = false;
    double margin = std::numeric_limits<double>::quiet_NaN();
    int where = -1;
};

/**
 * The qualitative shape of solutions, checked on discrete differences with
 * tolerance 1e-10 scale: q1 and q1+q2 concave with maxima at t = T, the gap
 * q2-q1 convex with its minimum at the last node, |dq2| <= |dq1| cellwise,
 * q1 nondecreasing and q2 nonincreasing.
 */
struct QualitativeReport {
    Check concave_q1;
    Check concave_sum;
    Check convex_gap;
    Check gap_min_at_T;
    Check velocity_dominance;
    Check monotone_q1;
    Check monotone_q2;
    Check max_at_T;

    bool all_pass() const {
        return concave_q1.pass && concave_sum.pass && convex_gap.pass && gap_min_at_T.pass &&
               velocity_dominance.pass && monotone_q1.pass && monotone_q2.pass && max_at_T.pass;
    }
};

namespace detail {

inline void fold_min(Check& c, double margin, int where) {
    if (!(margin >= c.margin)) {
        c.margin = margin;
        c.where = where;
    }
}

} // namespace detail

inline QualitativeReport qualitative_checks(const Trajectory& t) {
    const int n = t.n();
    QualitativeReport r;
    double amp = 1.0;
    for (int i = 0; i <= n; ++i)
        amp = std::max({amp, std::abs(t.q1[i]), std::abs(t.q2[i])});
    const double tol = 1e-10 * amp;

    for (int i = 1; i < n; ++i) {
        const double s1 = t.q1[i + 1] - 2.0 * t.q1[i] + t.q1[i - 1];
        const double ss = (t.q1[i + 1] + t.q2[i + 1]) - 2.0 * (t.q1[i] + t.q2[i]) +
                          (t.q1[i - 1] + t.q2[i - 1]);
        const double sg = (t.q2[i + 1] - t.q1[i + 1]) - 2.0 * (t.q2[i] - t.q1[i]) +
                          (t.q2[i - 1] - t.q1[i - 1]);
        detail::fold_min(r.concave_q1, -s1, i);
        detail::fold_min(r.concave_sum, -ss, i);
        detail::fold_min(r.convex_gap, sg, i);
    }
    for (int i = 0; i < n; ++i) {
        const double d1 = t.q1[i + 1] - t.q1[i];
        const double d2 = t.q2[i + 1] - t.q2[i];
        detail::fold_min(r.velocity_dominance, std::abs(d1) - std::abs(d2), i);
        detail::fold_min(r.monotone_q1, d1, i);
        detail::fold_min(r.monotone_q2, -d2, i);
    }
    r.concave_q1.pass = r.concave_q1.margin >= -tol;
    r.concave_sum.pass = r.concave_sum.margin >= -tol;
    r.convex_gap.pass = r.convex_gap.margin >= -tol;
    r.velocity_dominance.pass = r.velocity_dominance.margin >= -tol;
    r.monotone_q1.pass = r.monotone_q1.margin >= -tol;
    r.monotone_q2.pass = r.monotone_q2.margin >= -tol;

    const auto [gap_min, gap_arg] = min_gap(t);
    r.gap_min_at_T.pass = gap_arg == n;
    r.gap_min_at_T.margin = gap_min;
    r.gap_min_at_T.where = gap_arg;

    int argmax_q1 = 0, argmax_sum = 0;
    for (int i = 1; i <= n; ++i) {
        if (t.q1[i] > t.q1[argmax_q1]) argmax_q1 = i;
        if (t.q1[i] + t.q2[i] > t.q1[argmax_sum] + t.q2[argmax_sum]) argmax_sum = i;
    }
    r.max_at_T.pass = argmax_q1 == n && argmax_sum == n;
    r.max_at_T.where = argmax_q1;
    r.max_at_T.margin = static_cast<double>(std::min(argmax_q1, argmax_sum) - n);
    return r;
}

/**
 * Energy bounds at the minimax level: -c/T <= h <= (alpha-2) c / ((2+alpha) T),
 * checked on the discrete-identity energy with relative slack 1e-3. The
 * stencil energy would carry the trapezoid quadrature bias of the collision
 * node (an O(dt f_eps(0)) constant in the level), which the identity energy
 * and c_est share and cancel.
 */
struct EnergyBoundsReport {
    double lower = 0.0, upper = 0.0;
    double h_used = 0.0;
    double margin_lower = 0.0, margin_upper = 0.0;
    bool pass = false;
    bool h_mean_negative = false;
};

inline EnergyBoundsReport energy_bounds_check(const EnergyReport& er, double c_est, double alpha,
                                              double T) {
    EnergyBoundsReport b;
    b.lower = -c_est / T;
    b.upper = (alpha - 2.0) * c_est / ((2.0 + alpha) * T);
    b.h_used = er.h_identity;
    const double slack = 1e-3 * std::abs(b.h_used);
    b.margin_lower = b.h_used - (b.lower - slack);
    b.margin_upper = (b.upper + slack) - b.h_used;
    b.h_mean_negative = er.h_mean < 0.0;
    b.pass = b.margin_lower >= 0.0 && b.margin_upper >= 0.0 && b.h_used < 0.0 &&
             b.h_mean_negative;
    return b;
}

/// Crossing-set lower bound q1(t*) >= (nu-1)/nu q2(t*) at the gap argmin,
/// with nu = (f(s_bar)/g(s_bar))^{1/alpha}. Reported, never gated.
struct NuAlphaDiagnostic {
    double nu = 0.0;
    double lhs = 0.0, rhs = 0.0;
    bool holds = false;
};

inline NuAlphaDiagnostic nu_alpha_diagnostic(const PotentialFamily& fam, const Trajectory& t) {
    NuAlphaDiagnostic d;
    d.nu = std::pow(fam.f.value(fam.s_bar) / fam.g.value(fam.s_bar), 1.0 / fam.alpha);
    const int arg = min_gap(t).second;
    d.lhs = t.q1[arg];
    d.rhs = (d.nu - 1.0) / d.nu * t.q2[arg];
    d.holds = d.lhs >= d.rhs;
    return d;
}

/// Everything the pipeline certifies about one converged trajectory.
struct OrbitSolution {
    Trajectory traj;
    double eps1 = 0.0, eps2 = 0.0, mu = 1.0, T = 1.0;
    double c_est = std::numeric_limits<double>::quiet_NaN();
    double a_eps = std::numeric_limits<double>::quiet_NaN();
    double margin = std::numeric_limits<double>::quiet_NaN();
    double grad_inf = std::numeric_limits<double>::quiet_NaN();
    ResidualStats residual;
    BoundaryReport boundary;
    EnergyReport energy;
    EnergyBoundsReport bounds;
    QualitativeReport qualitative;
    NuAlphaDiagnostic nu_diag;
    bool residual_ok = false;
    bool drift_ok = false;
    bool conformance = false;
};

/// Reference resolution for the drift gate: the spec value 1e-4 |h| holds at
/// n = 1024 and scales with the stencil order n^-2.
inline double drift_tolerance(double h_mean, int n) {
    const double r = 1024.0 / n;
    return 1e-4 * std::abs(h_mean) * r * r;
}

/**
 * Runs every check on a candidate solution and populates the composite
 * conformance gate. Never mutates its inputs; calling it twice gives the
 * same report.
 */
inline OrbitSolution verify_solution(const ActionContext& ctx, const Trajectory& traj,
                                     double c_est, double a_eps, double grad_inf) {
    OrbitSolution sol;
    sol.traj = traj;
    sol.eps1 = ctx.sp.eps1();
    sol.eps2 = ctx.sp.eps2();
    sol.mu = ctx.mu;
    sol.T = ctx.T;
    sol.c_est = c_est;
    sol.a_eps = a_eps;
    sol.margin = c_est - a_eps;
    sol.grad_inf = grad_inf;

    sol.residual = ode_residual(ctx, traj);
    sol.boundary = boundary_check(traj);
    sol.energy = energy_profile(ctx, traj);
    sol.bounds = energy_bounds_check(sol.energy, c_est, ctx.sp.alpha(), ctx.T);
    sol.qualitative = qualitative_checks(traj);
    sol.nu_diag = nu_alpha_diagnostic(ctx.sp.family(), traj);

    const int n = traj.n();
    sol.residual_ok =
        sol.residual.max_full <= 10.0 * std::max(grad_inf, 1e-12) * double(n) * double(n);
    sol.drift_ok = sol.energy.drift_window <= drift_tolerance(sol.energy.h_mean, n);
    sol.conformance = sol.residual_ok && sol.boundary.pass && sol.boundary.outgoing &&
                      sol.drift_ok && sol.bounds.pass && sol.qualitative.all_pass() &&
                      sol.margin > 0.0;
    return sol;
}

} // namespace fpo
