#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpo/mountainpass.hpp"
#include "fpo/numerics.hpp"
#include "fpo/verify.hpp"

namespace fpo {

/// Parameter schedule for a continuation sweep. For eps sweeps the two
/// regularization dials are linked (eps2 = eps1) by default; independent
/// schedules keep eps2 at the base value.
struct Schedule {
    enum class Kind { eps, mu };
    Kind kind = Kind::eps;
    std::vector<double> values;
    bool link_eps2_to_eps1 = true;
};

inline void validate(const Schedule& s) {
    if (s.values.empty()) throw std::invalid_argument("schedule: empty value list");
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        if (!(s.values[i] > 0.0)) throw std::invalid_argument("schedule: values must be positive");
        if (i > 0 && !(s.values[i] < s.values[i - 1]))
            throw std::invalid_argument("schedule: values must be strictly decreasing");
        if (s.kind == Schedule::Kind::mu && s.values[i] > 1.0)
            throw std::invalid_argument("schedule: mu values must lie in (0,1]");
    }
}

/// Windowed C0 and discrete-C2 distances between two trajectories on the same
/// grid. The window is [T/20, T] (or [T/20, 19T/20] when trim_right is set,
/// the mu-sweep convention). The C2 proxy is the max over 0th, 1st and 2nd
/// difference quotients.
inline std::pair<double, double> window_distances(const Trajectory& a, const Trajectory& b,
                                                  bool trim_right = false) {
    if (a.q1.size() != b.q1.size()) throw std::invalid_argument("window_distances: grid mismatch");
    const int n = a.n();
    const double dt = a.dt();
    const int i0 = static_cast<int>(std::ceil(static_cast<double>(n) / kResidualWindowDivisor));
    const int i1 = trim_right ? n - i0 : n;
    double c0 = 0.0;
    for (int i = i0; i <= i1; ++i) {
        c0 = std::max(c0, std::abs(a.q1[i] - b.q1[i]));
        c0 = std::max(c0, std::abs(a.q2[i] - b.q2[i]));
    }
    double c2 = c0;
    for (int i = std::max(i0, 1); i <= std::min(i1, n - 1); ++i) {
        const double e1 = (a.q1[i + 1] - a.q1[i - 1] - b.q1[i + 1] + b.q1[i - 1]) / (2.0 * dt);
        const double e2 = (a.q2[i + 1] - a.q2[i - 1] - b.q2[i + 1] + b.q2[i - 1]) / (2.0 * dt);
        const double s1 = (a.q1[i + 1] - 2.0 * a.q1[i] + a.q1[i - 1] - b.q1[i + 1] +
                           2.0 * b.q1[i] - b.q1[i - 1]) /
                          (dt * dt);
        const double s2 = (a.q2[i + 1] - 2.0 * a.q2[i] + a.q2[i - 1] - b.q2[i + 1] +
                           2.0 * b.q2[i] - b.q2[i - 1]) /
                          (dt * dt);
        c2 = std::max({c2, std::abs(e1), std::abs(e2), std::abs(s1), std::abs(s2)});
    }
    return {c0, c2};
}

/**
 * The decoupled limit shape: with q_hat the brake orbit of brake time 2T,
 * the pair (q_hat(t), q_hat(2T - t)) sampled on the n-grid of [0, T]. Both
 * components run along the same arc; they meet at t = T.
 */
inline Trajectory brake_limit_candidate(const SmoothedPotentials& sp, double T, int n) {
    BrakeOrbit hat = brake_orbit(sp, 2.0 * T, 2 * n);
    Trajectory cand;
    cand.T = T;
    cand.q1.resize(n + 1);
    cand.q2.resize(n + 1);
    for (int i = 0; i <= n; ++i) {
        cand.q1[i] = hat.prof.q[i];
        cand.q2[i] = hat.prof.q[2 * n - i];
    }
    cand.q1[0] = 0.0;
    return cand;
}

/**
 * Homogeneous rescaling q -> q/lambda on [0, lambda^{-3/2} T], defined for
 * f = a/s, g = b/s only; it multiplies the energy by lambda. The time grid
 * maps node-to-node (lambda^{3/2} t_i' = t_i), so no resampling error enters.
 * Evaluating the rescaled orbit needs the matching context with
 * eps -> eps/lambda.
 */
inline Trajectory energy_rescale(const PotentialFamily& fam, const Trajectory& t, double lambda) {
    if (!fam.homogeneous_kepler())
        throw std::domain_error("energy_rescale: requires the homogeneous family f=a/s, g=b/s");
    if (!(lambda > 0.0)) throw std::invalid_argument("energy_rescale: lambda must be positive");
    Trajectory out;
    out.T = t.T * std::pow(lambda, -1.5);
    out.q1.resize(t.q1.size());
    out.q2.resize(t.q2.size());
    for (std::size_t i = 0; i < t.q1.size(); ++i) {
        out.q1[i] = t.q1[i] / lambda;
        out.q2[i] = t.q2[i] / lambda;
    }
    out.q1[0] = 0.0;
    return out;
}

struct SweepStep {
    double param = 0.0;
    double eps1 = 0.0, eps2 = 0.0, mu = 1.0;
    OrbitSolution sol;
    double gap_T = 0.0;
    double h = 0.0;  // identity energy, the observable the bounds constrain
    double cauchy_c0 = std::numeric_limits<double>::quiet_NaN();
    double cauchy_c2 = std::numeric_limits<double>::quiet_NaN();
    double dist_to_limit = std::numeric_limits<double>::quiet_NaN();
    int refine_iters = 0;
    int cold_iters = -1;  // -1 = not measured
    bool warm_started = false;
};

struct SweepRecord {
    Schedule::Kind kind = Schedule::Kind::eps;
    std::vector<SweepStep> steps;
    bool complete = false;
    std::string failure;
    double gap_slope = std::numeric_limits<double>::quiet_NaN();  // mu sweeps
    Trajectory limit_candidate;                                   // mu sweeps
};

namespace detail {

inline SweepStep make_step(const SolveParams& p, const SolveOutcome& out, double param,
                           bool warm, const Trajectory* prev, bool trim_right) {
    SweepStep st;
    st.param = param;
    st.eps1 = p.eps1;
    st.eps2 = p.eps2;
    st.mu = p.mu;
    SmoothedPotentials sp(p.family, p.eps1, p.eps2);
    ActionContext ctx(sp, p.mu, p.T, p.n);
    st.sol = verify_solution(ctx, out.solution, out.c_est, out.a_eps, out.grad_inf);
    st.gap_T = out.solution.q2[p.n] - out.solution.q1[p.n];
    st.h = st.sol.energy.h_identity;
    st.refine_iters = out.refine.iters;
    st.warm_started = warm;
    if (prev) {
        auto [c0, c2] = window_distances(out.solution, *prev, trim_right);
        st.cauchy_c0 = c0;
        st.cauchy_c2 = c2;
    }
    return st;
}

inline int measure_cold_iters(const SolveParams& p, const Trajectory& from) {
    SmoothedPotentials sp(p.family, p.eps1, p.eps2);
    ActionContext ctx(sp, p.mu, p.T, p.n);
    try {
        return refine_critical_point(ctx, from, p.refine_tol, p.refine_max_iters).iters;
    } catch (const SolverFailure&) {
        return p.refine_max_iters;
    }
}

} // namespace detail

/**
 * eps continuation: full pipeline at the first value, warm-started Newton
 * refinement afterwards, falling back to a fresh deformation when the warm
 * start fails. A failing step returns the partial record with the failure
 * recorded. measure_cold re-refines every later step from the first
 * solution, for the warm-start economy comparison.
 */
inline SweepRecord sweep_eps(const SolveParams& base, const Schedule& schedule,
                             bool measure_cold = false) {
    if (schedule.kind != Schedule::Kind::eps)
        throw std::invalid_argument("sweep_eps: schedule kind mismatch");
    validate(schedule);
    SweepRecord rec;
    rec.kind = Schedule::Kind::eps;
    Trajectory prev;
    for (std::size_t k = 0; k < schedule.values.size(); ++k) {
        SolveParams p = base;
        p.eps1 = schedule.values[k];
        p.eps2 = schedule.link_eps2_to_eps1 ? schedule.values[k] : base.eps2;
        SolveOutcome out;
        bool warm = false;
        try {
            if (k == 0) {
                out = solve_orbit(p);
            } else {
                try {
                    out = solve_warm(p, prev);
                    warm = true;
                } catch (const SolverFailure&) {
                    out = solve_orbit(p);
                }
            }
        } catch (const std::exception& e) {
            rec.failure = "step " + std::to_string(k) + " (eps1=" +
                          std::to_string(schedule.values[k]) + "): " + e.what();
            return rec;
        }
        SweepStep st = detail::make_step(p, out, schedule.values[k], warm,
                                         k > 0 ? &prev : nullptr, false);
        if (measure_cold && k > 0)
            st.cold_iters = detail::measure_cold_iters(p, rec.steps.front().sol.traj);
        rec.steps.push_back(std::move(st));
        prev = out.solution;
    }
    rec.complete = true;
    return rec;
}

/**
 * mu continuation at fixed regularization, additionally tracking the distance
 * on [T/20, 19T/20] to the decoupled brake-limit candidate and the log-log
 * slope of gap(T) against mu over the three smallest values (the asymptotic
 * regime; the expected slope is 1/alpha).
 */
inline SweepRecord sweep_mu(const SolveParams& base, const Schedule& schedule,
                            bool measure_cold = false) {
    if (schedule.kind != Schedule::Kind::mu)
        throw std::invalid_argument("sweep_mu: schedule kind mismatch");
    validate(schedule);
    SweepRecord rec;
    rec.kind = Schedule::Kind::mu;
    SmoothedPotentials sp(base.family, base.eps1, base.eps2);
    rec.limit_candidate = brake_limit_candidate(sp, base.T, base.n);
    Trajectory prev;
    for (std::size_t k = 0; k < schedule.values.size(); ++k) {
        SolveParams p = base;
        p.mu = schedule.values[k];
        SolveOutcome out;
        bool warm = false;
        try {
            if (k == 0) {
                out = solve_orbit(p);
            } else {
                try {
                    out = solve_warm(p, prev);
                    warm = true;
                } catch (const SolverFailure&) {
                    out = solve_orbit(p);
                }
            }
        } catch (const std::exception& e) {
            rec.failure = "step " + std::to_string(k) + " (mu=" +
                          std::to_string(schedule.values[k]) + "): " + e.what();
            return rec;
        }
        SweepStep st = detail::make_step(p, out, schedule.values[k], warm,
                                         k > 0 ? &prev : nullptr, true);
        st.dist_to_limit = window_distances(out.solution, rec.limit_candidate, true).first;
        if (measure_cold && k > 0)
            st.cold_iters = detail::measure_cold_iters(p, rec.steps.front().sol.traj);
        rec.steps.push_back(std::move(st));
        prev = out.solution;
    }
    rec.complete = true;
    if (rec.steps.size() >= 3) {
        std::vector<double> lx, ly;
        for (std::size_t k = rec.steps.size() - 3; k < rec.steps.size(); ++k) {
            lx.push_back(std::log(rec.steps[k].param));
            ly.push_back(std::log(rec.steps[k].gap_T));
        }
        rec.gap_slope = fit_slope(lx, ly);
    }
    return rec;
}

} // namespace fpo
