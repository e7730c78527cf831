#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "fpo/numerics.hpp"
#include "fpo/potentials.hpp"
#include "fpo/trajectory.hpp"

namespace fpo {

/**
 * Everything needed to evaluate the regularized action on a grid: the
 * smoothed potentials, the charge factor mu in [0,1] on the repulsive term
 * (mu = 1 is the full model, mu = 0 decouples the electrons), and the grid
 * metadata the trajectories must match.
 */
struct ActionContext {
    SmoothedPotentials sp;
    double mu = 1.0;
    double T = 1.0;
    int n = 0;

    ActionContext(SmoothedPotentials sp_, double mu_, double T_, int n_)
        : sp(std::move(sp_)), mu(mu_), T(T_), n(n_) {
        if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("ActionContext: mu must lie in [0,1]");
        if (!(T > 0.0)) throw std::invalid_argument("ActionContext: T must be positive");
        if (n < kMinNodes) throw std::invalid_argument("ActionContext: n too small");
    }
};

namespace detail {

inline void check_grid(const ActionContext& ctx, const Trajectory& t) {
    if (t.n() != ctx.n || t.T != ctx.T)
        throw std::invalid_argument("action: trajectory grid does not match context");
}

inline void check_domain(const Trajectory& t) {
    for (std::size_t i = 0; i < t.q1.size(); ++i)
        if (!(t.q2[i] - t.q1[i] > 0.0))
            throw std::domain_error("action: trajectory left the admissible set (gap <= 0 at node " +
                                    std::to_string(i) + ")");
}

} // namespace detail

/**
 * Discrete action: exact kinetic energy of the piecewise-linear interpolant
 * plus the trapezoid rule for f_eps(q1) + f_eps(q2) - mu g_eps(q2-q1).
 * Throws std::domain_error before any potential evaluation if some nodal gap
 * is <= 0.
 */
inline double action_value(const ActionContext& ctx, const Trajectory& t) {
    detail::check_grid(ctx, t);
    detail::check_domain(t);
    const double dt = t.dt();
    double kin = 0.0;
    for (int i = 0; i < t.n(); ++i) {
        const double d1 = t.q1[i + 1] - t.q1[i];
        const double d2 = t.q2[i + 1] - t.q2[i];
        kin += (d1 * d1 + d2 * d2) / (2.0 * dt);
    }
    double pot = 0.0;
    for (int i = 0; i <= t.n(); ++i) {
        const double w = (i == 0 || i == t.n()) ? 0.5 : 1.0;
        pot += w * (ctx.sp.f_eps(t.q1[i]) + ctx.sp.f_eps(t.q2[i]) -
                    ctx.mu * ctx.sp.g_eps(t.q2[i] - t.q1[i]));
    }
    return kin + dt * pot;
}

/**
 * Gradient of the discrete action with respect to the free nodal values:
 * q1[1..n] and q2[0..n]. q1[0] is structural and has no slot. The natural
 * boundary behaviour (zero discrete velocity at free endpoints) emerges from
 * the one-sided kinetic terms; nothing is imposed.
 */
struct GradientVector {
    std::vector<double> g_q1;  // size n, slots for q1[1..n]
    std::vector<double> g_q2;  // size n+1, slots for q2[0..n]
};

inline GradientVector action_gradient(const ActionContext& ctx, const Trajectory& t) {
    detail::check_grid(ctx, t);
    detail::check_domain(t);
    const int n = t.n();
    const double dt = t.dt();
    GradientVector g;
    g.g_q1.assign(n, 0.0);
    g.g_q2.assign(n + 1, 0.0);

    for (int i = 1; i <= n; ++i) {
        double k = (t.q1[i] - t.q1[i - 1]) / dt;
        if (i < n) k -= (t.q1[i + 1] - t.q1[i]) / dt;
        const double w = (i == n) ? 0.5 : 1.0;
        const double gap = t.q2[i] - t.q1[i];
        g.g_q1[i - 1] = k + dt * w * (ctx.sp.f_eps_prime(t.q1[i]) + ctx.mu * ctx.sp.g_eps_prime(gap));
    }
    for (int i = 0; i <= n; ++i) {
        double k = 0.0;
        if (i > 0) k += (t.q2[i] - t.q2[i - 1]) / dt;
        if (i < n) k -= (t.q2[i + 1] - t.q2[i]) / dt;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        const double gap = t.q2[i] - t.q1[i];
        g.g_q2[i] = k + dt * w * (ctx.sp.f_eps_prime(t.q2[i]) - ctx.mu * ctx.sp.g_eps_prime(gap));
    }
    return g;
}

// Flat layout used by the solvers: x = [q2_0, q1_1, q2_1, ..., q1_n, q2_n],
// size 2n+1. Interleaving keeps the stencil banded with half-bandwidth 2.
inline int flat_size(int n) { return 2 * n + 1; }

inline std::vector<double> flatten_free(const Trajectory& t) {
    const int n = t.n();
    std::vector<double> x(flat_size(n));
    x[0] = t.q2[0];
    for (int i = 1; i <= n; ++i) {
        x[2 * i - 1] = t.q1[i];
        x[2 * i] = t.q2[i];
    }
    return x;
}

inline std::vector<double> flatten(const GradientVector& g) {
    const int n = static_cast<int>(g.g_q1.size());
    std::vector<double> x(flat_size(n));
    x[0] = g.g_q2[0];
    for (int i = 1; i <= n; ++i) {
        x[2 * i - 1] = g.g_q1[i - 1];
        x[2 * i] = g.g_q2[i];
    }
    return x;
}

inline void unflatten_free(const std::vector<double>& x, Trajectory& t) {
    const int n = t.n();
    t.q2[0] = x[0];
    t.q1[0] = 0.0;
    for (int i = 1; i <= n; ++i) {
        t.q1[i] = x[2 * i - 1];
        t.q2[i] = x[2 * i];
    }
}

/**
 * Worst mismatch between the analytic directional derivative and the central
 * difference (A(q+hv) - A(q-hv)) / 2h over `trials` random unit directions.
 * The trajectory must sit in the interior of a smooth region: the potentials
 * are only C^{1,1} across the junction values, where second-derivative jumps
 * would contaminate the central difference.
 */
inline double fd_check(const ActionContext& ctx, const Trajectory& t, int trials,
                       std::uint64_t seed, double h = 1e-5) {
    const GradientVector g = action_gradient(ctx, t);
    const std::vector<double> gf = flatten(g);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int m = static_cast<int>(gf.size());
    double worst = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<double> v(m);
        double norm = 0.0;
        while (norm == 0.0) {  // zero directions excluded by construction
            for (int i = 0; i < m; ++i) v[i] = gauss(rng);
            norm = two_norm(v);
        }
        for (int i = 0; i < m; ++i) v[i] /= norm;

        Trajectory plus = t, minus = t;
        std::vector<double> xp = flatten_free(t), xm = xp;
        for (int i = 0; i < m; ++i) {
            xp[i] += h * v[i];
            xm[i] -= h * v[i];
        }
        unflatten_free(xp, plus);
        unflatten_free(xm, minus);
        const double fd = (action_value(ctx, plus) - action_value(ctx, minus)) / (2.0 * h);
        double an = 0.0;
        for (int i = 0; i < m; ++i) an += gf[i] * v[i];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-10});
        worst = std::max(worst, std::abs(fd - an) / denom);
    }
    return worst;
}

/**
 * dA(q)[q] with the q1[0] slot of the test direction zeroed (it is zero on
 * the admissible set anyway). At a critical point this vanishes, which gives
 * the kinetic bound used by the energy estimates.
 */
inline double homogeneity_pairing(const ActionContext& ctx, const Trajectory& t) {
    const GradientVector g = action_gradient(ctx, t);
    double sum = 0.0;
    const int n = t.n();
    sum += g.g_q2[0] * t.q2[0];
    for (int i = 1; i <= n; ++i) sum += g.g_q1[i - 1] * t.q1[i] + g.g_q2[i] * t.q2[i];
    return sum;
}

/// Signed slack of dA(q)[q] >= (2+a)/2 ||qdot||^2 - a A(q); nonnegative up to
/// roundoff for every admissible trajectory.
inline double homogeneity_slack(const ActionContext& ctx, const Trajectory& t) {
    const double pairing = homogeneity_pairing(ctx, t);
    const double k = l2_norm_dot(t);
    const double a = ctx.sp.alpha();
    return pairing - (0.5 * (2.0 + a) * k * k - a * action_value(ctx, t));
}

} // namespace fpo
