#pragma once

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fpo/action.hpp"
#include "fpo/kepler.hpp"
#include "fpo/numerics.hpp"
#include "fpo/trajectory.hpp"

namespace fpo {

struct MinimaxConfig {
    int M = 64;               // path node count; production runs use >= 32
    double c_lo = 0.0;        // inner endpoint constant, 0 = auto (1.25 w)
    double C_hi = 0.0;        // outer endpoint constant, 0 = auto (8 w)
    double step0 = 0.1;       // initial deformation step length
    double tol_grad = 1e-3;   // gradient inf-norm at the maximizer stopping deform
    int max_iters = 2000;
    int reparam_every = 10;   // arclength redistribution stride
    double band = 0.2;        // band width as a fraction of (max - median)
    int workers = 1;
};

struct MinimaxReport {
    double c_est = std::numeric_limits<double>::quiet_NaN();
    double a_eps = std::numeric_limits<double>::quiet_NaN();
    double margin = std::numeric_limits<double>::quiet_NaN();
    double grad_norm_at_max = std::numeric_limits<double>::quiet_NaN();
    int iters = 0;
    bool converged = false;
    bool ps_suspect = false;  // stalled at the step floor with a large gradient
    // Arclength redistribution re-samples chain segments; when a segment hid
    // a ridge crossing, the recorded maximum jumps back up. Each such event
    // is counted here; descent steps themselves never raise the maximum.
    int resample_bumps = 0;
    double worst_resample_bump = 0.0;
    std::vector<double> level_history;
    Trajectory maximizer;
};

/// Solver failure that carries the best iterate reached, so callers can
/// inspect or recover from it.
class SolverFailure : public std::runtime_error {
  public:
    SolverFailure(const std::string& msg, Trajectory best, double grad_inf, int iters)
        : std::runtime_error(msg), best_(std::move(best)), grad_inf_(grad_inf), iters_(iters) {}
    const Trajectory& best() const { return best_; }
    double grad_inf() const { return grad_inf_; }
    int iters() const { return iters_; }

  private:
    Trajectory best_;
    double grad_inf_;
    int iters_;
};

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline Trajectory brake_with_constant(const BrakeOrbit& brake, double c) {
    Trajectory t;
    t.T = brake.prof.T;
    t.q1 = brake.prof.q;
    t.q2.assign(brake.prof.q.size(), c);
    t.q1[0] = 0.0;
    return t;
}

} // namespace detail

/**
 * Endpoints of the admissible path class: (q_brake, c_lo) and (q_brake, C_hi).
 * c_lo is pulled toward the brake amplitude until the strong-force term drags
 * the action below the brake level a_eps; C_hi is doubled until its action
 * sits within a tenth of the estimated ridge height above a_eps (both f and g
 * vanish at infinity, so the level decays to a_eps from above). The adjusted
 * constants are written back into the config.
 */
inline std::pair<Trajectory, Trajectory> build_endpoints(const BrakeOrbit& brake,
                                                         const ActionContext& ctx,
                                                         MinimaxConfig& cfg) {
    const double w = brake.w;
    const double a_eps = brake.level;
    if (cfg.c_lo == 0.0) cfg.c_lo = 1.25 * w;
    if (cfg.C_hi == 0.0) cfg.C_hi = 8.0 * w;
    if (!(cfg.c_lo > w))
        throw ConfigError("build_endpoints: c_lo must exceed the brake amplitude " +
                          std::to_string(w));
    if (!(cfg.C_hi > cfg.c_lo)) throw ConfigError("build_endpoints: need C_hi > c_lo");

    // ridge height along the constant-offset family, an upper proxy for the
    // minimax gap: this family is itself an admissible path
    double ridge = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 200; ++k) {
        const double d = (cfg.c_lo - w) * std::pow((cfg.C_hi - w) / (cfg.c_lo - w), k / 200.0);
        ridge = std::max(ridge, action_value(ctx, detail::brake_with_constant(brake, w + d)));
    }
    const double expected_gap = std::max(ridge - a_eps, 1e-12);

    double offset = cfg.c_lo - w;
    int tries = 0;
    while (true) {
        if (!(w + offset > w))  // offset rounded away: the barrier never won
            throw ConfigError("build_endpoints: could not push A(endpoint_lo) below a_eps");
        if (action_value(ctx, detail::brake_with_constant(brake, w + offset)) < a_eps) break;
        offset *= 0.5;
        if (++tries > 60)
            throw ConfigError("build_endpoints: could not push A(endpoint_lo) below a_eps");
    }
    cfg.c_lo = w + offset;

    tries = 0;
    while (action_value(ctx, detail::brake_with_constant(brake, cfg.C_hi)) >
           a_eps + 0.1 * expected_gap) {
        cfg.C_hi *= 2.0;
        if (++tries > 60)
            throw ConfigError("build_endpoints: A(endpoint_hi) does not decay toward a_eps");
    }
    return {detail::brake_with_constant(brake, cfg.c_lo),
            detail::brake_with_constant(brake, cfg.C_hi)};
}

/// Straight-chain initial path between the endpoints (nodewise convex
/// combinations, hence inside the admissible set).
inline PathOfTrajectories initial_path(const Trajectory& lo, const Trajectory& hi, int M) {
    if (M < 2) throw std::invalid_argument("initial_path: need M >= 2");
    PathOfTrajectories p;
    p.nodes.reserve(M + 1);
    for (int j = 0; j <= M; ++j) {
        const double s = static_cast<double>(j) / M;
        Trajectory t = lo;
        for (std::size_t i = 0; i < t.q1.size(); ++i) {
            t.q1[i] += s * (hi.q1[i] - lo.q1[i]);
            t.q2[i] += s * (hi.q2[i] - lo.q2[i]);
        }
        t.q1[0] = 0.0;
        p.nodes.push_back(std::move(t));
    }
    return p;
}

/// Per-node minimum gap along the chain; lets callers confirm the chain still
/// threads every separation level between its endpoints.
inline std::vector<double> diagnostics_crossing(const PathOfTrajectories& path) {
    std::vector<double> gaps;
    gaps.reserve(path.nodes.size());
    for (const auto& t : path.nodes) gaps.push_back(min_gap(t).first);
    return gaps;
}

namespace detail {

inline double safe_action(const ActionContext& ctx, const Trajectory& t) {
    try {
        return action_value(ctx, t);
    } catch (const std::domain_error&) {
        return -std::numeric_limits<double>::infinity();
    }
}

/// Redistribute interior nodes to uniform arclength (L2 chain metric) by
/// interpolation along the existing polygon. Adoption is unconditional:
/// when a chain segment has silently straddled a ridge, the re-sampled node
/// reveals the crossing and the recorded maximum must be allowed to jump
/// back up, otherwise the chain tears and the minimax estimate collapses
/// below the true level.
inline void reparametrize(PathOfTrajectories& path, const ActionContext& ctx,
                          std::vector<double>& levels, int workers) {
    const int M = path.segments();
    std::vector<double> cum(M + 1, 0.0);
    for (int j = 1; j <= M; ++j)
        cum[j] = cum[j - 1] + l2_distance(path.nodes[j - 1], path.nodes[j]);
    if (!(cum[M] > 0.0)) return;

    std::vector<Trajectory> fresh(M - 1);
    for (int j = 1; j < M; ++j) {
        const double target = cum[M] * j / M;
        int k = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), target) - cum.begin()) - 1;
        k = std::min(std::max(k, 0), M - 1);
        const double seg = cum[k + 1] - cum[k];
        const double wgt = seg > 0.0 ? (target - cum[k]) / seg : 0.0;
        Trajectory t = path.nodes[k];
        const Trajectory& nxt = path.nodes[k + 1];
        for (std::size_t i = 0; i < t.q1.size(); ++i) {
            t.q1[i] += wgt * (nxt.q1[i] - t.q1[i]);
            t.q2[i] += wgt * (nxt.q2[i] - t.q2[i]);
        }
        t.q1[0] = 0.0;
        fresh[j - 1] = std::move(t);
    }
    std::vector<double> fresh_levels(M - 1);
    parallel_for(M - 1, workers,
                 [&](int j) { fresh_levels[j] = safe_action(ctx, fresh[j]); });
    for (int j = 1; j < M; ++j) {
        path.nodes[j] = std::move(fresh[j - 1]);
        levels[j] = fresh_levels[j - 1];
    }
}

} // namespace detail

/**
 * Discrete deformation descent on the path: the nodes within the upper action
 * band all take a normalized gradient step, the step length backtracks on the
 * path maximum, and the chain is redistributed by arclength periodically.
 * Endpoints are pinned and never touched. Terminates when the gradient at the
 * maximizing node drops below tol_grad (converged) or after max_iters;
 * persistent step rejection raises SolverFailure with the maximizer attached.
 */
inline MinimaxReport deform(PathOfTrajectories& path, const ActionContext& ctx,
                            const MinimaxConfig& cfg, double a_eps) {
    validate(path);
    const int M = path.segments();
    std::vector<double> levels(M + 1);
    parallel_for(M + 1, cfg.workers,
                 [&](int j) { levels[j] = detail::safe_action(ctx, path.nodes[j]); });

    MinimaxReport rep;
    rep.a_eps = a_eps;
    double step = cfg.step0;
    const double step_floor = cfg.step0 * std::pow(0.5, 45);

    auto argmax_level = [&]() {
        int arg = 0;
        for (int j = 1; j <= M; ++j)
            if (levels[j] > levels[arg]) arg = j;  // strict: smallest index on ties
        return arg;
    };

    int iter = 0;
    for (; iter < cfg.max_iters; ++iter) {
        const int arg = argmax_level();
        const double cur_max = levels[arg];
        rep.level_history.push_back(cur_max);

        const GradientVector gmax = action_gradient(ctx, path.nodes[arg]);
        rep.grad_norm_at_max = inf_norm(flatten(gmax));
        if (rep.grad_norm_at_max < cfg.tol_grad) {
            rep.converged = true;
            break;
        }

        // band of movers: interior nodes within 0.2 (max - median) of the max
        const double med = median_of(levels);
        const double cut = cur_max - cfg.band * std::max(cur_max - med, 0.0);
        std::vector<int> movers;
        for (int j = 1; j < M; ++j)
            if (levels[j] >= cut) movers.push_back(j);
        if (movers.empty()) movers.push_back(arg);

        const int B = static_cast<int>(movers.size());
        std::vector<std::vector<double>> dirs(B);
        parallel_for(B, cfg.workers, [&](int b) {
            std::vector<double> g = flatten(action_gradient(ctx, path.nodes[movers[b]]));
            const double nrm = std::max(two_norm(g), 1e-12);
            for (double& x : g) x /= -nrm;
            dirs[b] = std::move(g);
        });

        bool accepted = false;
        while (step >= step_floor) {
            std::vector<Trajectory> cand(B);
            std::vector<double> cand_level(B);
            parallel_for(B, cfg.workers, [&](int b) {
                Trajectory t = path.nodes[movers[b]];
                std::vector<double> x = flatten_free(t);
                for (std::size_t i = 0; i < x.size(); ++i) x[i] += step * dirs[b][i];
                unflatten_free(x, t);
                cand[b] = std::move(t);
                cand_level[b] = detail::safe_action(ctx, cand[b]);
            });
            double new_max = -std::numeric_limits<double>::infinity();
            bool in_domain = true;
            for (int b = 0; b < B; ++b)
                if (!cand[b].in_domain() || !std::isfinite(cand_level[b])) in_domain = false;
            if (in_domain) {
                std::vector<double> trial = levels;
                for (int b = 0; b < B; ++b) trial[movers[b]] = cand_level[b];
                for (double v : trial) new_max = std::max(new_max, v);
                if (new_max <= cur_max + 1e-12) {
                    for (int b = 0; b < B; ++b) {
                        path.nodes[movers[b]] = std::move(cand[b]);
                        levels[movers[b]] = cand_level[b];
                    }
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!accepted) {
            rep.iters = iter;
            rep.maximizer = path.nodes[argmax_level()];
            rep.c_est = levels[argmax_level()];
            rep.margin = rep.c_est - a_eps;
            rep.ps_suspect = rep.grad_norm_at_max > 10.0 * cfg.tol_grad;
            throw SolverFailure("deform: persistent step rejection at the step floor (grad_inf=" +
                                    std::to_string(rep.grad_norm_at_max) + ", iter=" +
                                    std::to_string(iter) + ")",
                                rep.maximizer, rep.grad_norm_at_max, iter);
        }
        step = std::min(step * 1.3, 10.0 * cfg.step0);

        if (cfg.reparam_every > 0 && (iter + 1) % cfg.reparam_every == 0) {
            const double before = levels[argmax_level()];
            detail::reparametrize(path, ctx, levels, cfg.workers);
            const double after = levels[argmax_level()];
            if (after > before + 1e-12) {
                ++rep.resample_bumps;
                rep.worst_resample_bump = std::max(rep.worst_resample_bump, after - before);
            }
        }
    }

    const int arg = argmax_level();
    rep.iters = iter;
    rep.maximizer = path.nodes[arg];
    rep.c_est = levels[arg];
    rep.margin = rep.c_est - a_eps;
    rep.level_history.push_back(levels[arg]);
    if (!rep.converged)
        rep.grad_norm_at_max = inf_norm(flatten(action_gradient(ctx, rep.maximizer)));
    return rep;
}

struct RefineResult {
    Trajectory traj;
    double grad_inf = std::numeric_limits<double>::quiet_NaN();
    int iters = 0;
    bool converged = false;
};

namespace detail {

/// Banded finite-difference Jacobian of the action gradient in the flat
/// layout (half-bandwidth 2). Columns are probed five at a time: indices
/// congruent mod 5 have disjoint row supports.
inline Eigen::SparseMatrix<double> fd_jacobian(const ActionContext& ctx, const Trajectory& t,
                                               const std::vector<double>& g0) {
    const int m = static_cast<int>(g0.size());
    const std::vector<double> x0 = flatten_free(t);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * m);
    Trajectory probe = t;
    for (int color = 0; color < 5; ++color) {
        std::vector<double> x = x0, h(m, 0.0);
        for (int j = color; j < m; j += 5) {
            h[j] = 1e-7 * (1.0 + std::abs(x0[j]));
            x[j] += h[j];
        }
        unflatten_free(x, probe);
        const std::vector<double> gp = flatten(action_gradient(ctx, probe));
        for (int j = color; j < m; j += 5)
            for (int i = std::max(0, j - 2); i <= std::min(m - 1, j + 2); ++i)
                trip.emplace_back(i, j, (gp[i] - g0[i]) / h[j]);
    }
    Eigen::SparseMatrix<double> J(m, m);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
}

} // namespace detail

/**
 * Damped Newton iteration on the nonlinear system grad A = 0 from a
 * near-critical start, backtracking on ||grad A||_2 and rejecting steps that
 * leave the admissible set. Saddle points are fine: the merit function only
 * vanishes at critical points and the banded LU handles indefinite Jacobians.
 *
 * Iterates are confined to a trust radius around the start: the action is
 * asymptotically flat in the outer direction, so ||grad A|| has spurious
 * minima at large separations and an unguarded iteration can drift there and
 * report a fake critical point. A refinement that wants to leave the region
 * fails loudly instead.
 *
 * Throws SolverFailure carrying the best iterate when no decrease is found
 * for 50 consecutive attempts or the iteration budget runs out.
 */
inline RefineResult refine_critical_point(const ActionContext& ctx, const Trajectory& traj0,
                                          double tol = 1e-9, int max_iters = 200,
                                          double trust_radius = 0.0) {
    Trajectory t = traj0;
    std::vector<double> g = flatten(action_gradient(ctx, t));
    const std::vector<double> x_start = flatten_free(traj0);
    if (trust_radius <= 0.0) trust_radius = 5.0 * (1.0 + inf_norm(x_start));
    RefineResult best;
    best.traj = t;
    best.grad_inf = inf_norm(g);

    int stall = 0;
    for (int iter = 0; iter < max_iters; ++iter) {
        const double gi = inf_norm(g);
        if (gi < best.grad_inf) {
            best.traj = t;
            best.grad_inf = gi;
        }
        if (gi < tol) {
            best.traj = t;
            best.grad_inf = gi;
            best.iters = iter;
            best.converged = true;
            return best;
        }

        Eigen::SparseMatrix<double> J = detail::fd_jacobian(ctx, t, g);
        const int m = J.rows();
        Eigen::VectorXd rhs(m);
        for (int i = 0; i < m; ++i) rhs[i] = -g[i];

        Eigen::VectorXd delta;
        double tau = 0.0;
        for (int attempt = 0; attempt < 8; ++attempt) {
            Eigen::SparseMatrix<double> Jt = J;
            if (tau > 0.0)
                for (int i = 0; i < m; ++i) Jt.coeffRef(i, i) += tau;
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
            lu.compute(Jt);
            if (lu.info() == Eigen::Success) {
                delta = lu.solve(rhs);
                if (delta.allFinite()) break;
            }
            tau = (tau == 0.0) ? 1e-8 : tau * 100.0;
            delta.resize(0);
        }
        if (delta.size() == 0)
            throw SolverFailure("refine: singular Jacobian", best.traj, best.grad_inf, iter);

        const double g2 = two_norm(g);
        double lambda = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
            Trajectory cand = t;
            std::vector<double> x = flatten_free(t);
            double excursion = 0.0;
            for (int i = 0; i < m; ++i) {
                x[i] += lambda * delta[i];
                excursion = std::max(excursion, std::abs(x[i] - x_start[i]));
            }
            unflatten_free(x, cand);
            if (excursion <= trust_radius && cand.in_domain()) {
                std::vector<double> gc = flatten(action_gradient(ctx, cand));
                if (two_norm(gc) < (1.0 - 1e-4 * lambda) * g2) {
                    t = std::move(cand);
                    g = std::move(gc);
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if (!accepted) {
            if (++stall >= 50)
                throw SolverFailure("refine: no decrease for 50 steps", best.traj, best.grad_inf,
                                    iter);
        } else {
            stall = 0;
        }
    }
    throw SolverFailure("refine: iteration budget exhausted", best.traj, best.grad_inf, max_iters);
}

/// Inputs of one complete minimax solve. When deform_n is set below n, the
/// path deformation runs on the coarse dyadic grid and the result is carried
/// to n by nested subdivision plus Newton refinement at each doubling; the
/// power-of-two grids make the injection exact on old nodes.
struct SolveParams {
    PotentialFamily family;
    double T = 1.0;
    int n = 512;
    double eps1 = 1e-3;
    double eps2 = 1e-3;
    double mu = 1.0;
    MinimaxConfig minimax;
    double refine_tol = 1e-9;
    int refine_max_iters = 200;
    int deform_n = 0;  // 0: deform at n directly
};

struct SolveOutcome {
    Trajectory solution;
    double c_est = std::numeric_limits<double>::quiet_NaN();  // action at the solution
    double a_eps = std::numeric_limits<double>::quiet_NaN();
    double margin = std::numeric_limits<double>::quiet_NaN();
    double grad_inf = std::numeric_limits<double>::quiet_NaN();
    BrakeOrbit brake;
    MinimaxReport minimax;
    RefineResult refine;
    PathOfTrajectories path;  // final deformed chain
};

/**
 * The full pipeline for one parameter point: brake orbit, endpoints, path
 * deformation until stagnation or tolerance, then Newton refinement of the
 * maximizer. If refinement fails the deformation resumes with a tighter
 * gradient target before retrying.
 */
inline SolveOutcome solve_orbit(const SolveParams& p) {
    if (p.deform_n > 0 && p.deform_n != p.n) {
        if (p.deform_n < kMinNodes || p.deform_n > p.n)
            throw ConfigError("solve_orbit: deform_n must lie in [16, n]");
        int ratio = p.n / p.deform_n;
        if (p.deform_n * ratio != p.n || (ratio & (ratio - 1)) != 0)
            throw ConfigError("solve_orbit: n / deform_n must be a power of two");
        SolveParams coarse = p;
        coarse.n = p.deform_n;
        coarse.deform_n = 0;
        SolveOutcome out = solve_orbit(coarse);
        SmoothedPotentials sp(p.family, p.eps1, p.eps2);
        Trajectory cur = out.solution;
        for (int m = 2 * p.deform_n; m <= p.n; m *= 2) {
            cur = subdivide(cur);
            ActionContext ctx(sp, p.mu, p.T, m);
            out.refine = refine_critical_point(ctx, cur, p.refine_tol, p.refine_max_iters);
            cur = out.refine.traj;
        }
        ActionContext ctx(sp, p.mu, p.T, p.n);
        out.brake = brake_orbit(sp, p.T, p.n);
        out.solution = std::move(cur);
        out.grad_inf = out.refine.grad_inf;
        out.a_eps = out.brake.level;
        out.c_est = action_value(ctx, out.solution);
        out.margin = out.c_est - out.a_eps;
        if (!(out.margin > 0.0))
            throw SolverFailure("solve_orbit: level separation lost under grid refinement",
                                out.solution, out.grad_inf, out.refine.iters);
        return out;
    }

    SolveOutcome out;
    SmoothedPotentials sp(p.family, p.eps1, p.eps2);
    ActionContext ctx(sp, p.mu, p.T, p.n);
    out.brake = brake_orbit(sp, p.T, p.n);

    MinimaxConfig cfg = p.minimax;
    auto [lo, hi] = build_endpoints(out.brake, ctx, cfg);
    out.path = initial_path(lo, hi, cfg.M);

    MinimaxConfig round_cfg = cfg;
    for (int round = 0;; ++round) {
        try {
            out.minimax = deform(out.path, ctx, round_cfg, out.brake.level);
        } catch (const SolverFailure& f) {
            out.minimax.maximizer = f.best();
            out.minimax.grad_norm_at_max = f.grad_inf();
            out.minimax.iters = f.iters();
            out.minimax.ps_suspect = true;
            out.minimax.a_eps = out.brake.level;
        }
        try {
            out.refine = refine_critical_point(ctx, out.minimax.maximizer, p.refine_tol,
                                               p.refine_max_iters);
            break;
        } catch (const SolverFailure& f) {
            if (round >= 2)
                throw SolverFailure("solve_orbit: refinement failed after deform retries: " +
                                        std::string(f.what()),
                                    f.best(), f.grad_inf(), f.iters());
            round_cfg.tol_grad *= 0.1;
            round_cfg.step0 *= 0.5;
            round_cfg.max_iters += cfg.max_iters;
        }
    }

    out.solution = out.refine.traj;
    out.grad_inf = out.refine.grad_inf;
    out.a_eps = out.brake.level;
    out.c_est = action_value(ctx, out.solution);
    out.minimax.c_est = out.minimax.level_history.empty() ? out.c_est
                                                          : out.minimax.level_history.back();
    out.minimax.margin = out.minimax.c_est - out.a_eps;
    out.margin = out.c_est - out.a_eps;
    if (!(out.margin > 0.0))
        throw SolverFailure("solve_orbit: converged without level separation (margin=" +
                                std::to_string(out.margin) + ")",
                            out.solution, out.grad_inf, out.refine.iters);
    return out;
}

/// Warm-started refinement used by parameter continuation.
inline SolveOutcome solve_warm(const SolveParams& p, const Trajectory& init) {
    SolveOutcome out;
    SmoothedPotentials sp(p.family, p.eps1, p.eps2);
    ActionContext ctx(sp, p.mu, p.T, p.n);
    out.brake = brake_orbit(sp, p.T, p.n);
    out.refine = refine_critical_point(ctx, init, p.refine_tol, p.refine_max_iters);
    out.solution = out.refine.traj;
    out.grad_inf = out.refine.grad_inf;
    out.a_eps = out.brake.level;
    out.c_est = action_value(ctx, out.solution);
    out.margin = out.c_est - out.a_eps;
    if (!(out.margin > 0.0))
        throw SolverFailure("solve_warm: converged without level separation", out.solution,
                            out.grad_inf, out.refine.iters);
    return out;
}

} // namespace fpo
