#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fpo {

/**
 * Time-gridded candidate orbit (q1, q2) on [0,T], nodes t_i = i T / n,
 * piecewise linear in between. q1[0] == 0 always: that coordinate is
 * structural, not an unknown. Membership in the admissible set requires
 * q1[i] < q2[i] at every node.
 */
struct Trajectory {
    double T = 1.0;
    std::vector<double> q1;  // size n+1
    std::vector<double> q2;  // size n+1

    int n() const { return static_cast<int>(q1.size()) - 1; }
    double dt() const { return T / n(); }
    double time_at(int i) const { return T * i / n(); }

    bool in_domain() const {
        for (std::size_t i = 0; i < q1.size(); ++i)
            if (!(q1[i] < q2[i])) return false;
        return true;
    }

    static Trajectory constants(double T, int n, double c1, double c2) {
        Trajectory t;
        t.T = T;
        t.q1.assign(n + 1, c1);
        t.q2.assign(n + 1, c2);
        t.q1[0] = 0.0;
        return t;
    }
};

inline constexpr int kMinNodes = 16;

inline void validate(const Trajectory& t) {
    if (t.q1.size() != t.q2.size()) throw std::invalid_argument("trajectory: q1/q2 size mismatch");
    if (t.n() < kMinNodes) throw std::invalid_argument("trajectory: need n >= 16");
    if (!(t.T > 0.0)) throw std::invalid_argument("trajectory: T must be positive");
    if (t.q1[0] != 0.0) throw std::invalid_argument("trajectory: q1[0] must be exactly 0");
}

/// Exact L2 norm of the derivative of the piecewise-linear interpolant.
inline double l2_norm_dot(const Trajectory& t) {
    const double dt = t.dt();
    double sum = 0.0;
    for (int i = 0; i < t.n(); ++i) {
        const double d1 = t.q1[i + 1] - t.q1[i];
        const double d2 = t.q2[i + 1] - t.q2[i];
        sum += (d1 * d1 + d2 * d2) / dt;
    }
    return std::sqrt(sum);
}

/// Minimum of q2 - q1 over nodes and its argmin (smallest index on ties).
inline std::pair<double, int> min_gap(const Trajectory& t) {
    double best = t.q2[0] - t.q1[0];
    int arg = 0;
    for (int i = 1; i <= t.n(); ++i) {
        const double g = t.q2[i] - t.q1[i];
        if (g < best) {
            best = g;
            arg = i;
        }
    }
    return {best, arg};
}

/// Discrete L2(0,T) distance between two trajectories on the same grid
/// (trapezoid weights). Used as the metric on chains of trajectories.
inline double l2_distance(const Trajectory& a, const Trajectory& b) {
    if (a.q1.size() != b.q1.size()) throw std::invalid_argument("l2_distance: grid mismatch");
    const double dt = a.dt();
    double sum = 0.0;
    for (int i = 0; i <= a.n(); ++i) {
        const double w = (i == 0 || i == a.n()) ? 0.5 : 1.0;
        const double d1 = a.q1[i] - b.q1[i];
        const double d2 = a.q2[i] - b.q2[i];
        sum += w * (d1 * d1 + d2 * d2) * dt;
    }
    return std::sqrt(sum);
}

inline double linf_distance(const Trajectory& a, const Trajectory& b) {
    if (a.q1.size() != b.q1.size()) throw std::invalid_argument("linf_distance: grid mismatch");
    double best = 0.0;
    for (int i = 0; i <= a.n(); ++i)
        best = std::max(best, std::max(std::abs(a.q1[i] - b.q1[i]), std::abs(a.q2[i] - b.q2[i])));
    return best;
}

/**
 * Ordered chain of M+1 trajectories sharing (T, n); the discretized path.
 * The first and last nodes are pinned: deformation never modifies them.
 */
struct PathOfTrajectories {
    std::vector<Trajectory> nodes;

    int segments() const { return static_cast<int>(nodes.size()) - 1; }
    const Trajectory& endpoint_lo() const { return nodes.front(); }
    const Trajectory& endpoint_hi() const { return nodes.back(); }
};

inline void validate(const PathOfTrajectories& p) {
    if (p.nodes.size() < 2) throw std::invalid_argument("path: need at least two nodes");
    for (const auto& t : p.nodes) {
        validate(t);
        if (t.q1.size() != p.nodes.front().q1.size() || t.T != p.nodes.front().T)
            throw std::invalid_argument("path: nodes must share (T, n)");
    }
}

/// Piecewise-linear interpolation along the chain; s in [0,1], endpoints
/// reproduced exactly. Nodewise convex combinations stay in the admissible
/// set, so interpolation cannot leave it.
inline Trajectory interp(const PathOfTrajectories& p, double s) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::domain_error("interp: s must lie in [0,1]");
    const int M = p.segments();
    if (s == 0.0) return p.nodes.front();
    if (s == 1.0) return p.nodes.back();
    const double x = s * M;
    const int k = std::min(static_cast<int>(x), M - 1);
    const double w = x - k;
    if (w == 0.0) return p.nodes[k];
    Trajectory out = p.nodes[k];
    const Trajectory& nxt = p.nodes[k + 1];
    for (std::size_t i = 0; i < out.q1.size(); ++i) {
        out.q1[i] += w * (nxt.q1[i] - out.q1[i]);
        out.q2[i] += w * (nxt.q2[i] - out.q2[i]);
    }
    out.q1[0] = 0.0;
    return out;
}

/// Nested dyadic refinement: doubles n, keeping every old node and inserting
/// cell midpoints. Old nodal values transfer without interpolation error,
/// which is what makes power-of-two grids cheap to warm-start across.
inline Trajectory subdivide(const Trajectory& t) {
    const int n = t.n();
    Trajectory f;
    f.T = t.T;
    f.q1.resize(2 * n + 1);
    f.q2.resize(2 * n + 1);
    for (int i = 0; i <= n; ++i) {
        f.q1[2 * i] = t.q1[i];
        f.q2[2 * i] = t.q2[i];
    }
    for (int i = 0; i < n; ++i) {
        f.q1[2 * i + 1] = 0.5 * (t.q1[i] + t.q1[i + 1]);
        f.q2[2 * i + 1] = 0.5 * (t.q2[i] + t.q2[i + 1]);
    }
    return f;
}

/// Single-component profile q(t) on [0,T]; the brake-orbit representation.
struct Profile {
    double T = 1.0;
    std::vector<double> q;

    int n() const { return static_cast<int>(q.size()) - 1; }
    double dt() const { return T / n(); }
};

} // namespace fpo
