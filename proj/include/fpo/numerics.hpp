#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fpo {

/** Fixed-order Gauss-Legendre rule on [-1,1]. */
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

/// Nodes via Newton iteration on the Legendre recurrence (symmetric pairs).
inline GaussLegendre compute_gauss_legendre(int order) {
    if (order < 2) throw std::invalid_argument("gauss_legendre: order must be >= 2");
    GaussLegendre gl;
    gl.nodes.assign(order, 0.0);
    gl.weights.assign(order, 0.0);
    const int half = (order + 1) / 2;
    for (int i = 0; i < half; ++i) {
        // Chebyshev-based initial guess for the i-th root
        double x = std::cos(M_PI * (i + 0.75) / (order + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < order; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = order * (x * p0 - p1) / (x * x - 1.0);
            double dx = p0 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        gl.nodes[i] = -x;
        gl.nodes[order - 1 - i] = x;
        gl.weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
        gl.weights[order - 1 - i] = gl.weights[i];
    }
    return gl;
}

} // namespace detail

/// Cached Gauss-Legendre rule; thread-safe, computed once per order.
inline const GaussLegendre& gauss_legendre(int order) {
    static std::map<int, GaussLegendre> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, detail::compute_gauss_legendre(order)).first;
    return it->second;
}

/// ∫_a^b fn via fixed-order Gauss-Legendre.
inline double integrate_gl(const std::function<double(double)>& fn, double a, double b, int order) {
    const GaussLegendre& gl = gauss_legendre(order);
    const double mid = 0.5 * (a + b), hw = 0.5 * (b - a);
    double sum = 0.0;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i)
        sum += gl.weights[i] * fn(mid + hw * gl.nodes[i]);
    return hw * sum;
}

/**
 * Root of a continuous monotone function inside [lo, hi] by the Illinois
 * variant of regula falsi with a bisection fallback. Requires a sign change.
 */
inline double solve_bracketed(const std::function<double(double)>& fn, double lo, double hi,
                              double flo, double fhi, double xtol, int max_iters = 200) {
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0))
        throw std::invalid_argument("solve_bracketed: endpoints do not bracket a root");
    double a = lo, b = hi, fa = flo, fb = fhi;
    int side = 0;
    for (int i = 0; i < max_iters; ++i) {
        double m = (fa * b - fb * a) / (fa - fb);
        if (!(m > a && m < b)) m = 0.5 * (a + b);
        double fm = fn(m);
        if (fm == 0.0 || (b - a) < xtol) return m;
        if ((fm > 0.0) == (fb > 0.0)) {
            b = m; fb = fm;
            if (side == -1) fa *= 0.5;
            side = -1;
        } else {
            a = m; fa = fm;
            if (side == +1) fb *= 0.5;
            side = +1;
        }
    }
    return 0.5 * (a + b);
}

/// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_slope: need two or more samples");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i]; sy += y[i]; sxx += x[i] * x[i]; sxy += x[i] * y[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("fit_slope: degenerate abscissae");
    return (n * sxy - sx * sy) / denom;
}

inline double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double two_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median_of: empty");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
    return 0.5 * (v[mid - 1] + hi);
}

/**
 * Runs fn(i) for i in [0, count) over at most `workers` threads in contiguous
 * chunks. Each index writes only its own slot, so results do not depend on the
 * worker count.
 */
inline void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
    workers = std::max(1, std::min(workers, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const int chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const int i0 = w * chunk, i1 = std::min(count, i0 + chunk);
        if (i0 >= i1) break;
        pool.emplace_back([&fn, i0, i1] {
            for (int i = i0; i < i1; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

/// Deterministic 64-bit splitmix for seeding per-trial generators.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace fpo
