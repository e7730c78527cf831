#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace fpo {

/// Scalar map on (0,inf) with analytic first and second derivatives.
/// Derivatives are always supplied by the family, never by differencing:
/// finite differences are unreliable near the singularity at 0.
struct ScalarPotential {
    std::function<double(double)> value;
    std::function<double(double)> d1;
    std::function<double(double)> d2;
};

/**
 * A pair (f, g) of singular potentials: f attracts toward the origin, g is
 * the mutual repulsion. alpha in (0,2) is the homogeneity exponent of the
 * admissibility inequalities s f' + alpha f >= 0 and s g' + alpha g <= 0;
 * s_bar witnesses 0 < g(s_bar) < f(s_bar).
 */
struct PotentialFamily {
    ScalarPotential f;
    ScalarPotential g;
    double alpha = 1.0;
    double s_bar = 1.0;
    std::string name;
    std::map<std::string, double> params;

    /// f(s) = a/s^alpha, g(s) = b/s^beta. Admissible for alpha in (0,2),
    /// beta >= alpha and, when beta == alpha, b < a.
    static PotentialFamily power_law(double a, double alpha, double b, double beta,
                                     double s_bar = 1.0) {
        PotentialFamily fam;
        fam.name = "power_law";
        fam.alpha = alpha;
        fam.s_bar = s_bar;
        fam.params = {{"a", a}, {"alpha", alpha}, {"b", b}, {"beta", beta}};
        fam.f.value = [a, alpha](double s) { return a * std::pow(s, -alpha); };
        fam.f.d1 = [a, alpha](double s) { return -a * alpha * std::pow(s, -alpha - 1.0); };
        fam.f.d2 = [a, alpha](double s) { return a * alpha * (alpha + 1.0) * std::pow(s, -alpha - 2.0); };
        fam.g.value = [b, beta](double s) { return b * std::pow(s, -beta); };
        fam.g.d1 = [b, beta](double s) { return -b * beta * std::pow(s, -beta - 1.0); };
        fam.g.d2 = [b, beta](double s) { return b * beta * (beta + 1.0) * std::pow(s, -beta - 2.0); };
        return fam;
    }

    /// Collinear helium: f(s) = 2/s, g(s) = 1/s, alpha = 1.
    static PotentialFamily helium() { return power_law(2.0, 1.0, 1.0, 1.0); }

    /// True when f = a/s and g = b/s, the case covered by energy rescaling.
    bool homogeneous_kepler() const {
        return name == "power_law" && params.count("alpha") && params.count("beta") &&
               params.at("alpha") == 1.0 && params.at("beta") == 1.0;
    }
};

/// One hypothesis verdict: worst margin over the sampled grid and where it
/// occurred. `margin` is signed so that pass <=> margin >= -tolerance.
struct HypothesisCheck {
    bool pass = false;
    double worst_margin = std::numeric_limits<double>::quiet_NaN();
    double worst_s = std::numeric_limits<double>::quiet_NaN();
    std::string detail;
};

struct HypothesisReport {
    HypothesisCheck decay;          // f, f', g, g' -> 0 at infinity
    HypothesisCheck signs;          // f,g >= 0, f',g' <= 0, f'',g'' >= 0
    HypothesisCheck homogeneity;    // s f' + a f >= 0 and s g' + a g <= 0
    HypothesisCheck mountain_pass;  // 0 < g(s_bar) < f(s_bar)
    bool alpha_in_range = false;    // alpha in (0,2)

    bool all_pass() const {
        return alpha_in_range && decay.pass && signs.pass && homogeneity.pass &&
               mountain_pass.pass;
    }
};

namespace detail {

inline double checked_eval(const std::function<double(double)>& fn, double s, const char* what) {
    const double v = fn(s);
    if (!std::isfinite(v))
        throw std::runtime_error(std::string("non-finite evaluation of ") + what + " at s=" +
                                 std::to_string(s));
    return v;
}

inline void worse(HypothesisCheck& c, double margin, double s) {
    if (!(margin >= c.worst_margin)) {  // also catches the initial NaN
        c.worst_margin = margin;
        c.worst_s = s;
    }
}

} // namespace detail

/// Decay certificate scale: hypothesis (2) is a limit, certified here as
/// monotone decrease along doublings out to 1e6 * s_bar, where each quantity
/// must either already sit below the absolute floor or still be contracting
/// per doubling (a constant tail contracts by exactly 1 and fails).
inline constexpr double kDecayFarFactor = 1e6;
inline constexpr double kDecayAbsoluteFloor = 1e-8;
inline constexpr double kDecayContraction = 0.9995;

/**
 * Grid-sampled certification of the admissibility hypotheses. The grid must
 * be nonempty, strictly positive and sorted. Throws on non-finite values,
 * naming the offending point.
 */
inline HypothesisReport validate_hypotheses(const PotentialFamily& fam,
                                            const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("validate_hypotheses: empty grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0)) throw std::invalid_argument("validate_hypotheses: grid must be positive");
        if (i > 0 && !(grid[i] > grid[i - 1]))
            throw std::invalid_argument("validate_hypotheses: grid must be sorted ascending");
    }

    HypothesisReport rep;
    rep.alpha_in_range = fam.alpha > 0.0 && fam.alpha < 2.0;

    // (3) sign conditions and (4) homogeneity inequalities over the grid.
    rep.signs.detail = "min over grid of {f, g, -f', -g', f'', g''}";
    rep.homogeneity.detail = "min over grid of {s f' + a f, -(s g' + a g)}";
    for (double s : grid) {
        const double fv = detail::checked_eval(fam.f.value, s, "f");
        const double f1 = detail::checked_eval(fam.f.d1, s, "f'");
        const double f2 = detail::checked_eval(fam.f.d2, s, "f''");
        const double gv = detail::checked_eval(fam.g.value, s, "g");
        const double g1 = detail::checked_eval(fam.g.d1, s, "g'");
        const double g2 = detail::checked_eval(fam.g.d2, s, "g''");
        for (double m : {fv, gv, -f1, -g1, f2, g2}) detail::worse(rep.signs, m, s);
        detail::worse(rep.homogeneity, s * f1 + fam.alpha * fv, s);
        detail::worse(rep.homogeneity, -(s * g1 + fam.alpha * gv), s);
    }
    const double sign_tol = 1e-12;
    rep.signs.pass = rep.signs.worst_margin >= -sign_tol;
    rep.homogeneity.pass = rep.homogeneity.worst_margin >= -sign_tol;

    // (2) decay: monotone decrease along a geometric extension; at the far
    // end require absolute smallness or sustained geometric contraction.
    {
        rep.decay.detail = "monotone decay of f,|f'|,g,|g'| out to 1e6*s_bar";
        double s = std::max(grid.back(), fam.s_bar);
        const double s_far = kDecayFarFactor * fam.s_bar;
        double prev[4] = {detail::checked_eval(fam.f.value, s, "f"),
                          std::abs(detail::checked_eval(fam.f.d1, s, "f'")),
                          detail::checked_eval(fam.g.value, s, "g"),
                          std::abs(detail::checked_eval(fam.g.d1, s, "g'"))};
        bool monotone = true;
        double last_ratio[4] = {1.0, 1.0, 1.0, 1.0};
        while (s < s_far) {
            s *= 2.0;
            double cur[4] = {detail::checked_eval(fam.f.value, s, "f"),
                             std::abs(detail::checked_eval(fam.f.d1, s, "f'")),
                             detail::checked_eval(fam.g.value, s, "g"),
                             std::abs(detail::checked_eval(fam.g.d1, s, "g'"))};
            for (int k = 0; k < 4; ++k) {
                if (cur[k] > prev[k] + sign_tol) monotone = false;
                last_ratio[k] = (prev[k] > 0.0) ? cur[k] / prev[k] : 0.0;
                prev[k] = cur[k];
            }
        }
        double margin = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 4; ++k)
            margin = std::min(margin, std::max(kDecayAbsoluteFloor - prev[k],
                                               kDecayContraction - last_ratio[k]));
        detail::worse(rep.decay, margin, s);
        rep.decay.pass = monotone && margin >= 0.0;
    }

    // (5) strict ordering at the witness point only.
    {
        const double fv = detail::checked_eval(fam.f.value, fam.s_bar, "f");
        const double gv = detail::checked_eval(fam.g.value, fam.s_bar, "g");
        rep.mountain_pass.detail = "0 < g(s_bar) < f(s_bar)";
        detail::worse(rep.mountain_pass, std::min(gv, fv - gv), fam.s_bar);
        rep.mountain_pass.pass = gv > 0.0 && fv > gv;
    }
    return rep;
}

/// The C^1 cutoff: 1 on (-inf,-eps2], quadratics meeting at psi(0)=1/2,
/// 0 on [eps2,inf); convex on [0,eps2], monotone decreasing.
inline double psi_cutoff(double eps2, double s) {
    if (!(eps2 > 0.0)) throw std::invalid_argument("psi_cutoff: eps2 must be positive");
    const double u = s / eps2;
    if (u <= -1.0) return 1.0;
    if (u >= 1.0) return 0.0;
    if (u <= 0.0) return 1.0 - 0.5 * (1.0 + u) * (1.0 + u);
    return 0.5 * (1.0 - u) * (1.0 - u);
}

inline double psi_cutoff_prime(double eps2, double s) {
    if (!(eps2 > 0.0)) throw std::invalid_argument("psi_cutoff_prime: eps2 must be positive");
    const double u = s / eps2;
    if (u <= -1.0 || u >= 1.0) return 0.0;
    if (u <= 0.0) return -(1.0 + u) / eps2;
    return -(1.0 - u) / eps2;
}

/**
 * Regularized pair for fixed (eps1, eps2).
 *
 * f_eps replaces f below eps1 by its tangent line at eps1 on [0,eps1], then a
 * downward parabola on [-eps1,0] matching value and slope at 0 with a maximum
 * at -eps1, then a constant. The result is C^{1,1} on R, monotone decreasing,
 * convex on [0,inf).
 *
 * g_eps(s) = g(s) + psi(s)/s^2 adds a strong-force barrier near collision;
 * it coincides with g for s >= eps2.
 */
class SmoothedPotentials {
  public:
    SmoothedPotentials(PotentialFamily fam, double eps1, double eps2)
        : fam_(std::move(fam)), e1_(eps1), e2_(eps2) {
        if (!(eps1 > 0.0) || !(eps2 > 0.0))
            throw std::invalid_argument("SmoothedPotentials: eps1, eps2 must be positive");
        f_at_e1_ = fam_.f.value(e1_);
        fp_at_e1_ = fam_.f.d1(e1_);
        if (!std::isfinite(f_at_e1_) || !std::isfinite(fp_at_e1_))
            throw std::runtime_error("SmoothedPotentials: f not finite at eps1");
    }

    double eps1() const { return e1_; }
    double eps2() const { return e2_; }
    const PotentialFamily& family() const { return fam_; }
    double alpha() const { return fam_.alpha; }

    double f_eps(double s) const {
        if (s >= e1_) return fam_.f.value(s);
        if (s >= 0.0) return tangent(s);
        if (s >= -e1_) return parabola(s);
        return parabola(-e1_);
    }

    double f_eps_prime(double s) const {
        if (s >= e1_) return fam_.f.d1(s);
        if (s >= 0.0) return fp_at_e1_;
        if (s >= -e1_) return parabola_prime(s);
        return 0.0;
    }

    double psi(double s) const { return psi_cutoff(e2_, s); }
    double psi_prime(double s) const { return psi_cutoff_prime(e2_, s); }

    double g_eps(double s) const {
        if (!(s > 0.0)) throw std::domain_error("g_eps: requires s > 0");
        if (s >= e2_) return fam_.g.value(s);
        return fam_.g.value(s) + psi(s) / (s * s);
    }

    double g_eps_prime(double s) const {
        if (!(s > 0.0)) throw std::domain_error("g_eps_prime: requires s > 0");
        if (s >= e2_) return fam_.g.d1(s);
        return fam_.g.d1(s) + psi_prime(s) / (s * s) - 2.0 * psi(s) / (s * s * s);
    }

    // Analytic branch slopes, exposed so junction continuity can be checked
    // branch against branch rather than through rounded midpoint sampling.
    double tangent(double s) const { return f_at_e1_ + fp_at_e1_ * (s - e1_); }
    double tangent_prime(double) const { return fp_at_e1_; }
    double parabola(double s) const {
        return f_at_e1_ - fp_at_e1_ * e1_ + fp_at_e1_ * s + 0.5 * (fp_at_e1_ / e1_) * s * s;
    }
    double parabola_prime(double s) const { return fp_at_e1_ * (1.0 + s / e1_); }

  private:
    PotentialFamily fam_;
    double e1_, e2_;
    double f_at_e1_, fp_at_e1_;
};

/// Smallest value over the grid of s f_eps' + alpha f_eps (>= 0 holds for
/// admissible families, including the modified branches).
inline double worst_f_homogeneity(const SmoothedPotentials& sp, const std::vector<double>& grid) {
    double worst = std::numeric_limits<double>::infinity();
    for (double s : grid) worst = std::min(worst, s * sp.f_eps_prime(s) + sp.alpha() * sp.f_eps(s));
    return worst;
}

/**
 * Largest grid point s such that s g_eps' + alpha g_eps <= tol holds at every
 * grid sample up to and including s. Returns 0 when it fails already at the
 * first sample. With the quadratic cutoff the inequality holds on the whole
 * positive axis, so this normally returns the last grid point.
 */
inline double g_homogeneity_valid_up_to(const SmoothedPotentials& sp,
                                        const std::vector<double>& grid, double tol = 1e-12) {
    double valid = 0.0;
    for (double s : grid) {
        if (!(s > 0.0)) throw std::invalid_argument("g_homogeneity_valid_up_to: grid must be positive");
        if (s * sp.g_eps_prime(s) + sp.alpha() * sp.g_eps(s) > tol) break;
        valid = s;
    }
    return valid;
}

} // namespace fpo
