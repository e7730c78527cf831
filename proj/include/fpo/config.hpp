#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpo/continuation.hpp"
#include "fpo/mountainpass.hpp"
#include "fpo/potentials.hpp"

namespace fpo {

/// Configuration failure; the CLI maps it to exit code 1.
class BadConfig : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// One run, fully specified. Every field has a default; the JSON config and
/// command-line overrides replace them selectively.
struct RunConfig {
    // family
    std::string family_name = "power_law";
    double a = 2.0;
    double alpha = 1.0;
    double b = 1.0;
    double beta = 1.0;
    double s_bar = 1.0;

    double T = 1.0;
    int n = 512;
    double eps1 = 1e-3;
    double eps2 = 1e-3;
    double mu = 1.0;

    MinimaxConfig minimax;  // M, c_lo, C_hi, step0, tol_grad, max_iters, reparam_every, band
    double refine_tol = 1e-9;
    int refine_max_iters = 200;
    int deform_n = 0;

    Schedule schedule;  // used by the sweep command only
    bool has_schedule = false;

    int fd_trials = 5;
    std::uint64_t seed = 20240101;
    int workers = 1;
    std::string output_dir = "out";
};

struct ConfigKeyDoc {
    const char* key;
    const char* def;
    const char* doc;
};

inline const std::vector<ConfigKeyDoc>& config_reference_table() {
    static const std::vector<ConfigKeyDoc> table = {
        {"family.name", "power_law", "potential family; power_law means f=a/s^alpha, g=b/s^beta"},
        {"family.a", "2.0", "attraction strength (helium: 2)"},
        {"family.alpha", "1.0", "attraction exponent, must lie in (0,2)"},
        {"family.b", "1.0", "repulsion strength (helium: 1)"},
        {"family.beta", "1.0", "repulsion exponent, beta >= alpha"},
        {"family.s_bar", "1.0", "witness point with 0 < g(s_bar) < f(s_bar)"},
        {"T", "1.0", "half period of the sought orbit"},
        {"n", "512", "time grid cells; must be a power of two, >= 16"},
        {"eps1", "1e-3", "attraction regularization scale"},
        {"eps2", "1e-3", "strong-force cutoff scale"},
        {"mu", "1.0", "charge factor on the repulsion, in [0,1]"},
        {"minimax.M", "64", "path nodes in the deformation chain, >= 32"},
        {"minimax.c_lo", "0", "inner endpoint constant; 0 = auto (1.25 w, then adjusted)"},
        {"minimax.C_hi", "0", "outer endpoint constant; 0 = auto (8 w, then adjusted)"},
        {"minimax.step0", "0.1", "initial deformation step length"},
        {"minimax.tol_grad", "1e-3", "gradient inf-norm at the maximizer that stops deform"},
        {"minimax.max_iters", "2000", "deformation iteration budget"},
        {"minimax.reparam_every", "10", "arclength redistribution stride (0 disables)"},
        {"minimax.band", "0.2", "descent band width as a fraction of (max - median)"},
        {"refine.tol", "1e-9", "gradient inf-norm target of the Newton refinement"},
        {"refine.max_iters", "200", "Newton iteration budget"},
        {"deform_n", "0", "coarse grid for the deformation; 0 = n, else n/deform_n a power of 2"},
        {"schedule.kind", "eps", "sweep parameter: eps or mu"},
        {"schedule.values", "[]", "strictly decreasing positive values (mu: in (0,1])"},
        {"schedule.link", "true", "eps sweeps: drive eps2 together with eps1"},
        {"fd_trials", "5", "random directions for the gradient fidelity pre-check"},
        {"seed", "20240101", "seed for the randomized finite-difference check"},
        {"workers", "1", "thread cap for node-parallel path evaluations"},
        {"output_dir", "out", "output directory (flag -o and FPO_OUTPUT_DIR override)"},
    };
    return table;
}

inline std::string config_reference_text() {
    std::ostringstream os;
    os << "configuration keys (JSON, dotted paths accepted by --set)\n\n";
    for (const auto& row : config_reference_table()) {
        os << "  " << row.key;
        for (std::size_t p = std::string(row.key).size(); p < 24; ++p) os << ' ';
        os << "default " << row.def;
        for (std::size_t p = std::string(row.def).size(); p < 10; ++p) os << ' ';
        os << row.doc << '\n';
    }
    return os.str();
}

namespace detail {

template <typename T>
T get_field(const nlohmann::json& j, const std::string& key, const T& def) {
    if (!j.contains(key)) return def;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw BadConfig("config field '" + key + "' has the wrong type");
    }
}

} // namespace detail

inline RunConfig config_from_json(const nlohmann::json& input) {
    nlohmann::json j = input;
    // a run report embeds its resolved config; accept it directly
    if (j.contains("fpo_report") && j.contains("config")) j = j.at("config");

    RunConfig c;
    if (j.contains("family")) {
        const auto& f = j.at("family");
        c.family_name = detail::get_field<std::string>(f, "name", c.family_name);
        if (c.family_name == "helium") {
            c.a = 2.0; c.alpha = 1.0; c.b = 1.0; c.beta = 1.0;
        } else if (c.family_name != "power_law") {
            throw BadConfig("config field 'family.name' must be power_law or helium");
        }
        c.a = detail::get_field(f, "a", c.a);
        c.alpha = detail::get_field(f, "alpha", c.alpha);
        c.b = detail::get_field(f, "b", c.b);
        c.beta = detail::get_field(f, "beta", c.beta);
        c.s_bar = detail::get_field(f, "s_bar", c.s_bar);
    }
    c.T = detail::get_field(j, "T", c.T);
    c.n = detail::get_field(j, "n", c.n);
    c.eps1 = detail::get_field(j, "eps1", c.eps1);
    c.eps2 = detail::get_field(j, "eps2", c.eps2);
    c.mu = detail::get_field(j, "mu", c.mu);
    if (j.contains("minimax")) {
        const auto& m = j.at("minimax");
        c.minimax.M = detail::get_field(m, "M", c.minimax.M);
        c.minimax.c_lo = detail::get_field(m, "c_lo", c.minimax.c_lo);
        c.minimax.C_hi = detail::get_field(m, "C_hi", c.minimax.C_hi);
        c.minimax.step0 = detail::get_field(m, "step0", c.minimax.step0);
        c.minimax.tol_grad = detail::get_field(m, "tol_grad", c.minimax.tol_grad);
        c.minimax.max_iters = detail::get_field(m, "max_iters", c.minimax.max_iters);
        c.minimax.reparam_every = detail::get_field(m, "reparam_every", c.minimax.reparam_every);
        c.minimax.band = detail::get_field(m, "band", c.minimax.band);
    }
    if (j.contains("refine")) {
        const auto& r = j.at("refine");
        c.refine_tol = detail::get_field(r, "tol", c.refine_tol);
        c.refine_max_iters = detail::get_field(r, "max_iters", c.refine_max_iters);
    }
    c.deform_n = detail::get_field(j, "deform_n", c.deform_n);
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        const std::string kind = detail::get_field<std::string>(s, "kind", "eps");
        if (kind == "eps") c.schedule.kind = Schedule::Kind::eps;
        else if (kind == "mu") c.schedule.kind = Schedule::Kind::mu;
        else throw BadConfig("config field 'schedule.kind' must be eps or mu");
        c.schedule.values = detail::get_field<std::vector<double>>(s, "values", {});
        c.schedule.link_eps2_to_eps1 = detail::get_field(s, "link", true);
        c.has_schedule = true;
    }
    c.fd_trials = detail::get_field(j, "fd_trials", c.fd_trials);
    c.seed = detail::get_field<std::uint64_t>(j, "seed", c.seed);
    c.workers = detail::get_field(j, "workers", c.workers);
    c.output_dir = detail::get_field<std::string>(j, "output_dir", c.output_dir);
    return c;
}

inline RunConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw BadConfig("cannot open config file " + file.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig("config parse error in " + file.string() + ": " + e.what());
    }
    return config_from_json(j);
}

/// Re-validates every range constraint the downstream modules rely on,
/// naming the offending field.
inline void validate(const RunConfig& c, bool require_schedule = false) {
    auto fail = [](const std::string& field, const std::string& why) {
        throw BadConfig("config field '" + field + "' " + why);
    };
    if (!(c.a > 0.0)) fail("family.a", "must be positive");
    if (!(c.b > 0.0)) fail("family.b", "must be positive");
    // alpha in (0,2) and beta >= alpha are hypothesis content, certified by
    // the validate stage rather than rejected at load
    if (!(c.alpha > 0.0)) fail("family.alpha", "must be positive");
    if (!(c.beta > 0.0)) fail("family.beta", "must be positive");
    if (!(c.s_bar > 0.0)) fail("family.s_bar", "must be positive");
    if (!(c.T > 0.0)) fail("T", "must be positive");
    if (c.n < kMinNodes) fail("n", "must be >= 16");
    if ((c.n & (c.n - 1)) != 0) fail("n", "must be a power of two");
    if (!(c.eps1 > 0.0)) fail("eps1", "must be positive");
    if (!(c.eps2 > 0.0)) fail("eps2", "must be positive");
    if (!(c.mu >= 0.0 && c.mu <= 1.0)) fail("mu", "must lie in [0,1]");
    if (c.minimax.M < 32) fail("minimax.M", "must be >= 32");
    if (!(c.minimax.step0 > 0.0)) fail("minimax.step0", "must be positive");
    if (!(c.minimax.tol_grad > 0.0)) fail("minimax.tol_grad", "must be positive");
    if (c.minimax.max_iters < 1) fail("minimax.max_iters", "must be >= 1");
    if (c.minimax.band < 0.0 || c.minimax.band > 1.0) fail("minimax.band", "must lie in [0,1]");
    if (!(c.refine_tol > 0.0)) fail("refine.tol", "must be positive");
    if (c.refine_max_iters < 1) fail("refine.max_iters", "must be >= 1");
    if (c.deform_n != 0) {
        if (c.deform_n < kMinNodes || c.deform_n > c.n) fail("deform_n", "must lie in [16, n]");
        const int ratio = c.n / c.deform_n;
        if (c.deform_n * ratio != c.n || (ratio & (ratio - 1)) != 0)
            fail("deform_n", "must divide n with a power-of-two ratio");
    }
    if (c.fd_trials < 0) fail("fd_trials", "must be >= 0");
    if (c.workers < 1) fail("workers", "must be >= 1");
    if (require_schedule) {
        if (!c.has_schedule || c.schedule.values.empty())
            fail("schedule.values", "must be a nonempty decreasing list for sweeps");
        try {
            fpo::validate(c.schedule);
        } catch (const std::invalid_argument& e) {
            fail("schedule.values", e.what());
        }
    }
}

inline PotentialFamily make_family(const RunConfig& c) {
    return PotentialFamily::power_law(c.a, c.alpha, c.b, c.beta, c.s_bar);
}

inline SolveParams make_solve_params(const RunConfig& c) {
    SolveParams p;
    p.family = make_family(c);
    p.T = c.T;
    p.n = c.n;
    p.eps1 = c.eps1;
    p.eps2 = c.eps2;
    p.mu = c.mu;
    p.minimax = c.minimax;
    p.minimax.workers = c.workers;
    p.refine_tol = c.refine_tol;
    p.refine_max_iters = c.refine_max_iters;
    p.deform_n = c.deform_n;
    return p;
}

/// The resolved config as JSON, written into run reports so a report can be
/// fed back as a config.
inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["family"] = {{"name", c.family_name}, {"a", c.a}, {"alpha", c.alpha},
                   {"b", c.b}, {"beta", c.beta}, {"s_bar", c.s_bar}};
    j["T"] = c.T;
    j["n"] = c.n;
    j["eps1"] = c.eps1;
    j["eps2"] = c.eps2;
    j["mu"] = c.mu;
    j["minimax"] = {{"M", c.minimax.M},
                    {"c_lo", c.minimax.c_lo},
                    {"C_hi", c.minimax.C_hi},
                    {"step0", c.minimax.step0},
                    {"tol_grad", c.minimax.tol_grad},
                    {"max_iters", c.minimax.max_iters},
                    {"reparam_every", c.minimax.reparam_every},
                    {"band", c.minimax.band}};
    j["refine"] = {{"tol", c.refine_tol}, {"max_iters", c.refine_max_iters}};
    j["deform_n"] = c.deform_n;
    if (c.has_schedule) {
        j["schedule"] = {{"kind", c.schedule.kind == Schedule::Kind::eps ? "eps" : "mu"},
                         {"values", c.schedule.values},
                         {"link", c.schedule.link_eps2_to_eps1}};
    }
    j["fd_trials"] = c.fd_trials;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["output_dir"] = c.output_dir;
    return j;
}

/// Applies one dotted-path override "a.b.c=value"; values parse as JSON when
/// possible and fall back to strings.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw BadConfig("override '" + assignment + "' is not of the form key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;  // plain string
    }
    nlohmann::json* cur = &j;
    std::size_t pos = 0;
    while (true) {
        const auto dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (key.empty()) throw BadConfig("override '" + assignment + "' has an empty path segment");
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            break;
        }
        cur = &(*cur)[key];
        pos = dot + 1;
    }
}

} // namespace fpo
