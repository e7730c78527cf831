#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <json.hpp>

#include "fpo/config.hpp"
#include "fpo/continuation.hpp"
#include "fpo/io.hpp"
#include "fpo/mountainpass.hpp"
#include "fpo/verify.hpp"

namespace fpo {

// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitHypotheses = 2;
inline constexpr int kExitSolver = 3;
inline constexpr int kExitConformance = 4;

namespace report {

inline nlohmann::json hypothesis_json(const HypothesisReport& h) {
    auto one = [](const HypothesisCheck& c) {
        return nlohmann::json{{"pass", c.pass},
                              {"worst_margin", c.worst_margin},
                              {"worst_s", c.worst_s},
                              {"detail", c.detail}};
    };
    return {{"alpha_in_range", h.alpha_in_range},
            {"decay", one(h.decay)},
            {"signs", one(h.signs)},
            {"homogeneity", one(h.homogeneity)},
            {"mountain_pass", one(h.mountain_pass)},
            {"all_pass", h.all_pass()}};
}

inline nlohmann::json check_json(const Check& c) {
    return {{"pass", c.pass}, {"margin", c.margin}, {"where", c.where}};
}

inline nlohmann::json solution_json(const OrbitSolution& s) {
    nlohmann::json j;
    j["eps1"] = s.eps1;
    j["eps2"] = s.eps2;
    j["mu"] = s.mu;
    j["T"] = s.T;
    j["n"] = s.traj.n();
    j["c_est"] = s.c_est;
    j["a_eps"] = s.a_eps;
    j["margin"] = s.margin;
    j["grad_inf"] = s.grad_inf;
    j["gap_T"] = s.traj.q2.back() - s.traj.q1.back();
    j["residual"] = {{"max_full", s.residual.max_full},
                     {"l2_full", s.residual.l2_full},
                     {"max_window", s.residual.max_window},
                     {"l2_window", s.residual.l2_window},
                     {"rel_window", s.residual.rel_window},
                     {"probe4_window", s.residual.probe4_window},
                     {"ok", s.residual_ok}};
    j["boundary"] = {{"q1_at_0", s.boundary.q1_at_0}, {"dq1_T", s.boundary.dq1_T},
                     {"dq2_0", s.boundary.dq2_0},     {"dq2_T", s.boundary.dq2_T},
                     {"dq1_0", s.boundary.dq1_0},     {"tol", s.boundary.tol},
                     {"pass", s.boundary.pass},       {"outgoing", s.boundary.outgoing}};
    j["energy"] = {{"h_mean", s.energy.h_mean},
                   {"h_identity", s.energy.h_identity},
                   {"h_at_T", s.energy.h_at_T},
                   {"drift_window", s.energy.drift_window},
                   {"drift_full", s.energy.drift_full},
                   {"kinetic_l2_sq", s.energy.kinetic_l2_sq},
                   {"drift_ok", s.drift_ok}};
    j["energy_bounds"] = {{"lower", s.bounds.lower},
                          {"upper", s.bounds.upper},
                          {"h_used", s.bounds.h_used},
                          {"margin_lower", s.bounds.margin_lower},
                          {"margin_upper", s.bounds.margin_upper},
                          {"pass", s.bounds.pass}};
    j["qualitative"] = {{"concave_q1", check_json(s.qualitative.concave_q1)},
                        {"concave_sum", check_json(s.qualitative.concave_sum)},
                        {"convex_gap", check_json(s.qualitative.convex_gap)},
                        {"gap_min_at_T", check_json(s.qualitative.gap_min_at_T)},
                        {"velocity_dominance", check_json(s.qualitative.velocity_dominance)},
                        {"monotone_q1", check_json(s.qualitative.monotone_q1)},
                        {"monotone_q2", check_json(s.qualitative.monotone_q2)},
                        {"max_at_T", check_json(s.qualitative.max_at_T)},
                        {"all_pass", s.qualitative.all_pass()}};
    j["nu_alpha"] = {{"nu", s.nu_diag.nu},
                     {"q1_at_argmin", s.nu_diag.lhs},
                     {"bound", s.nu_diag.rhs},
                     {"holds", s.nu_diag.holds}};
    j["conformance"] = s.conformance;
    return j;
}

inline nlohmann::json sweep_step_json(const SweepStep& st, const std::string& csv_name) {
    nlohmann::json j;
    j["param"] = st.param;
    j["eps1"] = st.eps1;
    j["eps2"] = st.eps2;
    j["mu"] = st.mu;
    j["file"] = csv_name;
    j["c_est"] = st.sol.c_est;
    j["a_eps"] = st.sol.a_eps;
    j["margin"] = st.sol.margin;
    j["grad_inf"] = st.sol.grad_inf;
    j["gap_T"] = st.gap_T;
    j["h"] = st.h;
    j["h_mean"] = st.sol.energy.h_mean;
    j["q1_T"] = st.sol.traj.q1.back();
    if (std::isfinite(st.cauchy_c0)) {
        j["cauchy_c0"] = st.cauchy_c0;
        j["cauchy_c2"] = st.cauchy_c2;
    }
    if (std::isfinite(st.dist_to_limit)) j["dist_to_limit"] = st.dist_to_limit;
    j["refine_iters"] = st.refine_iters;
    if (st.cold_iters >= 0) j["cold_iters"] = st.cold_iters;
    j["warm_started"] = st.warm_started;
    j["conformance"] = st.sol.conformance;
    return j;
}

} // namespace report

/// Wall-clock timings live in their own file: everything else a run writes is
/// byte-reproducible for a fixed config and seed, and a timing field inside
/// the report would break that contract.
class Timings {
  public:
    void record(const std::string& stage, double seconds) { entries_[stage] = seconds; }
    void write(const std::filesystem::path& file) const {
        nlohmann::json j(entries_);
        std::ofstream out(file);
        out << j.dump(2) << '\n';
    }

  private:
    std::map<std::string, double> entries_;
};

class StageClock {
  public:
    StageClock() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

/// Output directory resolution: explicit flag > FPO_OUTPUT_DIR > config.
inline std::filesystem::path resolve_output_dir(const std::string& flag_value,
                                                const RunConfig& cfg) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("FPO_OUTPUT_DIR"); env && *env) return env;
    return cfg.output_dir;
}

namespace detail {

inline std::vector<double> default_hypothesis_grid(const RunConfig& c) {
    std::vector<double> grid;
    const double lo = 1e-3 * c.s_bar, hi = 1e3 * c.s_bar;
    const int count = 400;
    for (int i = 0; i < count; ++i)
        grid.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
    return grid;
}

/// Smooth in-domain probe trajectory for the gradient fidelity pre-check,
/// kept away from every potential junction.
inline Trajectory fd_probe_trajectory(const RunConfig& c) {
    Trajectory t;
    t.T = c.T;
    t.q1.resize(c.n + 1);
    t.q2.resize(c.n + 1);
    const double scale = std::max(1.0, 4.0 * c.eps1);
    for (int i = 0; i <= c.n; ++i) {
        const double x = static_cast<double>(i) / c.n;
        t.q1[i] = scale * (0.4 * std::sin(0.5 * M_PI * x) + 0.1 * std::sin(2.0 * M_PI * x));
        t.q2[i] = t.q1[i] + scale * (1.0 + 0.2 * std::cos(M_PI * x));
    }
    t.q1[0] = 0.0;
    return t;
}

inline void write_json(const std::filesystem::path& file, const nlohmann::json& j) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << j.dump(2) << '\n';
}

} // namespace detail

/// validate: hypothesis certification only. Exit 2 on any failed hypothesis.
inline int cmd_validate(const RunConfig& cfg, const std::filesystem::path& outdir,
                        std::ostream& log) {
    validate(cfg);
    std::filesystem::create_directories(outdir);
    const HypothesisReport rep = validate_hypotheses(make_family(cfg),
                                                     detail::default_hypothesis_grid(cfg));
    nlohmann::json j;
    j["fpo_report"] = 1;
    j["command"] = "validate";
    j["config"] = config_to_json(cfg);
    j["hypotheses"] = report::hypothesis_json(rep);
    detail::write_json(outdir / "report.json", j);
    log << "hypotheses: alpha_in_range=" << rep.alpha_in_range << " decay=" << rep.decay.pass
        << " signs=" << rep.signs.pass << " homogeneity=" << rep.homogeneity.pass
        << " mountain_pass=" << rep.mountain_pass.pass << "\n";
    return rep.all_pass() ? kExitOk : kExitHypotheses;
}

/// brake: the reference Kepler problem at the configured parameters.
inline int cmd_brake(const RunConfig& cfg, const std::filesystem::path& outdir,
                     std::ostream& log) {
    validate(cfg);
    std::filesystem::create_directories(outdir);
    SmoothedPotentials sp(make_family(cfg), cfg.eps1, cfg.eps2);
    const BrakeOrbit orbit = brake_orbit(sp, cfg.T, cfg.n);
    write_profile_csv(outdir / "brake.csv", orbit.prof);
    nlohmann::json j;
    j["fpo_report"] = 1;
    j["command"] = "brake";
    j["config"] = config_to_json(cfg);
    j["brake"] = {{"w", orbit.w},
                  {"a_eps", orbit.level},
                  {"energy", orbit.energy},
                  {"file", "brake.csv"}};
    detail::write_json(outdir / "report.json", j);
    log << "brake orbit: w=" << orbit.w << " a_eps=" << orbit.level << " h=" << orbit.energy
        << "\n";
    return kExitOk;
}

/// solve: hypotheses, gradient pre-check, minimax pipeline, verification.
inline int cmd_solve(const RunConfig& cfg, const std::filesystem::path& outdir,
                     std::ostream& log) {
    validate(cfg);
    std::filesystem::create_directories(outdir);
    Timings timings;
    nlohmann::json j;
    j["fpo_report"] = 1;
    j["command"] = "solve";
    j["config"] = config_to_json(cfg);

    StageClock total;
    {
        StageClock clock;
        const HypothesisReport rep = validate_hypotheses(make_family(cfg),
                                                         detail::default_hypothesis_grid(cfg));
        timings.record("validate", clock.seconds());
        j["hypotheses"] = report::hypothesis_json(rep);
        if (!rep.all_pass()) {
            detail::write_json(outdir / "report.json", j);
            timings.write(outdir / "timing.json");
            log << "hypothesis certification failed\n";
            return kExitHypotheses;
        }
    }

    SolveParams params = make_solve_params(cfg);
    {
        StageClock clock;
        SmoothedPotentials sp(params.family, cfg.eps1, cfg.eps2);
        ActionContext ctx(sp, cfg.mu, cfg.T, cfg.n);
        const double fd_err =
            cfg.fd_trials > 0 ? fd_check(ctx, detail::fd_probe_trajectory(cfg), cfg.fd_trials,
                                         cfg.seed)
                              : 0.0;
        timings.record("fd_check", clock.seconds());
        j["fd_check"] = {{"trials", cfg.fd_trials}, {"max_rel_error", fd_err}};
        if (fd_err > 1e-5) {
            detail::write_json(outdir / "report.json", j);
            timings.write(outdir / "timing.json");
            log << "gradient fidelity pre-check failed: " << fd_err << "\n";
            return kExitSolver;
        }
    }

    SolveOutcome out;
    try {
        StageClock clock;
        out = solve_orbit(params);
        timings.record("solve", clock.seconds());
    } catch (const std::exception& e) {
        j["solver_error"] = e.what();
        detail::write_json(outdir / "report.json", j);
        timings.write(outdir / "timing.json");
        log << "solver failed: " << e.what() << "\n";
        return kExitSolver;
    }

    StageClock vclock;
    SmoothedPotentials sp(params.family, cfg.eps1, cfg.eps2);
    ActionContext ctx(sp, cfg.mu, cfg.T, cfg.n);
    const OrbitSolution sol = verify_solution(ctx, out.solution, out.c_est, out.a_eps,
                                              out.grad_inf);
    timings.record("verify", vclock.seconds());

    write_trajectory_csv(outdir / "solution.csv", sol.traj);
    write_profile_csv(outdir / "brake.csv", out.brake.prof);
    {
        std::ofstream lh(outdir / "level_history.csv");
        lh << "iter,level\n";
        for (std::size_t i = 0; i < out.minimax.level_history.size(); ++i)
            lh << i << ',' << format_g17(out.minimax.level_history[i]) << '\n';
    }
    j["brake"] = {{"w", out.brake.w}, {"a_eps", out.brake.level}, {"file", "brake.csv"}};
    j["minimax"] = {{"iters", out.minimax.iters},
                    {"converged", out.minimax.converged},
                    {"ps_suspect", out.minimax.ps_suspect},
                    {"grad_norm_at_max", out.minimax.grad_norm_at_max},
                    {"c_est", out.minimax.c_est},
                    {"margin", out.minimax.margin},
                    {"level_history_file", "level_history.csv"}};
    j["refine"] = {{"iters", out.refine.iters}, {"grad_inf", out.refine.grad_inf}};
    j["a_eps"] = out.a_eps;
    j["c_est"] = out.c_est;
    j["margin"] = out.margin;
    j["solution"] = report::solution_json(sol);
    j["solution"]["file"] = "solution.csv";
    j["files"] = {"solution.csv", "brake.csv", "level_history.csv"};
    j["timing_file"] = "timing.json";
    detail::write_json(outdir / "report.json", j);
    timings.record("total", total.seconds());
    timings.write(outdir / "timing.json");

    log << "solve: c_est=" << out.c_est << " a_eps=" << out.a_eps << " margin=" << out.margin
        << " grad_inf=" << out.grad_inf << " conformance=" << (sol.conformance ? "pass" : "FAIL")
        << "\n";
    return sol.conformance ? kExitOk : kExitConformance;
}

/// sweep: eps or mu continuation per the configured schedule.
inline int cmd_sweep(const RunConfig& cfg, const std::filesystem::path& outdir,
                     std::ostream& log) {
    validate(cfg, /*require_schedule=*/true);
    std::filesystem::create_directories(outdir);
    Timings timings;
    nlohmann::json j;
    j["fpo_report"] = 1;
    j["command"] = "sweep";
    j["config"] = config_to_json(cfg);

    SolveParams params = make_solve_params(cfg);
    StageClock clock;
    SweepRecord rec;
    try {
        rec = cfg.schedule.kind == Schedule::Kind::eps ? sweep_eps(params, cfg.schedule)
                                                       : sweep_mu(params, cfg.schedule);
    } catch (const std::exception& e) {
        j["solver_error"] = e.what();
        detail::write_json(outdir / "report.json", j);
        timings.write(outdir / "timing.json");
        log << "sweep failed: " << e.what() << "\n";
        return kExitSolver;
    }
    timings.record("sweep", clock.seconds());

    // one trajectory CSV per step plus a JSON-lines record and plot data
    std::ofstream jsonl(outdir / "sweep.jsonl");
    std::ofstream plot(outdir / "sweep_plot.csv");
    plot << "param,gap_T,h,q1_T,margin\n";
    bool all_conform = true;
    for (std::size_t k = 0; k < rec.steps.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "step_%03zu.csv", k);
        write_trajectory_csv(outdir / name, rec.steps[k].sol.traj);
        jsonl << report::sweep_step_json(rec.steps[k], name).dump() << '\n';
        plot << format_g17(rec.steps[k].param) << ',' << format_g17(rec.steps[k].gap_T) << ','
             << format_g17(rec.steps[k].h) << ',' << format_g17(rec.steps[k].sol.traj.q1.back())
             << ',' << format_g17(rec.steps[k].sol.margin) << '\n';
        all_conform = all_conform && rec.steps[k].sol.conformance;
    }
    if (rec.kind == Schedule::Kind::mu && rec.limit_candidate.n() > 0)
        write_trajectory_csv(outdir / "brake_limit_candidate.csv", rec.limit_candidate);

    j["sweep"] = {{"kind", rec.kind == Schedule::Kind::eps ? "eps" : "mu"},
                  {"steps", rec.steps.size()},
                  {"complete", rec.complete},
                  {"file", "sweep.jsonl"},
                  {"plot_file", "sweep_plot.csv"}};
    if (!rec.failure.empty()) j["sweep"]["failure"] = rec.failure;
    if (std::isfinite(rec.gap_slope)) j["sweep"]["gap_slope"] = rec.gap_slope;
    j["timing_file"] = "timing.json";
    detail::write_json(outdir / "report.json", j);
    timings.write(outdir / "timing.json");

    log << "sweep: " << rec.steps.size() << " steps, complete=" << rec.complete;
    if (std::isfinite(rec.gap_slope)) log << ", gap slope=" << rec.gap_slope;
    log << "\n";
    if (!rec.complete) return kExitSolver;
    return all_conform ? kExitOk : kExitConformance;
}

/// verify: recheck a solution written by a previous solve run.
inline int cmd_verify(const std::filesystem::path& report_file, std::ostream& log) {
    std::ifstream in(report_file);
    if (!in) throw BadConfig("cannot open report " + report_file.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw BadConfig(std::string("report parse error: ") + e.what());
    }
    if (!j.contains("solution") || !j["solution"].contains("file"))
        throw BadConfig("report does not reference a solution file");
    const RunConfig cfg = config_from_json(j);
    validate(cfg);
    const std::filesystem::path dir = report_file.parent_path();
    const Trajectory traj = read_trajectory_csv(dir / j["solution"]["file"].get<std::string>());
    if (traj.n() != cfg.n)
        throw BadConfig("solution grid does not match the echoed config");

    SmoothedPotentials sp(make_family(cfg), cfg.eps1, cfg.eps2);
    ActionContext ctx(sp, cfg.mu, cfg.T, cfg.n);
    const double grad_inf = inf_norm(flatten(action_gradient(ctx, traj)));
    const OrbitSolution sol = verify_solution(ctx, traj, j.value("c_est", 0.0),
                                              j.value("a_eps", 0.0), grad_inf);
    log << "residual_ok=" << sol.residual_ok << " boundary=" << sol.boundary.pass
        << " outgoing=" << sol.boundary.outgoing << " drift_ok=" << sol.drift_ok
        << " bounds=" << sol.bounds.pass << " qualitative=" << sol.qualitative.all_pass()
        << " margin_positive=" << (sol.margin > 0.0) << "\n";
    log << "conformance: " << (sol.conformance ? "pass" : "FAIL") << "\n";
    return sol.conformance ? kExitOk : kExitConformance;
}

} // namespace fpo
