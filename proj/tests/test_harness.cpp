#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fpo/config.hpp"
#include "fpo/io.hpp"
#include "fpo/pipeline.hpp"

using namespace fpo;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("fpo_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

nlohmann::json tiny_config_json() {
    return nlohmann::json{
        {"family", {{"name", "helium"}}},
        {"T", 1.0},
        {"n", 128},
        {"eps1", 5e-3},
        {"eps2", 5e-3},
        {"mu", 1.0},
        {"minimax", {{"M", 32}}},
        {"seed", 424242},
    };
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("config: defaults, parsing, validation errors name the field") {
    RunConfig def = config_from_json(nlohmann::json::object());
    CHECK(def.n == 512);
    CHECK(def.family_name == "power_law");
    CHECK_NOTHROW(validate(def));

    auto cfg = config_from_json(tiny_config_json());
    CHECK(cfg.a == 2.0);
    CHECK(cfg.n == 128);
    CHECK(cfg.minimax.M == 32);

    auto bad_n = tiny_config_json();
    bad_n["n"] = 500;
    try {
        validate(config_from_json(bad_n));
        FAIL("expected BadConfig");
    } catch (const BadConfig& e) {
        CHECK(std::string(e.what()).find("'n'") != std::string::npos);
    }

    auto bad_mu = tiny_config_json();
    bad_mu["mu"] = 1.5;
    try {
        validate(config_from_json(bad_mu));
        FAIL("expected BadConfig");
    } catch (const BadConfig& e) {
        CHECK(std::string(e.what()).find("'mu'") != std::string::npos);
    }

    auto bad_type = tiny_config_json();
    bad_type["n"] = "lots";
    try {
        config_from_json(bad_type);
        FAIL("expected BadConfig");
    } catch (const BadConfig& e) {
        CHECK(std::string(e.what()).find("'n'") != std::string::npos);
    }

    // sweeps require a schedule
    try {
        validate(config_from_json(tiny_config_json()), /*require_schedule=*/true);
        FAIL("expected BadConfig");
    } catch (const BadConfig& e) {
        CHECK(std::string(e.what()).find("schedule.values") != std::string::npos);
    }
}

TEST_CASE("config: dotted-path overrides") {
    auto j = tiny_config_json();
    apply_override(j, "minimax.M=96");
    apply_override(j, "family.a=3.5");
    apply_override(j, "output_dir=elsewhere");
    auto cfg = config_from_json(j);
    CHECK(cfg.minimax.M == 96);
    CHECK(cfg.a == 3.5);
    CHECK(cfg.output_dir == "elsewhere");
    CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), BadConfig);
    CHECK_THROWS_AS(apply_override(j, "=5"), BadConfig);
}

TEST_CASE("config-reference documents every key") {
    const std::string text = config_reference_text();
    for (const auto& row : config_reference_table()) {
        CHECK(text.find(row.key) != std::string::npos);
        CHECK(text.find(row.doc) != std::string::npos);
    }
}

TEST_CASE("output directory resolution: flag > env > config") {
    RunConfig cfg;
    cfg.output_dir = "from_config";
    unsetenv("FPO_OUTPUT_DIR");
    CHECK(resolve_output_dir("", cfg) == fs::path("from_config"));
    setenv("FPO_OUTPUT_DIR", "from_env", 1);
    CHECK(resolve_output_dir("", cfg) == fs::path("from_env"));
    CHECK(resolve_output_dir("from_flag", cfg) == fs::path("from_flag"));
    unsetenv("FPO_OUTPUT_DIR");
}

TEST_CASE("trajectory and profile CSVs round-trip bitwise") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.1, 3.0);
    Trajectory t;
    t.T = 1.0;
    t.q1.resize(65);
    t.q2.resize(65);
    for (int i = 0; i <= 64; ++i) {
        t.q1[i] = unif(rng);
        t.q2[i] = t.q1[i] + unif(rng);
    }
    t.q1[0] = 0.0;
    auto dir = temp_dir("csv");
    write_trajectory_csv(dir / "t.csv", t);
    auto back = read_trajectory_csv(dir / "t.csv");
    CHECK(back.T == t.T);
    CHECK(linf_distance(back, t) == 0.0);

    Profile p;
    p.T = 2.0;
    p.q.assign(33, 0.0);
    for (int i = 0; i <= 32; ++i) p.q[i] = unif(rng);
    write_profile_csv(dir / "p.csv", p);
    auto pback = read_profile_csv(dir / "p.csv");
    CHECK(pback.T == p.T);
    for (int i = 0; i <= 32; ++i) CHECK(pback.q[i] == p.q[i]);

    std::ofstream(dir / "bad.csv") << "x,y\n1,2\n";
    CHECK_THROWS_AS(read_trajectory_csv(dir / "bad.csv"), std::runtime_error);
}

TEST_CASE("path directory with manifest round-trips") {
    PathOfTrajectories path;
    for (int j = 0; j <= 4; ++j)
        path.nodes.push_back(Trajectory::constants(1.0, 32, 0.0, 1.0 + 0.5 * j));
    auto dir = temp_dir("path");
    write_path(dir / "p", path);
    auto back = read_path(dir / "p");
    REQUIRE(back.nodes.size() == path.nodes.size());
    for (std::size_t j = 0; j < path.nodes.size(); ++j)
        CHECK(linf_distance(back.nodes[j], path.nodes[j]) == 0.0);
}

TEST_CASE("cmd_validate exit codes: helium passes, bad families fail") {
    std::ostringstream log;
    auto cfg = config_from_json(tiny_config_json());
    CHECK(cmd_validate(cfg, temp_dir("val_ok"), log) == kExitOk);

    auto alpha2 = tiny_config_json();
    alpha2["family"] = {{"name", "power_law"}, {"a", 2.0}, {"alpha", 2.0}, {"b", 1.0}, {"beta", 2.0}};
    CHECK(cmd_validate(config_from_json(alpha2), temp_dir("val_a2"), log) == kExitHypotheses);

    auto beta_lt = tiny_config_json();
    beta_lt["family"] = {{"name", "power_law"}, {"a", 1.0}, {"alpha", 1.5}, {"b", 1.0}, {"beta", 0.5}};
    CHECK(cmd_validate(config_from_json(beta_lt), temp_dir("val_b"), log) == kExitHypotheses);
}

TEST_CASE("cmd_brake writes the profile and the report") {
    std::ostringstream log;
    auto cfg = config_from_json(tiny_config_json());
    auto dir = temp_dir("brake");
    CHECK(cmd_brake(cfg, dir, log) == kExitOk);
    CHECK(fs::exists(dir / "brake.csv"));
    auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["brake"]["w"].get<double>() > 0.0);
    auto prof = read_profile_csv(dir / "brake.csv");
    CHECK(prof.q[0] == 0.0);
}

TEST_CASE("cmd_solve: full pipeline, outputs exist and parse, gate passes") {
    std::ostringstream log;
    auto cfg = config_from_json(tiny_config_json());
    auto dir = temp_dir("solve");
    REQUIRE(cmd_solve(cfg, dir, log) == kExitOk);

    auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["solution"]["conformance"].get<bool>());
    CHECK(rep["margin"].get<double>() > 0.0);
    for (const auto& f : rep["files"]) CHECK(fs::exists(dir / f.get<std::string>()));
    CHECK(fs::exists(dir / rep["timing_file"].get<std::string>()));
    auto sol = read_trajectory_csv(dir / "solution.csv");
    CHECK(sol.n() == cfg.n);

    // a report echoes a config that reproduces the run
    auto cfg2 = config_from_json(rep);
    CHECK(cfg2.n == cfg.n);
    CHECK(cfg2.eps1 == cfg.eps1);
}

TEST_CASE("cmd_solve is deterministic: reruns and worker counts agree bytewise") {
    std::ostringstream log;
    auto base = tiny_config_json();
    auto cfg1 = config_from_json(base);
    auto dir1 = temp_dir("det1");
    REQUIRE(cmd_solve(cfg1, dir1, log) == kExitOk);

    auto dir2 = temp_dir("det2");
    REQUIRE(cmd_solve(cfg1, dir2, log) == kExitOk);

    auto workers4 = base;
    workers4["workers"] = 4;
    auto dir3 = temp_dir("det3");
    REQUIRE(cmd_solve(config_from_json(workers4), dir3, log) == kExitOk);

    for (const char* f : {"solution.csv", "brake.csv", "level_history.csv"}) {
        CHECK(slurp(dir1 / f) == slurp(dir2 / f));
        CHECK(slurp(dir1 / f) == slurp(dir3 / f));
    }
    // reports differ only in the echoed worker count; compare with it patched
    auto r1 = nlohmann::json::parse(slurp(dir1 / "report.json"));
    auto r2 = nlohmann::json::parse(slurp(dir2 / "report.json"));
    auto r3 = nlohmann::json::parse(slurp(dir3 / "report.json"));
    CHECK(r1 == r2);
    r3["config"]["workers"] = 1;
    CHECK(r1 == r3);
}

TEST_CASE("cmd_sweep requires a schedule and records steps") {
    std::ostringstream log;
    auto j = tiny_config_json();
    CHECK_THROWS_AS(validate(config_from_json(j), true), BadConfig);

    j["schedule"] = {{"kind", "mu"}, {"values", {0.5, 0.2}}};
    auto cfg = config_from_json(j);
    auto dir = temp_dir("sweep");
    REQUIRE(cmd_sweep(cfg, dir, log) == kExitOk);
    CHECK(fs::exists(dir / "sweep.jsonl"));
    CHECK(fs::exists(dir / "sweep_plot.csv"));
    CHECK(fs::exists(dir / "step_000.csv"));
    CHECK(fs::exists(dir / "step_001.csv"));
    CHECK(fs::exists(dir / "brake_limit_candidate.csv"));
    auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["sweep"]["complete"].get<bool>());
    // jsonl: one parseable object per line
    std::ifstream in(dir / "sweep.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        CHECK_NOTHROW(nlohmann::json::parse(line));
        ++lines;
    }
    CHECK(lines == 2);
}

TEST_CASE("cmd_verify rechecks a written solution") {
    std::ostringstream log;
    auto cfg = config_from_json(tiny_config_json());
    auto dir = temp_dir("verify");
    REQUIRE(cmd_solve(cfg, dir, log) == kExitOk);
    CHECK(cmd_verify(dir / "report.json", log) == kExitOk);

    // corrupting the solution trips the gate
    auto t = read_trajectory_csv(dir / "solution.csv");
    for (int i = t.n() / 3; i < t.n() / 3 + 6; ++i) t.q2[i] += 0.03 * (i - t.n() / 3 + 1);
    write_trajectory_csv(dir / "solution.csv", t);
    CHECK(cmd_verify(dir / "report.json", log) == kExitConformance);
}
