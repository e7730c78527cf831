#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpo/trajectory.hpp"

namespace fpo {

/// Full-precision double formatting (17 significant digits round-trips).
inline std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

/// Trajectory CSV: header "t,q1,q2", one row per node.
inline void write_trajectory_csv(const std::filesystem::path& file, const Trajectory& t) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << "t,q1,q2\n";
    for (int i = 0; i <= t.n(); ++i)
        out << format_g17(t.time_at(i)) << ',' << format_g17(t.q1[i]) << ','
            << format_g17(t.q2[i]) << '\n';
}

/// Brake-orbit CSV: single component, header "t,q1".
inline void write_profile_csv(const std::filesystem::path& file, const Profile& p) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << "t,q1\n";
    for (int i = 0; i <= p.n(); ++i)
        out << format_g17(p.T * i / p.n()) << ',' << format_g17(p.q[i]) << '\n';
}

namespace detail {

inline std::vector<std::vector<double>> read_csv_columns(const std::filesystem::path& file,
                                                         const std::string& expected_header) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty csv " + file.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header)
        throw std::runtime_error("unexpected csv header in " + file.string() + ": got '" + line +
                                 "', want '" + expected_header + "'");
    const std::size_t cols = std::count(expected_header.begin(), expected_header.end(), ',') + 1;
    std::vector<std::vector<double>> data(cols);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        for (std::size_t c = 0; c < cols; ++c) {
            if (!std::getline(ss, cell, ','))
                throw std::runtime_error("short csv row in " + file.string());
            data[c].push_back(std::stod(cell));
        }
    }
    if (data[0].size() < 2) throw std::runtime_error("csv has too few rows: " + file.string());
    return data;
}

} // namespace detail

inline Trajectory read_trajectory_csv(const std::filesystem::path& file) {
    auto cols = detail::read_csv_columns(file, "t,q1,q2");
    Trajectory t;
    t.T = cols[0].back();
    t.q1 = std::move(cols[1]);
    t.q2 = std::move(cols[2]);
    return t;
}

inline Profile read_profile_csv(const std::filesystem::path& file) {
    auto cols = detail::read_csv_columns(file, "t,q1");
    Profile p;
    p.T = cols[0].back();
    p.q = std::move(cols[1]);
    return p;
}

/// Path directory: one trajectory CSV per node plus an index manifest with
/// the node order and shared grid metadata.
inline void write_path(const std::filesystem::path& dir, const PathOfTrajectories& path) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["T"] = path.nodes.front().T;
    manifest["n"] = path.nodes.front().n();
    manifest["M"] = path.segments();
    std::vector<std::string> names;
    for (std::size_t j = 0; j < path.nodes.size(); ++j) {
        char name[32];
        std::snprintf(name, sizeof(name), "node_%03zu.csv", j);
        write_trajectory_csv(dir / name, path.nodes[j]);
        names.emplace_back(name);
    }
    manifest["nodes"] = names;
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
}

inline PathOfTrajectories read_path(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("cannot read manifest in " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(in);
    PathOfTrajectories path;
    for (const auto& name : manifest.at("nodes"))
        path.nodes.push_back(read_trajectory_csv(dir / name.get<std::string>()));
    validate(path);
    if (path.segments() != manifest.at("M").get<int>() ||
        path.nodes.front().n() != manifest.at("n").get<int>())
        throw std::runtime_error("manifest does not match node files in " + dir.string());
    return path;
}

} // namespace fpo
