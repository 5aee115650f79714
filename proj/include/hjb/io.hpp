#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "hjb/discretization.hpp"
#include "hjb/error.hpp"

namespace hjb {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Writes through a temporary file and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot write " + tmp.string());
        os << content;
        if (!os) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw PreconditionError("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

/// CSV with node coordinates then the value column.
inline std::string field_csv(const Grid& g, const GridField& u, const std::string& column = "value") {
    const bool two = g.problem.dim() == 2;
    std::string out = two ? "x1,x2," + column + "\n" : "x1," + column + "\n";
    for (std::size_t i = 0; i < g.size(); ++i) {
        out += format_double(g.lattice.nodes[i][0]);
        if (two) out += "," + format_double(g.lattice.nodes[i][1]);
        out += "," + format_double(u[i]) + "\n";
    }
    return out;
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace hjb
