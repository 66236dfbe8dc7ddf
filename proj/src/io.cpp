#include "acscale/io.hpp"

#include <cstdio>
#include <fstream>

#include "acscale/common.hpp"

#ifndef ACSCALE_VERSION
#define ACSCALE_VERSION "0.0.0"
#endif
#ifndef ACSCALE_GIT_DESCRIBE
#define ACSCALE_GIT_DESCRIBE "unknown"
#endif

namespace acscale {

std::string version_string() {
    return std::string(ACSCALE_VERSION) + " (" + ACSCALE_GIT_DESCRIBE + ")";
}

std::string config_hash(const nlohmann::json& config) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
    return buf;
}

nlohmann::json make_manifest(const std::string& kind, const nlohmann::json& config, double wall_time_s) {
    return nlohmann::json{{"kind", kind},
                          {"version", ACSCALE_VERSION},
                          {"git_describe", ACSCALE_GIT_DESCRIBE},
                          {"config", config},
                          {"config_hash", config_hash(config)},
                          {"seed", config.value("seed", std::uint64_t{0})},
                          {"wall_time_s", wall_time_s}};
}

void write_json(const std::string& path, const nlohmann::json& doc) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << doc.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path, const std::string& artifact) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("missing " + artifact + " file " + path);
    return nlohmann::json::parse(is);
}

} // namespace acscale
