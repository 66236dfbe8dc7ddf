#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "acscale/mdp.hpp"
#include "acscale/network.hpp"

namespace acscale {

/// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingArtifact = 3;

/// Raised when a subcommand needs an upstream artifact that is not on disk.
class MissingArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Resolved run configuration. JSON keys and command-line flags share kebab-case names.
struct RunConfig {
    nlohmann::json mdp;  // null: forest defaults; object: inline MDP; string: path to an MDP file
    std::optional<double> beta;
    std::optional<int> width_n;
    std::vector<int> widths;
    std::optional<double> T;
    double h_ode = 0.01;
    std::int64_t mc_samples = 200000;
    std::uint64_t mc_seed = 0;
    std::int64_t particle_count = 4096;
    std::optional<int> trials;
    std::vector<double> betas;
    std::uint64_t seed = 0;
    std::string out = ".";
    std::string preset = "desk";
    double alpha = 1.0;
    InitLaw law{};
    int order = 0;
    int jobs = 0;
    std::int64_t snapshot_stride = 0;
    int resamples = 0;

    /// Unknown keys and type mismatches raise ConfigError naming the key.
    static RunConfig from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
    void validate() const;
    FiniteMdp load_mdp() const;
};

/// Entry point of the `acscale` tool; returns the process exit code.
int run_cli(int argc, const char* const* argv);

} // namespace acscale
