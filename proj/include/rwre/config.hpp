#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwre/env.hpp"
#include "rwre/sparse.hpp"

namespace rwre {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised before any work starts when a run would exceed its caps.
class ResourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kConfigSchema = 1;

const std::vector<std::string>& experiment_names();

/// Run description. JSON keys match the field names; unknown keys, a
/// missing "schema" or a schema other than kConfigSchema are errors.
struct ExperimentConfig {
    int schema = kConfigSchema;
    std::string experiment;
    int d = 2;
    nlohmann::json law;  // EnvironmentLaw::from_json form without "d"
    std::vector<double> scales;  // R, T, t or n depending on the experiment
    int L = 0;                   // torus period, 0 for Z^d
    int M = 8;
    std::size_t N = 0;
    std::uint64_t seed = 1;
    double K = 5.0;
    double probe_radius = 4.0;
    std::vector<double> green_radii;
    std::vector<int> offsets;
    std::uint64_t steps = 0;
    std::string psi = "a1";  // "a1" (first weight) or "constant"
    SolverOptions solver;
    std::size_t max_unknowns = 500'000;
    std::uint64_t max_mc_steps = 100'000'000;
    std::optional<std::pair<double, double>> band;  // accepted slope interval
    std::optional<double> threshold;                 // experiment-specific scalar tolerance
    bool with_bundle = false;

    EnvironmentLaw make_law() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
};

}  // namespace rwre
