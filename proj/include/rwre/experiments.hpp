#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwre/config.hpp"

namespace rwre {

struct Verdict {
    std::string name;
    bool pass = false;
    std::string detail;
    nlohmann::json to_json() const { return {{"name", name}, {"pass", pass}, {"detail", detail}}; }
};

struct RunReport {
    ExperimentConfig config;
    nlohmann::json statistics;  // experiment-specific numbers (fits, medians, diagnostics)
    std::string csv;            // data.csv contents
    std::vector<Verdict> verdicts;
    double wall_seconds = 0.0;

    bool passed() const;
    nlohmann::json summary() const;
};

/// Throws ResourceError when the largest linear system or the MC budget of
/// the run would exceed the configured caps.
void check_resources(const ExperimentConfig& config);

/// Runs the named experiment. Statistics and csv depend only on the config.
RunReport run_experiment(const ExperimentConfig& config, int workers = 1);

/// Writes <out>/<experiment>/<UTC timestamp>/{config.json, data.csv,
/// summary.json} and returns the run directory.
std::filesystem::path write_report(const RunReport& report, const std::filesystem::path& out);

}  // namespace rwre
