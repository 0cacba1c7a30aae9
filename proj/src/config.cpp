#include "rwre/config.hpp"

#include <algorithm>
#include <fstream>

namespace rwre {

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {
        "env-check",     "dirichlet",     "green",         "rho-average", "rho-cov",
        "rho-sensitivity", "corrector-ap", "corrector-loc", "global-tower", "homog-rate",
        "ergodic-rate",  "var-decay",     "qclt"};
    return names;
}

EnvironmentLaw ExperimentConfig::make_law() const {
    nlohmann::json j = law;
    j["d"] = d;
    try {
        return EnvironmentLaw::from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("law: ") + e.what());
    }
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j = {{"schema", schema},       {"experiment", experiment},
                        {"d", d},                 {"law", law},
                        {"scales", scales},       {"L", L},
                        {"M", M},                 {"N", N},
                        {"seed", seed},           {"K", K},
                        {"probe_radius", probe_radius}, {"green_radii", green_radii},
                        {"offsets", offsets},     {"steps", steps},
                        {"psi", psi},             {"solver", solver.to_json()},
                        {"max_unknowns", max_unknowns}, {"max_mc_steps", max_mc_steps},
                        {"with_bundle", with_bundle}};
    if (band) j["band"] = {band->first, band->second};
    if (threshold) j["threshold"] = *threshold;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (!j.contains("schema")) throw ConfigError("config has no \"schema\" key");
    ExperimentConfig c;
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const auto& k = it.key();
            const auto& v = *it;
            if (k == "schema") c.schema = v.get<int>();
            else if (k == "experiment") c.experiment = v.get<std::string>();
            else if (k == "d") c.d = v.get<int>();
            else if (k == "law") c.law = v;
            else if (k == "scales") c.scales = v.get<std::vector<double>>();
            else if (k == "L") c.L = v.get<int>();
            else if (k == "M") c.M = v.get<int>();
            else if (k == "N") c.N = v.get<std::size_t>();
            else if (k == "seed") c.seed = v.get<std::uint64_t>();
            else if (k == "K") c.K = v.get<double>();
            else if (k == "probe_radius") c.probe_radius = v.get<double>();
            else if (k == "green_radii") c.green_radii = v.get<std::vector<double>>();
            else if (k == "offsets") c.offsets = v.get<std::vector<int>>();
            else if (k == "steps") c.steps = v.get<std::uint64_t>();
            else if (k == "psi") c.psi = v.get<std::string>();
            else if (k == "solver") c.solver = SolverOptions::from_json(v);
            else if (k == "max_unknowns") c.max_unknowns = v.get<std::size_t>();
            else if (k == "max_mc_steps") c.max_mc_steps = v.get<std::uint64_t>();
            else if (k == "with_bundle") c.with_bundle = v.get<bool>();
            else if (k == "threshold") c.threshold = v.get<double>();
            else if (k == "band") {
                const auto b = v.get<std::vector<double>>();
                if (b.size() != 2 || !(b[0] <= b[1])) throw ConfigError("band must be [lo, hi] with lo <= hi");
                c.band = std::pair{b[0], b[1]};
            } else {
                throw ConfigError("unknown config key '" + k + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (c.schema != kConfigSchema)
        throw ConfigError("config schema " + std::to_string(c.schema) + " is not supported (expected " +
                          std::to_string(kConfigSchema) + ")");
    const auto& names = experiment_names();
    if (std::find(names.begin(), names.end(), c.experiment) == names.end())
        throw ConfigError("unknown experiment '" + c.experiment + "'");
    if (c.d < 2 || c.d > kMaxDim) throw ConfigError("d must lie in [2, 4]");
    if (c.M < 1) throw ConfigError("M must be positive");
    if (c.L != 0 && c.L < 4) throw ConfigError("L must be 0 or at least 4");
    if (c.psi != "a1" && c.psi != "constant") throw ConfigError("psi must be \"a1\" or \"constant\"");
    if (c.law.is_null()) c.law = {{"family", "kappa-padded-dirichlet"}, {"kappa", 0.05}};
    c.solver.lattice_dim = c.d;
    c.make_law();  // validates the law block
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace rwre
