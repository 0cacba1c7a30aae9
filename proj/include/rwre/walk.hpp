#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwre/env.hpp"
#include "rwre/kernel.hpp"
#include "rwre/random.hpp"

namespace rwre {

/// Paths longer than this abort the estimate.
inline constexpr std::uint64_t kMaxPathSteps = 10'000'000;

class WalkError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Local observable psi(omega(0)) evaluated on the weights of a site.
using LocalFn = std::function<double(const Weights&)>;

/// Dense cache of a(x) on a box around a centre; sites outside fall back to
/// the environment itself.
class EnvWindow {
public:
    EnvWindow(const Environment& env, const Point& center, int radius);

    Weights at(const Point& x) const;
    const Environment& environment() const { return env_; }

private:
    const Environment& env_;
    Point lo_;
    int side_ = 0;
    int d_;
    std::vector<Weights> cache_;
};

/// Index k of the jump (2i for +e_i, 2i+1 for -e_i) chosen by uniform u.
int choose_jump(const Weights& a, int d, double u);
Point jump_vector(int k);

struct WalkPath {
    Point start;
    std::vector<std::uint8_t> steps;  // jump indices
    std::vector<double> holding;      // holding times, continuous-time paths only
    std::uint64_t seed = 0;
    std::uint64_t path_index = 0;

    std::vector<Point> positions() const;
    Point end() const;
};

struct MCEstimate {
    std::string quantity;
    Point x;
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

/// Geometric-clock killing: the walk is killed at step n with probability
/// eta~(X_n) = eta(X_n) / (R^2 + eta(X_n)).
struct KillClock {
    KillingFn eta;
    double R = 1.0;
    bool uniform = false;  // eta = 1 everywhere: T is sampled directly

    static KillClock everywhere(double R);
    /// eta = eta_R.
    static KillClock cutoff(double R);

    double tilde(const Point& x) const;
};

/// Mean and standard error of sample(rng) over paths 0..N-1, each with its
/// own stream derived from (seed, path index).
MCEstimate estimate_paths(const std::string& quantity, const Point& x, std::uint64_t seed, std::size_t N, int workers,
                          const std::function<double(PathRng&)>& sample);

/// Doubles the path count (reusing earlier paths) until the standard error
/// drops to target_se or max_paths is reached.
MCEstimate estimate_until(const std::string& quantity, const Point& x, std::uint64_t seed, double target_se,
                          std::size_t min_paths, std::size_t max_paths, int workers,
                          const std::function<double(PathRng&)>& sample);

WalkPath run_discrete(const Environment& env, const Point& start, std::uint64_t n, std::uint64_t seed,
                      std::uint64_t path_index = 0, bool continuous = false);

struct ExitTimeResult {
    MCEstimate tau;
    /// E|X_tau - c|^2 - |x - c|^2
    MCEstimate displacement;
    /// pathwise tau - (|X_tau - c|^2 - |x - c|^2), mean zero by optional stopping
    MCEstimate identity_gap;
};

ExitTimeResult exit_time(const Environment& env, const Point& start, double R, const Point& center, std::size_t N,
                         std::uint64_t seed, int workers = 1);

struct KilledTimeResult {
    MCEstimate T;
    std::vector<int> ks;
    std::vector<MCEstimate> survival;  // P(T > tau_k), tau_k = exit from B_{kR}(start)
};

KilledTimeResult killed_time(const Environment& env, const KillClock& clock, const Point& start, std::size_t N,
                             std::uint64_t seed, const std::vector<int>& ks = {}, int workers = 1);

/// -E^x[sum_{n<=T} (1 - eta~(X_n)) (psi - psibar)(X_n)].
MCEstimate mc_local_corrector(const Environment& env, const KillClock& clock, const LocalFn& psi, double psibar,
                              const Point& x, std::size_t N, std::uint64_t seed, int workers = 1);

/// -R^2 E^x[(psi - psibar)(Y_tau)] with tau ~ Exp(mean R^2), i.e. the walk
/// after a Geometric number of jumps.
MCEstimate mc_approx_corrector(const Environment& env, double R, const LocalFn& psi, double psibar, const Point& x,
                               std::size_t N, std::uint64_t seed, int workers = 1);

/// Per-path samples of the two corrector estimators, for adaptive drivers.
double sample_local_corrector(const EnvWindow& w, const KillClock& clock, const LocalFn& psi, double psibar,
                              const Point& x, PathRng& rng);
double sample_approx_corrector(const EnvWindow& w, double R, const LocalFn& psi, double psibar, const Point& x,
                               PathRng& rng);

}  // namespace rwre
