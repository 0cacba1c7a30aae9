#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "rwre/env.hpp"
#include "rwre/kernel.hpp"
#include "rwre/rate_series.hpp"

namespace rwre {

/// Stationary density of the walk on a torus, normalized to mean one.
struct InvariantField {
    int L = 0;
    ScalarField rho;
    /// max_y |(rho P)(y) - rho(y)|
    double residual = 0.0;
    bool doubly_stochastic = false;
    SolveDiagnostics diag;

    double at(const Point& x) const { return rho.at(rho.domain().reduce(x)); }
    /// rho summed over the ball B_R(c), wrapped onto the torus.
    double ball_mass(const Point& c, double R) const;
    nlohmann::json diagnostics() const;
};

/// Requires a periodic environment with L >= 4. Solves rho (I - P) = 0 with
/// one pinned entry, refines until the stationarity residual is <= 1e-12,
/// and normalizes.
InvariantField stationary_torus(const Environment& env, const SolverOptions& opts = {});

/// sum_x rho(x) (L f)(x) on the torus.
double stationarity_functional(const Environment& env, const InvariantField& rho, const std::vector<double>& f);

struct VMass {
    std::vector<double> t;
    std::vector<double> value;
    double deficit = 0.0;  // 0 on a torus
};

/// V(t) = sum_x p_t(x, 0). Exact on a periodic environment; otherwise the
/// sum runs over the ball of radius `window` around 0 and the deficit is the
/// mass a walk started at 0 loses at the window edge by the largest t.
/// Throws when that deficit exceeds max_deficit.
VMass v_mass(const Environment& env, const std::vector<double>& ts, double window = 0.0, double max_deficit = 1e-6);

struct BlockOptions {
    int workers = 1;
    /// Several well-separated centres per environment; the marginal of
    /// |rho(B_R)/|B_R| - 1| is the same at every centre.
    bool pool_centers = true;
    SolverOptions solver{};
};

/// Median over environments (and pooled centres) of |rho(B_R)/|B_R| - 1|.
RateSeries block_average_stats(const EnvironmentLaw& law, int L, const std::vector<double>& Rs, int M,
                               std::uint64_t seed, const BlockOptions& opts = {});

struct CovariancePoint {
    double offset = 0.0;
    double cov = 0.0;
    double jackknife_error = 0.0;
};

struct CovarianceDecay {
    std::vector<CovariancePoint> points;
    RateSeries series;  // |cov| against offset, fitted when every value is positive
    bool fitted = false;
    nlohmann::json to_json() const;
};

/// Cov(rho(0), rho(r e_i)) averaged over torus translations and axes, then
/// over M environments, with leave-one-environment-out jackknife errors.
CovarianceDecay covariance_decay(const EnvironmentLaw& law, int L, const std::vector<int>& offsets, int M,
                                 std::uint64_t seed, const BlockOptions& opts = {});

struct SensitivityResult {
    double lhs = 0.0;  // rho'(x) - rho(x) from two stationary solves
    double rhs = 0.0;  // rho(y) sum_i dw_i (G'(y+e_i,x) + G'(y-e_i,x) - 2 G'(y,x))
    double gap = 0.0;  // |lhs - rhs| / |lhs|, 0 when both vanish
    nlohmann::json to_json() const;
};

/// Resamples the periodic environment at y (with replacement key `draw`) and
/// compares the exact change of rho at x with the first-order formula, the
/// Green function taken on the ball B_{R_green}(x).
SensitivityResult sensitivity_check(const Environment& env, const Point& y, const Point& x, double R_green,
                                    std::uint64_t draw = 0, const SolverOptions& opts = {});

/// One lhs, several Green radii.
std::vector<SensitivityResult> sensitivity_check(const Environment& env, const Point& y, const Point& x,
                                                 const std::vector<double>& R_greens, std::uint64_t draw = 0,
                                                 const SolverOptions& opts = {});

/// Environment m of a sample of M, seeded from (seed, m).
Environment sample_environment(const EnvironmentLaw& law, std::uint64_t seed, std::uint64_t m,
                               std::optional<int> period = {});

}  // namespace rwre
