#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwre/env.hpp"
#include "rwre/kernel.hpp"
#include "rwre/rate_series.hpp"
#include "rwre/walk.hpp"

namespace rwre {

// ---- rate functions -------------------------------------------------------

/// mu, nu, delta or U at `arg` in dimension d. Unknown names throw.
double rate_function(const std::string& name, double arg, int d);
/// Power-law exponent of the same function (logarithms dropped).
double rate_exponent(const std::string& name, int d);

// ---- cutoff ---------------------------------------------------------------

/// eta_R on every row of a domain, with its discrete difference bounds.
struct CutoffField {
    double R = 1.0;
    ScalarField eta;
    double max_first = 0.0;   // max |eta(x+e) - eta(x)| over interior rows
    double max_second = 0.0;  // max |eta(x+e) + eta(x-e) - 2 eta(x)|

    static CutoffField on(DomainPtr domain, double R);
};

// ---- correctors -----------------------------------------------------------

/// (L - 1/R^2) phi = psi - psibar on a box of half-width H >= 6R around
/// `center`, zero outside.
ScalarField approx_corrector(const Environment& env, double R, const LocalFn& psi, double psibar,
                             const Point& center, int H, const SolverOptions& opts = {},
                             SolveDiagnostics* diag = nullptr);

/// L phi = (1/R^2) eta_R phi + psi - psibar on B_{KR}, zero outside; K >= 5.
ScalarField local_corrector(const Environment& env, double R, const LocalFn& psi, double psibar, double K = 5.0,
                            const SolverOptions& opts = {}, SolveDiagnostics* diag = nullptr);

/// As local_corrector without the K >= 5 check. Small K truncates walks
/// that leave B_{KR} before the clock rings; callers comparing radii must
/// use the same K throughout.
ScalarField local_corrector_truncated(const Environment& env, double R, const LocalFn& psi, double psibar, double K,
                                      const SolverOptions& opts = {}, SolveDiagnostics* diag = nullptr);

/// ||L phi - (1/R^2) eta phi - (psi - psibar)||_2 over interior rows, relative
/// to ||psi - psibar||_2.
double corrector_residual(const Environment& env, const ScalarField& phi, double R, const LocalFn& psi, double psibar,
                          bool local);

/// Local correctors v^k for (a_k - abar_k)/2 and xi for psi - psibar,
/// normalized to vanish at 0.
struct CorrectorBundle {
    double R = 1.0;
    std::vector<ScalarField> v;
    std::optional<ScalarField> xi;  // absent when psi is constant
    double max_residual = 0.0;  // relative, as corrector_residual
    /// max over B_R of |nabla_e v^k|, per k.
    std::vector<double> max_gradient;
};

CorrectorBundle corrector_bundle(const Environment& env, double R, const Weights& abar, const LocalFn& psi,
                                 double psibar, double K = 5.0, const SolverOptions& opts = {});

// ---- effective coefficients ----------------------------------------------

struct EffectiveCoefficients {
    Weights abar_exact;  // sum rho a / L^d
    double psibar_exact = 0.0;
    Weights abar_ergodic;  // time averages along one walk, batch-means errors
    Weights abar_ergodic_se;
    double psibar_ergodic = 0.0;
    double psibar_ergodic_se = 0.0;
    double trace = 0.0;
    /// max over entries of |exact - ergodic| / se
    double max_z = 0.0;

    nlohmann::json to_json() const;
};

/// Both estimators on the periodic environment `env`. The walk runs for
/// `steps` steps and is cut into `batches` batch means.
EffectiveCoefficients effective_coefficients(const Environment& env, const LocalFn& psi, std::uint64_t steps,
                                             std::uint64_t seed, int batches = 50, const SolverOptions& opts = {});

/// Torus-exact (abar, psibar) averaged over M environments of period L,
/// with standard errors. Exact (I/d) for exchangeable laws and psi = a_1.
struct EffectiveTruth {
    Weights abar;
    double psibar = 0.0;
    Weights abar_se;
    double psibar_se = 0.0;
    bool exact = false;
};

EffectiveTruth effective_truth(const EnvironmentLaw& law, const LocalFn& psi, int L, int M, std::uint64_t seed,
                               int workers = 1, const SolverOptions& opts = {});

// ---- rates ----------------------------------------------------------------

/// |T^{-1} E[int_0^T psi(theta_{Y_s} omega) ds] - psibar| from the exact
/// semigroup on tori of period L, median over M environments.
RateSeries ergodic_rate(const EnvironmentLaw& law, const LocalFn& psi, double psibar, const std::vector<double>& Ts,
                        int L, int M, std::uint64_t seed, int workers = 1);

/// Var_Q(P_t zeta) on tori of period L (rho-weighted spatial variance),
/// median over M environments. `monotone` records whether every
/// environment's variance is nonincreasing in t.
struct VarDecay {
    RateSeries series;
    bool monotone = true;
};
VarDecay var_decay_check(const EnvironmentLaw& law, const LocalFn& zeta, const std::vector<double>& ts, int L, int M,
                         std::uint64_t seed, int workers = 1, const SolverOptions& opts = {});

// ---- two-scale error --------------------------------------------------------

using RealFn = std::function<double(const std::array<double, kMaxDim>&)>;

/// A homogenized problem: tr(abar D^2 ubar)/2 = f psibar in B_1, ubar = g on
/// the sphere.
struct HomogProblem {
    int d = 3;
    Weights abar;
    double psibar = 1.0;
    RealFn f;
    RealFn g;
    /// Closed-form ubar when known; otherwise the reference is a discrete
    /// constant-coefficient solve at R_fine = fine_factor * R.
    std::optional<RealFn> ubar;
    std::optional<std::function<double(const std::array<double, kMaxDim>&, int)>> ubar_kk;
    int fine_factor = 4;

    /// ubar = (1 - |y|^2)^2 (1 + y_1^2) + 1: constant on the sphere with
    /// vanishing normal derivative there; f is read off the equation.
    static HomogProblem manufactured(int d, const Weights& abar, double psibar);
    /// f and g quadratics, reference from the fine-grid solve.
    static HomogProblem quadratic(int d, const Weights& abar, double psibar);
};

struct TwoScaleSample {
    double R = 0.0;
    std::uint64_t env_index = 0;
    double error = 0.0;          // max_{B_R} |u - ubar(x/R)|
    double w_max = -1.0;         // max |w| when the corrector bundle is assembled
    double lw_max = -1.0;        // max_{B_R} |L w|, O(R^-3) when the expansion is consistent
    SolveDiagnostics diag;
};

/// max_{x in B_R} |u(x) - ubar(x/R)| for one environment.
TwoScaleSample two_scale_sample(const Environment& env, const HomogProblem& prob, const LocalFn& psi, double R,
                                bool with_bundle = false, const SolverOptions& opts = {});

struct TwoScaleResult {
    RateSeries series;
    std::vector<TwoScaleSample> samples;
};

RateSeries two_scale_control(const HomogProblem& prob, const std::vector<double>& Rs, const SolverOptions& opts = {});

TwoScaleResult two_scale_error(const EnvironmentLaw& law, const HomogProblem& prob, const LocalFn& psi,
                               const std::vector<double>& Rs, int M, std::uint64_t seed, int workers = 1,
                               bool with_bundle = false, const SolverOptions& opts = {});

// ---- global tower -----------------------------------------------------------

struct TowerReport {
    std::vector<double> Rs;
    /// max_{B_r} |phi_{R_{i+1}} - phi_{R_i}| for consecutive radii
    std::vector<double> differences;
    std::vector<double> phi_at_origin;  // exactly 0 by construction
    nlohmann::json to_json() const;
};

/// phi_R = phi^loc_R - phi^loc_R(0) (d >= 3), minus x . nabla^+ phi^loc_R(0)
/// as well in d = 2, with local correctors truncated at B_{KR}.
TowerReport global_tower(const Environment& env, const std::vector<double>& Rs, const LocalFn& psi, double psibar,
                         double probe_radius, double K = 5.0, const SolverOptions& opts = {});

// ---- QCLT --------------------------------------------------------------------

struct QcltPoint {
    std::uint64_t n = 0;
    double ks = 0.0;
    double variance_ratio = 0.0;  // Var(X_n . l) / (n l^T abar l)
};

/// Kolmogorov distance of X_n . l / sqrt(n) from N(0, l^T abar l).
/// exact = true evolves the quenched law of X_n on a window; otherwise N
/// walks are sampled and N < 10 / target^2 is rejected.
std::vector<QcltPoint> qclt_check(const Environment& env, const std::vector<std::uint64_t>& ns, int direction,
                                  const Weights& abar, bool exact, std::size_t N = 0, double target = 0.02,
                                  std::uint64_t seed = 0, int workers = 1);

}  // namespace rwre
