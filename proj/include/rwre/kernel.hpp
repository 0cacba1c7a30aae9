#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "json.hpp"
#include "rwre/env.hpp"
#include "rwre/lattice.hpp"
#include "rwre/sparse.hpp"

namespace rwre {

/// One-step transition kernel of the walk restricted to the rows of a domain.
/// Jumps leaving the domain are dropped (absorbed); on a torus nothing leaves.
class TransitionTable {
public:
    TransitionTable(const Environment& env, DomainPtr domain);

    const LatticeDomain& domain() const { return *domain_; }
    const DomainPtr& domain_ptr() const { return domain_; }
    std::size_t size() const { return domain_->size(); }
    int degree() const { return degree_; }

    /// Target row of the k-th jump of row r (k = 2i for +e_i, 2i+1 for -e_i), or -1.
    long target(std::size_t r, int k) const { return targets_[r * static_cast<std::size_t>(degree_) + static_cast<std::size_t>(k)]; }
    double prob(std::size_t r, int k) const { return probs_[r * static_cast<std::size_t>(degree_) + static_cast<std::size_t>(k)]; }
    const Weights& weights(std::size_t r) const { return weights_[r]; }

    /// out = P f (backward action); absorbed mass contributes 0.
    void apply(const Vec& f, Vec& out) const;
    /// out = mu P (forward action on measures).
    void apply_adjoint(const Vec& mu, Vec& out) const;

private:
    DomainPtr domain_;
    int degree_;
    std::vector<long> targets_;
    std::vector<double> probs_;
    std::vector<Weights> weights_;
};

/// Affine operator u -> L u - lambda eta u on the interior of a domain with
/// Dirichlet data on its boundary (or no boundary on a torus).
struct OperatorSpec {
    Environment env;
    DomainPtr domain;
    double lambda = 0.0;
    /// Killing field per row; empty means eta = 1 wherever lambda > 0.
    std::optional<ScalarField> eta;
    /// Right-hand side on interior rows.
    ScalarField f;
    /// Dirichlet data on boundary rows.
    ScalarField b;
};

/// Assembled (I + lambda eta - P) on interior rows, factored once and reused
/// across right-hand sides. The domain and environment must outlive it.
class DirichletSystem {
public:
    DirichletSystem(const Environment& env, DomainPtr domain, double lambda = 0.0,
                    std::optional<std::vector<double>> eta = {}, const SolverOptions& opts = {});
    DirichletSystem(const DirichletSystem&) = delete;
    DirichletSystem& operator=(const DirichletSystem&) = delete;

    /// Solves L u - lambda eta u = f on the interior, u = b on the boundary.
    ScalarField solve(const ScalarField& f, const ScalarField& b, SolveDiagnostics* diag = nullptr) const;
    /// Zero boundary data.
    ScalarField solve(const ScalarField& f, SolveDiagnostics* diag = nullptr) const;

    /// max over interior rows of |L u - lambda eta u - f|.
    double residual(const ScalarField& u, const ScalarField& f) const;

    const SpMat& matrix() const { return A_; }
    const TransitionTable& table() const { return table_; }
    const DomainPtr& domain() const { return domain_; }

private:
    DomainPtr domain_;
    TransitionTable table_;
    double lambda_;
    std::vector<double> eta_;
    SpMat A_;
    std::unique_ptr<SparseSolver> solver_;
};

ScalarField solve_operator(const OperatorSpec& spec, const SolverOptions& opts = {}, SolveDiagnostics* diag = nullptr);

/// (1/2) tr(a D^2 u) = f in the interior, u = b on the boundary.
ScalarField solve_dirichlet(const Environment& env, DomainPtr domain, const ScalarField& f, const ScalarField& b,
                            const SolverOptions& opts = {}, SolveDiagnostics* diag = nullptr);

/// G_R(., y) on the ball B_R(center): L G = -1_y inside, 0 on the boundary.
ScalarField green_ball(const Environment& env, double R, const Point& y, const Point& center = origin(),
                       const SolverOptions& opts = {}, SolveDiagnostics* diag = nullptr);

using KillingFn = std::function<double(const Point&)>;

/// Killed Green function: L G = (1/R^2) eta G - 1_y on B_{KR}, zero outside.
/// eta must take values in [0,1] and equal 1 outside B_{3R}; K >= 5.
ScalarField green_killed(const Environment& env, double R, const KillingFn& eta, const Point& y, double K = 8.0,
                         const SolverOptions& opts = {}, SolveDiagnostics* diag = nullptr);

/// Resolvent Green function with killing rate 1/R^2 everywhere, from the
/// Neumann series sum_k P^k 1_y / (1 + 1/R^2)^{k+1} on B_{KR}.
ScalarField resolvent_green_series(const Environment& env, double R, const Point& y, double K, double tol = 1e-15);

struct PoissonWeights {
    double t = 0.0;
    std::vector<double> pmf;       // P(N_t = k)
    std::vector<double> survival;  // P(N_t > k)
    double tail = 0.0;             // mass beyond the last kept term
};

/// Poisson(t) weights truncated where the remaining tail is <= tail_tol.
PoissonWeights poisson_weights(double t, double tail_tol = 1e-12);

struct HeatKernelSlice {
    double t = 0.0;
    Point base;
    ScalarField p;
    double poisson_tail = 0.0;
    /// 1 - sum p: Poisson tail plus mass absorbed at the window edge.
    double deficit = 0.0;

    nlohmann::json diagnostics() const;
};

/// Row p_t(base, .) of the rate-1 continuous-time walk by uniformization on
/// a window (ball, box or torus). Throws when the deficit exceeds max_deficit.
HeatKernelSlice heat_semigroup(const Environment& env, const Point& base, double t, DomainPtr window,
                               double tail_tol = 1e-12, double max_deficit = 1.0);

/// P_t f for every t in ts, by backward uniformization.
std::vector<Vec> semigroup_apply(const TransitionTable& P, const Vec& f, const std::vector<double>& ts,
                                 double tail_tol = 1e-12);
/// int_0^T P_s f ds for every T in Ts.
std::vector<Vec> semigroup_integral(const TransitionTable& P, const Vec& f, const std::vector<double>& Ts,
                                    double tail_tol = 1e-12);

struct PotentialKernelResult {
    double value = 0.0;
    std::vector<double> times;
    std::vector<double> truncated;     // int_0^T [p_t(y,y) - p_t(x,y)] dt
    std::vector<double> extrapolated;  // Richardson on consecutive times
    double change = 0.0;
    double window_loss = 0.0;

    nlohmann::json to_json() const;
};

/// A(x,y) for d = 2 from truncated time integrals with Richardson
/// extrapolation (error ~ c/T). Throws when the last two extrapolants differ
/// by more than tol.
PotentialKernelResult potential_kernel(const Environment& env, const Point& x, const Point& y,
                                       const std::vector<double>& schedule, double tol = 1e-2);

/// A(x,y) ~ G_R(y,y) - G_R(x,y) on the ball B_R(y) (d = 2).
double potential_kernel_green(const Environment& env, const Point& x, const Point& y, double R,
                              const SolverOptions& opts = {});

/// Whole-space Green function G(x,y), d >= 3, from balls B_{K|x-y|}(y) with
/// Richardson extrapolation in the outer radius (error O(K^{2-d})).
double whole_space_green(const Environment& env, const Point& x, const Point& y, double K1 = 8.0, double K2 = 16.0,
                         const SolverOptions& opts = {});

/// r^2/(r v t) + r log((r/t) v 1).
double mf_h(double r, double t);

}  // namespace rwre
