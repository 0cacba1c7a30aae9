#include "rwre/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rwre {

TransitionTable::TransitionTable(const Environment& env, DomainPtr domain)
    : domain_(std::move(domain)), degree_(2 * domain_->dim()) {
    if (env.dim() != domain_->dim()) throw std::invalid_argument("environment and domain dimensions differ");
    const std::size_t n = domain_->size();
    targets_.resize(n * static_cast<std::size_t>(degree_));
    probs_.resize(n * static_cast<std::size_t>(degree_));
    weights_.resize(n);
    const int d = domain_->dim();
    for (std::size_t r = 0; r < n; ++r) {
        const Point& x = domain_->point(r);
        weights_[r] = env.at(x);
        for (int i = 0; i < d; ++i) {
            const double p = jump_probability(weights_[r], i);
            const std::size_t k = r * static_cast<std::size_t>(degree_) + 2 * static_cast<std::size_t>(i);
            targets_[k] = domain_->index(x + unit(i, 1));
            targets_[k + 1] = domain_->index(x + unit(i, -1));
            probs_[k] = p;
            probs_[k + 1] = p;
        }
    }
}

void TransitionTable::apply(const Vec& f, Vec& out) const {
    const std::size_t n = size();
    out.resize(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        const std::size_t base = r * static_cast<std::size_t>(degree_);
        for (int k = 0; k < degree_; ++k) {
            const long t = targets_[base + static_cast<std::size_t>(k)];
            if (t >= 0) s += probs_[base + static_cast<std::size_t>(k)] * f[t];
        }
        out[static_cast<Eigen::Index>(r)] = s;
    }
}

void TransitionTable::apply_adjoint(const Vec& mu, Vec& out) const {
    const std::size_t n = size();
    out.setZero(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        const double m = mu[static_cast<Eigen::Index>(r)];
        if (m == 0.0) continue;
        const std::size_t base = r * static_cast<std::size_t>(degree_);
        for (int k = 0; k < degree_; ++k) {
            const long t = targets_[base + static_cast<std::size_t>(k)];
            if (t >= 0) out[t] += m * probs_[base + static_cast<std::size_t>(k)];
        }
    }
}

DirichletSystem::DirichletSystem(const Environment& env, DomainPtr domain, double lambda,
                                 std::optional<std::vector<double>> eta, const SolverOptions& opts)
    : domain_(std::move(domain)), table_(env, domain_), lambda_(lambda) {
    if (lambda_ < 0.0) throw std::invalid_argument("killing rate must be nonnegative");
    const std::size_t n = domain_->n_interior();
    if (eta) {
        if (eta->size() != domain_->size()) throw std::invalid_argument("killing field length does not match domain");
        eta_ = std::move(*eta);
        for (double v : eta_)
            if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("killing field must take values in [0,1]");
    } else {
        eta_.assign(domain_->size(), 1.0);
    }
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(n * static_cast<std::size_t>(table_.degree() + 1));
    for (std::size_t r = 0; r < n; ++r) {
        trip.emplace_back(static_cast<int>(r), static_cast<int>(r), 1.0 + lambda_ * eta_[r]);
        for (int k = 0; k < table_.degree(); ++k) {
            const long t = table_.target(r, k);
            if (t < 0) {
                std::ostringstream os;
                os << "interior point " << domain_->point(r) << " has a neighbour outside the domain";
                throw DomainError(os.str());
            }
            if (static_cast<std::size_t>(t) < n) trip.emplace_back(static_cast<int>(r), static_cast<int>(t), -table_.prob(r, k));
        }
    }
    A_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    A_.setFromTriplets(trip.begin(), trip.end());
    A_.makeCompressed();
    SolverOptions o = opts;
    o.lattice_dim = domain_->dim();
    solver_ = std::make_unique<SparseSolver>(A_, o);
}

ScalarField DirichletSystem::solve(const ScalarField& f, const ScalarField& b, SolveDiagnostics* diag) const {
    const std::size_t n = domain_->n_interior();
    if (f.size() != domain_->size() || b.size() != domain_->size())
        throw std::invalid_argument("right-hand side does not live on the system's domain");
    Vec rhs(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        double s = -f[r];
        for (int k = 0; k < table_.degree(); ++k) {
            const long t = table_.target(r, k);
            if (static_cast<std::size_t>(t) >= n) s += table_.prob(r, k) * b[static_cast<std::size_t>(t)];
        }
        rhs[static_cast<Eigen::Index>(r)] = s;
    }
    Vec x = solver_->solve(rhs, diag);
    ScalarField u(domain_);
    for (std::size_t r = 0; r < n; ++r) u[r] = x[static_cast<Eigen::Index>(r)];
    for (std::size_t r = n; r < domain_->size(); ++r) u[r] = b[r];
    return u;
}

ScalarField DirichletSystem::solve(const ScalarField& f, SolveDiagnostics* diag) const {
    return solve(f, ScalarField(domain_, 0.0), diag);
}

double DirichletSystem::residual(const ScalarField& u, const ScalarField& f) const {
    double worst = 0.0;
    for (std::size_t r = 0; r < domain_->n_interior(); ++r) {
        double Lu = -u[r];
        for (int k = 0; k < table_.degree(); ++k) Lu += table_.prob(r, k) * u[static_cast<std::size_t>(table_.target(r, k))];
        worst = std::max(worst, std::abs(Lu - lambda_ * eta_[r] * u[r] - f[r]));
    }
    return worst;
}

ScalarField solve_operator(const OperatorSpec& spec, const SolverOptions& opts, SolveDiagnostics* diag) {
    std::optional<std::vector<double>> eta;
    if (spec.eta) eta = spec.eta->values();
    DirichletSystem sys(spec.env, spec.domain, spec.lambda, std::move(eta), opts);
    return sys.solve(spec.f, spec.b, diag);
}

ScalarField solve_dirichlet(const Environment& env, DomainPtr domain, const ScalarField& f, const ScalarField& b,
                            const SolverOptions& opts, SolveDiagnostics* diag) {
    DirichletSystem sys(env, std::move(domain), 0.0, {}, opts);
    return sys.solve(f, b, diag);
}

ScalarField green_ball(const Environment& env, double R, const Point& y, const Point& center, const SolverOptions& opts,
                       SolveDiagnostics* diag) {
    auto D = make_ball(center, R, env.dim());
    if (!D->interior_contains(y)) throw DomainError("Green source must lie inside the ball");
    ScalarField f(D, 0.0);
    f.at(y) = -1.0;
    return solve_dirichlet(env, D, f, ScalarField(D, 0.0), opts, diag);
}

ScalarField green_killed(const Environment& env, double R, const KillingFn& eta, const Point& y, double K,
                         const SolverOptions& opts, SolveDiagnostics* diag) {
    if (K < 5.0) throw std::invalid_argument("truncation factor K must be >= 5");
    if (!(R > 0.0)) throw std::invalid_argument("R must be positive");
    auto D = make_ball(origin(), K * R, env.dim());
    if (!D->interior_contains(y)) throw DomainError("Green source must lie inside B_{KR}");
    std::vector<double> e(D->size());
    const double outer2 = 9.0 * R * R;
    for (std::size_t r = 0; r < D->size(); ++r) {
        e[r] = eta(D->point(r));
        if (static_cast<double>(norm_sq(D->point(r))) >= outer2 && e[r] != 1.0)
            throw std::invalid_argument("killing field must equal 1 outside B_{3R}");
    }
    DirichletSystem sys(env, D, 1.0 / (R * R), std::move(e), opts);
    ScalarField f(D, 0.0);
    f.at(y) = -1.0;
    return sys.solve(f, diag);
}

ScalarField resolvent_green_series(const Environment& env, double R, const Point& y, double K, double tol) {
    auto D = make_ball(origin(), K * R, env.dim());
    if (!D->interior_contains(y)) throw DomainError("Green source must lie inside B_{KR}");
    TransitionTable P(env, D);
    const double lambda = 1.0 / (R * R);
    const double q = 1.0 / (1.0 + lambda);
    const auto n = static_cast<Eigen::Index>(D->size());
    const auto nin = static_cast<Eigen::Index>(D->n_interior());
    Vec v = Vec::Zero(n), next(n), G = Vec::Zero(n);
    v[static_cast<Eigen::Index>(D->row(y))] = 1.0;
    double w = q;
    // remaining mass after term k is at most w * q / (1 - q)
    for (long k = 0; k < 100000000; ++k) {
        G += w * v;
        P.apply(v, next);
        next.tail(n - nin).setZero();
        v.swap(next);
        w *= q;
        if (w / (1.0 - q) < tol * std::max(1.0, G.maxCoeff())) break;
    }
    return ScalarField(D, std::vector<double>(G.data(), G.data() + n));
}

PoissonWeights poisson_weights(double t, double tail_tol) {
    if (t < 0.0) throw std::invalid_argument("time must be nonnegative");
    PoissonWeights w;
    w.t = t;
    if (t == 0.0) {
        w.pmf = {1.0};
        w.survival = {0.0};
        return w;
    }
    const double lt = std::log(t);
    double cum = 0.0;
    for (long k = 0;; ++k) {
        const double p = std::exp(-t + k * lt - std::lgamma(static_cast<double>(k) + 1.0));
        w.pmf.push_back(p);
        cum += p;
        if (k > t) {
            // geometric bound on the remaining tail
            const double next = p * t / static_cast<double>(k + 1);
            const double bound = next / (1.0 - t / static_cast<double>(k + 2));
            if (bound <= tail_tol) {
                w.tail = bound;
                break;
            }
        }
    }
    w.survival.assign(w.pmf.size(), 0.0);
    double s = w.tail;
    for (std::size_t k = w.pmf.size(); k-- > 0;) {
        w.survival[k] = s;
        s += w.pmf[k];
    }
    return w;
}

nlohmann::json HeatKernelSlice::diagnostics() const {
    std::ostringstream b;
    b << base;
    return {{"t", t}, {"base", b.str()}, {"poisson_tail", poisson_tail}, {"deficit", deficit}, {"window_size", p.size()}};
}

HeatKernelSlice heat_semigroup(const Environment& env, const Point& base, double t, DomainPtr window, double tail_tol,
                               double max_deficit) {
    TransitionTable P(env, window);
    const auto w = poisson_weights(t, tail_tol);
    const auto n = static_cast<Eigen::Index>(window->size());
    Vec mu = Vec::Zero(n), next(n), acc = Vec::Zero(n);
    mu[static_cast<Eigen::Index>(window->row(base))] = 1.0;
    for (std::size_t k = 0; k < w.pmf.size(); ++k) {
        acc += w.pmf[k] * mu;
        if (k + 1 < w.pmf.size()) {
            P.apply_adjoint(mu, next);
            mu.swap(next);
        }
    }
    HeatKernelSlice s;
    s.t = t;
    s.base = base;
    s.poisson_tail = w.tail;
    s.p = ScalarField(window, std::vector<double>(acc.data(), acc.data() + n));
    s.deficit = std::max(0.0, 1.0 - acc.sum());
    if (s.deficit > max_deficit) {
        std::ostringstream os;
        os << "heat kernel window too small: deficit " << s.deficit << " exceeds " << max_deficit;
        throw std::runtime_error(os.str());
    }
    return s;
}

namespace {

template <class Pick>
std::vector<Vec> uniformized(const TransitionTable& P, const Vec& f, const std::vector<double>& ts, double tail_tol,
                             Pick pick) {
    std::vector<PoissonWeights> ws;
    std::size_t kmax = 0;
    for (double t : ts) {
        ws.push_back(poisson_weights(t, tail_tol));
        kmax = std::max(kmax, ws.back().pmf.size());
    }
    std::vector<Vec> out(ts.size(), Vec::Zero(f.size()));
    Vec v = f, next(f.size());
    for (std::size_t k = 0; k < kmax; ++k) {
        for (std::size_t j = 0; j < ts.size(); ++j) {
            if (k < ws[j].pmf.size()) out[j] += pick(ws[j], k) * v;
        }
        if (k + 1 < kmax) {
            P.apply(v, next);
            v.swap(next);
        }
    }
    return out;
}

}  // namespace

std::vector<Vec> semigroup_apply(const TransitionTable& P, const Vec& f, const std::vector<double>& ts, double tail_tol) {
    return uniformized(P, f, ts, tail_tol, [](const PoissonWeights& w, std::size_t k) { return w.pmf[k]; });
}

std::vector<Vec> semigroup_integral(const TransitionTable& P, const Vec& f, const std::vector<double>& Ts,
                                    double tail_tol) {
    return uniformized(P, f, Ts, tail_tol, [](const PoissonWeights& w, std::size_t k) { return w.survival[k]; });
}

nlohmann::json PotentialKernelResult::to_json() const {
    return {{"value", value},      {"times", times},   {"truncated", truncated},
            {"extrapolated", extrapolated}, {"change", change}, {"window_loss", window_loss}};
}

PotentialKernelResult potential_kernel(const Environment& env, const Point& x, const Point& y,
                                       const std::vector<double>& schedule, double tol) {
    if (env.dim() != 2) throw std::invalid_argument("potential kernel is defined for d = 2 only");
    if (schedule.size() < 2) throw std::invalid_argument("potential kernel schedule needs at least two times");
    std::vector<double> Ts = schedule;
    std::sort(Ts.begin(), Ts.end());
    PotentialKernelResult res;
    res.times = Ts;
    if (x == y) {
        res.truncated.assign(Ts.size(), 0.0);
        res.extrapolated.assign(Ts.size() - 1, 0.0);
        return res;
    }
    const double W = 6.0 * std::sqrt(Ts.back()) + norm(x - y) + 4.0;
    auto D = make_ball(y, W, 2);
    TransitionTable P(env, D);
    Vec e = Vec::Zero(static_cast<Eigen::Index>(D->size()));
    e[static_cast<Eigen::Index>(D->row(y))] = 1.0;
    // int_0^T p_t(z,y) dt = (int_0^T P_s 1_y ds)(z)
    const auto I = semigroup_integral(P, e, Ts);
    const auto ry = static_cast<Eigen::Index>(D->row(y));
    const auto rx = static_cast<Eigen::Index>(D->row(x));
    for (const auto& v : I) res.truncated.push_back(v[ry] - v[rx]);
    for (std::size_t i = 1; i < Ts.size(); ++i) {
        res.extrapolated.push_back((Ts[i] * res.truncated[i] - Ts[i - 1] * res.truncated[i - 1]) / (Ts[i] - Ts[i - 1]));
    }
    res.value = res.extrapolated.back();
    res.change = res.extrapolated.size() >= 2
                     ? std::abs(res.extrapolated.back() - res.extrapolated[res.extrapolated.size() - 2])
                     : std::abs(res.truncated.back() - res.truncated.front());
    // mass a walk from y loses at the window edge by the largest time
    const auto slice = heat_semigroup(env, y, Ts.back(), D);
    res.window_loss = slice.deficit;
    if (res.change > tol) {
        std::ostringstream os;
        os << "potential kernel did not stabilize: last extrapolants differ by " << res.change;
        throw std::runtime_error(os.str());
    }
    return res;
}

double potential_kernel_green(const Environment& env, const Point& x, const Point& y, double R, const SolverOptions& opts) {
    if (env.dim() != 2) throw std::invalid_argument("potential kernel is defined for d = 2 only");
    const auto G = green_ball(env, R, y, y, opts);
    return G.at(y) - G.at(x);
}

double whole_space_green(const Environment& env, const Point& x, const Point& y, double K1, double K2,
                         const SolverOptions& opts) {
    const int d = env.dim();
    if (d < 3) throw std::invalid_argument("whole-space Green function needs d >= 3");
    const double r = std::max(1.0, norm(x - y));
    const double R1 = K1 * r, R2 = K2 * r;
    const double g1 = green_ball(env, R1, y, y, opts).at(x);
    const double g2 = green_ball(env, R2, y, y, opts).at(x);
    const double w1 = std::pow(R1, d - 2), w2 = std::pow(R2, d - 2);
    return (w2 * g2 - w1 * g1) / (w2 - w1);
}

double mf_h(double r, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("mf_h needs t > 0");
    if (r < 0.0) throw std::invalid_argument("mf_h needs r >= 0");
    return r * r / std::max(r, t) + r * std::log(std::max(r / t, 1.0));
}

}  // namespace rwre
