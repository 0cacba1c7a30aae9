#include "rwre/homog.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rwre/cutoff.hpp"
#include "rwre/invariant.hpp"
#include "rwre/parallel.hpp"
#include "rwre/stats.hpp"

namespace rwre {

namespace {

using Vec4 = std::array<double, kMaxDim>;

Vec4 scaled(const Point& x, double s) {
    Vec4 y{};
    for (int i = 0; i < kMaxDim; ++i) y[static_cast<std::size_t>(i)] = x[i] / s;
    return y;
}

std::vector<double> local_values(const Environment& env, const LatticeDomain& D, const LocalFn& psi, double psibar) {
    std::vector<double> f(D.size(), 0.0);
    for (std::size_t r = 0; r < D.n_interior(); ++r) f[r] = psi(env.at(D.point(r))) - psibar;
    return f;
}

std::vector<double> cutoff_values(const LatticeDomain& D, double R) {
    std::vector<double> eta(D.size());
    for (std::size_t r = 0; r < D.size(); ++r) eta[r] = eta_R(D.point(r), R);
    return eta;
}

// ||L u - lambda eta u - f||_2 / ||f||_2 over interior rows (absolute when f = 0).
double relative_residual(const TransitionTable& P, const ScalarField& u, const std::vector<double>& f, double lambda,
                         const std::vector<double>& eta) {
    const auto& D = P.domain();
    const Vec v = Eigen::Map<const Vec>(u.values().data(), static_cast<Eigen::Index>(u.size()));
    Vec Pv(v.size());
    P.apply(v, Pv);
    double rr = 0.0, ff = 0.0;
    for (std::size_t r = 0; r < D.n_interior(); ++r) {
        const double e = Pv[static_cast<Eigen::Index>(r)] - u[r] - lambda * eta[r] * u[r] - f[r];
        rr += e * e;
        ff += f[r] * f[r];
    }
    return ff > 0.0 ? std::sqrt(rr / ff) : std::sqrt(rr);
}

void require_positive_all(const RateSeries& s, bool& ok) {
    ok = s.points.size() >= 3;
    for (const auto& p : s.points) ok = ok && p.value > 0.0 && p.scale > 0.0;
}

}  // namespace

// ---- rate functions ---------------------------------------------------------

double rate_function(const std::string& name, double arg, int d) {
    if (d < 2) throw std::invalid_argument("dimension must be at least 2");
    if (name == "U") {
        if (!(arg > 0.0)) throw std::invalid_argument("U needs a positive argument");
        return d == 2 ? -std::log(arg) : std::pow(arg, 2.0 - d);
    }
    if (name != "mu" && name != "nu" && name != "delta") throw std::invalid_argument("unknown rate function: " + name);
    if (!(arg >= 1.0)) throw std::invalid_argument(name + " needs an argument >= 1");
    const double lg = std::max(1.0, std::log(arg));
    if (name == "mu") {
        if (d == 2) return arg;
        if (d == 3) return std::sqrt(arg);
        if (d == 4) return std::sqrt(lg);
        return 1.0;
    }
    if (name == "nu") {
        if (d == 2) return 1.0 / std::sqrt(arg);
        if (d == 3) return std::pow(arg, -0.75);
        if (d == 4) return std::sqrt(std::log(arg)) / arg;
        return 1.0 / arg;
    }
    return d >= 3 ? 1.0 : std::pow(lg, 1.5);
}

double rate_exponent(const std::string& name, int d) {
    if (name == "mu") return d == 2 ? 1.0 : d == 3 ? 0.5 : 0.0;
    if (name == "nu") return d == 2 ? -0.5 : d == 3 ? -0.75 : -1.0;
    if (name == "delta") return 0.0;
    if (name == "U") return d == 2 ? 0.0 : 2.0 - d;
    throw std::invalid_argument("unknown rate function: " + name);
}

// ---- cutoff -------------------------------------------------------------------

CutoffField CutoffField::on(DomainPtr domain, double R) {
    CutoffField c;
    c.R = R;
    c.eta = ScalarField(domain, cutoff_values(*domain, R));
    const auto& D = *domain;
    for (std::size_t r = 0; r < D.n_interior(); ++r) {
        const Point x = D.point(r);
        for (int i = 0; i < D.dim(); ++i) {
            const long p = D.index(x + unit(i)), m = D.index(x - unit(i));
            if (p >= 0) c.max_first = std::max(c.max_first, std::abs(c.eta[static_cast<std::size_t>(p)] - c.eta[r]));
            if (p >= 0 && m >= 0)
                c.max_second = std::max(c.max_second, std::abs(c.eta[static_cast<std::size_t>(p)] +
                                                                c.eta[static_cast<std::size_t>(m)] - 2.0 * c.eta[r]));
        }
    }
    return c;
}

// ---- correctors -------------------------------------------------------------

ScalarField approx_corrector(const Environment& env, double R, const LocalFn& psi, double psibar, const Point& center,
                             int H, const SolverOptions& opts, SolveDiagnostics* diag) {
    if (!(R > 0.0)) throw std::invalid_argument("R must be positive");
    if (H < 6.0 * R) throw std::invalid_argument("truncation box must have half-width at least 6R");
    auto D = make_box(center, H, env.dim());
    DirichletSystem sys(env, D, 1.0 / (R * R), {}, opts);
    return sys.solve(ScalarField(D, local_values(env, *D, psi, psibar)), diag);
}

ScalarField local_corrector_truncated(const Environment& env, double R, const LocalFn& psi, double psibar, double K,
                                      const SolverOptions& opts, SolveDiagnostics* diag) {
    if (!(R > 0.0)) throw std::invalid_argument("R must be positive");
    if (!(K * std::max(R, 1.0) > 8.0 / 3.0 * std::max(R, 1.0))) throw std::invalid_argument("K must exceed 8/3");
    auto D = make_ball(origin(), K * R, env.dim());
    DirichletSystem sys(env, D, 1.0 / (R * R), cutoff_values(*D, R), opts);
    return sys.solve(ScalarField(D, local_values(env, *D, psi, psibar)), diag);
}

ScalarField local_corrector(const Environment& env, double R, const LocalFn& psi, double psibar, double K,
                            const SolverOptions& opts, SolveDiagnostics* diag) {
    if (K < 5.0) throw std::invalid_argument("local corrector needs K >= 5");
    return local_corrector_truncated(env, R, psi, psibar, K, opts, diag);
}

double corrector_residual(const Environment& env, const ScalarField& phi, double R, const LocalFn& psi, double psibar,
                          bool local) {
    const auto& D = phi.domain();
    const auto f = local_values(env, D, psi, psibar);
    std::vector<double> eta(D.size(), 1.0);
    if (local) eta = cutoff_values(D, R);
    return relative_residual(TransitionTable(env, phi.domain_ptr()), phi, f, 1.0 / (R * R), eta);
}

CorrectorBundle corrector_bundle(const Environment& env, double R, const Weights& abar, const LocalFn& psi,
                                 double psibar, double K, const SolverOptions& opts) {
    if (K < 5.0) throw std::invalid_argument("local corrector needs K >= 5");
    const int d = env.dim();
    auto D = make_ball(origin(), K * R, d);
    const auto eta = cutoff_values(*D, R);
    DirichletSystem sys(env, D, 1.0 / (R * R), eta, opts);
    CorrectorBundle b;
    b.R = R;
    auto normalize = [&](ScalarField u) {
        const double u0 = u.at(origin());
        for (auto& v : u.values()) v -= u0;
        return u;
    };
    auto solve_for = [&](const LocalFn& q, double qbar) {
        ScalarField f(D, local_values(env, *D, q, qbar));
        ScalarField u = sys.solve(f);
        b.max_residual = std::max(b.max_residual, relative_residual(sys.table(), u, f.values(), 1.0 / (R * R), eta));
        return normalize(std::move(u));
    };
    for (int k = 0; k < d; ++k) {
        b.v.push_back(solve_for([k](const Weights& a) { return 0.5 * a[k]; }, 0.5 * abar[k]));
        double g = 0.0;
        for (std::size_t r = 0; r < D->n_interior(); ++r) {
            const Point x = D->point(r);
            if (!(static_cast<double>(norm_sq(x)) < R * R)) continue;
            for (int i = 0; i < d; ++i)
                for (int s : {-1, 1}) g = std::max(g, std::abs(nabla(b.v.back(), x, unit(i, s))));
        }
        b.max_gradient.push_back(g);
    }
    if (psi) b.xi = solve_for(psi, psibar);
    return b;
}

// ---- effective coefficients ---------------------------------------------------

nlohmann::json EffectiveCoefficients::to_json() const {
    std::vector<double> ae, ag, as;
    for (int i = 0; i < kMaxDim; ++i) {
        ae.push_back(abar_exact[i]);
        ag.push_back(abar_ergodic[i]);
        as.push_back(abar_ergodic_se[i]);
    }
    return {{"abar_exact", ae},        {"psibar_exact", psibar_exact},     {"abar_ergodic", ag},
            {"abar_ergodic_se", as},   {"psibar_ergodic", psibar_ergodic}, {"psibar_ergodic_se", psibar_ergodic_se},
            {"trace", trace},          {"max_z", max_z}};
}

EffectiveCoefficients effective_coefficients(const Environment& env, const LocalFn& psi, std::uint64_t steps,
                                             std::uint64_t seed, int batches, const SolverOptions& opts) {
    if (batches < 2 || steps < static_cast<std::uint64_t>(batches)) throw std::invalid_argument("need steps >= batches >= 2");
    const int d = env.dim();
    const auto rho = stationary_torus(env, opts);
    const auto& D = rho.rho.domain();
    EffectiveCoefficients e;
    std::vector<std::vector<double>> terms(static_cast<std::size_t>(d + 1), std::vector<double>(D.size()));
    for (std::size_t r = 0; r < D.size(); ++r) {
        const Weights a = env.at(D.point(r));
        for (int i = 0; i < d; ++i) terms[static_cast<std::size_t>(i)][r] = rho.rho[r] * a[i];
        terms[static_cast<std::size_t>(d)][r] = rho.rho[r] * psi(a);
    }
    for (int i = 0; i < d; ++i) e.abar_exact[i] = mean(terms[static_cast<std::size_t>(i)]);
    e.psibar_exact = mean(terms[static_cast<std::size_t>(d)]);
    for (int i = 0; i < d; ++i) e.trace += e.abar_exact[i];

    // one long walk, batch means
    const std::uint64_t per = steps / static_cast<std::uint64_t>(batches);
    std::vector<std::vector<double>> bm(static_cast<std::size_t>(d + 1), std::vector<double>(static_cast<std::size_t>(batches)));
    PathRng rng(seed, 0);
    Point x{};
    for (int b = 0; b < batches; ++b) {
        std::vector<double> acc(static_cast<std::size_t>(d + 1), 0.0);
        for (std::uint64_t k = 0; k < per; ++k) {
            const Weights a = env.at(x);
            for (int i = 0; i < d; ++i) acc[static_cast<std::size_t>(i)] += a[i];
            acc[static_cast<std::size_t>(d)] += psi(a);
            x = D.reduce(x + jump_vector(choose_jump(a, d, rng.uniform())));
        }
        for (int i = 0; i <= d; ++i)
            bm[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)] = acc[static_cast<std::size_t>(i)] / static_cast<double>(per);
    }
    for (int i = 0; i < d; ++i) {
        e.abar_ergodic[i] = mean(bm[static_cast<std::size_t>(i)]);
        e.abar_ergodic_se[i] = standard_error(bm[static_cast<std::size_t>(i)]);
        e.max_z = std::max(e.max_z, std::abs(e.abar_exact[i] - e.abar_ergodic[i]) / e.abar_ergodic_se[i]);
    }
    e.psibar_ergodic = mean(bm[static_cast<std::size_t>(d)]);
    e.psibar_ergodic_se = standard_error(bm[static_cast<std::size_t>(d)]);
    if (e.psibar_ergodic_se > 0.0)
        e.max_z = std::max(e.max_z, std::abs(e.psibar_exact - e.psibar_ergodic) / e.psibar_ergodic_se);
    return e;
}

EffectiveTruth effective_truth(const EnvironmentLaw& law, const LocalFn& psi, int L, int M, std::uint64_t seed,
                               int workers, const SolverOptions& opts) {
    const int d = law.dim();
    EffectiveTruth t;
    if (law.deterministic()) {
        const Weights a = law.draw(0);
        t.abar = a;
        t.psibar = psi(a);
        t.exact = true;
        return t;
    }
    std::vector<std::vector<double>> v(static_cast<std::size_t>(M));
    parallel_for(static_cast<std::size_t>(M), workers, [&](std::size_t m) {
        const auto env = sample_environment(law, seed, m, L);
        const auto rho = stationary_torus(env, opts);
        const auto& D = rho.rho.domain();
        std::vector<std::vector<double>> terms(static_cast<std::size_t>(d + 1), std::vector<double>(D.size()));
        for (std::size_t r = 0; r < D.size(); ++r) {
            const Weights a = env.at(D.point(r));
            for (int i = 0; i < d; ++i) terms[static_cast<std::size_t>(i)][r] = rho.rho[r] * a[i];
            terms[static_cast<std::size_t>(d)][r] = rho.rho[r] * psi(a);
        }
        for (const auto& tm : terms) v[m].push_back(mean(tm));
    });
    for (int i = 0; i <= d; ++i) {
        std::vector<double> s;
        for (const auto& vm : v) s.push_back(vm[static_cast<std::size_t>(i)]);
        const double se = M > 1 ? standard_error(s) : 0.0;
        if (i < d) {
            t.abar[i] = mean(s);
            t.abar_se[i] = se;
        } else {
            t.psibar = mean(s);
            t.psibar_se = se;
        }
    }
    return t;
}

// ---- rates ----------------------------------------------------------------------

RateSeries ergodic_rate(const EnvironmentLaw& law, const LocalFn& psi, double psibar, const std::vector<double>& Ts,
                        int L, int M, std::uint64_t seed, int workers) {
    for (double T : Ts)
        if (!(T > 0.0)) throw std::invalid_argument("times must be positive");
    std::vector<std::vector<double>> dev(static_cast<std::size_t>(M));
    parallel_for(static_cast<std::size_t>(M), workers, [&](std::size_t m) {
        const auto env = sample_environment(law, seed, m, L);
        auto D = make_torus(L, law.dim());
        TransitionTable P(env, D);
        Vec f(static_cast<Eigen::Index>(D->size()));
        for (std::size_t r = 0; r < D->size(); ++r) f[static_cast<Eigen::Index>(r)] = psi(env.at(D->point(r)));
        const auto I = semigroup_integral(P, f, Ts);
        const auto r0 = static_cast<Eigen::Index>(D->row(origin()));
        for (std::size_t j = 0; j < Ts.size(); ++j) dev[m].push_back(std::abs(I[j][r0] / Ts[j] - psibar));
    });
    RateSeries s;
    s.statistic = "abs_ergodic_deviation";
    s.reference_exponent = rate_exponent("nu", law.dim());
    for (std::size_t j = 0; j < Ts.size(); ++j) {
        std::vector<double> v;
        for (const auto& dm : dev) v.push_back(dm[j]);
        s.add(Ts[j], std::move(v));
    }
    bool ok;
    require_positive_all(s, ok);
    if (ok) s.refit();
    return s;
}

VarDecay var_decay_check(const EnvironmentLaw& law, const LocalFn& zeta, const std::vector<double>& ts, int L, int M,
                         std::uint64_t seed, int workers, const SolverOptions& opts) {
    std::vector<double> sorted = ts;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::vector<double>> var(static_cast<std::size_t>(M));
    std::vector<char> mono(static_cast<std::size_t>(M), 1);
    parallel_for(static_cast<std::size_t>(M), workers, [&](std::size_t m) {
        const auto env = sample_environment(law, seed, m, L);
        const auto rho = stationary_torus(env, opts);
        const auto& D = rho.rho.domain_ptr();
        TransitionTable P(env, D);
        Vec f(static_cast<Eigen::Index>(D->size()));
        for (std::size_t r = 0; r < D->size(); ++r) f[static_cast<Eigen::Index>(r)] = zeta(env.at(D->point(r)));
        const auto g = semigroup_apply(P, f, sorted);
        for (const auto& gt : g) {
            std::vector<double> w(D->size());
            for (std::size_t r = 0; r < w.size(); ++r) w[r] = rho.rho[r] * gt[static_cast<Eigen::Index>(r)];
            const double mq = mean(w);
            for (std::size_t r = 0; r < w.size(); ++r) {
                const double c = gt[static_cast<Eigen::Index>(r)] - mq;
                w[r] = rho.rho[r] * c * c;
            }
            var[m].push_back(mean(w));
        }
        for (std::size_t j = 1; j < var[m].size(); ++j)
            if (var[m][j] > var[m][j - 1] * (1.0 + 1e-12) + 1e-300) mono[m] = 0;
    });
    VarDecay out;
    out.series.statistic = "var_Q_Pt_zeta";
    out.series.reference_exponent = -0.5 * law.dim();
    for (std::size_t j = 0; j < sorted.size(); ++j) {
        std::vector<double> v;
        for (const auto& vm : var) v.push_back(vm[j]);
        out.series.add(sorted[j], std::move(v));
    }
    for (char c : mono) out.monotone = out.monotone && c;
    bool ok;
    require_positive_all(out.series, ok);
    if (ok) out.series.refit();
    return out;
}

// ---- two-scale error ------------------------------------------------------------

HomogProblem HomogProblem::manufactured(int d, const Weights& abar, double psibar) {
    HomogProblem p;
    p.d = d;
    p.abar = abar;
    p.psibar = psibar;
    auto ub = [d](const Vec4& y) {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
        return (1.0 - s) * (1.0 - s) * (1.0 + y[0] * y[0]) + 1.0;
    };
    auto ukk = [d](const Vec4& y, int k) {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
        const double yk = y[static_cast<std::size_t>(k)];
        const double p1 = 1.0 + y[0] * y[0];
        double v = (-4.0 * (1.0 - s) + 8.0 * yk * yk) * p1;
        if (k == 0) v += -16.0 * y[0] * y[0] * (1.0 - s) + 2.0 * (1.0 - s) * (1.0 - s);
        return v;
    };
    p.ubar = ub;
    p.ubar_kk = ukk;
    p.g = ub;
    p.f = [d, abar, psibar, ukk](const Vec4& y) {
        double v = 0.0;
        for (int k = 0; k < d; ++k) v += 0.5 * abar[k] * ukk(y, k);
        return v / psibar;
    };
    return p;
}

HomogProblem HomogProblem::quadratic(int d, const Weights& abar, double psibar) {
    HomogProblem p;
    p.d = d;
    p.abar = abar;
    p.psibar = psibar;
    p.f = [](const Vec4& y) { return 1.0 + y[0] * y[0]; };
    p.g = [](const Vec4& y) { return y[0] * y[0] - 0.5 * y[1] * y[1]; };
    return p;
}

namespace {

// Reference ubar(y) for |y| <= 1 from a constant-coefficient solve on
// B_{fine_factor R}, multilinear between lattice points.
class FineReference {
public:
    FineReference(const HomogProblem& prob, double R) : prob_(prob), Rf_(prob.fine_factor * R) {
        const int d = prob.d;
        Environment flat(EnvironmentLaw::degenerate_constant(d, prob.abar), 0);
        auto D = make_ball(origin(), Rf_, d);
        ScalarField f(D, 0.0), b(D, 0.0);
        for (std::size_t r = 0; r < D->size(); ++r) {
            const Point x = D->point(r);
            if (r < D->n_interior()) f[r] = prob.f(scaled(x, Rf_)) * prob.psibar / (Rf_ * Rf_);
            else b[r] = prob.g(scaled(x, norm(x)));
        }
        u_ = solve_dirichlet(flat, D, f, b);
    }

    double operator()(const Vec4& y) const {
        const int d = prob_.d;
        Point base{};
        Vec4 frac{};
        for (int i = 0; i < d; ++i) {
            const double z = y[static_cast<std::size_t>(i)] * Rf_;
            base[i] = static_cast<int>(std::floor(z));
            frac[static_cast<std::size_t>(i)] = z - base[i];
        }
        double v = 0.0;
        for (int corner = 0; corner < (1 << d); ++corner) {
            Point c = base;
            double w = 1.0;
            for (int i = 0; i < d; ++i) {
                const bool up = (corner >> i) & 1;
                c[i] += up ? 1 : 0;
                w *= up ? frac[static_cast<std::size_t>(i)] : 1.0 - frac[static_cast<std::size_t>(i)];
            }
            if (w == 0.0) continue;
            const long r = u_.domain().index(c);
            v += w * (r >= 0 ? u_[static_cast<std::size_t>(r)] : prob_.g(scaled(c, norm(c))));
        }
        return v;
    }

private:
    const HomogProblem& prob_;
    double Rf_;
    ScalarField u_;
};

using Reference = std::function<double(const Vec4&)>;

Reference make_reference(const HomogProblem& prob, double R) {
    if (prob.ubar) return *prob.ubar;
    auto ref = std::make_shared<FineReference>(prob, R);
    return [ref](const Vec4& y) { return (*ref)(y); };
}

TwoScaleSample sample_with(const Environment& env, const HomogProblem& prob, const LocalFn& psi, double R,
                           const Reference& ref, bool with_bundle, const SolverOptions& opts) {
    const int d = prob.d;
    if (env.dim() != d) throw std::invalid_argument("environment and problem dimensions differ");
    auto D = make_ball(origin(), R, d);
    ScalarField f(D, 0.0), b(D, 0.0);
    for (std::size_t r = 0; r < D->size(); ++r) {
        const Point x = D->point(r);
        if (r < D->n_interior()) f[r] = prob.f(scaled(x, R)) * psi(env.at(x)) / (R * R);
        else b[r] = prob.g(scaled(x, norm(x)));
    }
    TwoScaleSample s;
    s.R = R;
    const auto u = solve_dirichlet(env, D, f, b, opts, &s.diag);
    for (std::size_t r = 0; r < D->n_interior(); ++r)
        s.error = std::max(s.error, std::abs(u[r] - ref(scaled(D->point(r), R))));
    if (with_bundle) {
        if (!prob.ubar_kk) throw std::invalid_argument("the expansion residual needs a closed-form ubar");
        const auto bundle = corrector_bundle(env, R, prob.abar, psi, prob.psibar, 5.0, opts);
        std::vector<double> w(D->size());
        for (std::size_t r = 0; r < D->size(); ++r) {
            const Point x = D->point(r);
            const Vec4 y = scaled(x, R);
            double v = u[r] - ref(y);
            for (int k = 0; k < d; ++k) v += bundle.v[static_cast<std::size_t>(k)].at(x) * (*prob.ubar_kk)(y, k) / (R * R);
            if (bundle.xi) v -= prob.f(y) * bundle.xi->at(x) / (R * R);
            w[r] = v;
        }
        TransitionTable P(env, D);
        const Vec wv = Eigen::Map<const Vec>(w.data(), static_cast<Eigen::Index>(w.size()));
        Vec Pw(wv.size());
        P.apply(wv, Pw);
        s.w_max = 0.0;
        s.lw_max = 0.0;
        for (std::size_t r = 0; r < D->n_interior(); ++r) {
            s.w_max = std::max(s.w_max, std::abs(w[r]));
            s.lw_max = std::max(s.lw_max, std::abs(Pw[static_cast<Eigen::Index>(r)] - w[r]));
        }
    }
    return s;
}

}  // namespace

TwoScaleSample two_scale_sample(const Environment& env, const HomogProblem& prob, const LocalFn& psi, double R,
                                bool with_bundle, const SolverOptions& opts) {
    return sample_with(env, prob, psi, R, make_reference(prob, R), with_bundle, opts);
}

RateSeries two_scale_control(const HomogProblem& prob, const std::vector<double>& Rs, const SolverOptions& opts) {
    Environment flat(EnvironmentLaw::degenerate_constant(prob.d, prob.abar), 0);
    const double c = prob.psibar;
    LocalFn psi = [c](const Weights&) { return c; };
    RateSeries s;
    s.statistic = "max_error_constant_env";
    s.reference_exponent = -2.0;
    for (double R : Rs) s.add(R, {sample_with(flat, prob, psi, R, make_reference(prob, R), false, opts).error});
    bool ok;
    require_positive_all(s, ok);
    if (ok) s.refit();
    return s;
}

TwoScaleResult two_scale_error(const EnvironmentLaw& law, const HomogProblem& prob, const LocalFn& psi,
                               const std::vector<double>& Rs, int M, std::uint64_t seed, int workers,
                               bool with_bundle, const SolverOptions& opts) {
    if (M < 8) throw std::invalid_argument("two_scale_error needs at least 8 environments");
    std::vector<Reference> refs;
    for (double R : Rs) refs.push_back(make_reference(prob, R));
    const std::size_t nR = Rs.size();
    std::vector<TwoScaleSample> out(nR * static_cast<std::size_t>(M));
    // largest radii first so the long solves do not trail at the end
    parallel_for(out.size(), workers, [&](std::size_t task) {
        const std::size_t j = nR - 1 - task / static_cast<std::size_t>(M);
        const std::size_t m = task % static_cast<std::size_t>(M);
        const auto env = sample_environment(law, seed, m);
        auto s = sample_with(env, prob, psi, Rs[j], refs[j], with_bundle, opts);
        s.env_index = m;
        out[j * static_cast<std::size_t>(M) + m] = std::move(s);
    });
    TwoScaleResult res;
    res.series.statistic = "max_error";
    res.series.reference_exponent = -1.0;
    for (std::size_t j = 0; j < nR; ++j) {
        std::vector<double> v;
        for (std::size_t m = 0; m < static_cast<std::size_t>(M); ++m) v.push_back(out[j * static_cast<std::size_t>(M) + m].error);
        res.series.add(Rs[j], std::move(v));
    }
    bool ok;
    require_positive_all(res.series, ok);
    if (ok) res.series.refit();
    res.samples = std::move(out);
    return res;
}

// ---- global tower -------------------------------------------------------------------

nlohmann::json TowerReport::to_json() const {
    return {{"R", Rs}, {"differences", differences}, {"phi_at_origin", phi_at_origin}};
}

TowerReport global_tower(const Environment& env, const std::vector<double>& Rs, const LocalFn& psi, double psibar,
                         double probe_radius, double K, const SolverOptions& opts) {
    const int d = env.dim();
    for (std::size_t i = 1; i < Rs.size(); ++i)
        if (!(Rs[i] > Rs[i - 1])) throw std::invalid_argument("tower radii must increase");
    auto probe = make_ball(origin(), probe_radius, d);
    TowerReport rep;
    rep.Rs = Rs;
    std::vector<double> prev;
    for (double R : Rs) {
        if (probe_radius + 1.0 >= K * R) throw std::invalid_argument("probe ball must lie inside B_{KR}");
        const auto phi = local_corrector_truncated(env, R, psi, psibar, K, opts);
        const double p0 = phi.at(origin());
        std::array<double, kMaxDim> grad{};
        if (d == 2)
            for (int i = 0; i < d; ++i) grad[static_cast<std::size_t>(i)] = phi.at(unit(i)) - p0;
        std::vector<double> cur(probe->n_interior());
        for (std::size_t r = 0; r < cur.size(); ++r) {
            const Point x = probe->point(r);
            double v = phi.at(x) - p0;
            for (int i = 0; i < d; ++i) v -= x[i] * grad[static_cast<std::size_t>(i)];
            cur[r] = v;
        }
        rep.phi_at_origin.push_back(cur[probe->row(origin())]);
        if (!prev.empty()) {
            double m = 0.0;
            for (std::size_t r = 0; r < cur.size(); ++r) m = std::max(m, std::abs(cur[r] - prev[r]));
            rep.differences.push_back(m);
        }
        prev = std::move(cur);
    }
    return rep;
}

// ---- QCLT ------------------------------------------------------------------------------

namespace {

// Kolmogorov distance of a lattice law (atoms v with masses p, sorted by v)
// from N(0, sigma^2).
double lattice_ks(const std::vector<std::pair<double, double>>& atoms, double sigma) {
    double c = 0.0, D = 0.0;
    for (const auto& [v, p] : atoms) {
        const double F = normal_cdf(v / sigma);
        D = std::max(D, std::abs(c - F));
        c += p;
        D = std::max(D, std::abs(c - F));
    }
    return D;
}

std::vector<QcltPoint> qclt_exact(const Environment& env, const std::vector<std::uint64_t>& ns, int dir,
                                  const Weights& abar) {
    const int d = env.dim();
    const std::uint64_t nmax = *std::max_element(ns.begin(), ns.end());
    // coordinates are martingales with per-step variance a_i <= 1
    const double amax = 1.0;
    const auto spread = [&](std::uint64_t k) {
        return std::min<std::uint64_t>(k, static_cast<std::uint64_t>(std::ceil(7.0 * std::sqrt(amax * static_cast<double>(k)))) + 2);
    };
    const int W = static_cast<int>(spread(nmax)) + 1;
    const std::size_t side = static_cast<std::size_t>(2 * W + 1);
    std::size_t vol = 1;
    for (int i = 0; i < d; ++i) vol *= side;
    if (vol > 20'000'000) throw std::invalid_argument("exact QCLT window too large; use sampled paths");
    std::vector<std::size_t> stride(static_cast<std::size_t>(d));
    stride[0] = 1;
    for (int i = 1; i < d; ++i) stride[static_cast<std::size_t>(i)] = stride[static_cast<std::size_t>(i - 1)] * side;
    std::vector<Weights> a(vol);
    std::vector<int> coord(vol * static_cast<std::size_t>(d));
    for (std::size_t s = 0; s < vol; ++s) {
        Point x{};
        std::size_t q = s;
        for (int i = 0; i < d; ++i) {
            x[i] = static_cast<int>(q % side) - W;
            q /= side;
        }
        for (int i = 0; i < d; ++i) coord[s * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)] = x[i];
        a[s] = env.at(x);
    }
    std::size_t c0 = 0;
    for (int i = 0; i < d; ++i) c0 += static_cast<std::size_t>(W) * stride[static_cast<std::size_t>(i)];
    std::vector<double> mu(vol, 0.0), nx(vol, 0.0);
    mu[c0] = 1.0;
    std::vector<QcltPoint> out;
    std::vector<std::uint64_t> want = ns;
    std::sort(want.begin(), want.end());
    std::size_t wi = 0;
    for (std::uint64_t k = 0; k <= nmax; ++k) {
        while (wi < want.size() && want[wi] == k) {
            std::vector<double> marg(side, 0.0);
            for (std::size_t s = 0; s < vol; ++s)
                if (mu[s] != 0.0)
                    marg[static_cast<std::size_t>(coord[s * static_cast<std::size_t>(d) + static_cast<std::size_t>(dir)] + W)] += mu[s];
            std::vector<std::pair<double, double>> atoms;
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < side; ++j) {
                const double v = static_cast<double>(static_cast<int>(j) - W);
                atoms.emplace_back(v, marg[j]);
                m1 += v * marg[j];
                m2 += v * v * marg[j];
            }
            const double var = abar[dir] * static_cast<double>(k);
            QcltPoint p;
            p.n = k;
            p.ks = k == 0 ? 1.0 : lattice_ks(atoms, std::sqrt(var));
            p.variance_ratio = k == 0 ? 0.0 : (m2 - m1 * m1) / var;
            out.push_back(p);
            ++wi;
        }
        if (k == nmax) break;
        const auto h = static_cast<int>(spread(k));
        // iterate over the box of half-width h around the origin
        std::vector<int> idx(static_cast<std::size_t>(d), -h);
        for (;;) {
            std::size_t s = c0;
            for (int i = 0; i < d; ++i)
                s = static_cast<std::size_t>(static_cast<long>(s) + static_cast<long>(idx[static_cast<std::size_t>(i)]) *
                                                                      static_cast<long>(stride[static_cast<std::size_t>(i)]));
            const double m = mu[s];
            if (m != 0.0) {
                for (int i = 0; i < d; ++i) {
                    const double q = 0.5 * a[s][i] * m;
                    nx[s + stride[static_cast<std::size_t>(i)]] += q;
                    nx[s - stride[static_cast<std::size_t>(i)]] += q;
                }
                mu[s] = 0.0;
            }
            int i = 0;
            while (i < d && idx[static_cast<std::size_t>(i)] == h) idx[static_cast<std::size_t>(i++)] = -h;
            if (i == d) break;
            ++idx[static_cast<std::size_t>(i)];
        }
        mu.swap(nx);
    }
    // restore the caller's order
    std::vector<QcltPoint> ordered;
    for (auto n : ns)
        for (const auto& p : out)
            if (p.n == n) {
                ordered.push_back(p);
                break;
            }
    return ordered;
}

}  // namespace

std::vector<QcltPoint> qclt_check(const Environment& env, const std::vector<std::uint64_t>& ns, int direction,
                                  const Weights& abar, bool exact, std::size_t N, double target, std::uint64_t seed,
                                  int workers) {
    const int d = env.dim();
    if (direction < 0 || direction >= d) throw std::invalid_argument("direction out of range");
    if (ns.empty()) throw std::invalid_argument("no step counts given");
    if (exact) return qclt_exact(env, ns, direction, abar);
    if (static_cast<double>(N) < 10.0 / (target * target))
        throw std::invalid_argument("too few paths for the target Kolmogorov distance");
    std::vector<std::uint64_t> sorted = ns;
    std::sort(sorted.begin(), sorted.end());
    const std::uint64_t nmax = sorted.back();
    if (nmax > kMaxPathSteps) throw WalkError("qclt: step count above the per-path cap");
    std::vector<std::vector<double>> pos(sorted.size(), std::vector<double>(N));
    const int radius = static_cast<int>(std::min<double>(std::ceil(7.0 * std::sqrt(static_cast<double>(nmax))), 600.0));
    EnvWindow w(env, origin(), radius);
    parallel_for((N + 255) / 256, workers, [&](std::size_t c) {
        for (std::size_t p = c * 256; p < std::min(N, (c + 1) * 256); ++p) {
            PathRng rng(seed, p);
            Point x{};
            std::size_t j = 0;
            for (std::uint64_t k = 1; k <= nmax; ++k) {
                x += jump_vector(choose_jump(w.at(x), d, rng.uniform()));
                while (j < sorted.size() && sorted[j] == k) pos[j++][p] = x[direction];
            }
        }
    });
    std::vector<QcltPoint> out;
    for (auto n : ns) {
        const std::size_t j = static_cast<std::size_t>(std::find(sorted.begin(), sorted.end(), n) - sorted.begin());
        const double sigma = std::sqrt(abar[direction] * static_cast<double>(n));
        QcltPoint q;
        q.n = n;
        q.ks = ks_statistic(pos[j], [sigma](double v) { return normal_cdf(v / sigma); });
        q.variance_ratio = variance(pos[j]) / (sigma * sigma);
        out.push_back(q);
    }
    return out;
}

}  // namespace rwre
