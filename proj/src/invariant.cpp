#include "rwre/invariant.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rwre/parallel.hpp"
#include "rwre/random.hpp"
#include "rwre/stats.hpp"

namespace rwre {

namespace {

constexpr double kStationaryTol = 1e-12;

int torus_period(const Environment& env) {
    if (!env.period()) throw std::invalid_argument("a periodic environment is required");
    const int L = *env.period();
    if (L < 4) throw std::invalid_argument("torus period must be at least 4");
    return L;
}

double stationarity_residual(const TransitionTable& P, const Vec& rho) {
    Vec out(rho.size());
    P.apply_adjoint(rho, out);
    return (out - rho).cwiseAbs().maxCoeff();
}

// Offsets z with |z|^2 < R^2.
std::vector<Point> ball_offsets(double R, int d) {
    std::vector<Point> out;
    const int r = static_cast<int>(std::ceil(R));
    Point z{};
    for (int i = 0; i < d; ++i) z[i] = -r;
    for (;;) {
        if (static_cast<double>(norm_sq(z)) < R * R) out.push_back(z);
        int i = 0;
        while (i < d && z[i] == r) z[i++] = -r;
        if (i == d) break;
        ++z[i];
    }
    return out;
}

std::vector<Point> block_centers(int L, double R, int d, bool pool) {
    int n = pool ? std::clamp(static_cast<int>(L / (2.0 * R)), 1, 16) : 1;
    std::vector<Point> out;
    Point k{};
    for (;;) {
        Point c{};
        for (int i = 0; i < d; ++i) c[i] = k[i] * L / n;
        out.push_back(c);
        int i = 0;
        while (i < d && k[i] == n - 1) k[i++] = 0;
        if (i == d) break;
        ++k[i];
    }
    return out;
}

}  // namespace

Environment sample_environment(const EnvironmentLaw& law, std::uint64_t seed, std::uint64_t m,
                               std::optional<int> period) {
    return Environment(law, hash_combine(seed, m), period);
}

double InvariantField::ball_mass(const Point& c, double R) const {
    double s = 0.0;
    for (const auto& z : ball_offsets(R, rho.domain().dim())) s += at(c + z);
    return s;
}

nlohmann::json InvariantField::diagnostics() const {
    return {{"L", L}, {"residual", residual}, {"doubly_stochastic", doubly_stochastic}, {"solver", diag.to_json()}};
}

InvariantField stationary_torus(const Environment& env, const SolverOptions& opts) {
    const int L = torus_period(env);
    const int d = env.dim();
    auto D = make_torus(L, d);
    TransitionTable P(env, D);
    const std::size_t n = D->size();
    InvariantField out;
    out.L = L;

    // every column of P summing to one makes the uniform measure stationary
    std::vector<double> colsum(n, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (int k = 0; k < P.degree(); ++k) colsum[static_cast<std::size_t>(P.target(r, k))] += P.prob(r, k);
    double dev = 0.0;
    for (double c : colsum) dev = std::max(dev, std::abs(c - 1.0));
    if (dev <= 1e-14) {
        out.doubly_stochastic = true;
        out.rho = ScalarField(D, 1.0);
        out.diag.method = "doubly-stochastic";
        out.diag.unknowns = n;
        out.residual = stationarity_residual(P, Vec::Ones(static_cast<Eigen::Index>(n)));
        return out;
    }

    // (I - P^T) rho = 0 with row 0 replaced by rho(0) = 1
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(n * static_cast<std::size_t>(P.degree() + 1));
    for (std::size_t r = 0; r < n; ++r) {
        if (r != 0) trip.emplace_back(static_cast<int>(r), static_cast<int>(r), 1.0);
        for (int k = 0; k < P.degree(); ++k) {
            const auto t = static_cast<std::size_t>(P.target(r, k));
            if (t != 0) trip.emplace_back(static_cast<int>(t), static_cast<int>(r), -P.prob(r, k));
        }
    }
    trip.emplace_back(0, 0, 1.0);
    SpMat M(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    M.setFromTriplets(trip.begin(), trip.end());
    M.makeCompressed();

    SolverOptions o = opts;
    o.lattice_dim = d;
    SparseSolver solver(M, o);
    Vec b = Vec::Zero(static_cast<Eigen::Index>(n));
    b[0] = 1.0;
    Vec rho = solver.solve(b, &out.diag);
    auto normalized = [&] { return Vec(rho * (static_cast<double>(n) / rho.sum())); };
    for (int round = 0; round < 4 && stationarity_residual(P, normalized()) > 0.1 * kStationaryTol; ++round) {
        const Vec r = b - M * rho;
        if (r.norm() == 0.0) break;
        rho += solver.solve(r);
    }
    // Rounding in the other rows accumulates in the pinned one; lazy power
    // steps rho <- (rho + rho P)/2 spread it out without moving the mass.
    Vec v = normalized();
    Vec vP(v.size());
    for (int k = 0; k < 200; ++k) {
        P.apply_adjoint(v, vP);
        if ((vP - v).cwiseAbs().maxCoeff() <= 0.25 * kStationaryTol) break;
        v = 0.5 * (v + vP);
    }
    out.residual = stationarity_residual(P, v);
    out.diag.residual = out.residual;
    if (out.residual > kStationaryTol) {
        std::ostringstream os;
        os << "stationary solve residual " << out.residual << " above " << kStationaryTol;
        throw SolveError(os.str(), out.residual);
    }
    if (v.minCoeff() <= 0.0) throw SolveError("stationary density is not positive", out.residual);
    out.rho = ScalarField(D, std::vector<double>(v.data(), v.data() + v.size()));
    return out;
}

double stationarity_functional(const Environment& env, const InvariantField& rho, const std::vector<double>& f) {
    const auto& D = rho.rho.domain_ptr();
    TransitionTable P(env, D);
    const Vec fv = Eigen::Map<const Vec>(f.data(), static_cast<Eigen::Index>(f.size()));
    Vec Pf(fv.size());
    P.apply(fv, Pf);
    std::vector<double> terms(f.size());
    for (std::size_t r = 0; r < f.size(); ++r) terms[r] = rho.rho[r] * (Pf[static_cast<Eigen::Index>(r)] - f[r]);
    return pairwise_sum(terms);
}

VMass v_mass(const Environment& env, const std::vector<double>& ts, double window, double max_deficit) {
    DomainPtr D;
    if (env.period()) {
        D = make_torus(*env.period(), env.dim());
    } else {
        if (!(window > 0.0)) throw std::invalid_argument("v_mass needs a window radius off the torus");
        D = make_ball(origin(), window, env.dim());
    }
    TransitionTable P(env, D);
    Vec e = Vec::Zero(static_cast<Eigen::Index>(D->size()));
    e[static_cast<Eigen::Index>(D->row(origin()))] = 1.0;
    VMass out;
    out.t = ts;
    for (const auto& v : semigroup_apply(P, e, ts)) {
        std::vector<double> c(v.data(), v.data() + v.size());
        out.value.push_back(pairwise_sum(c));
    }
    if (!env.period() && !ts.empty()) {
        out.deficit = heat_semigroup(env, origin(), *std::max_element(ts.begin(), ts.end()), D).deficit;
        if (out.deficit > max_deficit) {
            std::ostringstream os;
            os << "v_mass window deficit " << out.deficit << " exceeds " << max_deficit;
            throw std::runtime_error(os.str());
        }
    }
    return out;
}

RateSeries block_average_stats(const EnvironmentLaw& law, int L, const std::vector<double>& Rs, int M,
                               std::uint64_t seed, const BlockOptions& opts) {
    if (M < 8) throw std::invalid_argument("block_average_stats needs at least 8 environments");
    for (double R : Rs)
        if (!(R > 0.0) || R > L / 8.0) throw std::invalid_argument("block radii must lie in (0, L/8]");
    const int d = law.dim();
    std::vector<std::vector<std::vector<double>>> dev(static_cast<std::size_t>(M));
    parallel_for(static_cast<std::size_t>(M), opts.workers, [&](std::size_t m) {
        const auto env = sample_environment(law, seed, m, L);
        const auto rho = stationary_torus(env, opts.solver);
        for (double R : Rs) {
            const auto offs = ball_offsets(R, d);
            std::vector<double> v;
            for (const auto& c : block_centers(L, R, d, opts.pool_centers)) {
                double s = 0.0;
                for (const auto& z : offs) s += rho.at(c + z);
                v.push_back(std::abs(s / static_cast<double>(offs.size()) - 1.0));
            }
            dev[m].push_back(std::move(v));
        }
    });
    RateSeries out;
    out.statistic = "abs_block_deviation";
    out.reference_exponent = -0.5 * d;
    for (std::size_t j = 0; j < Rs.size(); ++j) {
        std::vector<double> all;
        for (const auto& per_env : dev) all.insert(all.end(), per_env[j].begin(), per_env[j].end());
        out.add(Rs[j], std::move(all));
    }
    const auto v = out.values();
    if (v.size() >= 3 && std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0; })) out.refit();
    return out;
}

nlohmann::json CovarianceDecay::to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : points) pts.push_back({{"offset", p.offset}, {"cov", p.cov}, {"jackknife_error", p.jackknife_error}});
    nlohmann::json j{{"points", pts}, {"fitted", fitted}};
    if (fitted) j["series"] = series.to_json();
    return j;
}

CovarianceDecay covariance_decay(const EnvironmentLaw& law, int L, const std::vector<int>& offsets, int M,
                                 std::uint64_t seed, const BlockOptions& opts) {
    if (M < 2) throw std::invalid_argument("covariance_decay needs at least 2 environments");
    for (int r : offsets)
        if (r < 0 || r > L / 8.0) throw std::invalid_argument("offsets must lie in [0, L/8]");
    const int d = law.dim();
    std::vector<std::vector<double>> c(static_cast<std::size_t>(M));
    parallel_for(static_cast<std::size_t>(M), opts.workers, [&](std::size_t m) {
        const auto env = sample_environment(law, seed, m, L);
        const auto rho = stationary_torus(env, opts.solver);
        const auto& D = rho.rho.domain();
        for (int r : offsets) {
            std::vector<double> terms;
            terms.reserve(D.size() * static_cast<std::size_t>(d));
            for (std::size_t row = 0; row < D.size(); ++row) {
                const Point y = D.point(row);
                for (int i = 0; i < d; ++i) terms.push_back((rho.rho[row] - 1.0) * (rho.at(y + r * unit(i)) - 1.0));
            }
            c[m].push_back(mean(terms));
        }
    });
    CovarianceDecay out;
    out.series.statistic = "abs_covariance";
    out.series.reference_exponent = -static_cast<double>(d);
    for (std::size_t j = 0; j < offsets.size(); ++j) {
        std::vector<double> s;
        for (const auto& per_env : c) s.push_back(per_env[j]);
        const double full = mean(s);
        // leave-one-environment-out
        std::vector<double> loo(s.size());
        const double total = pairwise_sum(s);
        for (std::size_t m = 0; m < s.size(); ++m) loo[m] = (total - s[m]) / static_cast<double>(s.size() - 1);
        const double lm = mean(loo);
        double acc = 0.0;
        for (double v : loo) acc += (v - lm) * (v - lm);
        const double n = static_cast<double>(s.size());
        out.points.push_back({static_cast<double>(offsets[j]), full, std::sqrt((n - 1.0) / n * acc)});
        RatePoint p;
        p.scale = offsets[j];
        p.value = std::abs(full);
        p.mean = full;
        p.error = out.points.back().jackknife_error;
        p.samples = std::move(s);
        out.series.points.push_back(std::move(p));
    }
    // fit over positive offsets with positive covariance
    std::vector<double> xs, ys;
    bool ok = true;
    for (const auto& p : out.points) {
        if (p.offset <= 0.0) continue;
        xs.push_back(p.offset);
        ys.push_back(p.cov);
        ok = ok && p.cov > 0.0;
    }
    if (ok && xs.size() >= 3) {
        out.series.fit = fit_rate(xs, ys);
        out.fitted = true;
    }
    return out;
}

nlohmann::json SensitivityResult::to_json() const { return {{"lhs", lhs}, {"rhs", rhs}, {"gap", gap}}; }

std::vector<SensitivityResult> sensitivity_check(const Environment& env, const Point& y, const Point& x,
                                                 const std::vector<double>& R_greens, std::uint64_t draw,
                                                 const SolverOptions& opts) {
    torus_period(env);
    const auto rho = stationary_torus(env, opts);
    const auto rs = resample(env, y, draw);
    const auto& env2 = rs.environment();
    const double lhs = rs.new_value() == rs.old_value() ? 0.0 : stationary_torus(env2, opts).at(x) - rho.at(x);
    const int d = env.dim();
    std::vector<SensitivityResult> out;
    for (double Rg : R_greens) {
        SensitivityResult s;
        s.lhs = lhs;
        if (!(rs.new_value() == rs.old_value())) {
            if (!(static_cast<double>(norm_sq(y - x)) + 2.0 * norm(y - x) + 1.0 < Rg * Rg))
                throw std::invalid_argument("y and its neighbours must lie inside B_{R_green}(x)");
            const auto G = green_ball(env2, Rg, x, x, opts);
            double acc = 0.0;
            for (int i = 0; i < d; ++i) {
                const double dw = 0.5 * (rs.new_value()[i] - rs.old_value()[i]);
                acc += dw * (G.at(y + unit(i)) + G.at(y - unit(i)) - 2.0 * G.at(y));
            }
            s.rhs = rho.at(y) * acc;
        }
        const double scale = std::abs(s.lhs);
        s.gap = scale > 0.0 ? std::abs(s.lhs - s.rhs) / scale : std::abs(s.rhs);
        out.push_back(s);
    }
    return out;
}

SensitivityResult sensitivity_check(const Environment& env, const Point& y, const Point& x, double R_green,
                                    std::uint64_t draw, const SolverOptions& opts) {
    return sensitivity_check(env, y, x, std::vector<double>{R_green}, draw, opts).front();
}

}  // namespace rwre
