#include "rwre/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include "rwre/homog.hpp"
#include "rwre/invariant.hpp"
#include "rwre/kernel.hpp"
#include "rwre/parallel.hpp"
#include "rwre/stats.hpp"
#include "rwre/walk.hpp"

namespace rwre {

bool RunReport::passed() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

nlohmann::json RunReport::summary() const {
    auto vs = nlohmann::json::array();
    for (const auto& v : verdicts) vs.push_back(v.to_json());
    return {{"experiment", config.experiment},
            {"config", config.to_json()},
            {"statistics", statistics},
            {"verdicts", vs},
            {"pass", passed()},
            {"wall_seconds", wall_seconds}};
}

namespace {

using Json = nlohmann::json;

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string fmt_short(double v) {
    std::ostringstream os;
    os << std::setprecision(4) << v;
    return os.str();
}

// Lattice points of a Euclidean ball, up to the boundary layer.
double ball_volume(double R, int d) {
    const double r = R + 1.0;
    switch (d) {
        case 2: return std::numbers::pi * r * r;
        case 3: return 4.0 / 3.0 * std::numbers::pi * r * r * r;
        default: return std::numbers::pi * std::numbers::pi / 2.0 * std::pow(r, 4);
    }
}

double max_of(const std::vector<double>& v, double fallback = 0.0) {
    return v.empty() ? fallback : *std::max_element(v.begin(), v.end());
}

LocalFn make_psi(const ExperimentConfig& c) {
    if (c.psi == "constant") return [](const Weights&) { return 1.0; };
    return [](const Weights& a) { return a[0]; };
}

struct Truth {
    Weights abar;
    double psibar = 0.0;
    std::string source;
};

// (abar, psibar): exact for deterministic and exchangeable laws with psi = a_1,
// otherwise the torus-exact estimator averaged over environments.
Truth effective_for(const ExperimentConfig& c, const EnvironmentLaw& law, int workers) {
    Truth t;
    if (law.deterministic()) {
        t.abar = law.draw(0);
        t.psibar = make_psi(c)(t.abar);
        t.source = "deterministic";
        return t;
    }
    if (law.exchangeable()) {
        for (int i = 0; i < c.d; ++i) t.abar[i] = 1.0 / c.d;
        t.psibar = c.psi == "constant" ? 1.0 : 1.0 / c.d;
        t.source = "exchangeable";
        return t;
    }
    const int L = c.L > 0 ? c.L : (c.d == 2 ? 64 : 24);
    const auto e = effective_truth(law, make_psi(c), L, 8, hash_combine(c.seed, 0xabba), workers, c.solver);
    t.abar = e.abar;
    t.psibar = e.psibar;
    t.source = "torus L=" + std::to_string(L);
    return t;
}

Json weights_json(const Weights& w, int d) {
    auto j = Json::array();
    for (int i = 0; i < d; ++i) j.push_back(w[i]);
    return j;
}

Verdict slope_verdict(const std::string& name, const RateSeries& s, double lo, double hi) {
    Verdict v{name, false, ""};
    if (s.fit.points < 3) {
        v.detail = "no fit (needs three positive points)";
        return v;
    }
    v.pass = s.fit.within(lo, hi);
    v.detail = "slope " + fmt_short(s.fit.slope) + " +- " + fmt_short(s.fit.band) + ", accepted [" + fmt_short(lo) +
               ", " + fmt_short(hi) + "]";
    return v;
}

std::pair<double, double> band_or(const ExperimentConfig& c, double lo, double hi) {
    return c.band ? *c.band : std::pair{lo, hi};
}

bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return true;
}

std::vector<double> scales_or(const ExperimentConfig& c, std::vector<double> fallback) {
    return c.scales.empty() ? fallback : c.scales;
}

using Runner = std::function<void(const ExperimentConfig&, int, RunReport&)>;

// ---- env-check ------------------------------------------------------------------

void run_env_check(const ExperimentConfig& c, int, RunReport& rep) {
    const auto law = c.make_law();
    const int W = 8;
    const auto box = make_box(origin(), W, c.d);
    std::ostringstream csv;
    csv << "env,min_weight,max_trace_error,deterministic,resample_local\n";
    double min_w = 1.0, max_tr = 0.0;
    bool det = true, local = true;
    for (int m = 0; m < c.M; ++m) {
        const auto env = sample_environment(law, c.seed, static_cast<std::uint64_t>(m));
        const auto again = sample_environment(law, c.seed, static_cast<std::uint64_t>(m));
        const auto res = resample(env, origin(), 1);
        double mw = 1.0, tr = 0.0;
        bool d_ok = true, l_ok = true;
        for (std::size_t r = 0; r < box->size(); ++r) {
            const Point x = box->point(r);
            const Weights a = env.at(x);
            double s = 0.0;
            for (int i = 0; i < c.d; ++i) {
                mw = std::min(mw, a[i]);
                s += a[i];
            }
            tr = std::max(tr, std::abs(s - 1.0));
            d_ok = d_ok && again.at(x) == a;
            if (!(x == origin())) l_ok = l_ok && res.environment().at(x) == a;
        }
        l_ok = l_ok && res.environment().at(origin()) == res.new_value();
        csv << m << ',' << fmt(mw) << ',' << fmt(tr) << ',' << d_ok << ',' << l_ok << '\n';
        min_w = std::min(min_w, mw);
        max_tr = std::max(max_tr, tr);
        det = det && d_ok;
        local = local && l_ok;
    }
    rep.csv = csv.str();
    rep.statistics = {{"min_weight", min_w}, {"max_trace_error", max_tr}, {"window_half_width", W}};
    rep.verdicts.push_back({"ellipticity", min_w >= 2.0 * law.kappa() - 1e-15,
                            "min a_i " + fmt_short(min_w) + " vs 2 kappa " + fmt_short(2.0 * law.kappa())});
    rep.verdicts.push_back({"trace", max_tr <= 1e-12, "max |tr a - 1| " + fmt_short(max_tr)});
    rep.verdicts.push_back({"determinism", det, "field re-materialized from (law, seed)"});
    rep.verdicts.push_back({"resample-locality", local, "only the resampled site changes"});
}

// ---- dirichlet --------------------------------------------------------------------

void run_dirichlet(const ExperimentConfig& c, int workers, RunReport& rep) {
    const auto law = c.make_law();
    const auto Rs = scales_or(c, {4, 8, 16});
    const std::size_t nR = Rs.size();
    std::vector<std::array<double, 2>> out(nR * static_cast<std::size_t>(c.M));
    parallel_for(out.size(), workers, [&](std::size_t task) {
        const std::size_t j = task / static_cast<std::size_t>(c.M), m = task % static_cast<std::size_t>(c.M);
        const auto env = sample_environment(law, c.seed, m);
        auto D = make_ball(origin(), Rs[j], c.d);
        ScalarField zero(D, 0.0), affine(D, 0.0), rough(D, 0.0);
        CounterStream cs(hash_combine(c.seed, task));
        double bmax = -1e300, bmin = 1e300;
        for (std::size_t r = D->n_interior(); r < D->size(); ++r) {
            affine[r] = D->point(r)[0];
            rough[r] = 2.0 * to_unit(cs.bits(r)) - 1.0;
            bmax = std::max(bmax, rough[r]);
            bmin = std::min(bmin, rough[r]);
        }
        DirichletSystem sys(env, D, 0.0, {}, c.solver);
        const auto ua = sys.solve(zero, affine);
        const auto ur = sys.solve(zero, rough);
        double aerr = 0.0, excess = 0.0;
        for (std::size_t r = 0; r < D->n_interior(); ++r) {
            aerr = std::max(aerr, std::abs(ua[r] - D->point(r)[0]));
            excess = std::max({excess, ur[r] - bmax, bmin - ur[r]});
        }
        out[task] = {aerr / std::max(1.0, Rs[j]), excess};
    });
    std::ostringstream csv;
    csv << "R,env,affine_error,max_principle_excess\n";
    double aerr = 0.0, excess = 0.0;
    for (std::size_t t = 0; t < out.size(); ++t) {
        csv << fmt(Rs[t / static_cast<std::size_t>(c.M)]) << ',' << t % static_cast<std::size_t>(c.M) << ','
            << fmt(out[t][0]) << ',' << fmt(out[t][1]) << '\n';
        aerr = std::max(aerr, out[t][0]);
        excess = std::max(excess, out[t][1]);
    }
    rep.csv = csv.str();
    rep.statistics = {{"max_affine_error_relative", aerr}, {"max_principle_excess", excess}};
    const double tol = c.threshold.value_or(1e-10);
    rep.verdicts.push_back({"affine-reproduction", aerr <= tol, "max |u - x_1| / R = " + fmt_short(aerr)});
    rep.verdicts.push_back({"maximum-principle", excess <= tol, "max excess over boundary range " + fmt_short(excess)});
}

// ---- green ------------------------------------------------------------------------------

void run_green(const ExperimentConfig& c, int workers, RunReport& rep) {
    const auto law = c.make_law();
    const auto Rs = scales_or(c, {4, 6});
    const std::size_t N = c.N ? c.N : 4000;
    std::ostringstream csv;
    csv << "R,env,green_sum,dirichlet,mc_mean,mc_stderr\n";
    double max_gap = 0.0, max_z = 0.0;
    Json stats = Json::object();
    if (c.d == 2) {
        Environment srw(EnvironmentLaw::degenerate_constant(2), 0);
        const auto G = green_ball(srw, 2.0, origin(), origin(), c.solver);
        const double g0 = G.at(origin()), g1 = G.at(unit(0)), g11 = G.at(make_point(1, 1));
        const double err = std::max({std::abs(g0 - 1.5), std::abs(g1 - 0.5), std::abs(g11 - 0.25)});
        stats["srw_R2"] = {g0, g1, g11};
        rep.verdicts.push_back({"srw-green-R2", err <= 1e-12,
                                "G(0,0)=" + fmt_short(g0) + " G(e1,0)=" + fmt_short(g1) + " G((1,1),0)=" + fmt_short(g11)});
    }
    for (double R : Rs) {
        for (int m = 0; m < c.M; ++m) {
            const auto env = sample_environment(law, c.seed, static_cast<std::uint64_t>(m));
            auto D = make_ball(origin(), R, c.d);
            DirichletSystem sys(env, D, 0.0, {}, c.solver);
            // sum_y G(0, y): one point source per interior y
            std::vector<double> g(D->n_interior());
            parallel_for(g.size(), workers, [&](std::size_t y) {
                ScalarField f(D, 0.0);
                f[y] = -1.0;
                g[y] = sys.solve(f).at(origin());
            });
            double gsum = 0.0;
            for (double v : g) gsum += v;
            const double tau = sys.solve(ScalarField(D, -1.0)).at(origin());
            const auto mc = exit_time(env, origin(), R, origin(), N, hash_combine(c.seed, m), workers).tau;
            max_gap = std::max(max_gap, std::abs(gsum - tau) / std::max(1.0, tau));
            max_z = std::max(max_z, std::abs(mc.mean - tau) / mc.std_error);
            csv << fmt(R) << ',' << m << ',' << fmt(gsum) << ',' << fmt(tau) << ',' << fmt(mc.mean) << ','
                << fmt(mc.std_error) << '\n';
        }
    }
    rep.csv = csv.str();
    stats["max_sum_gap"] = max_gap;
    stats["max_mc_z"] = max_z;
    rep.statistics = stats;
    rep.verdicts.push_back({"green-sum", max_gap <= c.threshold.value_or(1e-9), "max relative gap " + fmt_short(max_gap)});
    // 3 sigma for each of M*|R| comparisons, Bonferroni-widened
    const double zmax = std::max(3.0, std::sqrt(2.0 * std::log(20.0 * static_cast<double>(c.M * Rs.size()))));
    rep.verdicts.push_back({"exit-time-mc", max_z <= zmax, "max |z| " + fmt_short(max_z) + " (limit " + fmt_short(zmax) + ")"});
}

// ---- invariant measure ----------------------------------------------------------------

void run_rho_average(const ExperimentConfig& c, int workers, RunReport& rep) {
    const auto law = c.make_law();
    BlockOptions o;
    o.workers = workers;
    o.solver = c.solver;
    const auto s = block_average_stats(law, c.L > 0 ? c.L : 256, scales_or(c, {8, 16, 32}), c.M, c.seed, o);
    std::ostringstream csv;
    s.write_csv(csv, "R");
    rep.csv = csv.str();
    rep.statistics = s.to_json();
    const auto [lo, hi] = band_or(c, c.d == 2 ? -1.35 : -0.5 * c.d - 0.35, c.d == 2 ? -0.70 : -0.5 * c.d + 0.35);
    rep.verdicts.push_back(slope_verdict("block-average-slope", s, lo, hi));
}

void run_rho_cov(const ExperimentConfig& c, int workers, RunReport& rep) {
    const auto law = c.make_law();
    BlockOptions o;
    o.workers = workers;
    o.solver = c.solver;
    const int L = c.L > 0 ? c.L : 32;
    std::vector<int> offsets = c.offsets;
    if (offsets.empty())
        for (int r = 0; r <= L / 8; ++r) offsets.push_back(r);
    const auto cd = covariance_decay(law, L, offsets, c.M, c.seed, o);
    std::ostringstream csv;
    csv << "offset,cov,jackknife_error\n";
    for (const auto& p : cd.points) csv << fmt(p.offset) << ',' << fmt(p.cov) << ',' << fmt(p.jackknife_error) << '\n';
    rep.csv = csv.str();
    rep.statistics = cd.to_json();
    const double c0 = std::abs(cd.points.front().cov), cl = std::abs(cd.points.back().cov);
    rep.verdicts.push_back({"covariance-decays", cl < c0 || c0 == 0.0,
                            "|cov| " + fmt_short(c0) + " at offset " + fmt_short(cd.points.front().offset) + ", " +
                                fmt_short(cl) + " at " + fmt_short(cd.points.back().offset)});
    if (c.band) {
        if (cd.fitted) rep.verdicts.push_back(slope_verdict("covariance-slope", cd.series, c.band->first, c.band->second));
        else rep.verdicts.push_back({"covariance-slope", false, "covariances not all positive; no fit"});
    }
}

void run_rho_sensitivity(const ExperimentConfig& c, int workers, RunReport& rep) {
    const auto law = c.make_law();
    const int L = c.L > 0 ? c.L : 32;
    const auto radii = c.green_radii.empty() ? std::vector<double>{12, 16} : c.green_radii;
    std::vector<std::vector<SensitivityResult>> res(static_cast<std::size_t>(c.M));
    parallel_for(res.size(), workers, [&](std::size_t m) {
        const auto env = sample_environment(law, c.seed, m, L);
        // resample a site next to or diagonal from the observation point
        CounterStream cs(hash_combine(c.seed, 0x5e45 + m));
        Point y{};
        for (int i = 0; i < c.d; ++i) y[i] = static_cast<int>(cs.bits(static_cast<std::uint64_t>(i)) % 3) - 1;
        if (y == origin()) y = unit(0);
        res[m] = sensitivity_check(env, y, origin(), radii, m, c.solver);
    });
    std::ostringstream csv;
    csv << "trial,R_green,lhs,rhs,gap\n";
    std::vector<double> medians;
    for (std::size_t k = 0; k < radii.size(); ++k) {
        std::vector<double> gaps;
        for (std::size_t m = 0; m < res.size(); ++m) {
            const auto& r = res[m][k];
            csv << m << ',' << fmt(radii[k]) << ',' << fmt(r.lhs) << ',' << fmt(r.rhs) << ',' << fmt(r.gap) << '\n';
            gaps.push_back(r.gap);
        }
        medians.push_back(median(gaps));
    }
    rep.csv = csv.str();
    rep.statistics = {{"R_green", radii}, {"median_gap", medians}};
    const double tol = c.threshold.value_or(0.15);
    rep.verdicts.push_back({"median-gap", medians.front() <= tol,
                            "median gap " + fmt_short(medians.front()) + " at R_green " + fmt_short(radii.front())});
    if (radii.size() > 1)
        rep.verdicts.push_back({"gap-decreases", strictly_decreasing(medians), "medians over increasing R_green"});
}

// ---- correctors -------------------------------------------------------------------------

void run_corrector_ap(const ExperimentConfig& c, int workers, RunReport& rep) {
    const auto law = c.make_law();
    const auto psi = make_psi(c);
    const auto truth = effective_for(c, law, workers);
    const auto Rs = scales_or(c, c.d == 2 ? std::vector<double>{4, 8, 16, 32} : std::vector<double>{2, 4, 6, 8});
    const std::size_t nR = Rs.size(), M = static_cast<std::size_t>(c.M);
    std::vector<std::array<double, 3>> out(nR * M);  // |phi(0)|, residual, sup|phi| / (R^2 sup|psi - psibar|)
    const double spread = std::max(1.0 - truth.psibar, truth.psibar);
    parallel_for(out.size(), workers, [&](std::size_t t) {
        const std::size_t j = t / M, m = t % M;
        const auto env = sample_environment(law, c.seed, m);
        const double R = Rs[j];
        const auto phi = approx_corrector(env, R, psi, truth.psibar, origin(), static_cast<int>(std::ceil(6 * R)), c.solver);
        out[t] = {std::abs(phi.at(origin())), corrector_residual(env, phi, R, psi, truth.psibar, false),
                  phi.max_abs() / (R * R * spread)};
    });
    RateSeries s;
    s.statistic = "abs_phi_ap_at_0";
    s.reference_exponent = rate_exponent("mu", c.d);
    std::ostringstream csv;
    csv << "R,env,abs_phi0,residual,envelope_ratio\n";
    double res = 0.0, env_ratio = 0.0;
    for (std::size_t j = 0; j < nR; ++j) {
        std::vector<double> v;
        for (std::size_t m = 0; m < M; ++m) {
            const auto& o = out[j * M + m];
            csv << fmt(Rs[j]) << ',' << m << ',' << fmt(o[0]) << ',' << fmt(o[1]) << ',' << fmt(o[2]) << '\n';
            v.push_back(o[0]);
            res = std::max(res, o[1]);
            env_ratio = std::max(env_ratio, o[2]);
        }
        s.add(Rs[j], v);
    }
    if (std::all_of(s.points.begin(), s.points.end(), [](const RatePoint& p) { return p.value > 0; }) && nR >= 3) s.refit();
    Json stats = {{"series", s.to_json()}, {"max_residual", res}, {"max_envelope_ratio", env_ratio},
                  {"psibar", truth.psibar}, {"psibar_source", truth.source}};
    rep.verdicts.push_back({"residual", res <= 1e-10, "max relative residual " + fmt_short(res)});
    rep.verdicts.push_back({"envelope", env_ratio <= 1.0 + 1e-9, "max sup|phi| / (R^2 sup|psi - psibar|) " + fmt_short(env_ratio)});
    if (!law.deterministic() && c.psi != "constant") {
        const auto [lo, hi] = band_or(c, s.reference_exponent - 0.3, s.reference_exponent + 0.3);
        rep.verdicts.push_back(slope_verdict("phi0-growth", s, lo, hi));
    }
    if (c.N > 0) {
        // walk representation at the origin of environment 0, largest R
        const auto env = sample_environment(law, c.seed, 0);
        const double R = Rs.back();
        const auto phi = approx_corrector(env, R, psi, truth.psibar, origin(), static_cast<int>(std::ceil(6 * R)), c.solver);
        const auto mc = mc_approx_corrector(env, R, psi, truth.psibar, origin(), c.N, hash_combine(c.seed, 77), workers);
        const double z = std::abs(mc.mean - phi.at(origin())) / mc.std_error;
        stats["mc"] = mc.to_json();
        stats["mc_z"] = z;
        rep.verdicts.push_back({"solver-vs-mc", z <= 3.0, "|z| " + fmt_short(z)});
    }
    rep.csv = csv.str();
    rep.statistics = stats;
}

void run_corrector_loc(const ExperimentConfig& c, int workers, RunReport& rep) {
    const auto law = c.make_law();
    const auto psi = make_psi(c);
    const auto truth = effective_for(c, law, workers);
    const auto Rs = scales_or(c, c.d == 2 ? std::vector<double>{4, 8, 16, 32} : std::vector<double>{2, 3, 4, 6, 8});
    const std::size_t nR = Rs.size(), M = static_cast<std::size_t>(c.M);
    std::vector<std::array<double, 3>> out(nR * M);  // |phi(0)|, L^d mean of |grad phi| on B_R, residual
    parallel_for(out.size(), workers, [&](std::size_t t) {
        const std::size_t j = t / M, m = t % M;
        const auto env = sample_environment(law, c.seed, m);
        const double R = Rs[j];
        const auto phi = c.K >= 5.0 ? local_corrector(env, R, psi, truth.psibar, c.K, c.solver)
                                    : local_corrector_truncated(env, R, psi, truth.psibar, c.K, c.solver);
        double acc = 0.0;
        std::size_t n = 0;
        const auto& D = phi.domain();
        for (std::size_t r = 0; r < D.n_interior(); ++r) {
            const Point x = D.point(r);
            if (!(static_cast<double>(norm_sq(x)) < R * R)) continue;
            double g = 0.0;
            for (int i = 0; i < c.d; ++i) g = std::max(g, std::abs(nabla(phi, x, unit(i))));
            acc += std::pow(g, c.d);
            ++n;
        }
        out[t] = {std::abs(phi.at(origin())), std::pow(acc / static_cast<double>(n), 1.0 / c.d),
                  corrector_residual(env, phi, R, psi, truth.psibar, true)};
    });
    RateSeries value, grad;
    value.statistic = "abs_phi_loc_at_0";
    value.reference_exponent = rate_exponent("mu", c.d);
    grad.statistic = "grad_phi_loc_Ld_norm";
    grad.reference_exponent = rate_exponent("delta", c.d);
    std::ostringstream csv;
    csv << "R,env,abs_phi0,grad_norm,residual\n";
    double res = 0.0;
    for (std::size_t j = 0; j < nR; ++j) {
        std::vector<double> v, g;
        for (std::size_t m = 0; m < M; ++m) {
            const auto& o = out[j * M + m];
            csv << fmt(Rs[j]) << ',' << m << ',' << fmt(o[0]) << ',' << fmt(o[1]) << ',' << fmt(o[2]) << '\n';
            v.push_back(o[0]);
            g.push_back(o[1]);
            res = std::max(res, o[2]);
        }
        value.add(Rs[j], v);
        grad.add(Rs[j], g);
    }
    const bool random = !law.deterministic() && c.psi != "constant";
    if (random && nR >= 3) {
        value.refit();
        grad.refit();
    }
    rep.csv = csv.str();
    rep.statistics = {{"value", value.to_json()}, {"gradient", grad.to_json()}, {"max_residual", res}, {"K", c.K}};
    rep.verdicts.push_back({"residual", res <= 1e-10, "max relative residual " + fmt_short(res)});
    if (random && c.d >= 3) {
        const auto [lo, hi] = band_or(c, -0.25, 0.25);
        rep.verdicts.push_back(slope_verdict("gradient-bounded", grad, lo, hi));
    }
}

void run_global_tower(const ExperimentConfig& c, int workers, RunReport& rep) {
    const auto law = c.make_law();
    const auto psi = make_psi(c);
    const auto truth = effective_for(c, law, workers);
    const auto Rs = scales_or(c, {8, 16, 32});
    std::vector<TowerReport> towers(static_cast<std::size_t>(c.M));
    parallel_for(towers.size(), workers, [&](std::size_t m) {
        towers[m] = global_tower(sample_environment(law, c.seed, m), Rs, psi, truth.psibar, c.probe_radius, c.K, c.solver);
    });
    std::ostringstream csv;
    csv << "env,R_from,R_to,difference\n";
    std::vector<double> medians;
    for (std::size_t k = 0; k + 1 < Rs.size(); ++k) {
        std::vector<double> v;
        for (std::size_t m = 0; m < towers.size(); ++m) {
            csv << m << ',' << fmt(Rs[k]) << ',' << fmt(Rs[k + 1]) << ',' << fmt(towers[m].differences[k]) << '\n';
            v.push_back(towers[m].differences[k]);
        }
        medians.push_back(median(v));
    }
    rep.csv = csv.str();
    rep.statistics = {{"R", Rs}, {"median_difference", medians}, {"probe_radius", c.probe_radius}, {"K", c.K}};
    if (law.deterministic() || c.psi == "constant")
        rep.verdicts.push_back({"zero-differences", max_of(medians) == 0.0, "constant psi"});
    else
        rep.verdicts.push_back({"cauchy-trend", strictly_decreasing(medians), "median successive differences decrease"});
}

// ---- homogenization ----------------------------------------------------------------------

void run_homog_rate(const ExperimentConfig& c, int workers, RunReport& rep) {
    const auto law = c.make_law();
    const auto psi = make_psi(c);
    const auto truth = effective_for(c, law, workers);
    const auto Rs = scales_or(c, {8, 12, 16, 24, 32});
    const auto prob = HomogProblem::manufactured(c.d, truth.abar, truth.psibar);
    const auto res = two_scale_error(law, prob, psi, Rs, std::max(c.M, 8), c.seed, workers, c.with_bundle, c.solver);
    const auto ctl = two_scale_control(prob, Rs, c.solver);
    std::ostringstream csv;
    csv << "R,env,error,w_max,lw_max\n";
    for (const auto& s : res.samples)
        csv << fmt(s.R) << ',' << s.env_index << ',' << fmt(s.error) << ',' << fmt(s.w_max) << ',' << fmt(s.lw_max) << '\n';
    for (const auto& p : ctl.points) csv << fmt(p.scale) << ",control," << fmt(p.value) << ",-1,-1\n";
    rep.csv = csv.str();
    double cmax = 0.0;
    bool below = true;
    for (std::size_t j = 0; j < Rs.size(); ++j) {
        cmax = std::max(cmax, ctl.points[j].value * Rs[j] * Rs[j]);
        below = below && ctl.points[j].value < res.series.points[j].value;
    }
    rep.statistics = {{"series", res.series.to_json()}, {"control", ctl.to_json()}, {"control_R2_max", cmax},
                      {"abar", weights_json(truth.abar, c.d)}, {"psibar", truth.psibar}, {"truth_source", truth.source}};
    const auto [lo, hi] = band_or(c, -1.3, c.d == 2 ? -0.6 : -0.7);
    rep.verdicts.push_back(slope_verdict("homogenization-slope", res.series, lo, hi));
    const double C = c.threshold.value_or(5.0);
    rep.verdicts.push_back({"control-second-order", cmax <= C, "max R^2 * control error " + fmt_short(cmax) + " (C = " + fmt_short(C) + ")"});
    rep.verdicts.push_back({"control-below-random", below, "constant-environment error below the median at every R"});
}

void run_ergodic_rate(const ExperimentConfig& c, int workers, RunReport& rep) {
    const auto law = c.make_law();
    const auto psi = make_psi(c);
    const auto truth = effective_for(c, law, workers);
    const int L = c.L > 0 ? c.L : (c.d == 2 ? 128 : 48);
    const auto s = ergodic_rate(law, psi, truth.psibar, scales_or(c, {16, 32, 64, 128, 256}), L, c.M, c.seed, workers);
    std::ostringstream csv;
    s.write_csv(csv, "T");
    rep.csv = csv.str();
    rep.statistics = {{"series", s.to_json()}, {"psibar", truth.psibar}, {"truth_source", truth.source}, {"L", L}};
    if (law.deterministic() || c.psi == "constant") {
        rep.verdicts.push_back({"zero-deviation", max_of(s.values()) <= 1e-12, "constant psi"});
        return;
    }
    const double ref = rate_exponent("nu", c.d), tol = c.d == 2 ? 0.2 : 0.25;
    const auto [lo, hi] = band_or(c, ref - tol, ref + tol);
    rep.verdicts.push_back(slope_verdict("ergodic-slope", s, lo, hi));
}

void run_var_decay(const ExperimentConfig& c, int workers, RunReport& rep) {
    const auto law = c.make_law();
    const int L = c.L > 0 ? c.L : 32;
    const auto v = var_decay_check(law, make_psi(c), scales_or(c, {4, 8, 16, 32, 64}), L, c.M, c.seed, workers, c.solver);
    std::ostringstream csv;
    v.series.write_csv(csv, "t");
    rep.csv = csv.str();
    rep.statistics = {{"series", v.series.to_json()}, {"monotone", v.monotone}, {"L", L}};
    rep.verdicts.push_back({"nonincreasing", v.monotone, "Var_Q(P_t zeta) nonincreasing in t in every environment"});
    if (law.deterministic() || c.psi == "constant") {
        rep.verdicts.push_back({"zero-variance", max_of(v.series.values()) <= 1e-24, "constant zeta"});
        return;
    }
    const auto [lo, hi] = band_or(c, -0.5 * c.d - 0.35, -0.5 * c.d + 0.35);
    rep.verdicts.push_back(slope_verdict("variance-slope", v.series, lo, hi));
}

void run_qclt(const ExperimentConfig& c, int workers, RunReport& rep) {
    const auto law = c.make_law();
    const auto truth = effective_for(c, law, workers);
    std::vector<std::uint64_t> ns;
    for (double n : scales_or(c, {256, 1024, 4096})) ns.push_back(static_cast<std::uint64_t>(n));
    const bool exact = c.N == 0;
    const std::size_t M = law.deterministic() ? 1 : static_cast<std::size_t>(c.M);
    std::vector<std::vector<QcltPoint>> pts(M);
    // the exact evolution is sequential per environment; MC parallelizes over paths
    if (exact)
        parallel_for(M, workers, [&](std::size_t m) {
            pts[m] = qclt_check(sample_environment(law, c.seed, m), ns, 0, truth.abar, true);
        });
    else
        for (std::size_t m = 0; m < M; ++m)
            pts[m] = qclt_check(sample_environment(law, c.seed, m), ns, 0, truth.abar, false, c.N, 0.02,
                                hash_combine(c.seed, m), workers);
    std::ostringstream csv;
    csv << "n,env,ks,variance_ratio\n";
    std::vector<double> ks_med, var_med;
    for (std::size_t k = 0; k < ns.size(); ++k) {
        std::vector<double> ks, vr;
        for (std::size_t m = 0; m < M; ++m) {
            csv << ns[k] << ',' << m << ',' << fmt(pts[m][k].ks) << ',' << fmt(pts[m][k].variance_ratio) << '\n';
            ks.push_back(pts[m][k].ks);
            vr.push_back(pts[m][k].variance_ratio);
        }
        ks_med.push_back(median(ks));
        var_med.push_back(median(vr));
    }
    rep.csv = csv.str();
    rep.statistics = {{"n", ns},           {"median_ks", ks_med},     {"median_variance_ratio", var_med},
                      {"exact", exact},    {"abar", weights_json(truth.abar, c.d)}, {"truth_source", truth.source}};
    if (law.deterministic()) {
        const double tol = c.threshold.value_or(0.02);
        rep.verdicts.push_back({"ks-target", ks_med.back() <= tol, "KS " + fmt_short(ks_med.back()) + " at n = " + std::to_string(ns.back())});
    } else {
        rep.verdicts.push_back({"ks-decreasing", strictly_decreasing(ks_med), "median KS over increasing n"});
    }
    const double vr = var_med.back();
    rep.verdicts.push_back({"variance-ratio", std::abs(vr - 1.0) <= 0.05, "median Var/(n l.abar.l) " + fmt_short(vr)});
}

const std::map<std::string, Runner>& runners() {
    static const std::map<std::string, Runner> r = {
        {"env-check", run_env_check},         {"dirichlet", run_dirichlet},
        {"green", run_green},                 {"rho-average", run_rho_average},
        {"rho-cov", run_rho_cov},             {"rho-sensitivity", run_rho_sensitivity},
        {"corrector-ap", run_corrector_ap},   {"corrector-loc", run_corrector_loc},
        {"global-tower", run_global_tower},   {"homog-rate", run_homog_rate},
        {"ergodic-rate", run_ergodic_rate},   {"var-decay", run_var_decay},
        {"qclt", run_qclt}};
    return r;
}

}  // namespace

void check_resources(const ExperimentConfig& c) {
    const int d = c.d;
    const auto& e = c.experiment;
    double unknowns = 0.0, steps = 0.0;
    const double Rmax = max_of(c.scales, 0.0);
    const double torus = std::pow(c.L > 0 ? c.L : (e == "rho-average" ? 256 : e == "ergodic-rate" ? (d == 2 ? 128 : 48) : 32), d);
    if (e == "dirichlet") unknowns = ball_volume(Rmax > 0 ? Rmax : 16, d);
    else if (e == "green") {
        unknowns = ball_volume(Rmax > 0 ? Rmax : 6, d);
        steps = static_cast<double>(c.M) * static_cast<double>(c.N ? c.N : 4000) * std::max(Rmax, 6.0) * std::max(Rmax, 6.0);
    } else if (e == "rho-average" || e == "rho-cov" || e == "var-decay" || e == "ergodic-rate") unknowns = torus;
    else if (e == "rho-sensitivity") unknowns = std::max(torus, ball_volume(max_of(c.green_radii, 16), d));
    else if (e == "corrector-ap") {
        const double R = Rmax > 0 ? Rmax : (d == 2 ? 32 : 8);
        unknowns = std::pow(2.0 * std::ceil(6 * R) + 1.0, d);
        steps = static_cast<double>(c.N) * 2.0 * R * R;
    } else if (e == "corrector-loc" || e == "global-tower") unknowns = ball_volume(c.K * (Rmax > 0 ? Rmax : 32), d);
    else if (e == "homog-rate") unknowns = ball_volume((c.with_bundle ? 5.0 : 1.0) * (Rmax > 0 ? Rmax : 32), d);
    else if (e == "qclt") {
        const double n = Rmax > 0 ? Rmax : 4096;
        if (c.N == 0) unknowns = std::pow(2.0 * std::min(n, 7.0 * std::sqrt(n) + 3.0) + 3.0, d);
        else steps = static_cast<double>(c.M) * static_cast<double>(c.N) * n;
    }
    if (unknowns > static_cast<double>(c.max_unknowns)) {
        std::ostringstream os;
        os << e << ": largest system has about " << static_cast<std::uint64_t>(unknowns) << " unknowns, above the cap of "
           << c.max_unknowns;
        throw ResourceError(os.str());
    }
    if (steps > static_cast<double>(c.max_mc_steps)) {
        std::ostringstream os;
        os << e << ": Monte Carlo budget of about " << static_cast<std::uint64_t>(steps) << " steps is above the cap of "
           << c.max_mc_steps;
        throw ResourceError(os.str());
    }
}

RunReport run_experiment(const ExperimentConfig& config, int workers) {
    check_resources(config);
    RunReport rep;
    rep.config = config;
    const auto t0 = std::chrono::steady_clock::now();
    runners().at(config.experiment)(config, std::max(1, workers), rep);
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

std::filesystem::path write_report(const RunReport& report, const std::filesystem::path& out) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream stamp;
    stamp << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
    const auto base = out / report.config.experiment;
    auto dir = base / stamp.str();
    for (int k = 1; std::filesystem::exists(dir); ++k) dir = base / (stamp.str() + "-" + std::to_string(k));
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "config.json") << report.config.to_json().dump(2) << '\n';
    std::ofstream(dir / "data.csv") << report.csv;
    std::ofstream(dir / "summary.json") << report.summary().dump(2) << '\n';
    return dir;
}

}  // namespace rwre
