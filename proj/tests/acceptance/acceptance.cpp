// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run everything, exit 0 once every criterion was evaluated
//   acceptance --strict   exit 1 if any criterion failed
//   acceptance AC3 AC7    run a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rwre/config.hpp"
#include "rwre/cutoff.hpp"
#include "rwre/experiments.hpp"
#include "rwre/homog.hpp"
#include "rwre/invariant.hpp"
#include "rwre/kernel.hpp"
#include "rwre/parallel.hpp"
#include "rwre/stats.hpp"
#include "rwre/walk.hpp"

using namespace rwre;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

std::string g(double v, int p = 4) {
    std::ostringstream os;
    os << std::setprecision(p) << v;
    return os.str();
}

std::string list(const std::vector<double>& v, int p = 4) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + g(v[i], p);
    return s + "]";
}

// Two-sided normal quantile for a family of m comparisons holding the
// family-wise error at that of a single 3-sigma test.
double family_z(std::size_t m) {
    const double alpha = std::erfc(3.0 / std::sqrt(2.0)) / static_cast<double>(m);
    double lo = 0.0, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (std::erfc(mid / std::sqrt(2.0)) > alpha ? lo : hi) = mid;
    }
    return lo;
}

Weights iso(int d) {
    Weights a;
    for (int i = 0; i < d; ++i) a[i] = 1.0 / d;
    return a;
}

const LocalFn first_weight = [](const Weights& a) { return a[0]; };

EnvironmentLaw dirichlet(int d) { return EnvironmentLaw::kappa_padded_dirichlet(d, 0.05); }

EnvironmentLaw two_point(int d) {
    Weights a, b;
    a[0] = 0.7;
    b[0] = 0.1;
    for (int i = 1; i < d; ++i) {
        a[i] = 0.3 / (d - 1);
        b[i] = 0.9 / (d - 1);
    }
    return EnvironmentLaw::two_point(d, a, b, 0.5);
}

// ---- AC1 ----------------------------------------------------------------------------

void ac1(Outcome& o) {
    double aff = 0.0, mp = 0.0, tr = 0.0;
    int envs = 0;
    for (int d : {2, 3})
        for (int law_id = 0; law_id < 2; ++law_id) {
            const auto law = law_id == 0 ? dirichlet(d) : two_point(d);
            for (int m = 0; m < 25; ++m, ++envs) {
                const auto env = sample_environment(law, 101, static_cast<std::uint64_t>(m));
                auto D = make_ball(origin(), d == 2 ? 8.0 : 5.0, d);
                ScalarField zero(D, 0.0), affine(D, 0.0), rough(D, 0.0);
                CounterStream cs(hash_combine(7, envs));
                double bmax = -1e300, bmin = 1e300;
                for (std::size_t r = D->n_interior(); r < D->size(); ++r) {
                    affine[r] = D->point(r)[0];
                    rough[r] = 2.0 * to_unit(cs.bits(r)) - 1.0;
                    bmax = std::max(bmax, rough[r]);
                    bmin = std::min(bmin, rough[r]);
                }
                DirichletSystem sys(env, D);
                const auto ua = sys.solve(zero, affine), ur = sys.solve(zero, rough);
                for (std::size_t r = 0; r < D->n_interior(); ++r) {
                    aff = std::max(aff, std::abs(ua[r] - D->point(r)[0]));
                    mp = std::max({mp, ur[r] - bmax, bmin - ur[r]});
                }
                // tr abar from the stationary density of a small periodic copy
                const auto penv = sample_environment(law, 101, static_cast<std::uint64_t>(m), d == 2 ? 8 : 6);
                const auto rho = stationary_torus(penv);
                const auto& T = rho.rho.domain();
                std::vector<double> terms(T.size());
                for (std::size_t r = 0; r < T.size(); ++r) {
                    const Weights a = penv.at(T.point(r));
                    double s = 0.0;
                    for (int i = 0; i < d; ++i) s += a[i];
                    terms[r] = rho.rho[r] * s;
                }
                tr = std::max(tr, std::abs(mean(terms) - 1.0));
            }
        }
    // simple random walk specializations
    double srw = 0.0;
    for (int d : {2, 3}) {
        Environment flat(EnvironmentLaw::degenerate_constant(d), 1, 8);
        const auto rho = stationary_torus(flat);
        for (double v : rho.rho.values()) srw = std::max(srw, std::abs(v - 1.0));
        const auto e = effective_coefficients(flat, first_weight, 1000, 1, 10);
        for (int i = 0; i < d; ++i) srw = std::max(srw, std::abs(e.abar_exact[i] - 1.0 / d));
        LocalFn c = [](const Weights&) { return 0.3; };
        Environment open(EnvironmentLaw::degenerate_constant(d), 1);
        srw = std::max(srw, approx_corrector(open, 4, c, 0.3, origin(), 24).max_abs());
        srw = std::max(srw, local_corrector(open, 4, c, 0.3).max_abs());
    }
    o.detail << envs << " environments: max |u - x_1| " << g(aff) << ", max-principle excess " << g(mp)
             << ", max |tr abar - 1| " << g(tr) << ", SRW specializations off by " << g(srw);
    o.require(aff <= 1e-10, "affine reproduction");
    o.require(mp <= 1e-10, "maximum principle");
    o.require(tr <= 1e-12, "trace identity");
    o.require(srw <= 1e-10, "SRW specializations");
}

// ---- AC2 -------------------------------------------------------------------------------

void ac2(Outcome& o) {
    Environment srw(EnvironmentLaw::degenerate_constant(2), 0);
    const auto G = green_ball(srw, 2.0, origin());
    const double g0 = G.at(origin()), g1 = G.at(unit(0)), g11 = G.at(make_point(1, 1));
    const double exact = std::max({std::abs(g0 - 1.5), std::abs(g1 - 0.5), std::abs(g11 - 0.25)});
    const double R = 6;
    const std::size_t N = 20000;
    double gap = 0.0, zmax = 0.0;
    const int M = 20;
    for (int m = 0; m < M; ++m) {
        const auto env = sample_environment(dirichlet(2), 202, static_cast<std::uint64_t>(m));
        auto D = make_ball(origin(), R, 2);
        DirichletSystem sys(env, D);
        double gsum = 0.0;
        for (std::size_t y = 0; y < D->n_interior(); ++y) {
            ScalarField f(D, 0.0);
            f[y] = -1.0;
            gsum += sys.solve(f).at(origin());
        }
        const double tau = sys.solve(ScalarField(D, -1.0)).at(origin());
        gap = std::max(gap, std::abs(gsum - tau));
        const auto mc = exit_time(env, origin(), R, origin(), N, hash_combine(202, m)).tau;
        zmax = std::max(zmax, std::abs(mc.mean - tau) / mc.std_error);
    }
    const double zlim = family_z(M);
    o.detail << "SRW G_2 = (" << g(g0) << ", " << g(g1) << ", " << g(g11) << "); " << M
             << " environments, R = 6: max |sum G - E tau| " << g(gap) << ", max MC |z| " << g(zmax) << " (limit "
             << g(zlim, 3) << ")";
    o.require(exact <= 1e-12, "SRW values");
    o.require(gap <= 1e-9, "Green sum vs Dirichlet solve");
    o.require(zmax <= zlim, "exit-time MC");
}

// ---- AC3 -------------------------------------------------------------------------------

// E[T] and P(T > tau_k) under eta_R from killed linear systems.
double killed_mean(const Environment& env, double R, double K) {
    auto D = make_ball(origin(), K * R, env.dim());
    std::vector<double> eta(D->size());
    for (std::size_t r = 0; r < D->size(); ++r) eta[r] = eta_R(D->point(r), R);
    DirichletSystem sys(env, D, 1.0 / (R * R), eta);
    return sys.solve(ScalarField(D, -1.0)).at(origin());
}

double survival(const Environment& env, double R, int k) {
    auto D = make_ball(origin(), k * R, env.dim());
    std::vector<double> eta(D->size());
    ScalarField b(D, 0.0);
    for (std::size_t r = 0; r < D->size(); ++r) {
        eta[r] = eta_R(D->point(r), R);
        // killing is checked at the exit site too
        if (r >= D->n_interior()) b[r] = 1.0 - eta[r] / (R * R + eta[r]);
    }
    DirichletSystem sys(env, D, 1.0 / (R * R), eta);
    return sys.solve(ScalarField(D, 0.0), b).at(origin());
}

void ac3(Outcome& o) {
    const auto env = sample_environment(dirichlet(2), 303, 0);
    // eta = 1: E[T] = R^2
    const double R0 = 8;
    const auto u = killed_time(env, KillClock::everywhere(R0), origin(), 200000, 31);
    const double zu = std::abs(u.T.mean - R0 * R0) / u.T.std_error;
    // tail in k, exact
    std::vector<double> ks, logp;
    for (int k = 4; k <= 12; ++k) {
        ks.push_back(k);
        logp.push_back(std::log(survival(env, R0, k)));
    }
    double mk = 0, ml = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        mk += ks[i] / ks.size();
        ml += logp[i] / ks.size();
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        sxy += (ks[i] - mk) * (logp[i] - ml);
        sxx += (ks[i] - mk) * (ks[i] - mk);
    }
    const double slope = sxy / sxx;
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const double fit = ml + slope * (ks[i] - mk);
        ss_res += (logp[i] - fit) * (logp[i] - fit);
        ss_tot += (logp[i] - ml) * (logp[i] - ml);
    }
    const double r2 = 1.0 - ss_res / ss_tot;
    // MC cross-check of the exact tail at k = 4 and of E[T]
    const auto mc = killed_time(env, KillClock::cutoff(R0), origin(), 40000, 32, {4});
    const double et_exact = killed_mean(env, R0, 8);
    const double z_tail = std::abs(mc.survival[0].mean - std::exp(logp[0])) / mc.survival[0].std_error;
    const double z_mean = std::abs(mc.T.mean - et_exact) / mc.T.std_error;
    // E[T]/R^2 across R, exact
    std::vector<double> ratio;
    for (double R : {8.0, 16.0, 32.0}) ratio.push_back(killed_mean(env, R, 8) / (R * R));
    const double rmax = *std::max_element(ratio.begin(), ratio.end()), rmin = *std::min_element(ratio.begin(), ratio.end());
    const double zlim = family_z(3);
    o.detail << "eta=1: E[T] " << g(u.T.mean) << " +- " << g(u.T.std_error, 2) << " vs " << R0 * R0 << " (|z| "
             << g(zu, 3) << "); log P(T>tau_k), k=4..12: slope " << g(slope) << ", r^2 " << g(r2, 5)
             << "; MC check |z| tail " << g(z_tail, 3) << ", mean " << g(z_mean, 3) << "; E[T]/R^2 at R=8,16,32 "
             << list(ratio);
    o.require(zu <= 3.0, "E[T] = R^2 within 3 sigma");
    o.require(slope <= -0.3, "tail slope <= -0.3");
    o.require(r2 >= 0.99, "log-linear tail");
    o.require(z_tail <= zlim && z_mean <= zlim, "exact vs MC killed walk");
    // one constant for every R: the ratio may not drift by more than 25% over a factor 4 in R
    o.require(rmax <= 20.0 && rmax / rmin <= 1.25, "E[T]/R^2 bounded across R");
}

// ---- AC4 -------------------------------------------------------------------------------

void ac4(Outcome& o) {
    const int d = 2;
    const double R = 8, psibar = 0.5;
    const auto env = sample_environment(dirichlet(d), 404, 0);
    // ||psi||_inf for psi = a_1 under the law: 1 - 2 kappa (d - 1)
    const double psi_sup = 1.0 - 2.0 * 0.05 * (d - 1);
    const double target = 0.05 * R * R * psi_sup * 1e-2;
    const std::vector<Point> probes = {origin(), make_point(3, 0), make_point(-2, 5), make_point(6, -6),
                                       make_point(0, -9)};
    const auto ap = approx_corrector(env, R, first_weight, psibar, origin(), static_cast<int>(std::ceil(6 * R)) + 12);
    const auto loc = local_corrector(env, R, first_weight, psibar);
    EnvWindow w(env, origin(), static_cast<int>(std::ceil(6 * R)) + 12);
    const auto clock = KillClock::cutoff(R);
    double zmax = 0.0, se_max = 0.0;
    std::size_t paths = 0;
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const Point x = probes[i];
        const auto ma = estimate_until("phi_ap", x, hash_combine(404, i), target, 20000, 4'000'000, 1, [&](PathRng& rng) {
            return sample_approx_corrector(w, R, first_weight, psibar, x, rng);
        });
        const auto ml = estimate_until("phi_loc", x, hash_combine(405, i), target, 20000, 4'000'000, 1, [&](PathRng& rng) {
            return sample_local_corrector(w, clock, first_weight, psibar, x, rng);
        });
        zmax = std::max({zmax, std::abs(ma.mean - ap.at(x)) / ma.std_error, std::abs(ml.mean - loc.at(x)) / ml.std_error});
        se_max = std::max({se_max, ma.std_error, ml.std_error});
        paths += ma.n_paths + ml.n_paths;
    }
    const double zlim = family_z(2 * probes.size());
    o.detail << "d=2, R=8, 5 probes x {AP, loc}: max |solver - MC| / se " << g(zmax, 3) << " (limit " << g(zlim, 3)
             << "), max se " << g(se_max, 3) << " (target " << g(target, 3) << "), " << paths << " paths";
    o.require(se_max <= target * 1.0001, "standard error target");
    o.require(zmax <= zlim, "solver/MC agreement");
}

// ---- slope-type criteria through the harness -------------------------------------------

RunReport run(nlohmann::json j) {
    j["schema"] = kConfigSchema;
    return run_experiment(ExperimentConfig::from_json(j), 1);
}

void report_verdicts(const RunReport& rep, Outcome& o) {
    for (const auto& v : rep.verdicts) {
        o.detail << v.name << ": " << v.detail << "; ";
        o.require(v.pass, v.name);
    }
}

void ac5(Outcome& o) {
    const auto rep = run({{"experiment", "rho-average"}, {"d", 2}, {"L", 256}, {"scales", {8, 16, 32}}, {"M", 32},
                          {"seed", 505}, {"band", {-1.35, -0.70}}});
    std::vector<double> med;
    for (const auto& p : rep.statistics["points"]) med.push_back(p["value"].get<double>());
    o.detail << "d=2, L=256, M=32, median |rho(B_R)/|B_R| - 1| at R=8,16,32 " << list(med) << "; ";
    report_verdicts(rep, o);
}

void ac6(Outcome& o) {
    const auto rep = run({{"experiment", "homog-rate"}, {"d", 3}, {"scales", {8, 12, 16, 24, 32}}, {"M", 16},
                          {"seed", 606}, {"band", {-1.3, -0.7}}});
    std::vector<double> med, ctl;
    for (const auto& p : rep.statistics["series"]["points"]) med.push_back(p["value"].get<double>());
    for (const auto& p : rep.statistics["control"]["points"]) ctl.push_back(p["value"].get<double>());
    o.detail << "d=3, M=16, median max-error " << list(med) << ", control " << list(ctl) << "; mean-fit slope "
             << g(rep.statistics["series"].value("mean_fit", nlohmann::json::object()).value("slope", 0.0)) << "; ";
    report_verdicts(rep, o);
}

void ac7(Outcome& o) {
    const auto r2 = run({{"experiment", "ergodic-rate"}, {"d", 2}, {"L", 128}, {"scales", {16, 32, 64, 128, 256}},
                         {"M", 16}, {"seed", 707}});
    o.detail << "d=2 (L=128, M=16): ";
    report_verdicts(r2, o);
    const auto r3 = run({{"experiment", "ergodic-rate"}, {"d", 3}, {"L", 48}, {"scales", {16, 32, 64, 128, 256}},
                         {"M", 8}, {"seed", 708}});
    o.detail << "d=3 (L=48, M=8): ";
    report_verdicts(r3, o);
}

void ac8(Outcome& o) {
    const auto rep = run({{"experiment", "var-decay"}, {"d", 3}, {"L", 32}, {"scales", {4, 8, 16, 32, 64}}, {"M", 8},
                          {"seed", 808}});
    o.detail << "d=3, L=32, M=8: ";
    report_verdicts(rep, o);
}

void ac9(Outcome& o) {
    const auto srw = run({{"experiment", "qclt"}, {"d", 2}, {"law", {{"family", "degenerate-constant"}, {"kappa", 0.25}}},
                          {"scales", {256, 1024, 4096}}, {"N", 100000}, {"M", 1}, {"seed", 909}, {"threshold", 0.02},
                          {"max_mc_steps", 500000000}});
    o.detail << "SRW (N=1e5, MC): KS " << list(srw.statistics["median_ks"].get<std::vector<double>>()) << "; ";
    report_verdicts(srw, o);
    const auto rnd = run({{"experiment", "qclt"}, {"d", 2}, {"scales", {256, 1024, 4096}}, {"M", 8}, {"seed", 910},
                          {"max_unknowns", 1000000}});
    o.detail << "random (M=8, exact law): median KS " << list(rnd.statistics["median_ks"].get<std::vector<double>>())
             << ", variance ratio " << list(rnd.statistics["median_variance_ratio"].get<std::vector<double>>()) << "; ";
    report_verdicts(rnd, o);
}

void ac10(Outcome& o) {
    const auto rep = run({{"experiment", "rho-sensitivity"}, {"d", 3}, {"L", 32}, {"green_radii", {12, 16}}, {"M", 20},
                          {"seed", 1010}, {"threshold", 0.15}});
    o.detail << "d=3, L=32, 20 trials, median gap at R_green=12,16 "
             << list(rep.statistics["median_gap"].get<std::vector<double>>(), 3) << "; ";
    report_verdicts(rep, o);
}

void ac11(Outcome& o) {
    const auto r3 = run({{"experiment", "global-tower"}, {"d", 3}, {"scales", {8, 16, 32}}, {"K", 3}, {"probe_radius", 4},
                         {"M", 6}, {"seed", 1111}, {"max_unknowns", 4000000}});
    o.detail << "d=3 (K=3, M=6): medians " << list(r3.statistics["median_difference"].get<std::vector<double>>()) << "; ";
    report_verdicts(r3, o);
    const auto r2 = run({{"experiment", "global-tower"}, {"d", 2}, {"scales", {8, 16, 32}}, {"K", 5}, {"probe_radius", 4},
                         {"M", 16}, {"seed", 1112}});
    o.detail << "d=2 (K=5, M=16, affine subtraction): medians "
             << list(r2.statistics["median_difference"].get<std::vector<double>>()) << "; ";
    report_verdicts(r2, o);
}

void ac12(Outcome& o) {
    // one solver-based and one Monte Carlo experiment, different worker counts
    bool same = true;
    for (const auto& j : {nlohmann::json{{"experiment", "dirichlet"}, {"d", 3}, {"scales", {4, 6, 8}}, {"M", 4}, {"seed", 12}},
                          nlohmann::json{{"experiment", "green"}, {"d", 2}, {"scales", {4}}, {"M", 3}, {"N", 3000}, {"seed", 12}},
                          nlohmann::json{{"experiment", "corrector-ap"}, {"d", 2}, {"scales", {2, 3, 4}}, {"M", 4}, {"N", 4000}, {"seed", 12}}}) {
        auto jj = j;
        jj["schema"] = kConfigSchema;
        const auto c = ExperimentConfig::from_json(jj);
        const auto a = run_experiment(c, 1), b = run_experiment(c, 4);
        const auto out = std::filesystem::temp_directory_path() / "rwre_acceptance_ac12";
        const auto da = write_report(a, out), db = write_report(b, out);
        auto slurp = [](const std::filesystem::path& p) {
            std::ifstream in(p, std::ios::binary);
            return std::string(std::istreambuf_iterator<char>(in), {});
        };
        const bool eq = slurp(da / "data.csv") == slurp(db / "data.csv") && !a.csv.empty();
        o.detail << c.experiment << (eq ? " identical" : " DIFFERS") << " (" << a.csv.size() << " bytes); ";
        same = same && eq;
        std::filesystem::remove_all(out);
    }
    o.require(same, "byte-identical data.csv");
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
        {"AC1 exact identities", ac1},         {"AC2 Green-function oracle", ac2},
        {"AC3 killed-walk facts", ac3},        {"AC4 solver/MC corrector equivalence", ac4},
        {"AC5 invariant-measure fluctuation rate", ac5}, {"AC6 homogenization rate", ac6},
        {"AC7 ergodic-average rates", ac7},    {"AC8 variance decay", ac8},
        {"AC9 QCLT", ac9},                     {"AC10 sensitivity formula", ac10},
        {"AC11 global tower", ac11},           {"AC12 determinism", ac12}};
    bool strict = false;
    std::set<std::string> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--strict") strict = true;
        else only.insert(a);
    }
    int failed = 0, run_count = 0;
    for (const auto& [name, fn] : criteria) {
        const std::string tag = name.substr(0, name.find(' '));
        if (!only.empty() && !only.count(tag)) continue;
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << g(s, 3) << " s): " << o.detail.str() << std::endl;
        failed += o.pass ? 0 : 1;
        ++run_count;
    }
    std::cout << "acceptance run complete: " << run_count - failed << "/" << run_count << " criteria passed" << std::endl;
    return strict && failed ? 1 : 0;
}
