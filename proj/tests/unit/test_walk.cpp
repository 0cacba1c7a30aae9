#include "doctest.h"

#include <cmath>

#include "rwre/cutoff.hpp"
#include "rwre/kernel.hpp"
#include "rwre/walk.hpp"

using namespace rwre;

namespace {

Environment dirichlet_env(int d, std::uint64_t seed) {
    return Environment(EnvironmentLaw::kappa_padded_dirichlet(d, 0.05), seed);
}

bool within(double a, double b, double se, double k = 3.0) { return std::abs(a - b) <= k * se + 1e-12; }

}  // namespace

TEST_CASE("jump selection follows a/2") {
    Weights a;
    a[0] = 0.3;
    a[1] = 0.7;
    CHECK(choose_jump(a, 2, 0.0) == 0);
    CHECK(choose_jump(a, 2, 0.149) == 0);
    CHECK(choose_jump(a, 2, 0.151) == 1);
    CHECK(choose_jump(a, 2, 0.31) == 2);
    CHECK(choose_jump(a, 2, 0.99999) == 3);
    CHECK(jump_vector(0) == unit(0));
    CHECK(jump_vector(3) == unit(1, -1));
}

TEST_CASE("one-step mean is the start point") {
    for (int d : {2, 3}) {
        auto env = dirichlet_env(d, 11 + d);
        const std::size_t N = 40000;
        const Point x0 = make_point(3, -2, 1);
        Point s{};
        for (std::size_t i = 0; i < N; ++i) s += run_discrete(env, x0, 1, 5, i).end() - x0;
        for (int i = 0; i < d; ++i) CHECK(std::abs(s[i] / double(N)) <= 3.0 * std::sqrt(double(d) / N));
    }
}

TEST_CASE("SRW step frequencies") {
    Environment srw(EnvironmentLaw::degenerate_constant(3), 1);
    auto p = run_discrete(srw, origin(), 60000, 9);
    std::array<double, 6> cnt{};
    for (auto k : p.steps) cnt[k] += 1;
    const double n = 60000, q = 1.0 / 6;
    for (double c : cnt) CHECK(std::abs(c / n - q) <= 3.0 * std::sqrt(q * (1 - q) / n));
}

TEST_CASE("quadratic variation |X_n|^2 has mean n") {
    auto env = dirichlet_env(2, 3);
    const std::uint64_t n = 50;
    auto e = estimate_paths("qv", origin(), 17, 20000, 4, [&](PathRng& rng) {
        Point x{};
        for (std::uint64_t k = 0; k < n; ++k) x += jump_vector(choose_jump(env.at(x), 2, rng.uniform()));
        return static_cast<double>(norm_sq(x));
    });
    CHECK(within(e.mean, double(n), e.std_error));
}

TEST_CASE("paths are reproducible and schedule independent") {
    auto env = dirichlet_env(2, 4);
    auto a = run_discrete(env, origin(), 300, 21, 7, true);
    auto b = run_discrete(env, origin(), 300, 21, 7, true);
    CHECK(a.steps == b.steps);
    CHECK(a.holding == b.holding);
    CHECK(a.positions().back() == a.end());
    CHECK(a.positions().size() == 301);
    auto f = [&](PathRng& rng) { return rng.uniform(); };
    auto e1 = estimate_paths("u", origin(), 3, 5000, 1, f);
    auto e8 = estimate_paths("u", origin(), 3, 5000, 8, f);
    CHECK(e1.mean == e8.mean);
    CHECK(e1.std_error == e8.std_error);
    auto j = e1.to_json();
    CHECK(j.contains("stderr"));
    CHECK(j["n_paths"] == 5000);
}

TEST_CASE("holding times have unit mean") {
    Environment srw(EnvironmentLaw::degenerate_constant(2), 1);
    auto p = run_discrete(srw, origin(), 40000, 2, 0, true);
    double s = 0;
    for (double h : p.holding) s += h;
    CHECK(std::abs(s / 40000 - 1.0) <= 3.0 / std::sqrt(40000.0));
}

TEST_CASE("exit time identities") {
    for (int d : {2, 3}) {
        auto env = dirichlet_env(d, 40 + d);
        const double R = 6.0;
        auto r = exit_time(env, origin(), R, origin(), 20000, 8, 4);
        CHECK(r.tau.mean >= R * R - 3 * r.tau.std_error);
        CHECK(r.tau.mean <= (R + 1) * (R + 1) + 3 * r.tau.std_error);
        // pathwise identity tau = |X_tau|^2 - |x|^2 does not hold per path, only in mean
        CHECK(within(r.identity_gap.mean, 0.0, r.identity_gap.std_error));
        // solver oracle: E tau = sum_y G_R(0, y)
        auto D = make_ball(origin(), R, d);
        auto u = solve_dirichlet(env, D, ScalarField(D, -1.0), ScalarField(D, 0.0));
        CHECK(within(r.tau.mean, u.at(origin()), r.tau.std_error));
    }
    CHECK_THROWS(exit_time(dirichlet_env(2, 1), make_point(9, 0), 6.0, origin(), 10, 1));
}

TEST_CASE("uniform clock gives E[T] = R^2") {
    auto env = dirichlet_env(2, 5);
    for (double R : {3.0, 8.0}) {
        auto r = killed_time(env, KillClock::everywhere(R), origin(), 40000, 6, {}, 4);
        CHECK(within(r.T.mean, R * R, r.T.std_error));
    }
    // per-step Bernoulli clock with eta = 1 has the same law
    KillClock c = KillClock::everywhere(4.0);
    c.uniform = false;
    auto r = killed_time(env, c, origin(), 40000, 7, {}, 4);
    CHECK(within(r.T.mean, 16.0, r.T.std_error));
}

TEST_CASE("killed occupation matches the killed solve") {
    auto env = dirichlet_env(2, 8);
    const double R = 4.0, K = 8.0;
    auto clock = KillClock::cutoff(R);
    auto D = make_ball(origin(), K * R, 2);
    std::vector<double> eta(D->size());
    for (std::size_t r = 0; r < D->size(); ++r) eta[r] = eta_R(D->point(r), R);
    DirichletSystem sys(env, D, 1.0 / (R * R), eta);
    // (I + eta/R^2 - P) u = 1  <=>  u = E[sum_{n<=T} (1 - eta~(X_n))]
    auto u = sys.solve(ScalarField(D, -1.0));
    LocalFn one = [](const Weights&) { return 1.0; };
    for (Point x : {origin(), make_point(3, 1), make_point(-5, 2)}) {
        auto e = mc_local_corrector(env, clock, one, 0.0, x, 20000, 31, 4);
        CHECK(within(-e.mean, u.at(x), e.std_error));
    }
}

TEST_CASE("killed tail decays in k and E[T]/R^2 is bounded") {
    auto env = dirichlet_env(2, 12);
    auto r = killed_time(env, KillClock::cutoff(4.0), origin(), 40000, 3, {2, 3, 4, 5}, 4);
    for (std::size_t j = 1; j < r.survival.size(); ++j) CHECK(r.survival[j].mean < r.survival[j - 1].mean);
    CHECK(r.T.mean / 16.0 < 20.0);
    CHECK(r.T.mean / 16.0 > 1.0);
}

TEST_CASE("constant psi gives zero correctors") {
    auto env = dirichlet_env(2, 9);
    LocalFn c = [](const Weights&) { return 0.7; };
    auto l = mc_local_corrector(env, KillClock::cutoff(4.0), c, 0.7, make_point(1, 2), 2000, 1, 2);
    auto a = mc_approx_corrector(env, 4.0, c, 0.7, make_point(1, 2), 2000, 1, 2);
    CHECK(l.mean == 0.0);
    CHECK(a.mean == 0.0);
}

TEST_CASE("approximate corrector matches the resolvent solve and its envelope") {
    auto env = dirichlet_env(2, 10);
    const double R = 4.0;
    LocalFn psi = [](const Weights& a) { return a[0]; };
    const double psibar = 0.5;
    auto D = make_box(origin(), static_cast<int>(8 * R), 2);
    DirichletSystem sys(env, D, 1.0 / (R * R));
    ScalarField f(D, 0.0);
    for (std::size_t r = 0; r < D->n_interior(); ++r) f[r] = psi(env.at(D->point(r))) - psibar;
    auto phi = sys.solve(f);
    for (Point x : {origin(), make_point(2, -1)}) {
        auto e = mc_approx_corrector(env, R, psi, psibar, x, 60000, 4, 4);
        CHECK(within(e.mean, phi.at(x), e.std_error));
        CHECK(std::abs(e.mean) <= R * R * 0.5);
    }
}

TEST_CASE("adaptive estimate reaches its target") {
    auto e = estimate_until("u", origin(), 1, 0.01, 100, 1'000'000, 4, [](PathRng& rng) { return rng.uniform(); });
    CHECK(e.std_error <= 0.01);
    CHECK(e.n_paths < 4000);
    auto capped = estimate_until("u", origin(), 1, 1e-6, 100, 500, 1, [](PathRng& rng) { return rng.uniform(); });
    CHECK(capped.n_paths == 500);
}

TEST_CASE("step cap aborts runaway paths") {
    auto env = dirichlet_env(2, 1);
    KillClock never;
    never.eta = [](const Point&) { return 0.0; };
    never.R = 1.0;
    CHECK_THROWS_AS(killed_time(env, never, origin(), 1, 1), WalkError);
}
