#include "doctest.h"

#include <cmath>

#include "rwre/env.hpp"
#include "rwre/stats.hpp"

using namespace rwre;

TEST_CASE("degenerate-constant law is the simple random walk") {
    Environment env(EnvironmentLaw::degenerate_constant(2), 7);
    for (int x = -5; x <= 5; ++x) {
        auto a = env.at(make_point(x, 3 * x));
        CHECK(a[0] == 0.5);
        CHECK(a[1] == 0.5);
    }
}

TEST_CASE("kappa-padded Dirichlet samples are admissible") {
    const double kappa = 0.05;
    Environment env(EnvironmentLaw::kappa_padded_dirichlet(3, kappa), 12345);
    int n = 0;
    for (int x = -10; x < 12; ++x)
        for (int y = -10; y < 12; ++y)
            for (int z = -10; z < 11; ++z) {
                auto a = env.at(make_point(x, y, z));
                double s = 0.0;
                for (int i = 0; i < 3; ++i) {
                    CHECK(a[i] >= 2 * kappa);
                    s += a[i];
                }
                CHECK(std::abs(s - 1.0) <= 1e-15);
                ++n;
            }
    CHECK(n >= 10000);
}

TEST_CASE("site values are deterministic and shifts compose") {
    Environment env(EnvironmentLaw::kappa_padded_dirichlet(2, 0.1), 99);
    const Point x = make_point(4, -7), z = make_point(-3, 11);
    CHECK(env.at(x) == env.at(x));
    CHECK(shift(env, origin()).at(x) == env.at(x));
    CHECK(shift(env, z).at(x) == env.at(x + z));
    CHECK(shift(shift(env, z), -z).at(x) == env.at(x));
    Environment other(EnvironmentLaw::kappa_padded_dirichlet(2, 0.1), 100);
    CHECK_FALSE(other.at(x) == env.at(x));
}

TEST_CASE("torus environments are periodic") {
    Environment env(EnvironmentLaw::kappa_padded_dirichlet(2, 0.1), 3, 8);
    CHECK(env.at(make_point(1, 2)) == env.at(make_point(9, -6)));
    CHECK(env.canonical(make_point(-1, 17)) == make_point(7, 1));
}

TEST_CASE("resampling touches one site only") {
    Environment env(EnvironmentLaw::kappa_padded_dirichlet(3, 0.05), 5);
    const Point y = make_point(1, 1, 1);
    auto rs = resample(env, y, 0);
    CHECK(rs.environment().at(y) == rs.new_value());
    CHECK(rs.old_value() == env.at(y));
    CHECK_FALSE(rs.new_value() == rs.old_value());
    for (int i = 0; i < 3; ++i) {
        CHECK(rs.environment().at(y + unit(i)) == env.at(y + unit(i)));
        CHECK(rs.environment().at(y - unit(i)) == env.at(y - unit(i)));
    }
    Environment srw(EnvironmentLaw::degenerate_constant(3), 5);
    CHECK(resample(srw, y).new_value() == srw.at(y));
}

TEST_CASE("resampled values follow the marginal law") {
    // a_1 = 2k + (1 - 2dk) w with w ~ Beta(1, d-1): F(w) = 1 - (1-w)^(d-1)
    const int d = 3;
    const double kappa = 0.05;
    Environment env(EnvironmentLaw::kappa_padded_dirichlet(d, kappa), 2024);
    std::vector<double> sample;
    for (std::uint64_t k = 0; k < 10000; ++k) sample.push_back(env.replacement_value(make_point(2, 0, 0), k)[0]);
    const double spread = 1.0 - 2.0 * d * kappa;
    auto F = [&](double a) {
        const double w = std::clamp((a - 2 * kappa) / spread, 0.0, 1.0);
        return 1.0 - std::pow(1.0 - w, d - 1);
    };
    const double D = ks_statistic(sample, F);
    CHECK(kolmogorov_pvalue(D, sample.size()) > 0.01);
}

TEST_CASE("gamma branch of the Dirichlet law keeps the mean") {
    Environment env(EnvironmentLaw::kappa_padded_dirichlet(2, 0.1, 0.5), 17);
    double s = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) s += env.at(make_point(i, 0))[0];
    CHECK(std::abs(s / n - 0.5) < 0.01);
}

TEST_CASE("law validation and descriptors") {
    CHECK_THROWS_AS(EnvironmentLaw::kappa_padded_dirichlet(2, 0.3), LawError);
    CHECK_THROWS_AS(EnvironmentLaw::kappa_padded_dirichlet(3, 0.0), LawError);
    Weights bad;
    bad[0] = 0.7;
    bad[1] = 0.4;
    CHECK_THROWS_AS(EnvironmentLaw::degenerate_constant(2, bad), LawError);
    Weights a, b;
    a[0] = 0.8;
    a[1] = 0.2;
    b[0] = 0.2;
    b[1] = 0.8;
    auto law = EnvironmentLaw::two_point(2, a, b, 0.5);
    CHECK(law.kappa() == doctest::Approx(0.1));
    Environment env(law, 77, 16);
    auto j = env.descriptor();
    CHECK(j["family"] == "two-point");
    CHECK(j["period"] == 16);
    auto back = Environment::from_json(j);
    for (int x = 0; x < 20; ++x) CHECK(back.at(make_point(x, 2 * x)) == env.at(make_point(x, 2 * x)));
    CHECK_THROWS(law_family_from_string("gaussian"));
}
