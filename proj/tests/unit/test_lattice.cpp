#include "doctest.h"

#include <random>
#include <sstream>

#include "rwre/lattice.hpp"

using namespace rwre;

TEST_CASE("unit ball and radius-2 ball") {
    auto B1 = LatticeDomain::ball(origin(), 1.0, 2);
    CHECK(B1.n_interior() == 1);
    CHECK(B1.n_boundary() == 4);
    CHECK(B1.interior_contains(origin()));
    for (int i = 0; i < 2; ++i)
        for (int s : {-1, 1}) CHECK(B1.contains(unit(i, s)));
    auto B2 = LatticeDomain::ball(origin(), 2.0, 2);
    CHECK(B2.n_interior() == 9);
    CHECK(B2.interior_contains(make_point(1, 1)));
    CHECK_FALSE(B2.interior_contains(make_point(2, 0)));
    CHECK(B2.contains(make_point(2, 0)));
}

TEST_CASE("torus domain") {
    auto T = LatticeDomain::torus(4, 2);
    CHECK(T.size() == 16);
    CHECK(T.n_boundary() == 0);
    CHECK(T.index(make_point(5, -1)) == T.index(make_point(1, 3)));
    for (std::size_t r = 0; r < T.size(); ++r) CHECK(T.row(T.point(r)) == r);
}

TEST_CASE("boundary classification and index bijection") {
    for (int d : {2, 3}) {
        for (double R : {1.5, 3.0, 4.7}) {
            auto B = LatticeDomain::ball(make_point(1, -2, d == 3 ? 3 : 0), R, d);
            for (std::size_t r = 0; r < B.size(); ++r) CHECK(B.row(B.point(r)) == r);
            for (auto z : B.boundary()) {
                bool touches = false;
                for (int i = 0; i < d; ++i)
                    for (int s : {-1, 1}) touches |= B.interior_contains(z + unit(i, s));
                CHECK(touches);
            }
            for (auto x : B.interior())
                for (int i = 0; i < d; ++i)
                    for (int s : {-1, 1}) CHECK(B.contains(x + unit(i, s)));
        }
    }
    auto box = LatticeDomain::box(origin(), 3, 2);
    CHECK(box.n_interior() == 25);
    CHECK(box.n_boundary() == 20);
}

TEST_CASE("finite differences") {
    auto D = make_ball(origin(), 5.0, 2);
    ScalarField sq(D), aff(D), prod(D);
    for (std::size_t r = 0; r < D->size(); ++r) {
        const Point& p = D->point(r);
        sq[r] = p[0] * p[0];
        aff[r] = 3.0 * p[0] - 2.0 * p[1] + 1.0;
        prod[r] = p[0] * p[1];
    }
    for (auto x : D->interior()) {
        CHECK(nabla2(sq, x, 0) == 2.0);
        CHECK(nabla2(aff, x, 0) == 0.0);
        CHECK(nabla2(aff, x, 1) == 0.0);
    }
    CHECK(nabla(aff, origin(), unit(0)) == 3.0);
    CHECK(nabla2_mixed(prod, origin(), unit(0), unit(1)) == -1.0);
    // nabla^2_{e,-e} coincides with the second difference
    CHECK(nabla2_mixed(sq, make_point(1, 1), unit(0), unit(0, -1)) == nabla2(sq, make_point(1, 1), 0));
    CHECK_THROWS_AS(nabla(sq, make_point(6, 0), unit(0)), DomainError);
}

TEST_CASE("csv export") {
    auto D = make_ball(origin(), 1.0, 2);
    ScalarField u(D, 2.5);
    std::ostringstream os;
    u.write_csv(os);
    CHECK(os.str().rfind("x1,x2,value\n0,0,2.5\n", 0) == 0);
}

namespace {

double brute_constant_fit(const std::vector<double>& f) {
    auto [lo, hi] = std::minmax_element(f.begin(), f.end());
    return 0.5 * (*hi - *lo);
}

}  // namespace

TEST_CASE("osc_der: polynomials are annihilated") {
    auto D = make_ball(origin(), 4.0, 2);
    std::vector<Point> A(D->interior().begin(), D->interior().end());
    ScalarField c(D, 3.0), lin(D), quad(D);
    for (std::size_t r = 0; r < D->size(); ++r) {
        const Point& p = D->point(r);
        lin[r] = 2.0 * p[0] - p[1] + 0.5;
        quad[r] = p[0] * p[1] - 3.0 * p[1] * p[1] + p[0];
    }
    CHECK(osc_der(c, A, 1) < 1e-10);
    CHECK(osc_der(lin, A, 2) < 1e-10);
    CHECK(osc_der(quad, A, 3) < 1e-10);
    CHECK(osc_der(quad, A, 2) > 0.1);
}

TEST_CASE("osc_der: constant fit equals half the oscillation") {
    for (double r : {2.0, 3.5, 6.0}) {
        auto D = make_ball(origin(), r, 2);
        std::vector<Point> A(D->interior().begin(), D->interior().end());
        std::vector<double> f;
        for (auto x : A) f.push_back(x[0] * x[0]);
        CHECK(osc_der(A, f, 2, 1) == doctest::Approx(brute_constant_fit(f)).epsilon(1e-10));
    }
    std::mt19937_64 g(4);
    std::normal_distribution<double> N;
    auto D = make_ball(origin(), 3.0, 3);
    std::vector<Point> A(D->interior().begin(), D->interior().end());
    std::vector<double> f(A.size());
    for (auto& v : f) v = N(g);
    CHECK(osc_der(A, f, 3, 1) == doctest::Approx(brute_constant_fit(f)).epsilon(1e-10));
}

TEST_CASE("osc_der: affine fit on a tiny set matches hand value") {
    // f = x^2 on {-1, 0, 1}: best line is constant 1/2, error 1/2
    std::vector<Point> A = {make_point(-1), make_point(0), make_point(1)};
    std::vector<double> f = {1.0, 0.0, 1.0};
    CHECK(osc_der(A, f, 1, 2) == doctest::Approx(0.5));
}

TEST_CASE("osc_der: triangle inequality on random fields") {
    std::mt19937_64 g(11);
    std::normal_distribution<double> N;
    auto D = make_ball(origin(), 3.0, 2);
    std::vector<Point> A(D->interior().begin(), D->interior().end());
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> f(A.size()), h(A.size()), s(A.size());
        for (std::size_t i = 0; i < A.size(); ++i) {
            f[i] = N(g);
            h[i] = N(g);
            s[i] = f[i] + h[i];
        }
        for (int j = 1; j <= 3; ++j) CHECK(osc_der(A, s, 2, j) <= osc_der(A, f, 2, j) + osc_der(A, h, 2, j) + 1e-10);
    }
}

TEST_CASE("osc_der: homogeneous scaling on scaled point sets") {
    // D^j_{kA}(q) = k^j D^j_A(q) for homogeneous q of degree j; exact on k*A
    auto D = make_ball(origin(), 3.0, 2);
    std::vector<Point> A(D->interior().begin(), D->interior().end());
    for (int j = 1; j <= 3; ++j) {
        auto q = [j](const Point& p) { return std::pow(p[0], j) + (j > 1 ? p[0] * std::pow(p[1], j - 1) : 0.0); };
        std::vector<double> f1, f2;
        std::vector<Point> A2;
        for (auto x : A) {
            f1.push_back(q(x));
            A2.push_back(3 * x);
            f2.push_back(q(3 * x));
        }
        const double a = osc_der(A, f1, 2, j), b = osc_der(A2, f2, 2, j);
        CHECK(b / std::pow(3.0, j) == doctest::Approx(a).epsilon(1e-9));
    }
}

TEST_CASE("osc_der: degenerate sets are reported") {
    std::vector<Point> line = {make_point(0, 0), make_point(1, 0), make_point(2, 0), make_point(3, 0)};
    std::vector<double> f = {0, 1, 0, 1};
    CHECK_THROWS_AS(osc_der(line, f, 2, 2), std::invalid_argument);
}
