#pragma once

#include <memory>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rwre/point.hpp"

namespace rwre {

enum class DomainKind { Ball, Box, Torus };

class DomainError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Finite subset of Z^d with interior points first (rows 0..n_interior-1)
/// followed by the discrete boundary. Point lookup is a dense table over the
/// bounding box, so construction costs O(box volume).
class LatticeDomain {
public:
    /// Interior {x : |x - center| < R}, boundary = outer neighbours.
    static LatticeDomain ball(const Point& center, double R, int d);
    /// Interior {x : max_i |x_i - center_i| < H}.
    static LatticeDomain box(const Point& center, int H, int d);
    /// [0, L)^d with periodic neighbours and no boundary.
    static LatticeDomain torus(int L, int d);
    /// Arbitrary finite point set treated as an interior with its outer
    /// neighbours as boundary.
    static LatticeDomain from_points(const std::vector<Point>& interior, int d);

    DomainKind kind() const { return kind_; }
    int dim() const { return d_; }
    const Point& center() const { return center_; }
    /// Ball radius, box half-width or torus period.
    double radius() const { return radius_; }
    int period() const { return kind_ == DomainKind::Torus ? static_cast<int>(radius_) : 0; }

    std::size_t size() const { return points_.size(); }
    std::size_t n_interior() const { return n_interior_; }
    std::size_t n_boundary() const { return points_.size() - n_interior_; }
    bool is_interior(std::size_t row) const { return row < n_interior_; }

    const Point& point(std::size_t row) const { return points_[row]; }
    const std::vector<Point>& points() const { return points_; }
    std::span<const Point> interior() const { return {points_.data(), n_interior_}; }
    std::span<const Point> boundary() const { return {points_.data() + n_interior_, n_boundary()}; }

    /// Row of x, or -1 when x is outside interior and boundary. On a torus
    /// every point is reduced first.
    long index(const Point& x) const;
    bool contains(const Point& x) const { return index(x) >= 0; }
    /// Like index() but throws DomainError.
    std::size_t row(const Point& x) const;
    bool interior_contains(const Point& x) const {
        long r = index(x);
        return r >= 0 && static_cast<std::size_t>(r) < n_interior_;
    }

    /// Row of the neighbour x + sign*e_i of row r, or -1.
    long neighbor(std::size_t r, int i, int sign) const;

    /// Torus representative in [0,L)^d; identity for other kinds.
    Point reduce(const Point& x) const;

private:
    LatticeDomain() = default;
    void build(std::vector<Point> interior);
    long slot(const Point& x) const;

    DomainKind kind_ = DomainKind::Ball;
    int d_ = 2;
    Point center_{};
    double radius_ = 0.0;
    std::vector<Point> points_;
    std::size_t n_interior_ = 0;
    Point lo_{};
    std::array<long, kMaxDim> extent_{};
    std::vector<int> lookup_;
};

using DomainPtr = std::shared_ptr<const LatticeDomain>;

inline DomainPtr make_ball(const Point& center, double R, int d) {
    return std::make_shared<const LatticeDomain>(LatticeDomain::ball(center, R, d));
}
inline DomainPtr make_box(const Point& center, int H, int d) {
    return std::make_shared<const LatticeDomain>(LatticeDomain::box(center, H, d));
}
inline DomainPtr make_torus(int L, int d) {
    return std::make_shared<const LatticeDomain>(LatticeDomain::torus(L, d));
}

/// Real values on every row (interior and boundary) of a domain.
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(DomainPtr domain, double fill = 0.0);
    ScalarField(DomainPtr domain, std::vector<double> values);

    const LatticeDomain& domain() const { return *domain_; }
    const DomainPtr& domain_ptr() const { return domain_; }
    std::size_t size() const { return values_.size(); }

    double operator[](std::size_t row) const { return values_[row]; }
    double& operator[](std::size_t row) { return values_[row]; }
    /// Value at x; throws DomainError outside the domain.
    double at(const Point& x) const { return values_[domain_->row(x)]; }
    double& at(const Point& x) { return values_[domain_->row(x)]; }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool all_finite() const;
    double max_abs() const;

    /// CSV with columns x_1..x_d,value.
    void write_csv(std::ostream& os) const;

private:
    DomainPtr domain_;
    std::vector<double> values_;
};

/// u(x+e) - u(x).
double nabla(const ScalarField& u, const Point& x, const Point& e);
/// u(x+e_i) + u(x-e_i) - 2u(x).
double nabla2(const ScalarField& u, const Point& x, int i);
/// -nabla_e nabla_l u(x) = -(u(x+e+l) - u(x+e) - u(x+l) + u(x)).
double nabla2_mixed(const ScalarField& u, const Point& x, const Point& e, const Point& l);

/// Number of monomials of total degree <= deg in d variables.
int polynomial_dim(int d, int deg);

/// inf over polynomials p of degree <= j-1 of max_A |f - p|, by linear
/// programming. Throws std::invalid_argument when A cannot separate the
/// polynomial space.
double osc_der(std::span<const Point> A, std::span<const double> f, int d, int j);
double osc_der(const ScalarField& u, std::span<const Point> A, int j);

}  // namespace rwre
