#include "rwre/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

namespace rwre {

namespace {

void check_dim(int d) {
    if (d < 1 || d > kMaxDim) throw std::invalid_argument("lattice dimension out of range");
}

// Visits every point of the box [lo, hi]^d (active coordinates only) in
// lexicographic order with the first coordinate slowest.
template <class F>
void for_each_in_box(const Point& lo, const Point& hi, int d, F&& f) {
    Point x = lo;
    for (;;) {
        f(x);
        int i = d - 1;
        while (i >= 0) {
            if (x[i] < hi[i]) {
                ++x[i];
                break;
            }
            x[i] = lo[i];
            --i;
        }
        if (i < 0) return;
    }
}

bool lex_less(const Point& a, const Point& b) { return a.c < b.c; }

}  // namespace

LatticeDomain LatticeDomain::ball(const Point& center, double R, int d) {
    check_dim(d);
    if (!(R > 0.0)) throw std::invalid_argument("ball radius must be positive");
    LatticeDomain D;
    D.kind_ = DomainKind::Ball;
    D.d_ = d;
    D.center_ = center;
    D.radius_ = R;
    const int r = static_cast<int>(std::ceil(R));
    Point lo = center, hi = center;
    for (int i = 0; i < d; ++i) {
        lo[i] -= r;
        hi[i] += r;
    }
    const double R2 = R * R;
    std::vector<Point> in;
    for_each_in_box(lo, hi, d, [&](const Point& x) {
        if (static_cast<double>(norm_sq(x - center)) < R2) in.push_back(x);
    });
    D.build(std::move(in));
    return D;
}

LatticeDomain LatticeDomain::box(const Point& center, int H, int d) {
    check_dim(d);
    if (H < 1) throw std::invalid_argument("box half-width must be >= 1");
    LatticeDomain D;
    D.kind_ = DomainKind::Box;
    D.d_ = d;
    D.center_ = center;
    D.radius_ = H;
    Point lo = center, hi = center;
    for (int i = 0; i < d; ++i) {
        lo[i] -= H - 1;
        hi[i] += H - 1;
    }
    std::vector<Point> in;
    for_each_in_box(lo, hi, d, [&](const Point& x) { in.push_back(x); });
    D.build(std::move(in));
    return D;
}

LatticeDomain LatticeDomain::torus(int L, int d) {
    check_dim(d);
    if (L < 1) throw std::invalid_argument("torus period must be positive");
    LatticeDomain D;
    D.kind_ = DomainKind::Torus;
    D.d_ = d;
    D.radius_ = L;
    std::size_t n = 1;
    for (int i = 0; i < d; ++i) n *= static_cast<std::size_t>(L);
    D.points_.resize(n);
    // row = x_0 + L x_1 + L^2 x_2 + ...
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t q = r;
        Point p;
        for (int i = 0; i < d; ++i) {
            p[i] = static_cast<int>(q % static_cast<std::size_t>(L));
            q /= static_cast<std::size_t>(L);
        }
        D.points_[r] = p;
    }
    D.n_interior_ = n;
    return D;
}

LatticeDomain LatticeDomain::from_points(const std::vector<Point>& interior, int d) {
    check_dim(d);
    if (interior.empty()) throw std::invalid_argument("empty point set");
    LatticeDomain D;
    D.kind_ = DomainKind::Box;
    D.d_ = d;
    std::vector<Point> in = interior;
    std::sort(in.begin(), in.end(), lex_less);
    in.erase(std::unique(in.begin(), in.end()), in.end());
    D.build(std::move(in));
    return D;
}

void LatticeDomain::build(std::vector<Point> interior) {
    Point lo = interior.front(), hi = interior.front();
    for (const auto& x : interior) {
        for (int i = 0; i < d_; ++i) {
            lo[i] = std::min(lo[i], x[i]);
            hi[i] = std::max(hi[i], x[i]);
        }
    }
    for (int i = 0; i < d_; ++i) {
        lo[i] -= 1;
        hi[i] += 1;
    }
    lo_ = lo;
    std::size_t total = 1;
    for (int i = 0; i < kMaxDim; ++i) {
        extent_[static_cast<std::size_t>(i)] = i < d_ ? hi[i] - lo[i] + 1 : 1;
        total *= static_cast<std::size_t>(extent_[static_cast<std::size_t>(i)]);
    }
    lookup_.assign(total, -1);
    points_ = std::move(interior);
    n_interior_ = points_.size();
    for (std::size_t r = 0; r < n_interior_; ++r) lookup_[static_cast<std::size_t>(slot(points_[r]))] = static_cast<int>(r);
    std::vector<Point> bd;
    for (std::size_t r = 0; r < n_interior_; ++r) {
        for (int i = 0; i < d_; ++i) {
            for (int s : {-1, 1}) {
                Point y = points_[r] + unit(i, s);
                auto& cell = lookup_[static_cast<std::size_t>(slot(y))];
                if (cell == -1) {
                    cell = -2;
                    bd.push_back(y);
                }
            }
        }
    }
    std::sort(bd.begin(), bd.end(), lex_less);
    for (const auto& y : bd) {
        lookup_[static_cast<std::size_t>(slot(y))] = static_cast<int>(points_.size());
        points_.push_back(y);
    }
}

long LatticeDomain::slot(const Point& x) const {
    long s = 0;
    for (int i = 0; i < d_; ++i) {
        long c = x[i] - lo_[i];
        if (c < 0 || c >= extent_[static_cast<std::size_t>(i)]) return -1;
        s = s * extent_[static_cast<std::size_t>(i)] + c;
    }
    return s;
}

Point LatticeDomain::reduce(const Point& x) const {
    if (kind_ != DomainKind::Torus) return x;
    const int L = period();
    Point p = x;
    for (int i = 0; i < d_; ++i) {
        int r = p[i] % L;
        p[i] = r < 0 ? r + L : r;
    }
    return p;
}

long LatticeDomain::index(const Point& x) const {
    if (kind_ == DomainKind::Torus) {
        const Point p = reduce(x);
        long r = 0;
        for (int i = d_ - 1; i >= 0; --i) r = r * period() + p[i];
        return r;
    }
    for (int i = d_; i < kMaxDim; ++i)
        if (x[i] != 0) return -1;
    long s = slot(x);
    return s < 0 ? -1 : lookup_[static_cast<std::size_t>(s)];
}

std::size_t LatticeDomain::row(const Point& x) const {
    long r = index(x);
    if (r < 0) {
        std::ostringstream os;
        os << "point " << x << " is outside the domain";
        throw DomainError(os.str());
    }
    return static_cast<std::size_t>(r);
}

long LatticeDomain::neighbor(std::size_t r, int i, int sign) const { return index(points_[r] + unit(i, sign)); }

ScalarField::ScalarField(DomainPtr domain, double fill) : domain_(std::move(domain)), values_(domain_->size(), fill) {}

ScalarField::ScalarField(DomainPtr domain, std::vector<double> values)
    : domain_(std::move(domain)), values_(std::move(values)) {
    if (values_.size() != domain_->size()) throw std::invalid_argument("field length does not match domain size");
}

bool ScalarField::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double ScalarField::max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

void ScalarField::write_csv(std::ostream& os) const {
    const int d = domain_->dim();
    for (int i = 0; i < d; ++i) os << "x" << i + 1 << ',';
    os << "value\n";
    std::ostringstream line;
    line.precision(17);
    for (std::size_t r = 0; r < values_.size(); ++r) {
        line.str("");
        const Point& p = domain_->point(r);
        for (int i = 0; i < d; ++i) line << p[i] << ',';
        line << values_[r] << '\n';
        os << line.str();
    }
}

double nabla(const ScalarField& u, const Point& x, const Point& e) { return u.at(x + e) - u.at(x); }

double nabla2(const ScalarField& u, const Point& x, int i) {
    return u.at(x + unit(i)) + u.at(x - unit(i)) - 2.0 * u.at(x);
}

double nabla2_mixed(const ScalarField& u, const Point& x, const Point& e, const Point& l) {
    return -(u.at(x + e + l) - u.at(x + e) - u.at(x + l) + u.at(x));
}

int polynomial_dim(int d, int deg) {
    if (deg < 0) return 0;
    // C(d + deg, deg)
    long n = 1;
    for (int k = 1; k <= deg; ++k) n = n * (d + k) / k;
    return static_cast<int>(n);
}

namespace {

// Exponent vectors of all monomials of total degree <= deg, graded order.
std::vector<std::array<int, kMaxDim>> monomials(int d, int deg) {
    std::vector<std::array<int, kMaxDim>> out;
    for (int total = 0; total <= deg; ++total) {
        std::array<int, kMaxDim> e{};
        // enumerate compositions of `total` into d parts
        auto rec = [&](auto&& self, int i, int left) -> void {
            if (i == d - 1) {
                e[static_cast<std::size_t>(i)] = left;
                out.push_back(e);
                return;
            }
            for (int k = left; k >= 0; --k) {
                e[static_cast<std::size_t>(i)] = k;
                self(self, i + 1, left - k);
            }
        };
        rec(rec, 0, total);
    }
    return out;
}

// Dense tableau simplex for  max c^T z  s.t.  A z = b (b >= 0), z >= 0.
// Two phases with artificial variables and Bland's rule.
class Simplex {
public:
    Simplex(Eigen::MatrixXd A, Eigen::VectorXd b, Eigen::VectorXd c)
        : m_(A.rows()), n_(A.cols()), A_(std::move(A)), b_(std::move(b)), c_(std::move(c)) {}

    double solve(double tol) {
        // columns: n_ structural, m_ artificial, then rhs
        T_ = Eigen::MatrixXd::Zero(m_ + 1, n_ + m_ + 1);
        T_.block(0, 0, m_, n_) = A_;
        T_.block(0, n_, m_, m_).setIdentity();
        T_.col(n_ + m_).head(m_) = b_;
        basis_.resize(static_cast<std::size_t>(m_));
        for (long i = 0; i < m_; ++i) basis_[static_cast<std::size_t>(i)] = n_ + i;

        // phase 1: maximise -sum(artificials)
        Eigen::VectorXd cost = Eigen::VectorXd::Zero(n_ + m_);
        cost.segment(n_, m_).setConstant(-1.0);
        set_objective(cost);
        iterate(n_ + m_, tol);
        if (T_(m_, n_ + m_) < -1e-9) throw std::runtime_error("linear program is infeasible");
        // drive zero-level artificials out of the basis
        for (long i = 0; i < m_; ++i) {
            if (basis_[static_cast<std::size_t>(i)] < n_) continue;
            for (long j = 0; j < n_; ++j) {
                if (std::abs(T_(i, j)) > tol) {
                    pivot(i, j);
                    break;
                }
            }
        }
        // phase 2 over structural columns only
        Eigen::VectorXd cost2 = Eigen::VectorXd::Zero(n_ + m_);
        cost2.head(n_) = c_;
        set_objective(cost2);
        iterate(n_, tol);
        return T_(m_, n_ + m_);
    }

private:
    // Objective row holds reduced costs r_j = c_B B^{-1} A_j - c_j and value.
    void set_objective(const Eigen::VectorXd& cost) {
        T_.row(m_).setZero();
        for (long j = 0; j < n_ + m_; ++j) T_(m_, j) = -cost(j);
        for (long i = 0; i < m_; ++i) {
            const long bj = basis_[static_cast<std::size_t>(i)];
            const double cb = cost(bj);
            if (cb != 0.0) T_.row(m_) += cb * T_.row(i);
        }
    }

    void iterate(long ncols, double tol) {
        const long rhs = n_ + m_;
        for (long it = 0; it < 100000; ++it) {
            long enter = -1;
            for (long j = 0; j < ncols; ++j) {
                if (T_(m_, j) < -tol) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0) return;
            long leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (long i = 0; i < m_; ++i) {
                if (T_(i, enter) > tol) {
                    double ratio = T_(i, rhs) / T_(i, enter);
                    if (ratio < best - 1e-14 ||
                        (ratio <= best + 1e-14 && leave >= 0 &&
                         basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)])) {
                        best = ratio;
                        leave = i;
                    }
                }
            }
            if (leave < 0) throw std::runtime_error("linear program is unbounded");
            pivot(leave, enter);
        }
        throw std::runtime_error("simplex iteration limit reached");
    }

    void pivot(long r, long c) {
        T_.row(r) /= T_(r, c);
        for (long i = 0; i <= m_; ++i) {
            if (i != r && T_(i, c) != 0.0) T_.row(i) -= T_(i, c) * T_.row(r);
        }
        basis_[static_cast<std::size_t>(r)] = c;
    }

    long m_, n_;
    Eigen::MatrixXd A_;
    Eigen::VectorXd b_, c_;
    Eigen::MatrixXd T_;
    std::vector<long> basis_;
};

}  // namespace

double osc_der(std::span<const Point> A, std::span<const double> f, int d, int j) {
    if (j < 1) throw std::invalid_argument("osc_der order must be >= 1");
    if (A.size() != f.size()) throw std::invalid_argument("osc_der: point and value counts differ");
    const auto mons = monomials(d, j - 1);
    const long n = static_cast<long>(A.size());
    const long m = static_cast<long>(mons.size());
    if (n < m) throw std::invalid_argument("osc_der: fewer points than polynomial coefficients");

    // centred, scaled coordinates keep the design well conditioned
    std::array<double, kMaxDim> mid{}, scale{};
    for (int i = 0; i < d; ++i) {
        double lo = A[0][i], hi = A[0][i];
        for (const auto& x : A) {
            lo = std::min(lo, static_cast<double>(x[i]));
            hi = std::max(hi, static_cast<double>(x[i]));
        }
        mid[static_cast<std::size_t>(i)] = 0.5 * (lo + hi);
        scale[static_cast<std::size_t>(i)] = hi > lo ? 0.5 * (hi - lo) : 1.0;
    }
    Eigen::MatrixXd Phi(n, m);
    for (long r = 0; r < n; ++r) {
        for (long k = 0; k < m; ++k) {
            double v = 1.0;
            for (int i = 0; i < d; ++i) {
                const double y = (A[static_cast<std::size_t>(r)][i] - mid[static_cast<std::size_t>(i)]) /
                                 scale[static_cast<std::size_t>(i)];
                for (int p = 0; p < mons[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]; ++p) v *= y;
            }
            Phi(r, k) = v;
        }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Phi);
    qr.setThreshold(1e-10);
    if (qr.rank() < m) throw std::invalid_argument("osc_der: point set is degenerate for the polynomial space");

    double fscale = 0.0;
    for (double v : f) fscale = std::max(fscale, std::abs(v));
    if (fscale == 0.0) return 0.0;

    // Dual of  min t  s.t. |f - Phi c| <= t:
    //   max sum_r (u_r - v_r) f_r  s.t.  Phi^T (u - v) = 0,  sum (u + v) + s = 1.
    Eigen::MatrixXd LP = Eigen::MatrixXd::Zero(m + 1, 2 * n + 1);
    LP.block(0, 0, m, n) = Phi.transpose();
    LP.block(0, n, m, n) = -Phi.transpose();
    LP.row(m).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m + 1);
    b(m) = 1.0;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(2 * n + 1);
    for (long r = 0; r < n; ++r) {
        c(r) = f[static_cast<std::size_t>(r)] / fscale;
        c(n + r) = -f[static_cast<std::size_t>(r)] / fscale;
    }
    Simplex lp(std::move(LP), std::move(b), std::move(c));
    const double val = lp.solve(1e-12);
    return std::max(0.0, val) * fscale;
}

double osc_der(const ScalarField& u, std::span<const Point> A, int j) {
    std::vector<double> f;
    f.reserve(A.size());
    for (const auto& x : A) f.push_back(u.at(x));
    return osc_der(A, f, u.domain().dim(), j);
}

}  // namespace rwre
